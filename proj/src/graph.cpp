#include "spn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spn {

using json = nlohmann::json;

LabelSpace::LabelSpace(std::size_t size, std::vector<std::string> names)
    : size_(size), names_(std::move(names)) {
  if (size_ < 2) throw std::invalid_argument("label space needs at least 2 labels");
  if (!names_.empty()) {
    if (names_.size() != size_) throw std::invalid_argument("label names length != label space size");
    std::set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != names_.size()) throw std::invalid_argument("label names are not unique");
  }
}

Graph::Graph(std::size_t num_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
             std::size_t feature_dim, std::vector<double> features, std::optional<Labels> labels)
    : num_nodes_(num_nodes),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      labels_(std::move(labels)),
      neighbors_(num_nodes),
      incident_(num_nodes) {
  edges_.reserve(edges.size());
  for (auto [a, b] : edges) edges_.push_back(canonical(a, b));
  std::sort(edges_.begin(), edges_.end());

  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [u, v] = edges_[e];
    if (u >= num_nodes_ || v >= num_nodes_ || u == v) continue;
    incident_[u].push_back({v, e, true});
    incident_[v].push_back({u, e, false});
  }
  for (std::size_t s = 0; s < num_nodes_; ++s) {
    auto& inc = incident_[s];
    std::stable_sort(inc.begin(), inc.end(),
                     [](const Incidence& a, const Incidence& b) { return a.neighbor < b.neighbor; });
    for (const auto& i : inc) neighbors_[s].push_back(i.neighbor);
  }
}

const Labels& Graph::labels() const {
  if (!labels_) throw std::logic_error("graph has no labels");
  return *labels_;
}

Graph Graph::with_labels(std::optional<Labels> labels) const {
  Graph g = *this;
  g.labels_ = std::move(labels);
  return g;
}

std::vector<Diagnostic> validate(const Graph& graph, const LabelSpace& space) {
  std::vector<Diagnostic> out;
  const auto n = graph.num_nodes();
  if (n == 0) out.push_back({Violation::empty_graph, "empty graph"});

  std::set<Edge> seen;
  for (const auto& e : graph.edges()) {
    std::ostringstream where;
    where << "[" << e.u << "," << e.v << "]";
    if (e.u >= n || e.v >= n) {
      out.push_back({Violation::endpoint_out_of_range, "edge endpoint out of range " + where.str()});
      continue;
    }
    if (e.u == e.v) {
      out.push_back({Violation::self_loop, "self-loop " + where.str()});
      continue;
    }
    if (!seen.insert(e).second)
      out.push_back({Violation::duplicate_edge, "duplicate edge after canonicalization " + where.str()});
  }

  if (graph.features().size() != n * graph.feature_dim())
    out.push_back({Violation::feature_shape, "feature dim mismatch"});

  if (graph.has_labels()) {
    const auto& labels = graph.labels();
    if (labels.size() != n) out.push_back({Violation::label_count, "label count != num_nodes"});
    for (std::size_t s = 0; s < labels.size(); ++s) {
      if (labels[s] >= space.size()) {
        out.push_back({Violation::label_out_of_range, "label out of range at node " + std::to_string(s) + ": " +
                                                          std::to_string(labels[s])});
      }
    }
  }
  return out;
}

const std::vector<Graph>& Dataset::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw DatasetError("no split named '" + name + "'");
  return it->second;
}

namespace {

Graph graph_from_json(const json& j, std::size_t feature_dim, const std::string& id) {
  auto fail = [&](const std::string& what) { throw DatasetError(id + ": " + what); };
  if (!j.is_object()) fail("graph entry is not an object");
  if (!j.contains("num_nodes") || !j.contains("edges") || !j.contains("features"))
    fail("graph needs num_nodes, edges and features");

  const auto n = j.at("num_nodes").get<std::int64_t>();
  if (n < 0) fail("negative num_nodes");

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) fail("edge must be a pair");
    const auto a = e[0].get<std::int64_t>();
    const auto b = e[1].get<std::int64_t>();
    if (a < 0 || b < 0) fail("negative edge endpoint");
    edges.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }

  const auto& rows = j.at("features");
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(n)) fail("feature row count != num_nodes");
  std::vector<double> features;
  features.reserve(static_cast<std::size_t>(n) * feature_dim);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != feature_dim) fail("feature dim mismatch");
    for (const auto& x : row) features.push_back(x.get<double>());
  }

  std::optional<Labels> labels;
  if (j.contains("labels") && !j.at("labels").is_null()) {
    Labels ls;
    for (const auto& y : j.at("labels")) {
      const auto v = y.get<std::int64_t>();
      if (v < 0) fail("label out of range: " + std::to_string(v));
      ls.push_back(static_cast<Label>(v));
    }
    labels = std::move(ls);
  }
  return Graph(static_cast<std::size_t>(n), edges, feature_dim, std::move(features), std::move(labels));
}

json graph_to_json(const Graph& g) {
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  json rows = json::array();
  for (std::size_t s = 0; s < g.num_nodes(); ++s) {
    json row = json::array();
    for (std::size_t j = 0; j < g.feature_dim(); ++j) row.push_back(g.feature(s, j));
    rows.push_back(std::move(row));
  }
  json out = {{"num_nodes", g.num_nodes()}, {"edges", std::move(edges)}, {"features", std::move(rows)}};
  if (g.has_labels()) out["labels"] = g.labels();
  return out;
}

void check_graph(const Graph& g, const LabelSpace& space, const std::string& id) {
  const auto diags = validate(g, space);
  if (!diags.empty()) throw DatasetError(id + ": " + diags.front().message);
}

}  // namespace

Dataset parse_dataset(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed dataset file: ") + e.what());
  }

  try {
    Dataset ds;
    const auto& space = j.at("label_space");
    std::vector<std::string> names;
    if (space.contains("names")) names = space.at("names").get<std::vector<std::string>>();
    try {
      ds.label_space = LabelSpace(space.at("size").get<std::size_t>(), std::move(names));
    } catch (const std::invalid_argument& e) {
      throw DatasetError(e.what());
    }
    const auto dim = j.at("feature_dim").get<std::int64_t>();
    if (dim <= 0) throw DatasetError("feature_dim must be positive");
    ds.feature_dim = static_cast<std::size_t>(dim);

    for (const auto& [name, graphs] : j.at("splits").items()) {
      auto& out = ds.splits[name];
      for (std::size_t i = 0; i < graphs.size(); ++i) {
        const auto id = name + "[" + std::to_string(i) + "]";
        Graph g = graph_from_json(graphs[i], ds.feature_dim, id);
        check_graph(g, ds.label_space, id);
        if (name == "train" && !g.has_labels()) throw DatasetError(id + ": train graphs need labels");
        out.push_back(std::move(g));
      }
    }
    return ds;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed dataset file: ") + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string dataset_to_json(const Dataset& dataset) {
  json space = {{"size", dataset.label_space.size()}};
  if (!dataset.label_space.names().empty()) space["names"] = dataset.label_space.names();
  json splits = json::object();
  for (const auto& [name, graphs] : dataset.splits) {
    json arr = json::array();
    for (const auto& g : graphs) arr.push_back(graph_to_json(g));
    splits[name] = std::move(arr);
  }
  json out = {{"label_space", std::move(space)}, {"feature_dim", dataset.feature_dim}, {"splits", std::move(splits)}};
  return out.dump();
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << dataset_to_json(dataset) << '\n';
}

Graph parse_graph_json(const std::string& json_text, std::size_t feature_dim) {
  json j;
  try {
    j = json::parse(json_text);
    return graph_from_json(j, feature_dim, "graph");
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed graph file: ") + e.what());
  }
}

}  // namespace spn
