#include "spn/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace spn {

using io::json;

Method parse_method(std::string_view name) {
  if (name == "proxy") return Method::proxy;
  if (name == "proxy+refine") return Method::proxy_refine;
  if (name == "maximin") return Method::maximin;
  if (name == "pseudolikelihood") return Method::pseudolikelihood;
  if (name == "node-only") return Method::node_only;
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected proxy, proxy+refine, maximin, pseudolikelihood, node-only)");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::proxy: return "proxy";
    case Method::proxy_refine: return "proxy+refine";
    case Method::maximin: return "maximin";
    case Method::pseudolikelihood: return "pseudolikelihood";
    case Method::node_only: return "node-only";
  }
  return "?";
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view component) {
  // FNV-1a over the component name, mixed with the root through splitmix64.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = root ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  try {
    const json j = json::parse(json_text);
    io::expect_keys(j,
                    {"seed", "data", "synthetic", "model", "train", "inference", "train_split", "eval_splits",
                     "output_dir"},
                    "config");
    ExperimentConfig c;
    if (!j.contains("seed")) throw std::invalid_argument("config: missing root 'seed'");
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("data") == j.contains("synthetic"))
      throw std::invalid_argument("config: exactly one of 'data' and 'synthetic' is required");
    if (j.contains("data")) {
      std::filesystem::path p = j.at("data").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw std::invalid_argument("config: data file not found: " + p.string());
      c.dataset_path = p;
    } else {
      json spec = j.at("synthetic");
      if (!spec.contains("seed")) spec["seed"] = derive_seed(c.seed, "data");
      c.synthetic = io::synthetic_from_json(spec);
    }
    if (j.contains("model")) c.model = io::model_from_json(j.at("model"));
    if (j.contains("train")) c.train = io::train_from_json(j.at("train"));
    c.train.seed = derive_seed(c.seed, "train");
    if (j.contains("inference")) c.inference = io::bp_from_json(j.at("inference"), c.inference, "inference");
    io::read(j, "train_split", c.train_split);
    io::read(j, "eval_splits", c.eval_splits);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), path.parent_path());
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  try {
    return io::synthetic_from_json(json::parse(json_text));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

Dataset load_experiment_data(const ExperimentConfig& config) {
  if (config.dataset_path) return load_dataset(*config.dataset_path);
  if (config.synthetic) return generate_synthetic(*config.synthetic);
  throw ConfigError("config has no data source");
}

TrainReport train_method(MarginalModels& models, Method method, std::span<const Graph> graphs,
                         const TrainConfig& config) {
  switch (method) {
    case Method::proxy: {
      TrainConfig c = config;
      c.refine_epochs = 0;
      return train_proxy(models, graphs, c);
    }
    case Method::proxy_refine:
      if (config.refine_epochs == 0) throw ConfigError("method proxy+refine needs train.refine_epochs > 0");
      return train_proxy(models, graphs, config);
    case Method::maximin: return train_maximin(models, graphs, config);
    case Method::pseudolikelihood: return train_pseudolikelihood(models, graphs, config);
    case Method::node_only: return train_node_only(models, graphs, config);
  }
  throw std::logic_error("unhandled method");
}

bool uses_temperature(Method method) { return method == Method::proxy || method == Method::proxy_refine; }

std::vector<Labels> predict(const MarginalModels& models, Method method, std::span<const Graph> graphs,
                            const BPConfig& inference, double eps) {
  std::vector<Labels> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs)
    out.push_back(method == Method::node_only ? predict_node_only(models, g)
                                              : infer_graph(models, g, inference, eps, uses_temperature(method)).labels);
  return out;
}

MetricsReport evaluate(const MarginalModels& models, Method method, std::span<const Graph> graphs,
                       std::size_t num_labels, const BPConfig& inference, double eps) {
  const auto preds = predict(models, method, graphs, inference, eps);
  return compute_metrics(preds, graphs, num_labels);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data, Method method) {
  const auto it = data.splits.find(config.train_split);
  if (it == data.splits.end() || it->second.empty())
    throw ConfigError("train split '" + config.train_split + "' is missing or empty");
  for (const auto& name : config.eval_splits)
    if (!data.splits.contains(name)) throw ConfigError("eval split '" + name + "' is missing");

  ExperimentResult r{MarginalModels(config.model, data.feature_dim, data.label_space.size(),
                                    derive_seed(config.seed, "model")),
                     {}};
  r.report = train_method(r.models, method, it->second, config.train);
  for (const auto& name : config.eval_splits)
    r.report.metrics[name] =
        evaluate(r.models, method, data.splits.at(name), data.label_space.size(), config.inference,
                 config.train.theta_eps);
  return r;
}

namespace {

json metrics_to_json(const MetricsReport& m) {
  json per = json::array();
  for (const auto& g : m.per_graph)
    per.push_back({{"nodes", g.nodes}, {"correct", g.correct}, {"all_correct", g.all_correct}});
  return {{"node_accuracy", m.node_accuracy}, {"micro_f1", m.micro_f1}, {"graph_accuracy", m.graph_accuracy},
          {"num_graphs", m.num_graphs},       {"num_nodes", m.num_nodes}, {"per_graph", std::move(per)}};
}

}  // namespace

std::string metrics_json(const MetricsReport& metrics) { return metrics_to_json(metrics).dump(2); }

std::string report_json(const TrainReport& report) {
  json phases = json::array();
  for (const auto& p : report.phases) {
    json node = json::array(), edge = json::array(), penalty = json::array(), objective = json::array();
    for (const auto& e : p.epochs) {
      node.push_back(e.node);
      edge.push_back(e.edge);
      penalty.push_back(e.penalty);
      objective.push_back(e.objective);
    }
    phases.push_back({{"name", p.name},
                      {"epochs", p.epochs.size()},
                      {"seconds", p.seconds},
                      {"bp_runs", p.bp_runs},
                      {"bp_iterations", p.bp_iterations},
                      {"bp_unconverged", p.bp_unconverged},
                      {"node_loss", std::move(node)},
                      {"edge_loss", std::move(edge)},
                      {"penalty", std::move(penalty)},
                      {"objective", std::move(objective)}});
  }
  json metrics = json::object();
  for (const auto& [name, m] : report.metrics) metrics[name] = metrics_to_json(m);
  return json{{"method", report.method}, {"phases", std::move(phases)}, {"metrics", std::move(metrics)}}.dump(2);
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t width = 4;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %9s  %9s  %9s  %7s  %7s\n", static_cast<int>(width), "name", "node_acc",
                "micro_f1", "graph_acc", "graphs", "nodes");
  out += line;
  for (const auto& [name, m] : rows) {
    std::snprintf(line, sizeof line, "%-*s  %9.4f  %9.4f  %9.4f  %7zu  %7zu\n", static_cast<int>(width), name.c_str(),
                  m.node_accuracy, m.micro_f1, m.graph_accuracy, m.num_graphs, m.num_nodes);
    out += line;
  }
  return out;
}

}  // namespace spn
