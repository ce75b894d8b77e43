#include "spn/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace spn {

void check(const SyntheticSpec& spec) {
  if (spec.nodes_per_graph < 1 || spec.nodes_per_graph > kMaxSyntheticNodes)
    throw std::invalid_argument("nodes_per_graph must be in [1, " + std::to_string(kMaxSyntheticNodes) + "]");
  if (spec.num_labels < 2) throw std::invalid_argument("synthetic data needs at least 2 labels");
  if (spec.feature_dim < spec.num_labels) throw std::invalid_argument("feature_dim must be >= num_labels");
  if (spec.noise < 0.0) throw std::invalid_argument("noise must be non-negative");
  if (spec.edge_prob < 0.0 || spec.edge_prob > 1.0) throw std::invalid_argument("edge_prob must be in [0,1]");
  double assignments = 1.0;
  for (std::size_t i = 0; i < spec.nodes_per_graph; ++i) assignments *= static_cast<double>(spec.num_labels);
  if (assignments > static_cast<double>(kDefaultOracleCap))
    throw std::invalid_argument("synthetic graph size is infeasible for exact sampling");
  if (spec.splits.empty()) throw std::invalid_argument("synthetic spec has no splits");
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> tree_edges(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 1; i < n; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    edges.emplace_back(order[i], order[j]);
  }
  return edges;
}

}  // namespace

Graph random_tree(std::size_t num_nodes, std::mt19937_64& rng) {
  return Graph(num_nodes, tree_edges(num_nodes, rng), 1, std::vector<double>(num_nodes, 0.0));
}

Graph random_connected_graph(std::size_t num_nodes, double edge_prob, std::mt19937_64& rng) {
  auto edges = tree_edges(num_nodes, rng);
  std::vector<std::vector<bool>> present(num_nodes, std::vector<bool>(num_nodes, false));
  for (auto [a, b] : edges) present[a][b] = present[b][a] = true;
  std::bernoulli_distribution extra(edge_prob);
  for (std::size_t a = 0; a < num_nodes; ++a)
    for (std::size_t b = a + 1; b < num_nodes; ++b)
      if (!present[a][b] && extra(rng)) edges.emplace_back(a, b);
  return Graph(num_nodes, edges, 1, std::vector<double>(num_nodes, 0.0));
}

ThetaFields synthetic_theta(const Graph& graph, std::size_t num_labels, double coupling_strength) {
  ThetaFields theta(graph.num_nodes(), graph.num_edges(), num_labels);
  for (std::size_t e = 0; e < graph.num_edges(); ++e)
    for (std::size_t a = 0; a < num_labels; ++a) theta.edge_at(e, a, a) = coupling_strength;
  return theta;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  check(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.label_space = LabelSpace(spec.num_labels);
  ds.feature_dim = spec.feature_dim;
  for (const auto& [name, count] : spec.splits) {
    auto& graphs = ds.splits[name];
    for (std::size_t i = 0; i < count; ++i) {
      const Graph topo = random_connected_graph(spec.nodes_per_graph, spec.edge_prob, rng);
      const Labels labels = sample_exact(synthetic_theta(topo, spec.num_labels, spec.coupling_strength), topo, rng);
      std::vector<double> features(spec.nodes_per_graph * spec.feature_dim, 0.0);
      for (std::size_t s = 0; s < spec.nodes_per_graph; ++s)
        for (std::size_t j = 0; j < spec.feature_dim; ++j)
          features[s * spec.feature_dim + j] = (j == labels[s] ? 1.0 : 0.0) + spec.noise * noise(rng);
      std::vector<std::pair<std::size_t, std::size_t>> edges;
      for (const auto& e : topo.edges()) edges.emplace_back(e.u, e.v);
      graphs.emplace_back(spec.nodes_per_graph, edges, spec.feature_dim, std::move(features), labels);
    }
  }
  return ds;
}

}  // namespace spn
