#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "spn/crf.hpp"
#include "spn/graph.hpp"

namespace spn {

/// Structured node-classification benchmark. Each graph gets a random
/// connected topology (random spanning tree plus extra edges with
/// probability edge_prob); gold labels are drawn exactly from a pairwise CRF
/// with zero node potentials and edge potential coupling_strength * [y_s == y_t];
/// features are one-hot(label) padded to feature_dim plus N(0, noise^2) noise.
struct SyntheticSpec {
  std::map<std::string, std::size_t> splits{{"train", 200}, {"test", 100}};
  std::size_t nodes_per_graph = 8;
  std::size_t num_labels = 3;
  std::size_t feature_dim = 3;
  double coupling_strength = 1.5;
  double noise = 1.0;
  double edge_prob = 0.2;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxSyntheticNodes = 12;

void check(const SyntheticSpec& spec);

Dataset generate_synthetic(const SyntheticSpec& spec);

/// The generator's ground-truth potentials for a given topology.
ThetaFields synthetic_theta(const Graph& graph, std::size_t num_labels, double coupling_strength);

/// Random connected topology: spanning tree plus extra edges.
Graph random_connected_graph(std::size_t num_nodes, double edge_prob, std::mt19937_64& rng);
/// Uniformly attached random tree.
Graph random_tree(std::size_t num_nodes, std::mt19937_64& rng);

}  // namespace spn
