#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spn/graph.hpp"

namespace spn {

struct GraphScore {
  std::size_t nodes = 0;
  std::size_t correct = 0;
  bool all_correct = false;
  friend bool operator==(const GraphScore&, const GraphScore&) = default;
};

struct MetricsReport {
  double node_accuracy = 0.0;
  double micro_f1 = 0.0;
  double graph_accuracy = 0.0;
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;
  std::vector<GraphScore> per_graph;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Node accuracy, micro-F1 over one-vs-rest (node, class) decisions, and the
/// fraction of graphs with every node correct. Throws on length mismatch or
/// unlabeled graphs.
MetricsReport compute_metrics(std::span<const Labels> predictions, std::span<const Graph> graphs,
                              std::size_t num_labels);

}  // namespace spn
