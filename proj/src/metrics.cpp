#include "spn/metrics.hpp"

#include <stdexcept>

namespace spn {

MetricsReport compute_metrics(std::span<const Labels> predictions, std::span<const Graph> graphs,
                              std::size_t num_labels) {
  if (predictions.size() != graphs.size()) throw std::invalid_argument("prediction count != graph count");
  if (graphs.empty()) throw std::invalid_argument("compute_metrics: no graphs");

  MetricsReport r;
  r.num_graphs = graphs.size();
  std::size_t correct = 0, fully_correct = 0;
  // One-vs-rest counts summed over classes.
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& gold = graphs[i].labels();
    const auto& pred = predictions[i];
    if (pred.size() != gold.size())
      throw std::invalid_argument("prediction length mismatch for graph " + std::to_string(i));
    GraphScore gs;
    gs.nodes = gold.size();
    for (std::size_t s = 0; s < gold.size(); ++s) {
      for (std::size_t c = 0; c < num_labels; ++c) {
        const bool p = pred[s] == c, g = gold[s] == c;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
      }
      gs.correct += pred[s] == gold[s];
    }
    gs.all_correct = gs.correct == gs.nodes;
    correct += gs.correct;
    fully_correct += gs.all_correct;
    r.num_nodes += gs.nodes;
    r.per_graph.push_back(gs);
  }
  r.node_accuracy = static_cast<double>(correct) / static_cast<double>(r.num_nodes);
  r.graph_accuracy = static_cast<double>(fully_correct) / static_cast<double>(r.num_graphs);
  const auto denom = static_cast<double>(2 * tp + fp + fn);
  r.micro_f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  return r;
}

}  // namespace spn
