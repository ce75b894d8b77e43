#pragma once

// Loopy belief propagation (sum-product and max-product) on pairwise CRFs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "spn/fields.hpp"
#include "spn/graph.hpp"
#include "spn/models.hpp"

namespace spn {

enum class BPMode { sum, max };
enum class BPSchedule { synchronous, round_robin };

BPMode parse_bp_mode(std::string_view name);
BPSchedule parse_bp_schedule(std::string_view name);
std::string_view to_string(BPMode mode);
std::string_view to_string(BPSchedule schedule);

struct BPConfig {
  BPMode mode = BPMode::max;
  std::size_t max_iters = 50;
  double tol = 1e-6;
  double damping = 0.0;
  BPSchedule schedule = BPSchedule::round_robin;
};

void check(const BPConfig& config);

/// Messages m_{t->s} over the receiver's labels, one per directed edge.
/// Directed edge 2e carries u->v and 2e+1 carries v->u for canonical edge e = (u, v).
struct MessageSet {
  std::size_t num_labels = 0;
  std::vector<double> values;

  MessageSet() = default;
  MessageSet(std::size_t num_edges, std::size_t k)
      : num_labels(k), values(2 * num_edges * k, 1.0 / static_cast<double>(k)) {}

  std::size_t size() const { return num_labels ? values.size() / num_labels : 0; }
  std::span<double> message(std::size_t directed) {
    return std::span<double>(values).subspan(directed * num_labels, num_labels);
  }
  std::span<const double> message(std::size_t directed) const {
    return std::span<const double>(values).subspan(directed * num_labels, num_labels);
  }
  /// Index of the message that arrives at `receiver` along canonical edge e.
  static std::size_t into(std::size_t e, bool receiver_is_row) { return receiver_is_row ? 2 * e + 1 : 2 * e; }
  static std::size_t out_of(std::size_t e, bool sender_is_row) { return sender_is_row ? 2 * e : 2 * e + 1; }
};

struct BPResult {
  MessageSet messages;
  BeliefSet beliefs;
  bool converged = false;
  std::size_t iters = 0;
  double last_change = 0.0;
};

/// Runs BP from uniform messages. Non-convergence is reported through the
/// flag; beliefs are always returned.
BPResult run_bp(const ThetaFields& theta, const Graph& graph, const BPConfig& config);

/// Node and edge beliefs induced by a message set.
BeliefSet beliefs_from_messages(const ThetaFields& theta, const Graph& graph, const MessageSet& messages);

/// argmax_y theta_s(y) + sum_t log m_{t->s}(y); ties go to the smallest label.
Labels decode(const ThetaFields& theta, const MessageSet& messages, const Graph& graph);

struct Inference {
  Labels labels;
  BeliefSet beliefs;
  bool converged = false;
  std::size_t iters = 0;
};

/// tau (edge logits tempered by gamma unless disabled) -> theta -> BP -> decode.
Inference infer_graph(const MarginalModels& models, const Graph& graph, const BPConfig& config,
                      double eps = 1e-8, bool apply_temperature = true);

/// Factorized baseline: per-node argmax of tau_s. Never touches the edge head.
Labels predict_node_only(const MarginalModels& models, const Graph& graph);

}  // namespace spn
