#include "spn/bp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "spn/crf.hpp"

namespace spn {

BPMode parse_bp_mode(std::string_view name) {
  if (name == "sum") return BPMode::sum;
  if (name == "max") return BPMode::max;
  throw std::invalid_argument("unknown bp mode '" + std::string(name) + "'");
}

BPSchedule parse_bp_schedule(std::string_view name) {
  if (name == "synchronous") return BPSchedule::synchronous;
  if (name == "round_robin") return BPSchedule::round_robin;
  throw std::invalid_argument("unknown bp schedule '" + std::string(name) + "'");
}

std::string_view to_string(BPMode mode) { return mode == BPMode::sum ? "sum" : "max"; }
std::string_view to_string(BPSchedule schedule) {
  return schedule == BPSchedule::synchronous ? "synchronous" : "round_robin";
}

void check(const BPConfig& config) {
  if (config.max_iters == 0) throw std::invalid_argument("bp max_iters must be positive");
  if (!(config.tol > 0.0)) throw std::invalid_argument("bp tol must be positive");
  if (!(config.damping >= 0.0 && config.damping < 1.0)) throw std::invalid_argument("bp damping must be in [0,1)");
}

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// exp(v - lse(v)) in place.
void normalize_log(std::span<double> v) {
  const double lse = log_sum_exp(v);
  for (auto& x : v) x = std::max(std::exp(x - lse), kTiny);
}

// Log of theta_s plus all incoming messages at s, optionally skipping the one from `skip`.
void node_log_field(const ThetaFields& theta, const Graph& graph, const MessageSet& msgs, std::size_t s,
                    std::size_t skip_edge, std::span<double> out) {
  const auto k = theta.num_labels;
  for (std::size_t a = 0; a < k; ++a) out[a] = theta.node_at(s, a);
  for (const auto& inc : graph.incident(s)) {
    if (inc.edge == skip_edge) continue;
    const auto m = msgs.message(MessageSet::into(inc.edge, inc.is_row));
    for (std::size_t a = 0; a < k; ++a) out[a] += std::log(m[a]);
  }
}

// Computes the (undamped, normalized) message along directed edge d.
void compute_message(const ThetaFields& theta, const Graph& graph, const MessageSet& msgs, BPMode mode,
                     std::size_t d, std::span<double> out, std::span<double> field, std::span<double> terms) {
  const auto k = theta.num_labels;
  const std::size_t e = d / 2;
  const bool sender_is_row = d % 2 == 0;
  const auto& edge = graph.edges()[e];
  const std::size_t sender = sender_is_row ? edge.u : edge.v;
  node_log_field(theta, graph, msgs, sender, e, field);
  for (std::size_t a = 0; a < k; ++a) {  // receiver label
    for (std::size_t b = 0; b < k; ++b)   // sender label
      terms[b] = field[b] + (sender_is_row ? theta.edge_at(e, b, a) : theta.edge_at(e, a, b));
    out[a] = mode == BPMode::sum ? log_sum_exp(terms) : *std::max_element(terms.begin(), terms.end());
  }
  normalize_log(out);
}

}  // namespace

BPResult run_bp(const ThetaFields& theta, const Graph& graph, const BPConfig& config) {
  check(config);
  if (theta.num_nodes() != graph.num_nodes() || theta.num_edges() != graph.num_edges())
    throw std::invalid_argument("run_bp: theta shape does not match graph");
  const auto k = theta.num_labels;
  BPResult r;
  r.messages = MessageSet(graph.num_edges(), k);
  const std::size_t directed = 2 * graph.num_edges();

  if (directed == 0) {
    r.converged = true;
  } else {
    std::vector<double> update(k), field(k), terms(k);
    MessageSet previous;
    for (std::size_t it = 0; it < config.max_iters; ++it) {
      if (config.schedule == BPSchedule::synchronous) previous = r.messages;
      const MessageSet& source = config.schedule == BPSchedule::synchronous ? previous : r.messages;
      double change = 0.0;
      for (std::size_t d = 0; d < directed; ++d) {
        compute_message(theta, graph, source, config.mode, d, update, field, terms);
        auto m = r.messages.message(d);
        for (std::size_t a = 0; a < k; ++a) {
          const double old = source.message(d)[a];
          const double next =
              config.damping > 0.0 ? (1.0 - config.damping) * update[a] + config.damping * old : update[a];
          change = std::max(change, std::abs(next - old));
          m[a] = next;
        }
      }
      r.iters = it + 1;
      r.last_change = change;
      if (change <= config.tol) {
        r.converged = true;
        break;
      }
    }
  }
  r.beliefs = beliefs_from_messages(theta, graph, r.messages);
  return r;
}

BeliefSet beliefs_from_messages(const ThetaFields& theta, const Graph& graph, const MessageSet& messages) {
  const auto k = theta.num_labels;
  const auto none = std::numeric_limits<std::size_t>::max();
  BeliefSet q(graph.num_nodes(), graph.num_edges(), k);
  std::vector<double> field(k), fs(k), ft(k), table(k * k);
  for (std::size_t s = 0; s < graph.num_nodes(); ++s) {
    node_log_field(theta, graph, messages, s, none, field);
    normalize_log(field);
    std::copy(field.begin(), field.end(), q.node.begin() + s * k);
  }
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [s, t] = graph.edges()[e];
    node_log_field(theta, graph, messages, s, e, fs);
    node_log_field(theta, graph, messages, t, e, ft);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) table[a * k + b] = fs[a] + ft[b] + theta.edge_at(e, a, b);
    normalize_log(table);
    std::copy(table.begin(), table.end(), q.edge.begin() + e * k * k);
  }
  return q;
}

Labels decode(const ThetaFields& theta, const MessageSet& messages, const Graph& graph) {
  const auto k = theta.num_labels;
  const auto none = std::numeric_limits<std::size_t>::max();
  Labels out(graph.num_nodes(), 0);
  std::vector<double> field(k);
  for (std::size_t s = 0; s < graph.num_nodes(); ++s) {
    node_log_field(theta, graph, messages, s, none, field);
    std::size_t best = 0;
    for (std::size_t a = 1; a < k; ++a)
      if (field[a] > field[best]) best = a;
    out[s] = best;
  }
  return out;
}

Inference infer_graph(const MarginalModels& models, const Graph& graph, const BPConfig& config, double eps,
                      bool apply_temperature) {
  const PseudomarginalSet tau = pseudomarginals(models, graph, apply_temperature);
  const ThetaFields theta = build_theta(tau, graph, eps);
  BPResult bp = run_bp(theta, graph, config);
  Inference out;
  out.labels = decode(theta, bp.messages, graph);
  out.beliefs = std::move(bp.beliefs);
  out.converged = bp.converged;
  out.iters = bp.iters;
  return out;
}

Labels predict_node_only(const MarginalModels& models, const Graph& graph) {
  const PseudomarginalSet tau = node_pseudomarginals(models, graph);
  const auto k = tau.num_labels;
  Labels out(graph.num_nodes(), 0);
  for (std::size_t s = 0; s < graph.num_nodes(); ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < k; ++a)
      if (tau.node_at(s, a) > tau.node_at(s, best)) best = a;
    out[s] = best;
  }
  return out;
}

}  // namespace spn
