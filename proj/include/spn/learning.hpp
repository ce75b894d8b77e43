#pragma once

// Training procedures: the pseudomarginal proxy objective (with an optional
// consistency penalty), refinement on the maximin game, and the maximin,
// pseudolikelihood and node-only baselines.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spn/adam.hpp"
#include "spn/bp.hpp"
#include "spn/crf.hpp"
#include "spn/graph.hpp"
#include "spn/metrics.hpp"
#include "spn/models.hpp"
#include "spn/tensor.hpp"

namespace spn {

struct TrainConfig {
  std::size_t epochs = 200;
  double node_lr = 0.01;
  double edge_lr = 0.01;
  double alpha = 0.0;
  std::size_t refine_epochs = 0;
  double refine_lr = 1e-5;
  BPConfig bp{BPMode::sum, 50, 1e-6, 0.0, BPSchedule::round_robin};
  double theta_eps = kDefaultThetaEps;
  std::uint64_t seed = 0;
};

void check(const TrainConfig& config);

struct EpochRecord {
  double node = 0.0;
  double edge = 0.0;
  double penalty = 0.0;
  /// Value the phase optimizes (loss for minimizing phases, objective for maximin).
  double objective = 0.0;
};

struct PhaseReport {
  std::string name;
  std::vector<EpochRecord> epochs;
  double seconds = 0.0;
  std::size_t bp_runs = 0;
  std::size_t bp_iterations = 0;
  std::size_t bp_unconverged = 0;
};

struct TrainReport {
  std::string method;
  std::vector<PhaseReport> phases;
  std::map<std::string, MetricsReport> metrics;

  const PhaseReport& phase(const std::string& name) const;
};

// ---- per-graph objectives (labels are read from the graph)

struct ProxyTerms {
  Var node;                 // -sum_s log tau_s(y*_s)
  std::optional<Var> edge;  // -sum_(s,t) log tau_st(y*_s, y*_t); absent on edgeless graphs
};

ProxyTerms proxy_terms(ForwardPass& fp);
/// Negated proxy log-likelihood, untempered tau.
Var proxy_loss(ForwardPass& fp);

/// sum_(s,t) [ sum_b (sum_a tau_st(a,b) - tau_t(b))^2 + sum_a (sum_b tau_st(a,b) - tau_s(a))^2 ],
/// from probability-space tau (node n x |Y|, edge |E| x |Y|^2).
Var consistency_penalty(Tape& tape, const Var& node_tau, const Var& edge_tau, const Graph& graph);

/// sum_s [theta_s(y*) - E_q theta_s] + sum_(s,t) [theta_st(y*) - E_q theta_st], q held constant.
Var refinement_objective(Tape& tape, const ThetaVars& theta, const BeliefSet& beliefs, const Graph& graph);

/// -sum_s log p(y*_s | y*_N(s)) with p(y_s | .) proportional to exp(theta_s(y_s) + sum_t theta_st(y_s, y*_t)).
Var pseudolikelihood_loss(Tape& tape, const ThetaVars& theta, const Graph& graph);

/// Differentiable theta for the current models with gamma = 1.
ThetaVars model_theta(ForwardPass& fp, double eps);

// ---- training loops (full batch, one Adam step per epoch)

/// Separate Adam states for the node and edge parameter groups.
struct Optimizers {
  Adam node;
  Adam edge;
  Optimizers(const MarginalModels& models, double node_lr, double edge_lr);
};

TrainReport train_proxy(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config);
TrainReport train_node_only(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config);
/// Coordinate ascent on the maximin game from the given (fresh) models, at node_lr / edge_lr.
TrainReport train_maximin(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config);
TrainReport train_pseudolikelihood(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config);

struct RefineStep {
  double objective = 0.0;
  std::size_t bp_iterations = 0;
  std::size_t bp_unconverged = 0;
};

/// (i) theta from the models, sum-product BP for q; (ii) one Adam ascent step
/// on the refinement objective with q held fixed.
RefineStep refine_step(MarginalModels& models, std::span<const Graph> graphs, const BPConfig& bp,
                       Optimizers& optimizers, double eps = kDefaultThetaEps);

/// refine_epochs refinement steps at refine_lr.
PhaseReport refine(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config);

}  // namespace spn
