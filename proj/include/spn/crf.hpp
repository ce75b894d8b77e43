#pragma once

// Pairwise CRF over a Graph: potentials assembled from pseudomarginals, the
// joint score, a brute-force exact oracle, and Bethe diagnostics.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>

#include "spn/fields.hpp"
#include "spn/graph.hpp"
#include "spn/tensor.hpp"

namespace spn {

inline constexpr double kDefaultThetaEps = 1e-8;
inline constexpr std::uint64_t kDefaultOracleCap = 2'000'000;

/// theta_s = log max(tau_s, eps);
/// theta_st(a,b) = log max(tau_st(a,b), eps) - log max(tau_s(a), eps) - log max(tau_t(b), eps).
ThetaFields build_theta(const PseudomarginalSet& tau, const Graph& graph, double eps = kDefaultThetaEps);

/// Differentiable theta on a tape, rows laid out like ThetaFields.
struct ThetaVars {
  Var node;                 // n x |Y|
  std::optional<Var> edge;  // |E| x |Y|^2, absent for edgeless graphs
};

/// Same construction as build_theta, from log-pseudomarginals on a tape.
ThetaVars build_theta(Tape& tape, const Var& node_log_tau, const std::optional<Var>& edge_log_tau,
                      const Graph& graph, double eps = kDefaultThetaEps);

ThetaFields to_fields(const ThetaVars& theta, std::size_t num_labels);

/// Unnormalized log-probability sum_s theta_s(y_s) + sum_(s,t) theta_st(y_s, y_t).
double joint_log_score(const ThetaFields& theta, const Graph& graph, std::span<const Label> assignment);

class OracleInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExactSummary {
  double log_partition = 0.0;
  PseudomarginalSet marginals;  // exact p(y_s) and p(y_s, y_t)
  Labels map_assignment;        // lexicographically smallest among ties
  double map_log_prob = 0.0;
  double map_margin = 0.0;      // best score minus runner-up; 0 when the optimum is tied
  double entropy = 0.0;
};

/// Enumerates all |Y|^n assignments; throws OracleInfeasible above `cap`.
ExactSummary exact_summary(const ThetaFields& theta, const Graph& graph, std::uint64_t cap = kDefaultOracleCap);

/// Draws one assignment from p_theta exactly, by enumeration.
Labels sample_exact(const ThetaFields& theta, const Graph& graph, std::mt19937_64& rng,
                    std::uint64_t cap = kDefaultOracleCap);

struct MomentMatchingReport {
  double node_deviation = 0.0;
  double edge_deviation = 0.0;
  bool pass = false;
};

/// Max deviation of the exact model marginals from the label indicators.
MomentMatchingReport check_moment_matching(const ThetaFields& theta, const Graph& graph, std::span<const Label> labels,
                                           double tol, std::uint64_t cap = kDefaultOracleCap);

struct BetheReport {
  double bethe_entropy = 0.0;
  double expected_score = 0.0;
  double neg_free_energy = 0.0;
};

/// Throws std::invalid_argument if beliefs are unnormalized or edge-inconsistent beyond tol.
BetheReport bethe_free_energy(const ThetaFields& theta, const Graph& graph, const BeliefSet& beliefs,
                              double tol = 1e-6);

}  // namespace spn
