#pragma once

// Invariant suite behind `spn verify`. Every check is seeded and compares the
// implementation against the enumeration oracle or finite differences.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spn/crf.hpp"
#include "spn/graph.hpp"
#include "spn/models.hpp"

namespace spn {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::size_t fixed_point_instances = 200;
  std::size_t tree_instances = 100;
  std::size_t gradient_instances = 20;
  std::size_t identity_instances = 50;
  std::size_t bethe_instances = 50;
  std::size_t proxy_epochs = 1000;
  std::uint64_t seed = 20240;
};

/// Theta tables with entries drawn from U(-scale, scale).
ThetaFields random_theta(const Graph& graph, std::size_t num_labels, double scale, std::mt19937_64& rng);

/// Exact marginals of a random joint on `graph`: a consistent pseudomarginal set.
PseudomarginalSet consistent_pseudomarginals(const Graph& graph, std::size_t num_labels, double scale,
                                             std::mt19937_64& rng);

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over the full
/// parameter vector, comparing autodiff against central differences with step h.
double gradient_check(const MarginalModels& models,
                      const std::function<Var(Tape&, const MarginalModels&)>& loss, double h = 1e-5);

CheckResult check_uniform_fixed_point(std::size_t instances, std::uint64_t seed);
CheckResult check_tree_exactness(std::size_t instances, std::uint64_t seed);
CheckResult check_gradient_proxy_loss(std::size_t instances, std::uint64_t seed);
CheckResult check_gradient_consistency_penalty(std::size_t instances, std::uint64_t seed);
CheckResult check_gradient_pseudolikelihood(std::size_t instances, std::uint64_t seed);
CheckResult check_gradient_refinement(std::size_t instances, std::uint64_t seed);
CheckResult check_refinement_identity(std::size_t instances, std::uint64_t seed);
CheckResult check_bethe_trees(std::size_t instances, std::uint64_t seed);
CheckResult check_bethe_cycles(std::size_t instances, std::uint64_t seed);
CheckResult check_proxy_near_optimality(std::size_t epochs, std::uint64_t seed);

/// Runs every check whose name contains `filter` (all when empty).
std::vector<CheckResult> run_verify_suite(std::string_view filter = {}, const VerifyOptions& options = {});

/// Names of the checks in suite order.
std::vector<std::string> verify_check_names();

}  // namespace spn
