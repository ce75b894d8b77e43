#include "spn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "spn/bp.hpp"
#include "spn/learning.hpp"
#include "spn/synthetic.hpp"
#include "spn/tensor.hpp"

namespace spn {

ThetaFields random_theta(const Graph& graph, std::size_t num_labels, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ThetaFields theta(graph.num_nodes(), graph.num_edges(), num_labels);
  for (auto& x : theta.node) x = u(rng);
  for (auto& x : theta.edge) x = u(rng);
  return theta;
}

PseudomarginalSet consistent_pseudomarginals(const Graph& graph, std::size_t num_labels, double scale,
                                             std::mt19937_64& rng) {
  return exact_summary(random_theta(graph, num_labels, scale, rng), graph).marginals;
}

double gradient_check(const MarginalModels& models, const std::function<Var(Tape&, const MarginalModels&)>& loss,
                      double h) {
  Tape tape;
  const Var l = loss(tape, models);
  const GradientMap analytic = tape.backward(l).parameters();

  auto value_at = [&](const MarginalModels& m) {
    Tape t;
    return loss(t, m).value()[0];
  };
  MarginalModels probe = models;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (const auto& p : models.parameters()) {
    auto& values = probe.parameters().get(p.name).value;
    const auto it = analytic.find(p.name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = value_at(probe);
      values[i] = orig - h;
      const double down = value_at(probe);
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
}

namespace {

using Clock = std::chrono::steady_clock;

// Largest node count with k^n inside the oracle cap, clipped to `limit`.
std::size_t max_nodes(std::size_t k, std::size_t limit) {
  std::size_t n = 0;
  double total = 1.0;
  while (n < limit && total * static_cast<double>(k) <= static_cast<double>(kDefaultOracleCap)) {
    total *= static_cast<double>(k);
    ++n;
  }
  return n;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Graph with_random_labels(const Graph& topo, std::size_t k, std::size_t feature_dim, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  Labels labels(topo.num_nodes());
  for (auto& y : labels) y = pick(rng, 0, k - 1);
  std::vector<double> features(topo.num_nodes() * feature_dim);
  for (auto& x : features) x = noise(rng);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : topo.edges()) edges.emplace_back(e.u, e.v);
  return Graph(topo.num_nodes(), edges, feature_dim, std::move(features), std::move(labels));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class Body>
CheckResult timed(std::string name, Body&& body) {
  const auto start = Clock::now();
  CheckResult r{std::move(name), false, {}, 0.0};
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

// Small labeled graph plus freshly initialized models with varied architecture.
struct GradientInstance {
  Graph graph;
  MarginalModels models;
};

GradientInstance gradient_instance(std::size_t i, std::uint64_t seed) {
  std::mt19937_64 rng(seed + i);
  const std::size_t k = pick(rng, 2, 3);
  const std::size_t n = pick(rng, 2, 6);
  const std::size_t d = 3;
  Graph g = with_random_labels(random_connected_graph(n, 0.3, rng), k, d, rng);
  ModelConfig mc;
  mc.encoder.num_layers = 1 + i % 2;
  mc.encoder.hidden_dim = 4;
  mc.shared = (i / 2) % 2 == 1;
  mc.edge_head = (i / 4) % 2 == 0 ? EdgeHeadKind::linear : EdgeHeadKind::bilinear;
  MarginalModels models(mc, d, k, rng());
  // Jitter biases off the relu kink.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& p : models.parameters())
    if (p.name.ends_with("bias"))
      for (auto& x : p.value.values()) x += jitter(rng);
  return {std::move(g), std::move(models)};
}

constexpr double kGradientTol = 1e-4;

CheckResult gradient_suite(std::string name, std::size_t instances, std::uint64_t seed,
                           const std::function<Var(Tape&, const MarginalModels&, const Graph&)>& loss) {
  return timed(std::move(name), [&](CheckResult& r) {
    double worst = 0.0;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      const auto inst = gradient_instance(i, seed);
      const double err = gradient_check(inst.models, [&](Tape& tape, const MarginalModels& m) {
        return loss(tape, m, inst.graph);
      });
      worst = std::max(worst, err);
      if (!(err < kGradientTol)) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << instances << " instances, max relative error " << worst << ", failures " << failures;
    r.detail = os.str();
  });
}

}  // namespace

CheckResult check_uniform_fixed_point(std::size_t instances, std::uint64_t seed) {
  return timed("uniform_fixed_point", [&](CheckResult& r) {
    double worst_change = 0.0, worst_belief = 0.0;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      std::mt19937_64 rng(seed + i);
      const std::size_t k = pick(rng, 2, 4);
      const std::size_t n = pick(rng, 1, max_nodes(k, 12));
      const double edge_prob = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
      const Graph g = random_connected_graph(n, edge_prob, rng);
      const auto tau = consistent_pseudomarginals(g, k, 1.0, rng);
      const auto theta = build_theta(tau, g, kDefaultThetaEps);
      const auto bp = run_bp(theta, g, BPConfig{BPMode::sum, 1, 1e-300, 0.0, BPSchedule::synchronous});
      const double belief_err =
          std::max(max_abs_diff(bp.beliefs.node, tau.node), max_abs_diff(bp.beliefs.edge, tau.edge));
      worst_change = std::max(worst_change, bp.last_change);
      worst_belief = std::max(worst_belief, belief_err);
      if (bp.last_change > 1e-9 || belief_err > 1e-8) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << instances << " instances, max message change " << worst_change << ", max belief error " << worst_belief;
    r.detail = os.str();
  });
}

CheckResult check_tree_exactness(std::size_t instances, std::uint64_t seed) {
  return timed("tree_exactness", [&](CheckResult& r) {
    double worst = 0.0;
    std::size_t failures = 0, unique = 0, map_mismatch = 0, unconverged = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      std::mt19937_64 rng(seed + i);
      const std::size_t k = pick(rng, 2, 4);
      const std::size_t n = pick(rng, 1, max_nodes(k, 12));
      const Graph g = random_tree(n, rng);
      const auto theta = random_theta(g, k, 2.0, rng);
      const auto exact = exact_summary(theta, g);
      const BPConfig sum{BPMode::sum, 200, 1e-13, 0.0, BPSchedule::round_robin};
      const auto bp = run_bp(theta, g, sum);
      const double err = std::max(max_abs_diff(bp.beliefs.node, exact.marginals.node),
                                  max_abs_diff(bp.beliefs.edge, exact.marginals.edge));
      worst = std::max(worst, err);
      bool ok = err <= 1e-8 && bp.converged;
      if (!bp.converged) ++unconverged;
      if (exact.map_margin > 1e-9) {
        ++unique;
        BPConfig max = sum;
        max.mode = BPMode::max;
        const auto mp = run_bp(theta, g, max);
        if (decode(theta, mp.messages, g) != exact.map_assignment) {
          ++map_mismatch;
          ok = false;
        }
      }
      if (!ok) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << instances << " trees, max marginal error " << worst << ", unique MAP " << unique << ", MAP mismatches "
       << map_mismatch << ", unconverged " << unconverged;
    r.detail = os.str();
  });
}

CheckResult check_gradient_proxy_loss(std::size_t instances, std::uint64_t seed) {
  return gradient_suite("gradient_proxy_loss", instances, seed, [](Tape& tape, const MarginalModels& m, const Graph& g) {
    ForwardPass fp(tape, m, g);
    return proxy_loss(fp);
  });
}

CheckResult check_gradient_consistency_penalty(std::size_t instances, std::uint64_t seed) {
  return gradient_suite("gradient_consistency_penalty", instances, seed + 1000,
                        [](Tape& tape, const MarginalModels& m, const Graph& g) {
                          ForwardPass fp(tape, m, g);
                          return consistency_penalty(tape, exp(fp.node_log_tau()), exp(fp.edge_log_tau(false)), g);
                        });
}

CheckResult check_gradient_pseudolikelihood(std::size_t instances, std::uint64_t seed) {
  return gradient_suite("gradient_pseudolikelihood", instances, seed + 2000,
                        [](Tape& tape, const MarginalModels& m, const Graph& g) {
                          ForwardPass fp(tape, m, g);
                          return pseudolikelihood_loss(tape, model_theta(fp, kDefaultThetaEps), g);
                        });
}

CheckResult check_gradient_refinement(std::size_t instances, std::uint64_t seed) {
  return timed("gradient_refinement", [&](CheckResult& r) {
    double worst = 0.0;
    std::size_t failures = 0;
    const BPConfig bp{BPMode::sum, 100, 1e-10, 0.0, BPSchedule::round_robin};
    for (std::size_t i = 0; i < instances; ++i) {
      const auto inst = gradient_instance(i, seed + 3000);
      BeliefSet q;
      {
        Tape tape;
        ForwardPass fp(tape, inst.models, inst.graph);
        q = run_bp(to_fields(model_theta(fp, kDefaultThetaEps), inst.models.num_labels()), inst.graph, bp).beliefs;
      }
      const double err = gradient_check(inst.models, [&](Tape& tape, const MarginalModels& m) {
        ForwardPass fp(tape, m, inst.graph);
        return refinement_objective(tape, model_theta(fp, kDefaultThetaEps), q, inst.graph);
      });
      worst = std::max(worst, err);
      if (!(err < kGradientTol)) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << instances << " instances, max relative error " << worst << ", failures " << failures;
    r.detail = os.str();
  });
}

CheckResult check_refinement_identity(std::size_t instances, std::uint64_t seed) {
  return timed("refinement_identity", [&](CheckResult& r) {
    double worst = 0.0;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      std::mt19937_64 rng(seed + i);
      const std::size_t k = pick(rng, 2, 4);
      const std::size_t n = pick(rng, 1, 8);
      const Graph g = with_random_labels(random_connected_graph(n, 0.4, rng), k, 1, rng);
      const auto theta = random_theta(g, k, 1.5, rng);
      const auto q = run_bp(theta, g, BPConfig{BPMode::sum, 100, 1e-8, 0.0, BPSchedule::round_robin}).beliefs;

      Tape tape;
      ThetaVars tv;
      tv.node = tape.variable(Tensor({n, k}, theta.node));
      if (g.num_edges() > 0) tv.edge = tape.variable(Tensor({g.num_edges(), k * k}, theta.edge));
      const auto grads = tape.backward(refinement_objective(tape, tv, q, g));

      double err = 0.0;
      const auto& y = g.labels();
      const auto& gn = grads.wrt(tv.node);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < k; ++a)
          err = std::max(err, std::abs(gn[s * k + a] - ((a == y[s] ? 1.0 : 0.0) - q.node_at(s, a))));
      if (tv.edge) {
        const auto& ge = grads.wrt(*tv.edge);
        for (std::size_t e = 0; e < g.num_edges(); ++e) {
          const auto [s, t] = g.edges()[e];
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const double ind = (a == y[s] && b == y[t]) ? 1.0 : 0.0;
              err = std::max(err, std::abs(ge[e * k * k + a * k + b] - (ind - q.edge_at(e, a, b))));
            }
        }
      }
      worst = std::max(worst, err);
      if (err > 1e-10) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << instances << " graphs, max |grad - (indicator - belief)| " << worst;
    r.detail = os.str();
  });
}

CheckResult check_bethe_trees(std::size_t instances, std::uint64_t seed) {
  return timed("bethe_trees", [&](CheckResult& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
      std::mt19937_64 rng(seed + i);
      const std::size_t k = pick(rng, 2, 4);
      const std::size_t n = pick(rng, 1, max_nodes(k, 12));
      const Graph g = random_tree(n, rng);
      const auto theta = random_theta(g, k, 1.5, rng);
      const auto exact = exact_summary(theta, g);
      const auto bethe = bethe_free_energy(theta, g, retag<BeliefSet>(exact.marginals));
      worst = std::max(worst, std::abs(bethe.bethe_entropy - exact.entropy));
    }
    r.passed = worst <= 1e-8;
    std::ostringstream os;
    os << instances << " trees, max |H_bethe - H| " << worst;
    r.detail = os.str();
  });
}

CheckResult check_bethe_cycles(std::size_t instances, std::uint64_t seed) {
  return timed("bethe_cycles", [&](CheckResult& r) {
    std::size_t differ = 0;
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < instances; ++i) {
      std::mt19937_64 rng(seed + i);
      const std::size_t k = pick(rng, 2, 4);
      const Graph g(3, {{0, 1}, {1, 2}, {0, 2}}, 1, std::vector<double>(3, 0.0));
      const auto theta = random_theta(g, k, 1.5, rng);
      const auto exact = exact_summary(theta, g);
      const double gap = std::abs(bethe_free_energy(theta, g, retag<BeliefSet>(exact.marginals)).bethe_entropy - exact.entropy);
      smallest = std::min(smallest, gap);
      if (gap > 1e-6) ++differ;
    }
    const std::size_t needed = (instances * 9 + 9) / 10;
    r.passed = differ >= needed;
    std::ostringstream os;
    os << differ << " of " << instances << " 3-cycles with |H_bethe - H| > 1e-6 (need " << needed
       << "), smallest gap " << smallest;
    r.detail = os.str();
  });
}

CheckResult check_proxy_near_optimality(std::size_t epochs, std::uint64_t seed) {
  return timed("proxy_near_optimality", [&](CheckResult& r) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    const std::size_t k = 3, d = 3;
    const Labels labels{0, 1, 1, 2};
    std::vector<double> features(4 * d);
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t j = 0; j < d; ++j) features[s * d + j] = (j == labels[s] ? 1.0 : 0.0) + noise(rng);
    const std::vector<Graph> graphs{Graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, d, features, labels)};

    MarginalModels models(ModelConfig{}, d, k, rng());
    TrainConfig tc;
    tc.epochs = epochs;
    tc.alpha = 0.0;
    train_proxy(models, graphs, tc);
    Tape tape;
    ForwardPass fp(tape, models, graphs[0]);
    const double penalty =
        consistency_penalty(tape, exp(fp.node_log_tau()), exp(fp.edge_log_tau(false)), graphs[0]).value()[0];
    const auto theta = build_theta(pseudomarginals(models, graphs[0], false), graphs[0], tc.theta_eps);
    const auto mm = check_moment_matching(theta, graphs[0], labels, 0.05);
    const double deviation = std::max(mm.node_deviation, mm.edge_deviation);
    r.passed = deviation < 0.05 && penalty < 1e-3;
    std::ostringstream os;
    os << epochs << " epochs, moment-matching deviation " << deviation << ", consistency penalty " << penalty;
    r.detail = os.str();
  });
}

std::vector<std::string> verify_check_names() {
  return {"uniform_fixed_point",       "tree_exactness",  "gradient_proxy_loss",
          "gradient_consistency_penalty", "gradient_pseudolikelihood", "gradient_refinement",
          "refinement_identity",       "bethe_trees",     "bethe_cycles",
          "proxy_near_optimality"};
}

std::vector<CheckResult> run_verify_suite(std::string_view filter, const VerifyOptions& o) {
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> checks{
      {"uniform_fixed_point", [&] { return check_uniform_fixed_point(o.fixed_point_instances, o.seed); }},
      {"tree_exactness", [&] { return check_tree_exactness(o.tree_instances, o.seed + 1); }},
      {"gradient_proxy_loss", [&] { return check_gradient_proxy_loss(o.gradient_instances, o.seed + 2); }},
      {"gradient_consistency_penalty",
       [&] { return check_gradient_consistency_penalty(o.gradient_instances, o.seed + 3); }},
      {"gradient_pseudolikelihood", [&] { return check_gradient_pseudolikelihood(o.gradient_instances, o.seed + 4); }},
      {"gradient_refinement", [&] { return check_gradient_refinement(o.gradient_instances, o.seed + 5); }},
      {"refinement_identity", [&] { return check_refinement_identity(o.identity_instances, o.seed + 6); }},
      {"bethe_trees", [&] { return check_bethe_trees(o.bethe_instances, o.seed + 7); }},
      {"bethe_cycles", [&] { return check_bethe_cycles(o.bethe_instances, o.seed + 8); }},
      {"proxy_near_optimality", [&] { return check_proxy_near_optimality(o.proxy_epochs, o.seed + 9); }},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, run] : checks)
    if (filter.empty() || name.find(filter) != std::string::npos) out.push_back(run());
  return out;
}

}  // namespace spn
