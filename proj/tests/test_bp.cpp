#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "spn/bp.hpp"
#include "spn/crf.hpp"
#include "spn/learning.hpp"
#include "spn/synthetic.hpp"
#include "spn/verify.hpp"

using namespace spn;

namespace {

Graph bare(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  return Graph(n, edges, 1, std::vector<double>(n, 0.0));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void zero_parameters(MarginalModels& models) {
  for (auto& p : models.parameters())
    for (auto& x : p.value.values()) x = 0.0;
}

}  // namespace

TEST_CASE("uniform messages are a fixed point for consistent pseudomarginals") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Graph g = random_connected_graph(6, 0.5, rng);
    const auto tau = consistent_pseudomarginals(g, 3, 1.0, rng);
    const auto theta = build_theta(tau, g, kDefaultThetaEps);
    const auto r = run_bp(theta, g, {BPMode::sum, 1, 1e-12, 0.0, BPSchedule::synchronous});
    CHECK(r.last_change < 1e-10);
    CHECK(max_abs_diff(r.beliefs.node, tau.node) < 1e-8);
    CHECK(max_abs_diff(r.beliefs.edge, tau.edge) < 1e-8);
  }
}

TEST_CASE("edgeless graph needs no iterations") {
  ThetaFields theta(2, 0, 3);
  theta.node = {0, 1, 2, 0, 0, 0};
  const auto r = run_bp(theta, bare(2, {}), {});
  CHECK(r.converged);
  CHECK(r.iters == 0);
  const double z = 1 + std::exp(1.0) + std::exp(2.0);
  CHECK(r.beliefs.node_at(0, 2) == doctest::Approx(std::exp(2.0) / z));
  CHECK(r.beliefs.node_at(1, 1) == doctest::Approx(1.0 / 3));
}

TEST_CASE("sum-product is exact on trees") {
  std::mt19937_64 rng(2);
  for (auto schedule : {BPSchedule::round_robin, BPSchedule::synchronous}) {
    for (int rep = 0; rep < 10; ++rep) {
      const Graph g = random_tree(10, rng);
      const auto theta = random_theta(g, 3, 1.0, rng);
      const auto r = run_bp(theta, g, {BPMode::sum, 100, 1e-13, 0.0, schedule});
      CHECK(r.converged);
      const auto exact = exact_summary(theta, g);
      CHECK(max_abs_diff(r.beliefs.node, exact.marginals.node) < 1e-8);
      CHECK(max_abs_diff(r.beliefs.edge, exact.marginals.edge) < 1e-8);
    }
  }
}

TEST_CASE("max-product decodes the MAP on trees") {
  std::mt19937_64 rng(3);
  int compared = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const Graph g = random_tree(8, rng);
    const auto theta = random_theta(g, 3, 1.0, rng);
    const auto exact = exact_summary(theta, g);
    if (exact.map_margin < 1e-6) continue;
    const auto r = run_bp(theta, g, {BPMode::max, 100, 1e-12, 0.0, BPSchedule::round_robin});
    CHECK(decode(theta, r.messages, g) == exact.map_assignment);
    ++compared;
  }
  CHECK(compared >= 20);
}

TEST_CASE("decode ties and preferences") {
  ThetaFields theta(1, 0, 2);
  theta.node = {0.0, 1.0};
  CHECK(decode(theta, MessageSet(0, 2), bare(1, {})) == Labels{1});

  const Graph g = bare(3, {{0, 1}, {1, 2}});
  const ThetaFields flat(3, 2, 4);
  const auto r = run_bp(flat, g, {});
  CHECK(decode(flat, r.messages, g) == Labels{0, 0, 0});
}

TEST_CASE("messages stay normalized and finite") {
  std::mt19937_64 rng(4);
  for (double scale : {1.0, 10.0, 50.0}) {
    const Graph g = random_connected_graph(8, 0.5, rng);
    const auto theta = random_theta(g, 3, scale, rng);
    for (auto mode : {BPMode::sum, BPMode::max}) {
      const auto r = run_bp(theta, g, {mode, 30, 1e-6, 0.5, BPSchedule::synchronous});
      for (std::size_t d = 0; d < r.messages.size(); ++d) {
        double total = 0.0;
        for (double m : r.messages.message(d)) {
          CHECK(std::isfinite(m));
          CHECK(m > 0.0);
          total += m;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
      for (double q : r.beliefs.node) CHECK(std::isfinite(q));
      for (double q : r.beliefs.edge) CHECK(std::isfinite(q));
    }
  }
}

TEST_CASE("zero damping matches the undamped update bit for bit") {
  std::mt19937_64 rng(5);
  const Graph g = random_connected_graph(7, 0.5, rng);
  const auto theta = random_theta(g, 3, 1.0, rng);
  const auto a = run_bp(theta, g, {BPMode::sum, 7, 1e-30, 0.0, BPSchedule::round_robin});
  // Manual round-robin sweeps from uniform messages.
  const auto k = theta.num_labels;
  MessageSet m(g.num_edges(), k);
  for (int it = 0; it < 7; ++it)
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      for (bool row_sends : {true, false}) {
        const auto [u, v] = g.edges()[e];
        const std::size_t sender = row_sends ? u : v;
        std::vector<double> field(k), out(k);
        for (std::size_t b = 0; b < k; ++b) {
          field[b] = theta.node_at(sender, b);
          for (const auto& inc : g.incident(sender))
            if (inc.edge != e) field[b] += std::log(m.message(MessageSet::into(inc.edge, inc.is_row))[b]);
        }
        double z = 0.0;
        for (std::size_t a2 = 0; a2 < k; ++a2) {
          double s = 0.0;
          for (std::size_t b = 0; b < k; ++b)
            s += std::exp(field[b] + (row_sends ? theta.edge_at(e, b, a2) : theta.edge_at(e, a2, b)));
          z += (out[a2] = s);
        }
        auto dst = m.message(MessageSet::out_of(e, row_sends));
        for (std::size_t a2 = 0; a2 < k; ++a2) dst[a2] = out[a2] / z;
      }
  CHECK(max_abs_diff(a.messages.values, m.values) < 1e-12);
}

TEST_CASE("damping keeps the fixed point on trees") {
  std::mt19937_64 rng(6);
  const Graph g = random_tree(6, rng);
  const auto theta = random_theta(g, 2, 1.0, rng);
  const auto r = run_bp(theta, g, {BPMode::sum, 500, 1e-13, 0.5, BPSchedule::synchronous});
  CHECK(r.converged);
  CHECK(max_abs_diff(r.beliefs.node, exact_summary(theta, g).marginals.node) < 1e-8);
}

TEST_CASE("non-convergence is reported, not thrown") {
  std::mt19937_64 rng(7);
  const Graph g = random_connected_graph(8, 0.8, rng);
  const auto theta = random_theta(g, 3, 5.0, rng);
  const auto r = run_bp(theta, g, {BPMode::sum, 1, 1e-12, 0.0, BPSchedule::round_robin});
  CHECK_FALSE(r.converged);
  CHECK(r.iters == 1);
  CHECK(r.beliefs.node.size() == 24);
}

TEST_CASE("bp config validation") {
  CHECK_THROWS(check(BPConfig{BPMode::sum, 0, 1e-6, 0.0, BPSchedule::round_robin}));
  CHECK_THROWS(check(BPConfig{BPMode::sum, 10, 1e-6, 1.0, BPSchedule::round_robin}));
  CHECK_THROWS(check(BPConfig{BPMode::sum, 10, 0.0, 0.0, BPSchedule::round_robin}));
  CHECK(parse_bp_mode("max") == BPMode::max);
  CHECK(parse_bp_schedule("synchronous") == BPSchedule::synchronous);
  CHECK_THROWS_AS(parse_bp_mode("mean"), std::invalid_argument);
}

TEST_CASE("inference with zero weights decodes label zero") {
  MarginalModels models(ModelConfig{}, 2, 3, 9);
  zero_parameters(models);
  const Graph g(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 2, std::vector<double>(8, 1.0));
  const auto inf = infer_graph(models, g, BPConfig{});
  CHECK(inf.labels == Labels{0, 0, 0, 0});
  CHECK(inf.converged);
}

TEST_CASE("single node inference is the node argmax") {
  MarginalModels models(ModelConfig{}, 2, 3, 10);
  const Graph g(1, {}, 2, {0.3, -1.2});
  const auto tau = node_pseudomarginals(models, g);
  const auto best = std::max_element(tau.node.begin(), tau.node.end()) - tau.node.begin();
  CHECK(infer_graph(models, g, BPConfig{}).labels == Labels{static_cast<Label>(best)});
  CHECK(predict_node_only(models, g) == Labels{static_cast<Label>(best)});
}

TEST_CASE("a model fit to one graph decodes its labels") {
  const Labels gold{0, 1, 1, 2};
  std::vector<double> features;
  for (Label y : gold)
    for (std::size_t j = 0; j < 3; ++j) features.push_back(j == y ? 1.0 : 0.0);
  const std::vector<Graph> graphs{Graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, 3, features, gold)};
  MarginalModels models(ModelConfig{}, 3, 3, 11);
  TrainConfig tc;
  tc.epochs = 300;
  train_proxy(models, graphs, tc);
  CHECK(infer_graph(models, graphs[0], BPConfig{}).labels == gold);
}

TEST_CASE("node-only prediction never evaluates the edge head") {
  MarginalModels models(ModelConfig{}, 2, 2, 12);
  const Graph g(3, {{0, 1}, {1, 2}}, 2, std::vector<double>(6, 0.5));
  const auto before = edge_head_evaluations();
  predict_node_only(models, g);
  CHECK(edge_head_evaluations() == before);
  infer_graph(models, g, BPConfig{});
  CHECK(edge_head_evaluations() > before);
}
