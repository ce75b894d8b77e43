#include "spn/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace spn {

namespace {

void check_shapes(const ThetaFields& theta, const Graph& graph) {
  if (theta.num_labels < 2 || theta.num_nodes() != graph.num_nodes() || theta.num_edges() != graph.num_edges())
    throw std::invalid_argument("theta shape does not match graph");
}

double clamped_log(double p, double eps) { return std::log(std::max(p, eps)); }

// Calls visit(assignment, score) for every assignment in lexicographic order
// (node 0 most significant).
template <class Visit>
void enumerate(const ThetaFields& theta, const Graph& graph, std::uint64_t cap, Visit&& visit) {
  check_shapes(theta, graph);
  const auto n = graph.num_nodes();
  const auto k = theta.num_labels;
  double total = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    total *= static_cast<double>(k);
    if (total > static_cast<double>(cap))
      throw OracleInfeasible("oracle infeasible: " + std::to_string(k) + "^" + std::to_string(n) +
                             " assignments exceed cap " + std::to_string(cap));
  }
  Labels y(n, 0);
  while (true) {
    visit(std::as_const(y), joint_log_score(theta, graph, y));
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++y[i] < k) break;
      y[i] = 0;
      if (i == 0) return;
    }
    if (n == 0) return;
  }
}

}  // namespace

ThetaFields build_theta(const PseudomarginalSet& tau, const Graph& graph, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("build_theta: eps must be positive");
  const auto k = tau.num_labels;
  if (tau.num_nodes() != graph.num_nodes() || (tau.num_edges() != graph.num_edges()))
    throw std::invalid_argument("build_theta: pseudomarginals do not match graph");
  ThetaFields theta(graph.num_nodes(), graph.num_edges(), k);
  for (std::size_t i = 0; i < tau.node.size(); ++i) theta.node[i] = clamped_log(tau.node[i], eps);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [s, t] = graph.edges()[e];
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        theta.edge_at(e, a, b) = clamped_log(tau.edge_at(e, a, b), eps) - theta.node_at(s, a) - theta.node_at(t, b);
  }
  return theta;
}

ThetaVars build_theta(Tape& tape, const Var& node_log_tau, const std::optional<Var>& edge_log_tau,
                      const Graph& graph, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("build_theta: eps must be positive");
  const double floor = std::log(eps);
  ThetaVars out;
  out.node = clamp_min(node_log_tau, floor);
  if (graph.num_edges() == 0 || !edge_log_tau) return out;

  const auto k = node_log_tau.value().cols();
  std::vector<std::size_t> src, dst;
  for (const auto& e : graph.edges()) {
    src.push_back(e.u);
    dst.push_back(e.v);
  }
  // Expansion matrices spreading a |Y| vector along rows / columns of a |Y|x|Y| table.
  Tensor along_rows = Tensor::matrix(k, k * k), along_cols = Tensor::matrix(k, k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      along_rows.at(a, a * k + b) = 1.0;
      along_cols.at(b, a * k + b) = 1.0;
    }
  Var row_part = matmul(row_gather(out.node, src), tape.constant(std::move(along_rows)));
  Var col_part = matmul(row_gather(out.node, dst), tape.constant(std::move(along_cols)));
  out.edge = sub(sub(clamp_min(*edge_log_tau, floor), row_part), col_part);
  return out;
}

ThetaFields to_fields(const ThetaVars& theta, std::size_t num_labels) {
  const Tensor& node = theta.node.value();
  const std::size_t m = theta.edge ? theta.edge->value().rows() : 0;
  ThetaFields out(node.size() / num_labels, m, num_labels);
  std::copy(node.values().begin(), node.values().end(), out.node.begin());
  if (theta.edge) {
    const Tensor& edge = theta.edge->value();
    std::copy(edge.values().begin(), edge.values().end(), out.edge.begin());
  }
  return out;
}

double joint_log_score(const ThetaFields& theta, const Graph& graph, std::span<const Label> assignment) {
  if (assignment.size() != graph.num_nodes()) throw std::invalid_argument("assignment length != num_nodes");
  const auto k = theta.num_labels;
  double score = 0.0;
  for (std::size_t s = 0; s < assignment.size(); ++s) {
    if (assignment[s] >= k) throw std::invalid_argument("label out of range at node " + std::to_string(s));
    score += theta.node_at(s, assignment[s]);
  }
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) score += theta.edge_at(e, assignment[edges[e].u], assignment[edges[e].v]);
  return score;
}

ExactSummary exact_summary(const ThetaFields& theta, const Graph& graph, std::uint64_t cap) {
  std::vector<double> scores;
  ExactSummary out;
  double best = -std::numeric_limits<double>::infinity();
  double runner_up = best;
  enumerate(theta, graph, cap, [&](const Labels& y, double score) {
    scores.push_back(score);
    if (score > best) {
      runner_up = best;
      best = score;
      out.map_assignment = y;
    } else if (score > runner_up) {
      runner_up = score;
    }
  });
  out.map_margin = scores.size() > 1 ? best - runner_up : std::numeric_limits<double>::infinity();

  double sum = 0.0;
  for (double sc : scores) sum += std::exp(sc - best);
  out.log_partition = best + std::log(sum);
  out.map_log_prob = best - out.log_partition;

  const auto k = theta.num_labels;
  out.marginals = PseudomarginalSet(graph.num_nodes(), graph.num_edges(), k);
  const auto& edges = graph.edges();
  std::size_t idx = 0;
  double expected_score = 0.0;
  enumerate(theta, graph, cap, [&](const Labels& y, double) {
    const double sc = scores[idx++];
    const double p = std::exp(sc - out.log_partition);
    expected_score += p * sc;
    for (std::size_t s = 0; s < y.size(); ++s) out.marginals.node_at(s, y[s]) += p;
    for (std::size_t e = 0; e < edges.size(); ++e) out.marginals.edge_at(e, y[edges[e].u], y[edges[e].v]) += p;
  });
  out.entropy = out.log_partition - expected_score;
  return out;
}

Labels sample_exact(const ThetaFields& theta, const Graph& graph, std::mt19937_64& rng, std::uint64_t cap) {
  std::vector<double> scores;
  double best = -std::numeric_limits<double>::infinity();
  enumerate(theta, graph, cap, [&](const Labels&, double score) {
    scores.push_back(score);
    best = std::max(best, score);
  });
  double total = 0.0;
  for (auto& sc : scores) {
    sc = std::exp(sc - best);
    total += sc;
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  std::size_t pick = scores.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc += scores[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  // Decode the index back into the lexicographic assignment.
  const auto k = theta.num_labels;
  Labels y(graph.num_nodes(), 0);
  for (std::size_t i = y.size(); i-- > 0;) {
    y[i] = pick % k;
    pick /= k;
  }
  return y;
}

MomentMatchingReport check_moment_matching(const ThetaFields& theta, const Graph& graph, std::span<const Label> labels,
                                           double tol, std::uint64_t cap) {
  if (labels.size() != graph.num_nodes()) throw std::invalid_argument("labels length != num_nodes");
  const auto summary = exact_summary(theta, graph, cap);
  const auto k = theta.num_labels;
  MomentMatchingReport r;
  for (std::size_t s = 0; s < graph.num_nodes(); ++s)
    for (std::size_t a = 0; a < k; ++a) {
      const double target = a == labels[s] ? 1.0 : 0.0;
      r.node_deviation = std::max(r.node_deviation, std::abs(summary.marginals.node_at(s, a) - target));
    }
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [s, t] = graph.edges()[e];
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const double target = (a == labels[s] && b == labels[t]) ? 1.0 : 0.0;
        r.edge_deviation = std::max(r.edge_deviation, std::abs(summary.marginals.edge_at(e, a, b) - target));
      }
  }
  r.pass = r.node_deviation <= tol && r.edge_deviation <= tol;
  return r;
}

BetheReport bethe_free_energy(const ThetaFields& theta, const Graph& graph, const BeliefSet& beliefs, double tol) {
  check_shapes(theta, graph);
  const auto k = theta.num_labels;
  if (beliefs.num_labels != k || beliefs.num_nodes() != graph.num_nodes() || beliefs.num_edges() != graph.num_edges())
    throw std::invalid_argument("bethe_free_energy: belief shapes do not match graph");

  auto xlogx = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  BetheReport r;
  for (std::size_t s = 0; s < graph.num_nodes(); ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      const double q = beliefs.node_at(s, a);
      total += q;
      r.bethe_entropy -= xlogx(q);
      r.expected_score += q * theta.node_at(s, a);
    }
    if (std::abs(total - 1.0) > tol)
      throw std::invalid_argument("bethe_free_energy: node belief " + std::to_string(s) + " is not normalized");
  }
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    const auto [s, t] = graph.edges()[e];
    for (std::size_t a = 0; a < k; ++a) {
      double row = 0.0, col = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        row += beliefs.edge_at(e, a, b);
        col += beliefs.edge_at(e, b, a);
      }
      if (std::abs(row - beliefs.node_at(s, a)) > tol || std::abs(col - beliefs.node_at(t, a)) > tol)
        throw std::invalid_argument("bethe_free_energy: inconsistent beliefs on edge " + std::to_string(e));
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const double q = beliefs.edge_at(e, a, b);
        r.expected_score += q * theta.edge_at(e, a, b);
        if (q > 0.0) r.bethe_entropy -= q * std::log(q / (beliefs.node_at(s, a) * beliefs.node_at(t, b)));
      }
  }
  r.neg_free_energy = r.expected_score + r.bethe_entropy;
  return r;
}

}  // namespace spn
