#include "spn/learning.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace spn {

void check(const TrainConfig& config) {
  if (!(config.node_lr > 0.0) || !(config.edge_lr > 0.0) || !(config.refine_lr > 0.0))
    throw std::invalid_argument("learning rates must be positive");
  if (!(config.alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  if (!(config.theta_eps > 0.0)) throw std::invalid_argument("theta_eps must be positive");
  check(config.bp);
}

const PhaseReport& TrainReport::phase(const std::string& name) const {
  for (const auto& p : phases)
    if (p.name == name) return p;
  throw std::out_of_range("no phase named " + name);
}

namespace {

const Labels& gold(const Graph& graph) {
  if (!graph.has_labels()) throw std::invalid_argument("graph has no gold labels");
  return graph.labels();
}

Tensor node_one_hot(const Graph& graph, std::size_t k) {
  const auto& y = gold(graph);
  Tensor t = Tensor::matrix(graph.num_nodes(), k);
  for (std::size_t s = 0; s < y.size(); ++s) t.at(s, y[s]) = 1.0;
  return t;
}

Tensor edge_one_hot(const Graph& graph, std::size_t k) {
  const auto& y = gold(graph);
  Tensor t = Tensor::matrix(graph.num_edges(), k * k);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) t.at(e, y[graph.edges()[e].u] * k + y[graph.edges()[e].v]) = 1.0;
  return t;
}

// |Y|^2 x |Y| matrices summing a flattened edge table over its columns / rows.
Tensor row_sum_matrix(std::size_t k) {
  Tensor m = Tensor::matrix(k * k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) m.at(a * k + b, a) = 1.0;
  return m;
}

Tensor col_sum_matrix(std::size_t k) {
  Tensor m = Tensor::matrix(k * k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) m.at(a * k + b, b) = 1.0;
  return m;
}

void endpoints(const Graph& graph, std::vector<std::size_t>& src, std::vector<std::size_t>& dst) {
  for (const auto& e : graph.edges()) {
    src.push_back(e.u);
    dst.push_back(e.v);
  }
}

void accumulate(GradientMap& into, const GradientMap& g) {
  for (const auto& [name, t] : g) {
    auto [it, inserted] = into.try_emplace(name, t);
    if (!inserted)
      for (std::size_t i = 0; i < t.size(); ++i) it->second[i] += t[i];
  }
}

void fill_missing(GradientMap& grads, const MarginalModels& models) {
  for (const auto& p : models.parameters()) grads.try_emplace(p.name, p.value.shape(), 0.0);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Loss for one graph plus the terms reported per epoch.
struct GraphLoss {
  std::optional<Var> loss;
  EpochRecord record;
};

using GraphLossFn = std::function<GraphLoss(ForwardPass&)>;

// Full-batch minimization: sums per-graph gradients in graph order, then one
// Adam step per requested group.
PhaseReport minimize(const std::string& name, MarginalModels& models, std::span<const Graph> graphs,
                     std::size_t epochs, Optimizers& opt, bool step_node, bool step_edge, const GraphLossFn& fn) {
  PhaseReport phase;
  phase.name = name;
  const auto start = Clock::now();
  for (std::size_t ep = 0; ep < epochs; ++ep) {
    EpochRecord total;
    GradientMap grads;
    for (const auto& g : graphs) {
      Tape tape;
      ForwardPass fp(tape, models, g);
      const GraphLoss gl = fn(fp);
      total.node += gl.record.node;
      total.edge += gl.record.edge;
      total.penalty += gl.record.penalty;
      total.objective += gl.record.objective;
      if (gl.loss) accumulate(grads, tape.backward(*gl.loss).parameters());
    }
    fill_missing(grads, models);
    if (step_node) opt.node.step(models.parameters(), grads);
    if (step_edge) opt.edge.step(models.parameters(), grads);
    phase.epochs.push_back(total);
  }
  phase.seconds = seconds_since(start);
  return phase;
}

}  // namespace

ProxyTerms proxy_terms(ForwardPass& fp) {
  const Graph& graph = fp.graph();
  const auto k = fp.models().num_labels();
  Tape& tape = fp.tape();
  ProxyTerms out;
  out.node = scalar_scale(reduce_sum(mul(fp.node_log_tau(), tape.constant(node_one_hot(graph, k)))), -1.0);
  if (graph.num_edges() > 0)
    out.edge = scalar_scale(reduce_sum(mul(fp.edge_log_tau(false), tape.constant(edge_one_hot(graph, k)))), -1.0);
  return out;
}

Var proxy_loss(ForwardPass& fp) {
  const auto terms = proxy_terms(fp);
  return terms.edge ? add(terms.node, *terms.edge) : terms.node;
}

Var consistency_penalty(Tape& tape, const Var& node_tau, const Var& edge_tau, const Graph& graph) {
  const auto k = node_tau.value().cols();
  if (graph.num_edges() == 0) return tape.constant(Tensor::scalar(0.0));
  std::vector<std::size_t> src, dst;
  endpoints(graph, src, dst);
  Var row_sums = matmul(edge_tau, tape.constant(row_sum_matrix(k)));  // sum_b tau_st(a, b)
  Var col_sums = matmul(edge_tau, tape.constant(col_sum_matrix(k)));  // sum_a tau_st(a, b)
  Var ds = sub(row_sums, row_gather(node_tau, src));
  Var dt = sub(col_sums, row_gather(node_tau, dst));
  return add(reduce_sum(mul(dt, dt)), reduce_sum(mul(ds, ds)));
}

Var refinement_objective(Tape& tape, const ThetaVars& theta, const BeliefSet& beliefs, const Graph& graph) {
  const auto k = beliefs.num_labels;
  Tensor node_w = node_one_hot(graph, k);
  for (std::size_t i = 0; i < node_w.size(); ++i) node_w[i] -= beliefs.node[i];
  Var obj = reduce_sum(mul(theta.node, tape.constant(std::move(node_w))));
  if (theta.edge) {
    Tensor edge_w = edge_one_hot(graph, k);
    for (std::size_t i = 0; i < edge_w.size(); ++i) edge_w[i] -= beliefs.edge[i];
    obj = add(obj, reduce_sum(mul(*theta.edge, tape.constant(std::move(edge_w)))));
  }
  return obj;
}

Var pseudolikelihood_loss(Tape& tape, const ThetaVars& theta, const Graph& graph) {
  const auto n = graph.num_nodes();
  const auto k = theta.node.value().cols();
  const auto& y = gold(graph);
  Var cond = theta.node;
  if (theta.edge && graph.num_edges() > 0) {
    const auto m = graph.num_edges();
    // Select theta_st(., y*_t) for the row endpoint and theta_st(y*_s, .) for the column endpoint.
    Tensor row_mask = Tensor::matrix(m, k * k), col_mask = Tensor::matrix(m, k * k);
    Tensor to_row = Tensor::matrix(n, m), to_col = Tensor::matrix(n, m);
    for (std::size_t e = 0; e < m; ++e) {
      const auto [s, t] = graph.edges()[e];
      for (std::size_t a = 0; a < k; ++a) {
        row_mask.at(e, a * k + y[t]) = 1.0;
        col_mask.at(e, y[s] * k + a) = 1.0;
      }
      to_row.at(s, e) = 1.0;
      to_col.at(t, e) = 1.0;
    }
    Var from_row = matmul(mul(*theta.edge, tape.constant(std::move(row_mask))), tape.constant(row_sum_matrix(k)));
    Var from_col = matmul(mul(*theta.edge, tape.constant(std::move(col_mask))), tape.constant(col_sum_matrix(k)));
    cond = add(cond, add(matmul(tape.constant(std::move(to_row)), from_row),
                         matmul(tape.constant(std::move(to_col)), from_col)));
  }
  return scalar_scale(reduce_sum(mul(log_softmax_rows(cond), tape.constant(node_one_hot(graph, k)))), -1.0);
}

ThetaVars model_theta(ForwardPass& fp, double eps) {
  std::optional<Var> edge;
  if (fp.graph().num_edges() > 0) edge = fp.edge_log_tau(false);
  return build_theta(fp.tape(), fp.node_log_tau(), edge, fp.graph(), eps);
}

Optimizers::Optimizers(const MarginalModels& models, double node_lr, double edge_lr)
    : node(AdamConfig{node_lr}, models.node_group()), edge(AdamConfig{edge_lr}, models.edge_group()) {}

TrainReport train_proxy(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config) {
  check(config);
  Optimizers opt(models, config.node_lr, config.edge_lr);
  TrainReport report;
  report.method = "proxy";
  report.phases.push_back(minimize("proxy", models, graphs, config.epochs, opt, true, true, [&](ForwardPass& fp) {
    GraphLoss gl;
    const auto terms = proxy_terms(fp);
    gl.record.node = terms.node.value()[0];
    gl.loss = terms.node;
    if (terms.edge) {
      gl.record.edge = terms.edge->value()[0];
      gl.loss = add(*gl.loss, *terms.edge);
      Var node_tau = exp(fp.node_log_tau());
      Var edge_tau = exp(fp.edge_log_tau(false));
      Var pen = consistency_penalty(fp.tape(), node_tau, edge_tau, fp.graph());
      gl.record.penalty = pen.value()[0];
      if (config.alpha > 0.0) gl.loss = add(*gl.loss, scalar_scale(pen, config.alpha));
    }
    gl.record.objective = gl.record.node + gl.record.edge + config.alpha * gl.record.penalty;
    return gl;
  }));
  if (config.refine_epochs > 0) {
    report.method = "proxy+refine";
    report.phases.push_back(refine(models, graphs, config));
  }
  return report;
}

TrainReport train_node_only(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config) {
  check(config);
  Optimizers opt(models, config.node_lr, config.edge_lr);
  TrainReport report;
  report.method = "node-only";
  report.phases.push_back(
      minimize("node-only", models, graphs, config.epochs, opt, true, false, [&](ForwardPass& fp) {
        GraphLoss gl;
        const Var onehot = fp.tape().constant(node_one_hot(fp.graph(), fp.models().num_labels()));
        gl.loss = scalar_scale(reduce_sum(mul(fp.node_log_tau(), onehot)), -1.0);
        gl.record.node = gl.loss->value()[0];
        gl.record.objective = gl.record.node;
        return gl;
      }));
  return report;
}

TrainReport train_pseudolikelihood(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config) {
  check(config);
  Optimizers opt(models, config.node_lr, config.edge_lr);
  TrainReport report;
  report.method = "pseudolikelihood";
  report.phases.push_back(
      minimize("pseudolikelihood", models, graphs, config.epochs, opt, true, true, [&](ForwardPass& fp) {
        GraphLoss gl;
        const ThetaVars theta = model_theta(fp, config.theta_eps);
        gl.loss = pseudolikelihood_loss(fp.tape(), theta, fp.graph());
        gl.record.objective = gl.loss->value()[0];
        return gl;
      }));
  return report;
}

RefineStep refine_step(MarginalModels& models, std::span<const Graph> graphs, const BPConfig& bp,
                       Optimizers& optimizers, double eps) {
  if (bp.mode != BPMode::sum) throw std::invalid_argument("refinement needs sum-product beliefs");
  RefineStep out;
  GradientMap grads;
  for (const auto& g : graphs) {
    Tape tape;
    ForwardPass fp(tape, models, g);
    const ThetaVars theta = model_theta(fp, eps);
    const BPResult r = run_bp(to_fields(theta, models.num_labels()), g, bp);
    out.bp_iterations += r.iters;
    out.bp_unconverged += r.converged ? 0 : 1;
    Var obj = refinement_objective(tape, theta, r.beliefs, g);
    out.objective += obj.value()[0];
    accumulate(grads, tape.backward(scalar_scale(obj, -1.0)).parameters());
  }
  fill_missing(grads, models);
  optimizers.node.step(models.parameters(), grads);
  optimizers.edge.step(models.parameters(), grads);
  return out;
}

namespace {

PhaseReport maximin_phase(const std::string& name, MarginalModels& models, std::span<const Graph> graphs,
                          std::size_t epochs, Optimizers& opt, const TrainConfig& config) {
  PhaseReport phase;
  phase.name = name;
  const auto start = Clock::now();
  for (std::size_t ep = 0; ep < epochs; ++ep) {
    const RefineStep r = refine_step(models, graphs, config.bp, opt, config.theta_eps);
    phase.epochs.push_back({0.0, 0.0, 0.0, r.objective});
    phase.bp_runs += graphs.size();
    phase.bp_iterations += r.bp_iterations;
    phase.bp_unconverged += r.bp_unconverged;
  }
  phase.seconds = seconds_since(start);
  return phase;
}

}  // namespace

PhaseReport refine(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config) {
  check(config);
  Optimizers opt(models, config.refine_lr, config.refine_lr);
  return maximin_phase("refine", models, graphs, config.refine_epochs, opt, config);
}

TrainReport train_maximin(MarginalModels& models, std::span<const Graph> graphs, const TrainConfig& config) {
  check(config);
  Optimizers opt(models, config.node_lr, config.edge_lr);
  TrainReport report;
  report.method = "maximin";
  report.phases.push_back(maximin_phase("maximin", models, graphs, config.epochs, opt, config));
  return report;
}

}  // namespace spn
