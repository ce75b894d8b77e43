#include "spn/models.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

namespace spn {

namespace {

std::atomic<std::uint64_t> g_edge_head_evaluations{0};

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor w = Tensor::matrix(fan_in, fan_out);
  for (auto& x : w.values()) x = dist(rng);
  return w;
}

void add_encoder(ParameterSet& ps, const std::string& prefix, std::size_t in_dim, std::size_t layers,
                 std::size_t hidden, std::mt19937_64& rng) {
  for (std::size_t l = 0; l < layers; ++l) {
    const auto p = prefix + "." + std::to_string(l) + ".";
    const auto din = l == 0 ? in_dim : hidden;
    ps.add(p + "w_self", glorot(din, hidden, rng));
    ps.add(p + "w_nbr", glorot(din, hidden, rng));
    ps.add(p + "bias", Tensor({hidden}, 0.0));
  }
}

}  // namespace

EdgeHeadKind parse_edge_head(std::string_view name) {
  if (name == "linear") return EdgeHeadKind::linear;
  if (name == "bilinear") return EdgeHeadKind::bilinear;
  throw std::invalid_argument("unknown edge head variant '" + std::string(name) + "'");
}

std::string_view to_string(EdgeHeadKind kind) { return kind == EdgeHeadKind::linear ? "linear" : "bilinear"; }

void check(const ModelConfig& config) {
  if (config.encoder.num_layers < 1) throw std::invalid_argument("encoder needs at least one layer");
  if (config.encoder.hidden_dim < 1) throw std::invalid_argument("hidden_dim must be positive");
  if (!(config.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
}

MarginalModels::MarginalModels(ModelConfig config, std::size_t feature_dim, std::size_t num_labels,
                               std::uint64_t seed)
    : config_(config), feature_dim_(feature_dim), num_labels_(num_labels) {
  check(config_);
  if (feature_dim_ == 0 || num_labels_ < 2) throw std::invalid_argument("bad model dimensions");
  params_ = fresh_parameters(seed);
}

MarginalModels::MarginalModels(ModelConfig config, std::size_t feature_dim, std::size_t num_labels,
                               ParameterSet params)
    : config_(config), feature_dim_(feature_dim), num_labels_(num_labels) {
  check(config_);
  const ParameterSet expected = fresh_parameters(0);
  if (params.size() != expected.size()) throw std::invalid_argument("parameter count does not match model config");
  for (const auto& p : expected) {
    if (!params.contains(p.name)) throw std::invalid_argument("missing parameter " + p.name);
    if (params.get(p.name).value.shape() != p.value.shape())
      throw std::invalid_argument("parameter " + p.name + " has shape " + params.get(p.name).value.shape_string() +
                                  ", expected " + p.value.shape_string());
  }
  params_ = std::move(params);
}

ParameterSet MarginalModels::fresh_parameters(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const auto h = config_.encoder.hidden_dim;
  const auto k = num_labels_;
  ParameterSet ps;
  add_encoder(ps, "node_encoder", feature_dim_, config_.encoder.num_layers, h, rng);
  if (!config_.shared) add_encoder(ps, "edge_encoder", feature_dim_, config_.encoder.num_layers, h, rng);
  ps.add("node_head.weight", glorot(h, k, rng));
  ps.add("node_head.bias", Tensor({k}, 0.0));
  if (config_.edge_head == EdgeHeadKind::linear) {
    ps.add("edge_head.weight", glorot(2 * h, k * k, rng));
    ps.add("edge_head.bias", Tensor({k * k}, 0.0));
  } else {
    ps.add("edge_head.weight", glorot(h, k, rng));
  }
  return ps;
}

std::vector<std::string> MarginalModels::node_group() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (p.name.starts_with("node_")) out.push_back(p.name);
  return out;
}

std::vector<std::string> MarginalModels::edge_group() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (p.name.starts_with("edge_")) out.push_back(p.name);
  return out;
}

Tensor mean_aggregation_matrix(const Graph& graph) {
  const auto n = graph.num_nodes();
  Tensor m = Tensor::matrix(n, n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& nb = graph.neighbors(s);
    for (auto t : nb) m.at(s, t) = 1.0 / static_cast<double>(nb.size());
  }
  return m;
}

Var encode(Tape& tape, const ParameterSet& params, std::string_view prefix, std::size_t num_layers,
           const Graph& graph) {
  const std::string pre(prefix);
  const auto& w0 = params.get(pre + ".0.w_self").value;
  if (w0.rows() != graph.feature_dim())
    throw std::invalid_argument("encode: graph feature_dim " + std::to_string(graph.feature_dim()) +
                                " != encoder input dim " + std::to_string(w0.rows()));
  Var h = tape.constant(Tensor({graph.num_nodes(), graph.feature_dim()}, graph.features()));
  Var agg = tape.constant(mean_aggregation_matrix(graph));
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto p = pre + "." + std::to_string(l) + ".";
    Var self = matmul(h, tape.parameter(params.get(p + "w_self")));
    Var nbr = matmul(matmul(agg, h), tape.parameter(params.get(p + "w_nbr")));
    h = relu(add(add(self, nbr), tape.parameter(params.get(p + "bias"))));
  }
  return h;
}

ForwardPass::ForwardPass(Tape& tape, const MarginalModels& models, const Graph& graph)
    : tape_(tape), models_(models), graph_(graph) {}

Var ForwardPass::param(const std::string& name) { return tape_.parameter(models_.parameters().get(name)); }

Var ForwardPass::node_representation() {
  if (!node_repr_) {
    node_repr_ = encode(tape_, models_.parameters(), models_.node_encoder_prefix(),
                        models_.config().encoder.num_layers, graph_);
    ++encoder_forwards_;
  }
  return *node_repr_;
}

Var ForwardPass::edge_representation() {
  if (models_.config().shared) return node_representation();
  if (!edge_repr_) {
    edge_repr_ = encode(tape_, models_.parameters(), models_.edge_encoder_prefix(),
                        models_.config().encoder.num_layers, graph_);
    ++encoder_forwards_;
  }
  return *edge_repr_;
}

Var ForwardPass::node_logits() {
  if (!node_logits_)
    node_logits_ = add(matmul(node_representation(), param("node_head.weight")), param("node_head.bias"));
  return *node_logits_;
}

Var ForwardPass::node_log_tau() {
  if (!node_log_tau_) node_log_tau_ = log_softmax_rows(node_logits());
  return *node_log_tau_;
}

Var ForwardPass::edge_logits() {
  if (edge_logits_) return *edge_logits_;
  if (graph_.num_edges() == 0) throw std::logic_error("edge_logits: graph has no edges");
  ++g_edge_head_evaluations;
  std::vector<std::size_t> src, dst;
  for (const auto& e : graph_.edges()) {
    src.push_back(e.u);
    dst.push_back(e.v);
  }
  Var v = edge_representation();
  if (models_.config().edge_head == EdgeHeadKind::linear) {
    Var pair = concat(row_gather(v, src), row_gather(v, dst));
    edge_logits_ = add(matmul(pair, param("edge_head.weight")), param("edge_head.bias"));
  } else {
    Var proj = matmul(v, param("edge_head.weight"));
    edge_logits_ = row_outer(row_gather(proj, src), row_gather(proj, dst));
  }
  return *edge_logits_;
}

Var ForwardPass::edge_log_tau(bool apply_temperature) {
  auto& slot = edge_log_tau_[apply_temperature ? 1 : 0];
  if (!slot) {
    Var logits = edge_logits();
    if (apply_temperature) logits = scalar_scale(logits, 1.0 / models_.config().gamma);
    slot = log_softmax_rows(logits);
  }
  return *slot;
}

namespace {

PseudomarginalSet collect(const MarginalModels& models, const Graph& graph, bool with_edges, bool temper) {
  Tape tape;
  ForwardPass fp(tape, models, graph);
  const auto k = models.num_labels();
  PseudomarginalSet tau(graph.num_nodes(), with_edges ? graph.num_edges() : 0, k);
  const Tensor& node = fp.node_log_tau().value();
  for (std::size_t i = 0; i < node.size(); ++i) tau.node[i] = std::exp(node[i]);
  if (with_edges && graph.num_edges() > 0) {
    const Tensor& edge = fp.edge_log_tau(temper).value();
    for (std::size_t i = 0; i < edge.size(); ++i) tau.edge[i] = std::exp(edge[i]);
  }
  return tau;
}

}  // namespace

PseudomarginalSet node_pseudomarginals(const MarginalModels& models, const Graph& graph) {
  return collect(models, graph, false, false);
}

PseudomarginalSet pseudomarginals(const MarginalModels& models, const Graph& graph, bool apply_temperature) {
  return collect(models, graph, true, apply_temperature);
}

std::uint64_t edge_head_evaluations() { return g_edge_head_evaluations.load(); }

}  // namespace spn
