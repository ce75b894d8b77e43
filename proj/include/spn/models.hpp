#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spn/fields.hpp"
#include "spn/graph.hpp"
#include "spn/tensor.hpp"

namespace spn {

enum class Aggregation { mean };
enum class Activation { relu };
enum class EdgeHeadKind { linear, bilinear };

EdgeHeadKind parse_edge_head(std::string_view name);
std::string_view to_string(EdgeHeadKind kind);

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 16;
  Aggregation aggregation = Aggregation::mean;
  Activation activation = Activation::relu;
};

struct ModelConfig {
  EncoderConfig encoder;
  bool shared = false;
  EdgeHeadKind edge_head = EdgeHeadKind::linear;
  double gamma = 1.0;
};

void check(const ModelConfig& config);

/// Node GNN + head f and edge GNN + head g. With `shared` set, both heads
/// read the node encoder's representation and no edge encoder exists.
///
/// Parameter layout (row-major, inputs multiply from the left):
///   node_encoder.<l>.{w_self,w_nbr}: in x hidden, node_encoder.<l>.bias: hidden
///   edge_encoder.<l>.*             : same, absent when shared
///   node_head.{weight,bias}        : hidden x |Y|, |Y|
///   edge_head.{weight,bias}        : 2*hidden x |Y|^2, |Y|^2   (linear)
///   edge_head.weight               : hidden x |Y|              (bilinear)
class MarginalModels {
 public:
  MarginalModels(ModelConfig config, std::size_t feature_dim, std::size_t num_labels, std::uint64_t seed);
  /// Adopts existing parameters; throws if names or shapes do not match the config.
  MarginalModels(ModelConfig config, std::size_t feature_dim, std::size_t num_labels, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_labels() const { return num_labels_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Parameters trained at the node learning rate (node encoder + f).
  std::vector<std::string> node_group() const;
  /// Parameters trained at the edge learning rate (edge encoder, if any, + g).
  std::vector<std::string> edge_group() const;

  std::string node_encoder_prefix() const { return "node_encoder"; }
  std::string edge_encoder_prefix() const { return config_.shared ? "node_encoder" : "edge_encoder"; }

 private:
  ParameterSet fresh_parameters(std::uint64_t seed) const;

  ModelConfig config_;
  std::size_t feature_dim_;
  std::size_t num_labels_;
  ParameterSet params_;
};

/// Message-passing encoder: h <- relu(h W_self + mean_{N(s)} h W_nbr + b) per layer.
Var encode(Tape& tape, const ParameterSet& params, std::string_view prefix, std::size_t num_layers,
           const Graph& graph);

/// Row-normalized adjacency (mean aggregation); isolated nodes get a zero row.
Tensor mean_aggregation_matrix(const Graph& graph);

/// One graph's forward computation on a tape. Representations and logits are
/// computed lazily and cached; with a shared encoder the node and edge heads
/// read the same Var.
class ForwardPass {
 public:
  ForwardPass(Tape& tape, const MarginalModels& models, const Graph& graph);

  Var node_representation();
  Var edge_representation();
  Var node_logits();
  /// log tau_s, shape n x |Y|.
  Var node_log_tau();
  /// Raw g(v_s, v_t), shape |E| x |Y|^2. Requires at least one edge.
  Var edge_logits();
  /// log tau_st, shape |E| x |Y|^2; logits divided by gamma when apply_temperature.
  Var edge_log_tau(bool apply_temperature);

  Tape& tape() { return tape_; }
  const Graph& graph() const { return graph_; }
  const MarginalModels& models() const { return models_; }
  std::size_t encoder_forwards() const { return encoder_forwards_; }

 private:
  Var param(const std::string& name);

  Tape& tape_;
  const MarginalModels& models_;
  const Graph& graph_;
  std::optional<Var> node_repr_, edge_repr_, node_logits_, node_log_tau_, edge_logits_;
  std::optional<Var> edge_log_tau_[2];
  std::size_t encoder_forwards_ = 0;
};

/// Node part of the pseudomarginal set (edge tables left empty).
PseudomarginalSet node_pseudomarginals(const MarginalModels& models, const Graph& graph);
/// Full pseudomarginal set; gamma applied to edge logits when apply_temperature.
PseudomarginalSet pseudomarginals(const MarginalModels& models, const Graph& graph, bool apply_temperature);

/// Number of edge-head evaluations in this process (instrumentation).
std::uint64_t edge_head_evaluations();

}  // namespace spn
