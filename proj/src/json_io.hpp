#pragma once

// JSON conversions shared by the experiment and checkpoint code.

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "spn/bp.hpp"
#include "spn/learning.hpp"
#include "spn/models.hpp"
#include "spn/synthetic.hpp"

namespace spn::io {

using json = nlohmann::json;

/// Rejects keys outside `allowed` so that typos do not silently fall back to defaults.
inline void expect_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline json to_json(const BPConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"max_iters", c.max_iters},
          {"tol", c.tol},
          {"damping", c.damping},
          {"schedule", to_string(c.schedule)}};
}

inline BPConfig bp_from_json(const json& j, BPConfig c, const std::string& where) {
  expect_keys(j, {"mode", "max_iters", "tol", "damping", "schedule"}, where);
  if (j.contains("mode")) c.mode = parse_bp_mode(j.at("mode").get<std::string>());
  if (j.contains("schedule")) c.schedule = parse_bp_schedule(j.at("schedule").get<std::string>());
  read(j, "max_iters", c.max_iters);
  read(j, "tol", c.tol);
  read(j, "damping", c.damping);
  check(c);
  return c;
}

inline json to_json(const ModelConfig& c) {
  return {{"num_layers", c.encoder.num_layers},
          {"hidden_dim", c.encoder.hidden_dim},
          {"shared", c.shared},
          {"edge_head", to_string(c.edge_head)},
          {"gamma", c.gamma}};
}

inline ModelConfig model_from_json(const json& j) {
  expect_keys(j, {"num_layers", "hidden_dim", "shared", "edge_head", "gamma"}, "model");
  ModelConfig c;
  read(j, "num_layers", c.encoder.num_layers);
  read(j, "hidden_dim", c.encoder.hidden_dim);
  read(j, "shared", c.shared);
  read(j, "gamma", c.gamma);
  if (j.contains("edge_head")) c.edge_head = parse_edge_head(j.at("edge_head").get<std::string>());
  check(c);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},     {"node_lr", c.node_lr},         {"edge_lr", c.edge_lr},
          {"alpha", c.alpha},       {"refine_epochs", c.refine_epochs}, {"refine_lr", c.refine_lr},
          {"bp", to_json(c.bp)},    {"theta_eps", c.theta_eps}};
}

inline TrainConfig train_from_json(const json& j) {
  expect_keys(j, {"epochs", "node_lr", "edge_lr", "alpha", "refine_epochs", "refine_lr", "bp", "theta_eps"}, "train");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "node_lr", c.node_lr);
  read(j, "edge_lr", c.edge_lr);
  read(j, "alpha", c.alpha);
  read(j, "refine_epochs", c.refine_epochs);
  read(j, "refine_lr", c.refine_lr);
  read(j, "theta_eps", c.theta_eps);
  if (j.contains("bp")) c.bp = bp_from_json(j.at("bp"), c.bp, "train.bp");
  check(c);
  return c;
}

inline SyntheticSpec synthetic_from_json(const json& j) {
  expect_keys(j,
              {"splits", "nodes_per_graph", "num_labels", "feature_dim", "coupling_strength", "noise", "edge_prob",
               "seed"},
              "synthetic");
  SyntheticSpec s;
  if (j.contains("splits")) s.splits = j.at("splits").get<std::map<std::string, std::size_t>>();
  read(j, "nodes_per_graph", s.nodes_per_graph);
  read(j, "num_labels", s.num_labels);
  read(j, "feature_dim", s.feature_dim);
  read(j, "coupling_strength", s.coupling_strength);
  read(j, "noise", s.noise);
  read(j, "edge_prob", s.edge_prob);
  read(j, "seed", s.seed);
  check(s);
  return s;
}

inline json to_json(const SyntheticSpec& s) {
  return {{"splits", s.splits},       {"nodes_per_graph", s.nodes_per_graph},
          {"num_labels", s.num_labels}, {"feature_dim", s.feature_dim},
          {"coupling_strength", s.coupling_strength}, {"noise", s.noise},
          {"edge_prob", s.edge_prob}, {"seed", s.seed}};
}

}  // namespace spn::io
