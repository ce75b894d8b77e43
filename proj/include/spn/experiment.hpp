#pragma once

// Experiment plumbing: configs, method dispatch, evaluation and report output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spn/bp.hpp"
#include "spn/graph.hpp"
#include "spn/learning.hpp"
#include "spn/metrics.hpp"
#include "spn/models.hpp"
#include "spn/synthetic.hpp"

namespace spn {

enum class Method { proxy, proxy_refine, maximin, pseudolikelihood, node_only };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> dataset_path;
  std::optional<SyntheticSpec> synthetic;
  ModelConfig model;
  TrainConfig train;
  BPConfig inference;
  std::string train_split = "train";
  std::vector<std::string> eval_splits{"test"};
  std::filesystem::path output_dir = "runs";
};

/// Seed for a named stochastic component, derived from the root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view component);

/// Relative dataset paths resolve against base_dir. Throws ConfigError.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SyntheticSpec parse_synthetic_spec(const std::string& json_text);

/// Dataset from the configured file or generator (generator seed derived from the root seed).
Dataset load_experiment_data(const ExperimentConfig& config);

/// Runs the training procedure for `method` on freshly initialized models.
TrainReport train_method(MarginalModels& models, Method method, std::span<const Graph> graphs,
                         const TrainConfig& config);

/// Whether inference tempers edge logits by gamma. Maximin and pseudolikelihood
/// train theta directly and decode it as learned.
bool uses_temperature(Method method);

std::vector<Labels> predict(const MarginalModels& models, Method method, std::span<const Graph> graphs,
                            const BPConfig& inference, double eps = kDefaultThetaEps);

MetricsReport evaluate(const MarginalModels& models, Method method, std::span<const Graph> graphs,
                       std::size_t num_labels, const BPConfig& inference, double eps = kDefaultThetaEps);

struct ExperimentResult {
  MarginalModels models;
  TrainReport report;
};

/// Builds models, trains with `method`, and fills report.metrics for every eval split.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data, Method method);

std::string report_json(const TrainReport& report);
std::string metrics_json(const MetricsReport& metrics);
/// Aligned plain-text table, one row per named report.
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace spn
