#pragma once

#include <filesystem>
#include <string>

#include "spn/bp.hpp"
#include "spn/experiment.hpp"
#include "spn/graph.hpp"
#include "spn/models.hpp"

namespace spn {

inline constexpr const char* kCheckpointMagic = "spn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Method method = Method::proxy;
  ModelConfig model;
  BPConfig inference;
  double theta_eps = kDefaultThetaEps;
  LabelSpace label_space;
  std::size_t feature_dim = 0;
  ParameterSet params;

  MarginalModels models() const;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Checkpoint make_checkpoint(const MarginalModels& models, Method method, const BPConfig& inference, double theta_eps,
                           const LabelSpace& label_space);

std::string checkpoint_json(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spn
