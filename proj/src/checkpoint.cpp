#include "spn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace spn {

using io::json;

MarginalModels Checkpoint::models() const {
  return MarginalModels(model, feature_dim, label_space.size(), params);
}

Checkpoint make_checkpoint(const MarginalModels& models, Method method, const BPConfig& inference, double theta_eps,
                           const LabelSpace& label_space) {
  if (label_space.size() != models.num_labels())
    throw std::invalid_argument("checkpoint: label space does not match models");
  return Checkpoint{method, models.config(), inference, theta_eps, label_space, models.feature_dim(),
                    models.parameters()};
}

std::string checkpoint_json(const Checkpoint& ckpt) {
  json params = json::array();
  for (const auto& p : ckpt.params)
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}});
  json space = {{"size", ckpt.label_space.size()}};
  if (!ckpt.label_space.names().empty()) space["names"] = ckpt.label_space.names();
  json j = {{"magic", kCheckpointMagic},
            {"version", kCheckpointVersion},
            {"method", to_string(ckpt.method)},
            {"model", io::to_json(ckpt.model)},
            {"inference", io::to_json(ckpt.inference)},
            {"theta_eps", ckpt.theta_eps},
            {"label_space", std::move(space)},
            {"feature_dim", ckpt.feature_dim},
            {"parameters", std::move(params)}};
  return j.dump();
}

Checkpoint parse_checkpoint(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("magic", std::string{}) != kCheckpointMagic) throw CheckpointError("not an spn checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    Checkpoint c;
    c.method = parse_method(j.at("method").get<std::string>());
    c.model = io::model_from_json(j.at("model"));
    c.inference = io::bp_from_json(j.at("inference"), BPConfig{}, "inference");
    c.theta_eps = j.at("theta_eps").get<double>();
    const auto& space = j.at("label_space");
    c.label_space = LabelSpace(space.at("size").get<std::size_t>(),
                               space.value("names", std::vector<std::string>{}));
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    for (const auto& p : j.at("parameters"))
      c.params.add(p.at("name").get<std::string>(),
                   Tensor(p.at("shape").get<std::vector<std::size_t>>(), p.at("values").get<std::vector<double>>()));
    c.models();  // validates names and shapes against the config
    return c;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write checkpoint " + path.string());
  out << checkpoint_json(ckpt) << '\n';
  if (!out) throw std::ios_base::failure("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace spn
