// spn: train, evaluate and verify structured proxy networks.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spn/bp.hpp"
#include "spn/checkpoint.hpp"
#include "spn/experiment.hpp"
#include "spn/graph.hpp"
#include "spn/synthetic.hpp"
#include "spn/verify.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kFailed = 2, kIo = 3 };

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) throw std::ios_base::failure("failed writing " + path.string());
}

int cmd_train(const fs::path& config_path, const std::string& method_name, const std::string& out_dir) {
  const auto config = spn::load_experiment_config(config_path);
  const auto method = spn::parse_method(method_name);
  const fs::path out = out_dir.empty() ? config.output_dir : fs::path(out_dir);
  const auto data = spn::load_experiment_data(config);
  const auto result = spn::run_experiment(config, data, method);

  fs::create_directories(out);
  spn::save_checkpoint(spn::make_checkpoint(result.models, method, config.inference, config.train.theta_eps,
                                            data.label_space),
                       out / "checkpoint.json");
  write_file(out / "train_report.json", spn::report_json(result.report));
  std::vector<std::pair<std::string, spn::MetricsReport>> rows(result.report.metrics.begin(),
                                                               result.report.metrics.end());
  const auto table = spn::metrics_table(rows);
  write_file(out / "metrics.txt", table);
  for (const auto& p : result.report.phases)
    std::cout << "phase " << p.name << ": " << p.epochs.size() << " epochs, " << p.seconds << " s, " << p.bp_runs
              << " BP runs\n";
  std::cout << table;
  return kOk;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_path, const std::string& split, const std::string& out,
             bool text) {
  const auto ckpt = spn::load_checkpoint(ckpt_path);
  const auto data = spn::load_dataset(data_path);
  if (!(data.label_space == ckpt.label_space) || data.feature_dim != ckpt.feature_dim)
    throw spn::ConfigError("dataset label space or feature_dim does not match the checkpoint");
  const auto models = ckpt.models();
  const auto metrics = spn::evaluate(models, ckpt.method, data.split(split), data.label_space.size(),
                                     ckpt.inference, ckpt.theta_eps);
  const auto report = spn::metrics_json(metrics);
  if (!out.empty()) write_file(out, report);
  std::cout << (text ? spn::metrics_table({{split, metrics}}) : report + "\n");
  return kOk;
}

int cmd_infer(const fs::path& ckpt_path, const fs::path& graph_path) {
  const auto ckpt = spn::load_checkpoint(ckpt_path);
  const auto graph = spn::parse_graph_json(read_file(graph_path), ckpt.feature_dim);
  const auto problems = spn::validate(graph, ckpt.label_space);
  if (!problems.empty()) throw spn::DatasetError("invalid graph: " + problems.front().message);
  const auto models = ckpt.models();
  json out;
  if (ckpt.method == spn::Method::node_only) {
    out["labels"] = spn::predict_node_only(models, graph);
  } else {
    const auto inf =
        spn::infer_graph(models, graph, ckpt.inference, ckpt.theta_eps, spn::uses_temperature(ckpt.method));
    out["labels"] = inf.labels;
    out["converged"] = inf.converged;
    out["iters"] = inf.iters;
  }
  if (!ckpt.label_space.names().empty()) {
    json names = json::array();
    for (auto y : out["labels"]) names.push_back(ckpt.label_space.names()[y.get<std::size_t>()]);
    out["label_names"] = std::move(names);
  }
  std::cout << out.dump() << "\n";
  return kOk;
}

int cmd_verify(const std::string& filter, bool as_json) {
  const auto results = spn::run_verify_suite(filter);
  if (results.empty()) {
    std::cerr << "no check matches '" << filter << "'\n";
    return kUsage;
  }
  bool all = true;
  json list = json::array();
  for (const auto& r : results) {
    all = all && r.passed;
    if (as_json)
      list.push_back({{"name", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail}});
    else
      std::cout << (r.passed ? "PASS" : "FAIL") << '\t' << r.name << '\t' << r.seconds << "s\t" << r.detail << "\n";
  }
  if (as_json) std::cout << list.dump(2) << "\n";
  return all ? kOk : kFailed;
}

int cmd_generate(const fs::path& spec_path, const fs::path& out) {
  const auto spec = spn::parse_synthetic_spec(read_file(spec_path));
  const auto data = spn::generate_synthetic(spec);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  spn::write_dataset(data, out);
  std::size_t graphs = 0;
  for (const auto& [_, split] : data.splits) graphs += split.size();
  std::cout << "wrote " << graphs << " graphs to " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured proxy networks: train, evaluate and verify pairwise CRFs built from learned pseudomarginals"};
  app.require_subcommand(1);

  std::string config, method = "proxy", out, checkpoint, data, split = "test", graph, filter, spec;
  bool text = false, as_json = false;

  auto* train = app.add_subcommand("train", "Train models from an experiment config");
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--method", method, "proxy, proxy+refine, maximin, pseudolikelihood or node-only");
  train->add_option("--out", out, "Output directory (defaults to the config's output_dir)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "Split name");
  eval->add_option("--out", out, "Also write the MetricsReport JSON here");
  eval->add_flag("--text", text, "Print an aligned table instead of JSON");

  auto* infer = app.add_subcommand("infer", "Predict labels for one graph");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--graph", graph, "Graph file (JSON)")->required()->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Run the invariant suite");
  verify->add_option("--filter", filter, "Only checks whose name contains this string");
  verify->add_flag("--json", as_json, "Emit results as JSON");

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--spec", spec, "Generator spec (JSON)")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out, "Output dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config, method, out);
    if (*eval) return cmd_eval(checkpoint, data, split, out, text);
    if (*infer) return cmd_infer(checkpoint, graph);
    if (*verify) return cmd_verify(filter, as_json);
    if (*generate) return cmd_generate(spec, out);
  } catch (const std::ios_base::failure& e) {
    std::cerr << "spn: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "spn: " << e.what() << "\n";
    return kIo;
  } catch (const spn::DatasetError& e) {
    std::cerr << "spn: " << e.what() << "\n";
    return kIo;
  } catch (const spn::CheckpointError& e) {
    std::cerr << "spn: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "spn: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
