#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spn/checkpoint.hpp"
#include "spn/crf.hpp"
#include "spn/experiment.hpp"
#include "spn/metrics.hpp"
#include "spn/synthetic.hpp"

using namespace spn;
namespace fs = std::filesystem;

namespace {

struct EdgeAgreement {
  std::size_t edges = 0;
  std::size_t agree = 0;
  double expected = 0.0;  // sum over edges of the exact P(y_s == y_t)
};

EdgeAgreement agreement(const Dataset& data, double coupling) {
  EdgeAgreement out;
  const auto k = data.label_space.size();
  for (const auto& [name, graphs] : data.splits)
    for (const auto& g : graphs) {
      const auto exact = exact_summary(synthetic_theta(g, k, coupling), g);
      for (std::size_t e = 0; e < g.num_edges(); ++e) {
        const auto [s, t] = g.edges()[e];
        ++out.edges;
        out.agree += g.labels()[s] == g.labels()[t];
        for (std::size_t a = 0; a < k; ++a) out.expected += exact.marginals.edge_at(e, a, a);
      }
    }
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SPN_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("spn_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Graph labeled(Labels y) {
  return Graph(y.size(), {}, 1, std::vector<double>(y.size(), 0.0), y);
}

}  // namespace

TEST_CASE("uncoupled generator gives chance agreement") {
  SyntheticSpec spec;
  spec.splits = {{"train", 150}};
  spec.coupling_strength = 0.0;
  spec.seed = 5;
  const auto a = agreement(generate_synthetic(spec), 0.0);
  REQUIRE(a.edges >= 500);
  const double p = 1.0 / 3.0;
  const double rate = double(a.agree) / a.edges;
  CHECK(std::abs(rate - p) < 3 * std::sqrt(p * (1 - p) / a.edges));
}

TEST_CASE("coupled generator matches its own CRF") {
  SyntheticSpec spec;
  spec.splits = {{"train", 150}};
  spec.num_labels = 2;
  spec.feature_dim = 2;
  spec.coupling_strength = 2.0;
  spec.seed = 6;
  const auto a = agreement(generate_synthetic(spec), 2.0);
  const double rate = double(a.agree) / a.edges;
  const double p = a.expected / a.edges;
  CHECK(rate > 0.7);
  CHECK(std::abs(rate - p) < 3 * std::sqrt(p * (1 - p) / a.edges));
}

TEST_CASE("generator is seeded and validated") {
  SyntheticSpec spec;
  spec.splits = {{"train", 5}, {"test", 3}};
  spec.seed = 9;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  CHECK(a == b);
  CHECK(a.split("train").size() == 5);
  CHECK(a.split("test")[0].num_nodes() == 8);
  CHECK(a.split("test")[0].feature_dim() == 3);
  spec.seed = 10;
  CHECK_FALSE(generate_synthetic(spec) == a);

  spec.nodes_per_graph = kMaxSyntheticNodes + 1;
  CHECK_THROWS(check(spec));
  spec = SyntheticSpec{};
  spec.feature_dim = 2;
  CHECK_THROWS(check(spec));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) CHECK(random_tree(9, rng).num_edges() == 8);
}

TEST_CASE("metrics") {
  SUBCASE("worked example") {
    const std::vector<Graph> graphs{labeled({0, 1, 2}), labeled({1, 1})};
    const std::vector<Labels> pred{{0, 1, 2}, {1, 0}};
    const auto m = compute_metrics(pred, graphs, 3);
    CHECK(m.node_accuracy == doctest::Approx(0.8));
    CHECK(m.micro_f1 == doctest::Approx(0.8));
    CHECK(m.graph_accuracy == doctest::Approx(0.5));
    CHECK(m.num_nodes == 5);
    CHECK(m.per_graph[1] == GraphScore{2, 1, false});
  }
  SUBCASE("recount oracle") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<Label> label(0, 3);
    std::vector<Graph> graphs;
    std::vector<Labels> pred;
    std::size_t nodes = 0, hits = 0, perfect = 0;
    for (int i = 0; i < 40; ++i) {
      Labels y(1 + i % 5), p(y.size());
      bool all = true;
      for (std::size_t s = 0; s < y.size(); ++s) {
        y[s] = label(rng);
        p[s] = rng() % 2 ? y[s] : label(rng);
        hits += p[s] == y[s];
        all = all && p[s] == y[s];
      }
      nodes += y.size();
      perfect += all;
      graphs.push_back(labeled(y));
      pred.push_back(p);
    }
    const auto m = compute_metrics(pred, graphs, 4);
    CHECK(m.node_accuracy == doctest::Approx(double(hits) / nodes));
    CHECK(m.micro_f1 == doctest::Approx(m.node_accuracy));
    CHECK(m.graph_accuracy == doctest::Approx(double(perfect) / 40));
  }
  SUBCASE("errors") {
    const std::vector<Graph> graphs{labeled({0, 1})};
    CHECK_THROWS(compute_metrics(std::vector<Labels>{{0}}, graphs, 2));
    CHECK_THROWS(compute_metrics(std::vector<Labels>{}, graphs, 2));
    const std::vector<Graph> unlabeled{Graph(1, {}, 1, {0.0})};
    CHECK_THROWS(compute_metrics(std::vector<Labels>{{0}}, unlabeled, 2));
  }
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(7, "train") == derive_seed(7, "train"));
  CHECK(derive_seed(7, "train") != derive_seed(7, "model"));
  CHECK(derive_seed(7, "train") != derive_seed(8, "train"));
}

TEST_CASE("method names") {
  for (auto m : {Method::proxy, Method::proxy_refine, Method::maximin, Method::pseudolikelihood, Method::node_only})
    CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS(parse_method("crf"));
  CHECK(uses_temperature(Method::proxy));
  CHECK_FALSE(uses_temperature(Method::maximin));
}

TEST_CASE("experiment config parsing") {
  const std::string good = R"({"seed": 3, "synthetic": {"splits": {"train": 4}}, "model": {"gamma": 0.5},
                               "train": {"epochs": 2}, "inference": {"mode": "sum"}})";
  const auto c = parse_experiment_config(good);
  CHECK(c.seed == 3);
  REQUIRE(c.synthetic);
  CHECK(c.synthetic->seed == derive_seed(3, "data"));
  CHECK(c.model.gamma == 0.5);
  CHECK(c.train.epochs == 2);
  CHECK(c.train.seed == derive_seed(3, "train"));
  CHECK(c.inference.mode == BPMode::sum);
  CHECK(c.inference.max_iters == 50);

  CHECK_THROWS_AS(parse_experiment_config(R"({"synthetic": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "synthetic": {}, "data": "x.json"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "data": "/nonexistent/x.json"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "synthetic": {}, "modle": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "synthetic": {}, "model": {"gamma": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"seed": 1, "synthetic": {}, "train": {"bp": {"mode": "avg"}}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig mc;
  mc.edge_head = EdgeHeadKind::bilinear;
  mc.gamma = 0.4;
  MarginalModels models(mc, 3, 3, 17);
  BPConfig inference{BPMode::max, 20, 1e-5, 0.1, BPSchedule::synchronous};
  const auto ckpt = make_checkpoint(models, Method::maximin, inference, 1e-7, LabelSpace(3, {"a", "b", "c"}));
  const auto back = parse_checkpoint(checkpoint_json(ckpt));
  CHECK(back.method == Method::maximin);
  CHECK(back.model.edge_head == EdgeHeadKind::bilinear);
  CHECK(back.model.gamma == 0.4);
  CHECK(back.inference.schedule == BPSchedule::synchronous);
  CHECK(back.inference.damping == 0.1);
  CHECK(back.theta_eps == 1e-7);
  CHECK(back.label_space == ckpt.label_space);
  CHECK(back.params == models.parameters());

  SyntheticSpec spec;
  spec.splits = {{"test", 5}};
  const auto graphs = generate_synthetic(spec).split("test");
  CHECK(predict(back.models(), back.method, graphs, back.inference) ==
        predict(models, Method::maximin, graphs, inference));

  CHECK_THROWS_AS(parse_checkpoint("{}"), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("[1, 2"), CheckpointError);
  auto tampered = ckpt;
  tampered.params.get("node_head.bias").value = Tensor({5}, 0.0);
  CHECK_THROWS_AS(parse_checkpoint(checkpoint_json(tampered)), CheckpointError);
}

TEST_CASE("run_experiment reports every eval split") {
  ExperimentConfig c;
  c.seed = 4;
  c.synthetic = SyntheticSpec{};
  c.synthetic->splits = {{"train", 10}, {"test", 5}, {"valid", 5}};
  c.train.epochs = 3;
  c.eval_splits = {"valid", "test"};
  const auto data = load_experiment_data(c);
  const auto r = run_experiment(c, data, Method::proxy);
  CHECK(r.report.metrics.count("valid") == 1);
  CHECK(r.report.metrics.at("test").num_graphs == 5);
  CHECK(report_json(r.report).find("\"phases\"") != std::string::npos);
  CHECK(run_experiment(c, data, Method::proxy).models.parameters() == r.models.parameters());
  CHECK_THROWS(run_experiment(c, data, Method::proxy_refine));
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  const auto log = dir / "log.txt";

  CHECK(run_cli("", log) == 1);
  CHECK(run_cli("train", log) == 1);
  CHECK(run_cli("eval --checkpoint /nonexistent --data /nonexistent", log) == 1);

  spit(dir / "spec.json", R"({"splits": {"train": 8, "test": 4}, "nodes_per_graph": 5, "seed": 2})");
  REQUIRE(run_cli("generate --spec " + (dir / "spec.json").string() + " --out " + (dir / "data.json").string(), log) ==
          0);
  spit(dir / "config.json", R"({"seed": 1, "data": "data.json", "train": {"epochs": 3}})");
  const std::string train_args = "train --config " + (dir / "config.json").string() + " --method node-only --out ";
  REQUIRE(run_cli(train_args + (dir / "run").string(), log) == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.json"));
  CHECK(fs::exists(dir / "run" / "train_report.json"));
  CHECK(fs::exists(dir / "run" / "metrics.txt"));

  const std::string eval_args = "eval --checkpoint " + (dir / "run" / "checkpoint.json").string() + " --data " +
                                (dir / "data.json").string() + " --split test --out ";
  REQUIRE(run_cli(eval_args + (dir / "m1.json").string(), log) == 0);
  REQUIRE(run_cli(train_args + (dir / "run2").string(), log) == 0);
  REQUIRE(run_cli("eval --checkpoint " + (dir / "run2" / "checkpoint.json").string() + " --data " +
                      (dir / "data.json").string() + " --split test --out " + (dir / "m2.json").string(),
                  log) == 0);
  CHECK(slurp(dir / "m1.json") == slurp(dir / "m2.json"));
  CHECK(run_cli(eval_args.substr(0, eval_args.find("--split")) + "--split nope", log) == 3);

  spit(dir / "bad.json", "{\"magic\": \"nope\"}");
  CHECK(run_cli("eval --checkpoint " + (dir / "bad.json").string() + " --data " + (dir / "data.json").string(), log) ==
        3);

  CHECK(run_cli("verify --filter bethe_trees", log) == 0);
  CHECK(slurp(log).rfind("PASS", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("maximin does not beat proxy with refinement on the benchmark") {
  auto c = load_experiment_config(SPN_BENCHMARK_CONFIG);
  const auto data = load_experiment_data(c);
  const auto maximin = run_experiment(c, data, Method::maximin).report.metrics.at("test");
  c.train.refine_epochs = 10;
  const auto refined = run_experiment(c, data, Method::proxy_refine).report.metrics.at("test");
  MESSAGE("graph accuracy proxy+refine ", refined.graph_accuracy, ", maximin ", maximin.graph_accuracy);
  CHECK(maximin.graph_accuracy <= refined.graph_accuracy);
}
