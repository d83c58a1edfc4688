#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gtppo/cli.hpp"

using namespace gtppo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gtppo_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json tiny_synthetic(const fs::path& out) {
  return json{{"seed", 5},
              {"output_dir", out.string()},
              {"dataset", {{"format", "synthetic"}, {"synthetic", {{"n_ped", 2}, {"train_windows", 4}, {"test_windows", 3}}}}},
              {"train", {{"epochs", 2}, {"v", 3}, {"batch_size", 4}}},
              {"model", {{"hidden", 4}, {"embed", 3}, {"pop_embed", 3}, {"pop_hidden", 4}, {"channel_latent", 2}, {"noise", 2}}},
              {"eval", {{"k", 5}, {"sweep", {1, 3, 5}}, {"density_samples", 20}, {"threads", 1}}}};
}

int run(const std::string& verb, const RunConfig& cfg, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = run_command(verb, cfg, {}, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig cfg = config_from_json(json::object());
  EXPECT_EQ(cfg.train.batch_size, 64);
  EXPECT_EQ(cfg.train.epochs, 400);
  EXPECT_EQ(cfg.train.lr_main, 1e-3);
  EXPECT_EQ(cfg.train.lr_pop, 1e-4);
  EXPECT_EQ(cfg.train.v, 20);
  EXPECT_EQ(cfg.train.alpha, 10.0);
  EXPECT_EQ(cfg.model.hidden, 32);
  EXPECT_EQ(cfg.model.latent(), 16);
  EXPECT_EQ(cfg.dataset.t_obs, 8);
  EXPECT_EQ(cfg.dataset.t_pred, 12);
  EXPECT_EQ(cfg.eval.k, 20);
  EXPECT_EQ(cfg.ablation.label(), "TA+GA+SSA+POP");
}

TEST(Config, OverridesApply) {
  const RunConfig cfg = config_from_json(json{{"seed", 9}, {"train", {{"v", 5}}}, {"ablation", {{"social", "hard"}}}});
  EXPECT_EQ(cfg.train.v, 5);
  EXPECT_EQ(cfg.train.seed, 9u);
  EXPECT_EQ(cfg.ablation.social, SocialMode::hard);
}

TEST(Config, RejectsUnknownKeysNamingThem) {
  try {
    config_from_json(json{{"train", {{"epcohs", 3}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epcohs"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ConfigError);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json(json{{"train", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"train", {{"v", 0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"format", "kitti"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"dt", -0.4}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"model", {{"latent", 17}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"ablation", {{"use_ga", false}, {"social", "soft"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"scenes", {{"ETH", {"no/such/file.txt"}}}}}}}), ConfigError);
  EXPECT_THROW(load_config("/no/such/config.json"), ConfigError);

  const fs::path dir = fresh_dir("badjson");
  std::ofstream(dir / "c.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "c.json").string()), ConfigError);
}

TEST(Config, RelativeScenePathsResolveAgainstConfigFile) {
  const fs::path dir = fresh_dir("relpath");
  std::ofstream(dir / "eth.txt") << "0 1 0.0 0.0\n";
  std::ofstream(dir / "c.json") << R"({"dataset": {"scenes": {"ETH": ["eth.txt"]}}})";
  const RunConfig cfg = load_config((dir / "c.json").string());
  EXPECT_EQ(fs::path(cfg.dataset.scenes.at("ETH").front()), dir / "eth.txt");
}

TEST(Checkpoint, RoundTripIsExact) {
  ModelDims d;
  d.hidden = 4;
  d.embed = 3;
  Checkpoint ck{{true, true, SocialMode::hard, false}, ModelParams::create(d, 3)};
  const fs::path dir = fresh_dir("ckpt");
  save_checkpoint((dir / "a.json").string(), ck);
  Checkpoint back = load_checkpoint((dir / "a.json").string());
  EXPECT_EQ(back.ablation.label(), ck.ablation.label());
  EXPECT_TRUE(back.params.dims == d);
  std::map<std::string, Matrix> a, b;
  ck.params.visit([&](const std::string& n, Var& v, ParamGroup) { a[n] = v.value(); });
  back.params.visit([&](const std::string& n, Var& v, ParamGroup) { b[n] = v.value(); });
  EXPECT_EQ(a, b);
  save_checkpoint((dir / "b.json").string(), back);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_THROW(require_matching_ablation(back, AblationConfig{}), ConfigError);
  EXPECT_THROW(load_checkpoint((dir / "missing.json").string()), std::exception);
}

TEST(Cli, EvalWithoutDataOrCheckpointFails) {
  const fs::path dir = fresh_dir("nodata");
  RunConfig cfg = config_from_json(json{{"output_dir", dir.string()}});
  std::string err;
  EXPECT_NE(run("train", cfg, &err), 0);
  EXPECT_NE(err.find("dataset missing"), std::string::npos);
  EXPECT_NE(run("eval", cfg), 0);
  EXPECT_FALSE(fs::exists(dir / "report.txt"));
  EXPECT_EQ(run("frobnicate", cfg), 64);
}

TEST(Cli, TrainEvalSweepDensityPipeline) {
  const fs::path dir = fresh_dir("pipeline");
  const RunConfig cfg = config_from_json(tiny_synthetic(dir));
  ASSERT_EQ(run("ingest", cfg), 0);
  EXPECT_TRUE(fs::exists(dir / "ingest.csv"));
  EXPECT_TRUE(fs::exists(dir / "train_synthetic_turn.txt"));
  ASSERT_EQ(run("train", cfg), 0);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "loss.csv"));
  ASSERT_EQ(run("eval", cfg), 0);
  const std::string report = slurp(dir / "report.txt");
  EXPECT_NE(report.find("sampling_number: 5"), std::string::npos);

  ASSERT_EQ(run("sweep", cfg), 0);
  std::istringstream sweep(slurp(dir / "sweep.csv"));
  std::string line;
  std::getline(sweep, line);
  EXPECT_EQ(line, "k,ade,fde");
  double prev = 1e300;
  int rows = 0;
  while (std::getline(sweep, line)) {
    const double ade = std::stod(line.substr(line.find(',') + 1));
    EXPECT_LE(ade, prev);
    prev = ade;
    ++rows;
  }
  EXPECT_EQ(rows, 3);

  ASSERT_EQ(run("density", cfg), 0);
  EXPECT_TRUE(fs::exists(dir / "density_w0_p1.pgm"));

  // A second run from scratch reproduces the report byte for byte.
  const fs::path dir2 = fresh_dir("pipeline2");
  json j2 = tiny_synthetic(dir2);
  const RunConfig cfg2 = config_from_json(j2);
  ASSERT_EQ(run("train", cfg2), 0);
  ASSERT_EQ(run("eval", cfg2), 0);
  EXPECT_EQ(slurp(dir2 / "report.txt"), report);
  EXPECT_EQ(slurp(dir2 / "checkpoint.json"), slurp(dir / "checkpoint.json"));
}

TEST(Cli, MismatchedCheckpointIsRejected) {
  const fs::path dir = fresh_dir("mismatch");
  json j = tiny_synthetic(dir);
  ASSERT_EQ(run("train", config_from_json(j)), 0);
  j["ablation"] = {{"use_pop", false}};
  std::string err;
  EXPECT_EQ(run("eval", config_from_json(j), &err), 2);
  EXPECT_FALSE(fs::exists(dir / "report.txt"));
  EXPECT_FALSE(err.empty());
}

TEST(Cli, AblateProducesSixteenRows) {
  const fs::path dir = fresh_dir("ablate");
  json j = tiny_synthetic(dir);
  j["train"]["epochs"] = 1;
  j["eval"]["k"] = 2;
  ASSERT_EQ(run("ablate", config_from_json(j)), 0);
  std::istringstream in(slurp(dir / "ablation.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config,ta,ga,social,pop,ade,fde");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 16);
  for (const auto& e : fs::directory_iterator(dir.parent_path()))
    EXPECT_FALSE(e.path().filename() == "ablation.csv");
}

TEST(Cli, BinaryRunsEndToEnd) {
  const fs::path dir = fresh_dir("binary");
  std::ofstream(dir / "c.json") << tiny_synthetic(dir / "out").dump();
  const std::string cli = GTPPO_CLI_PATH;
  const std::string base = cli + " -q -c " + (dir / "c.json").string() + " --single-thread ";
  EXPECT_EQ(std::system((base + "train > /dev/null 2>&1").c_str()), 0);
  EXPECT_EQ(std::system((base + "eval > /dev/null 2>&1").c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.txt"));
  EXPECT_NE(std::system((cli + " -c /no/such.json eval > /dev/null 2>&1").c_str()), 0);
}
