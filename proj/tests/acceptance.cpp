// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
// Exit status: 0 all selected criteria passed, 1 any failed, 77 all skipped.
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "gtppo/cli.hpp"
#include "test_util.hpp"

using namespace gtppo;
using gtppo::testing::gradient_error;
using gtppo::testing::probe;
using gtppo::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Result {
  Outcome outcome;
  std::string detail;
};

struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Result result(const std::string& summary) const {
    if (failures.empty()) return {Outcome::pass, summary};
    std::string s = summary + "; failed: " + failures.front();
    if (failures.size() > 1) s += " (+" + std::to_string(failures.size() - 1) + " more)";
    return {Outcome::fail, s};
  }
};

std::string num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

ModelDims reduced_dims() {
  ModelDims d;
  d.hidden = 4;
  d.embed = 3;
  d.pop_embed = 3;
  d.pop_hidden = 4;
  d.channel_latent = 2;
  d.noise = 2;
  return d;
}

std::vector<SceneWindow> joined(std::vector<SceneWindow> a, const std::vector<SceneWindow>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Result invariants() {
  Checks c;
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 5, h = 6;
    const int T = 1 + trial % 8;
    const auto enc = EncoderParams::create(4, h, rng);
    std::vector<Var> seq;
    for (int t = 0; t < T; ++t) seq.push_back(ad::constant(random_matrix(n, h, rng)));
    const Matrix w = temporal_attention(seq, enc).weights.value();
    c.expect(((w.rowwise().sum().array() - 1.0).abs() <= 1e-6).all(), "temporal weights sum to 1");

    const auto layer = GraphAttnLayer::create(h, h, rng);
    const Matrix a = graph_attention_coefficients(seq.back(), layer, full_neighbor_mask(n)).value();
    c.expect((a.array() >= 0.0).all() && ((a.rowwise().sum().array() - 1.0).abs() <= 1e-6).all(),
             "graph attention rows are probability vectors");
    c.expect(!a.isApprox(a.transpose(), 1e-9), "graph attention generically asymmetric");

    const Matrix pos = random_matrix(n, 2, rng, 5.0), vel = random_matrix(n, 2, rng);
    const Matrix cos = cosine_matrix(pos, vel);
    const Matrix hard = social_attention_weights(cos, SocialMode::hard, {}).value();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double expect = i == j ? 1.0 : (cos(i, j) > 0.0 ? 1.0 : 0.0);
        c.expect(hard(i, j) == expect, "hard social attention is the strict cos>0 indicator");
      }
    SocialAttnParams sp{ad::parameter(random_matrix(1, 1, rng, 3.0)), ad::parameter(random_matrix(1, 1, rng))};
    const Matrix soft = social_attention_weights(cos, SocialMode::soft, sp).value();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (i != j) c.expect(soft(i, j) > 0.0 && soft(i, j) < 1.0, "soft social attention in (0,1)");
  }

  // Soft attention is monotone in cos, increasing for positive slope.
  Matrix grid(1, 41);
  for (int k = 0; k <= 40; ++k) grid(0, k) = -1.0 + 0.05 * k;
  Matrix cos2 = Matrix::Ones(2, 2);
  double prev = -1.0;
  SocialAttnParams sp{ad::parameter(Matrix::Constant(1, 1, 2.0)), ad::parameter(Matrix::Constant(1, 1, -0.3))};
  for (int k = 0; k <= 40; ++k) {
    cos2(0, 1) = grid(0, k);
    const double s = social_attention_weights(cos2, SocialMode::soft, sp).value()(0, 1);
    c.expect(s > prev, "soft social attention monotone in cos");
    prev = s;
  }
  c.expect(social_attention_weights(Matrix::Constant(2, 2, 0.0), SocialMode::hard, {}).value()(0, 1) == 0.0,
           "cos = 0 is not ahead");

  for (int trial = 0; trial < 100; ++trial) {
    const Matrix mu1 = random_matrix(3, 4, rng), lv1 = random_matrix(3, 4, rng);
    const Matrix mu2 = random_matrix(3, 4, rng), lv2 = random_matrix(3, 4, rng);
    const GaussianHead p{ad::constant(mu1), ad::constant(lv1)}, q{ad::constant(mu2), ad::constant(lv2)};
    c.expect((kl_divergence(p, q).value().array() >= 0.0).all(), "KL non-negative");
    c.expect(kl_divergence(p, p).value().isZero(0.0), "KL of identical Gaussians is zero");
    c.expect((kl_divergence(p, q).value().array() > 0.0).all(), "KL positive for distinct Gaussians");
  }
  return c.result("600 randomised invariant instances");
}

Result gradients() {
  Checks c;
  std::mt19937_64 rng(202);
  double worst_op = 0.0;
  auto record = [&](double err, const std::string& what) {
    worst_op = std::max(worst_op, err);
    c.expect(err < 1e-4, what + " rel err " + num(err));
  };

  {
    auto enc = EncoderParams::create(3, 4, rng);
    std::vector<Matrix> d;
    for (int t = 0; t < 4; ++t) d.push_back(random_matrix(2, 2, rng));
    std::vector<Var> ps;
    enc.visit("e", [&](const std::string&, Var& v, ParamGroup) { ps.push_back(v); });
    record(gradient_error([&] { return probe(temporal_attention(encode_hidden_states(d, enc), enc).summary, 1); }, ps),
           "temporal attention");
  }
  {
    auto sg = SocialGraphParams::create(4, rng);
    Var hidden = ad::parameter(random_matrix(3, 4, rng));
    const Matrix cos = cosine_matrix(random_matrix(3, 2, rng, 4.0), random_matrix(3, 2, rng));
    std::vector<Var> ps{hidden};
    sg.visit("s", [&](const std::string&, Var& v, ParamGroup) { ps.push_back(v); });
    for (SocialMode m : {SocialMode::none, SocialMode::hard, SocialMode::soft}) {
      auto loss = [&] {
        Var gate = m == SocialMode::none ? Var{} : social_attention_weights(cos, m, sg.social);
        Var x = graph_attention_layer(hidden, sg.gat.layers[0], full_neighbor_mask(3), gate);
        return probe(graph_attention_layer(x, sg.gat.layers[1], full_neighbor_mask(3), gate), 2);
      };
      record(gradient_error(loss, ps), "graph aggregation (" + to_string(m) + ")");
    }
  }
  {
    auto g = GaussianLstmParams::create(3, 4, 2, rng);
    std::vector<Matrix> steps;
    for (int t = 0; t < 5; ++t) steps.push_back(random_matrix(2, 2, rng));
    std::vector<Var> ps;
    g.visit("g", [&](const std::string&, Var& v, ParamGroup) { ps.push_back(v); });
    record(gradient_error([&] {
             const auto head = gaussian_lstm(steps, g);
             return probe(head.mu, 3) + probe(head.logvar, 4);
           },
                          ps),
           "Gaussian-LSTM heads");
  }
  {
    Var mu1 = ad::parameter(random_matrix(3, 2, rng)), lv1 = ad::parameter(random_matrix(3, 2, rng));
    Var mu2 = ad::parameter(random_matrix(3, 2, rng)), lv2 = ad::parameter(random_matrix(3, 2, rng));
    record(gradient_error([&] { return probe(kl_divergence({mu1, lv1}, {mu2, lv2}), 5); }, {mu1, lv1, mu2, lv2}), "KL");
  }
  {
    ModelParams mp = ModelParams::create(reduced_dims(), 7);
    Var state = ad::parameter(random_matrix(2, 4, rng)), last = ad::parameter(random_matrix(2, 2, rng));
    std::vector<Var> ps{state, last};
    mp.decoder.visit("d", [&](const std::string&, Var& v, ParamGroup) { ps.push_back(v); });
    record(gradient_error([&] {
             const auto disp = rollout(state, last, 5, mp.decoder);
             return probe(integrate(ad::constant(Matrix::Zero(2, 2)), disp).back(), 6);
           },
                          ps),
           "decoder rollout");
  }

  double worst_e2e = 0.0;
  {
    ModelParams mp = ModelParams::create(reduced_dims(), 8);
    std::vector<Var> ps;
    mp.visit([&](const std::string&, Var& v, ParamGroup) { ps.push_back(v); });
    const auto w = generate_synthetic(SyntheticKind::crossing, 3, 9).front();
    for (const auto& cfg : ablation_table()) {
      const double err = gradient_error(
          [&] {
            ForwardOptions fo;
            fo.samples = 2;
            const auto r = model_forward(w, mp, cfg, Stage::train, 11, fo);
            Var l = ad::sum(variety_loss(r, w));
            if (cfg.use_pop) l = l + ad::scale(ad::sum(kl_loss(r.latent)), 10.0);
            return l;
          },
          ps);
      worst_e2e = std::max(worst_e2e, err);
      c.expect(err < 1e-3, "end-to-end " + cfg.label() + " rel err " + num(err));
    }
  }
  return c.result("worst rel err above the round-off floor: ops " + num(worst_op) + ", end-to-end " + num(worst_e2e) +
                  " over 16 configs");
}

std::pair<double, double> brute_metrics(const Track& p, const Track& g) {
  double sum = 0.0, last = 0.0;
  for (Index t = 0; t < p.rows(); ++t) {
    last = std::hypot(p(t, 0) - g(t, 0), p(t, 1) - g(t, 1));
    sum += last;
  }
  return {sum / static_cast<double>(p.rows()), last};
}

Result metric_oracle() {
  Checks c;
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index T = 1 + trial % 20;
    const Track p = random_matrix(T, 2, rng, 10.0), g = random_matrix(T, 2, rng, 10.0);
    const auto m = compute_metrics(p, g);
    const auto [ade, fde] = brute_metrics(p, g);
    worst = std::max({worst, std::abs(m.ade - ade), std::abs(m.fde - fde)});
  }
  c.expect(worst <= 1e-12, "brute force agreement " + num(worst));
  Track gt(12, 2), off(12, 2), div(12, 2);
  for (int t = 0; t < 12; ++t) {
    gt.row(t) << t + 1.0, 0.0;
    off.row(t) << t + 1.0, 1.0;
    div.row(t) << (t + 1.0) * 1.1, 0.0;
  }
  const auto u = compute_metrics(off, gt);
  c.expect(u.ade == 1.0 && u.fde == 1.0, "unit offset gives 1/1");
  const auto d = compute_metrics(div, gt);
  c.expect(std::abs(d.ade - 0.65) <= 1e-12 && std::abs(d.fde - 1.2) <= 1e-12,
           "0.1 t divergence gives 0.65/1.2, got " + num(d.ade) + "/" + num(d.fde));
  return c.result("max |diff| " + num(worst) + " over 100 instances; worked examples exact");
}

Result linear_overfit() {
  const auto windows = generate_synthetic(SyntheticKind::linear, 1, 7, 10);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 1;
  const auto res = train_model(windows, cfg, {});
  const double ade = evaluate_best_of_k(windows, res.params, {}, 20, 3).ade;
  const double cvm = evaluate_cvm(windows).ade;
  Checks c;
  c.expect(ade <= 0.05, "train ADE " + num(ade) + " > 0.05");
  return c.result("10 linear windows, 200 epochs: train ADE " + num(ade) + " (CVM " + num(cvm) + ")");
}

Result turn_vs_cvm() {
  const auto train = generate_synthetic(SyntheticKind::turn, 3, 17, 32);
  const auto test = generate_synthetic(SyntheticKind::turn, 3, 18, 32);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 1;
  const auto res = train_model(train, cfg, {});
  const double ade = evaluate_best_of_k(test, res.params, {}, 20, 3).ade;
  const double cvm = evaluate_cvm(test).ade;
  Checks c;
  c.expect(ade < cvm, "model ADE " + num(ade) + " not below CVM " + num(cvm));
  return c.result("held-out turn windows: TA+GA+SSA+POP ADE " + num(ade) + " vs CVM " + num(cvm));
}

Result monotonicity() {
  Checks c;
  const ModelParams params = ModelParams::create({}, 404);
  const auto windows = joined(generate_synthetic(SyntheticKind::turn, 3, 41, 8),
                              generate_synthetic(SyntheticKind::crossing, 3, 42, 8));
  int batches = 0;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    ForwardOptions fo;
    fo.samples = 20;
    fo.batch_samples = false;
    const auto tr = model_forward(w, params, {}, Stage::train, window_seed(9, b), fo).trajectories();
    double l1 = 0, l5 = 0, l20 = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::vector<Track> s;
      for (const auto& sample : tr) s.push_back(sample[i]);
      l1 += variety_loss(w.fut[i], std::span<const Track>(s).first(1));
      l5 += variety_loss(w.fut[i], std::span<const Track>(s).first(5));
      l20 += variety_loss(w.fut[i], std::span<const Track>(s));
    }
    c.expect(l20 <= l5 && l5 <= l1, "variety loss order on batch " + std::to_string(b));
    ++batches;
  }
  const auto rows = sweep_sampling_numbers(windows, params, {}, {1, 5, 10, 20}, 5);
  std::string trace;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    trace += (i ? " " : "") + std::to_string(rows[i].k) + ":" + num(rows[i].ade);
    if (i) c.expect(rows[i].ade <= rows[i - 1].ade, "sweep ADE non-increasing at k=" + std::to_string(rows[i].k));
  }
  return c.result(std::to_string(batches) + " batches ordered; sweep " + trace);
}

Result ablation_directions() {
  // Direction check averaged over three training seeds.
  const auto train = joined(generate_synthetic(SyntheticKind::crossing, 3, 7, 32),
                            generate_synthetic(SyntheticKind::turn, 3, 17, 32));
  const auto test = joined(generate_synthetic(SyntheticKind::crossing, 3, 8, 32),
                           generate_synthetic(SyntheticKind::turn, 3, 18, 32));
  constexpr int kSeeds = 3;
  auto score = [&](const AblationConfig& ab) {
    double ade = 0.0, fde = 0.0;
    for (int s = 1; s <= kSeeds; ++s) {
      TrainConfig cfg;
      cfg.epochs = 200;
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto res = train_model(train, cfg, ab);
      const auto rep = evaluate_best_of_k(test, res.params, ab, 20, 3);
      ade += rep.ade / kSeeds;
      fde += rep.fde / kSeeds;
    }
    return std::pair{ade, fde};
  };
  using M = SocialMode;
  const auto base = score({false, false, M::none, false});
  const auto pop = score({false, false, M::none, true});
  const auto ga = score({false, true, M::none, false});
  const auto hsa = score({false, true, M::hard, false});
  const auto ssa = score({false, true, M::soft, false});
  Checks c;
  c.expect(pop.second < base.second, "POP FDE " + num(pop.second) + " vs baseline " + num(base.second));
  c.expect(ga.first < base.first, "GA ADE " + num(ga.first) + " vs baseline " + num(base.first));
  c.expect(ssa.first <= hsa.first + 0.01, "SSA ADE " + num(ssa.first) + " vs HSA " + num(hsa.first));
  return c.result("baseline " + num(base.first) + "/" + num(base.second) + ", POP " + num(pop.first) + "/" +
                  num(pop.second) + ", GA " + num(ga.first) + "/" + num(ga.second) + ", GA+HSA " + num(hsa.first) +
                  ", GA+SSA " + num(ssa.first));
}

Result kl_closure() {
  const auto train = joined(generate_synthetic(SyntheticKind::crossing, 3, 71, 32),
                            generate_synthetic(SyntheticKind::turn, 3, 72, 32));
  const auto held = joined(generate_synthetic(SyntheticKind::crossing, 3, 73, 16),
                           generate_synthetic(SyntheticKind::turn, 3, 74, 16));
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 2;
  const double before = mean_kl(held, initial_params({}, cfg.seed));
  const auto res = train_model(train, cfg, {});
  const double after = mean_kl(held, res.params);
  Checks c;
  c.expect(after < 0.1 * before, "KL " + num(after) + " not below 10% of " + num(before));
  return c.result("held-out KL " + num(before) + " -> " + num(after) + " (" + num(100.0 * after / before) + "%)");
}

Result real_data() {
  const fs::path root = GTPPO_DATA_DIR;
  const std::map<std::string, std::string> dirs{
      {"ETH", "eth"}, {"HOTEL", "hotel"}, {"UNIV", "univ"}, {"ZARA1", "zara1"}, {"ZARA2", "zara2"}};
  RunConfig cfg;
  for (const auto& [scene, dir] : dirs) {
    const fs::path p = root / dir;
    if (!fs::is_directory(p)) return {Outcome::skip, "no ETH/UCY data under " + root.string()};
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".txt") cfg.dataset.scenes[scene].push_back(e.path().string());
    if (cfg.dataset.scenes[scene].empty()) return {Outcome::skip, "no .txt files in " + p.string()};
  }
  cfg.dataset.held_out = "ZARA1";
  cfg.train.epochs = 50;
  cfg.train.seed = cfg.seed = 1;
  const Dataset data = load_dataset(cfg);
  const auto res = train_model(data.train_windows(), cfg.train, cfg.ablation, cfg.model);
  const double ade = evaluate_best_of_k(data.test_windows(), res.params, cfg.ablation, 20, 3).ade;
  Checks c;
  c.expect(ade <= 0.60, "ZARA1 ADE " + num(ade) + " > 0.60");
  return c.result("ZARA1 leave-one-out, 50 epochs: best-of-20 ADE " + num(ade));
}

Result reproducibility() {
  auto run_once = [](const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gtppo_accept_" + name);
    fs::remove_all(dir);
    const nlohmann::json j{
        {"seed", 42},
        {"output_dir", dir.string()},
        {"dataset", {{"format", "synthetic"}, {"synthetic", {{"train_windows", 8}, {"test_windows", 4}}}}},
        {"train", {{"epochs", 5}}},
        {"eval", {{"k", 20}}}};
    const RunConfig cfg = config_from_json(j);
    CommandOptions opts;
    opts.single_thread = true;
    std::ostringstream sink;
    if (run_command("train", cfg, opts, sink, sink) != 0 || run_command("eval", cfg, opts, sink, sink) != 0)
      throw std::runtime_error("pipeline failed: " + sink.str());
    auto slurp = [&](const char* f) {
      std::ifstream in(dir / f, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      return s.str();
    };
    return std::array<std::string, 3>{slurp("report.txt"), slurp("report.csv"), slurp("checkpoint.json")};
  };
  const auto a = run_once("a"), b = run_once("b");
  Checks c;
  c.expect(!a[0].empty() && !a[2].empty(), "artifacts written");
  c.expect(a[0] == b[0] && a[1] == b[1], "EvalReport byte-identical");
  c.expect(a[2] == b[2], "checkpoint byte-identical");
  return c.result("two single-thread runs: report " + std::to_string(a[0].size()) + " B and checkpoint " +
                  std::to_string(a[2].size()) + " B identical");
}

struct Criterion {
  const char* id;
  std::function<Result()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{{"1", invariants},          {"2", gradients},   {"3", metric_oracle},
                                   {"4a", linear_overfit},     {"4b", turn_vs_cvm}, {"5", monotonicity},
                                   {"6", ablation_directions}, {"7", kl_closure},  {"8", real_data},
                                   {"9", reproducibility}};
  std::string only;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = argv[++i];

  int passed = 0, failed = 0, skipped = 0;
  for (const auto& cr : all) {
    if (!only.empty() && only != cr.id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = cr.run();
    } catch (const std::exception& e) {
      r = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::fail ? "FAIL" : "SKIP";
    std::cout << tag << " criterion " << cr.id << ": " << r.detail << " [" << num(secs) << " s]" << std::endl;
    (r.outcome == Outcome::pass ? passed : r.outcome == Outcome::fail ? failed : skipped)++;
  }
  if (passed + failed + skipped == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  if (failed) return 1;
  return passed == 0 ? 77 : 0;
}
