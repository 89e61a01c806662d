// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. `acceptance 1 4 5` runs a subset.
//
// Criteria 6-8 train the desk-scale models under $SALD_ACCEPTANCE_DIR (default
// <build>/acceptance_run). The directory is wiped first unless
// SALD_ACCEPTANCE_REUSE=1, in which case finished checkpoints are reused.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "../support/loss_oracle.hpp"
#include "../support/op_catalog.hpp"
#include "sald/channel/channel.hpp"
#include "sald/cli/pipeline.hpp"
#include "sald/guidance/sge.hpp"
#include "sald/guidance/sglk.hpp"
#include "sald/metrics/quality.hpp"
#include "sald/nn/reference.hpp"
#include "sald/training/trainer.hpp"

using namespace sald;
using nn::Tensor;
using Td = Tensor<double>;
namespace fs = std::filesystem;
namespace oracle = sald::testing::oracle;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void randomize(Td& t, CounterRng& rng, double lo, double hi) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

void randomize_bn(nn::BatchNorm2d<double>& bn, CounterRng& rng) {
  randomize(bn.gamma, rng, 0.5, 1.5);
  randomize(bn.beta, rng, -0.3, 0.3);
}

guidance::SGLK<double> random_sglk(int ch, int k, std::uint64_t seed) {
  CounterRng rng(seed);
  guidance::SGLK<double> b({ch, k, 1e-2}, rng);
  randomize_bn(b.detail_bn, rng);
  randomize_bn(b.context_bn, rng);
  randomize_bn(b.res_bn, rng);
  randomize(b.gate_proj.bias, rng, -0.5, 0.5);
  b.gamma.data()[0] = rng.uniform(0.3, 1.2);
  return b;
}

// ---------------------------------------------------------------------------
// 1. gradient suite

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  int instances = 0;
  auto record = [&](const std::string& name, const testing::GradCheckResult& r) {
    ++instances;
    if (r.checked == 0 || r.max_rel >= 1e-4) {
      o.pass = false;
      std::printf("    gradient check failed: %s rel %.3g at %s\n", name.c_str(), r.max_rel, r.worst.c_str());
    }
    if (r.max_rel > worst) {
      worst = r.max_rel;
      worst_name = name;
    }
  };
  const auto catalog = testing::op_catalog();
  for (const auto& c : catalog) {
    for (std::uint64_t i = 0; i < 20; ++i) record(c.name, c.run(0xacce97 + 7919 * i));
  }
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::uint64_t seed = 5000 + i;
    CounterRng pick(seed);
    const int k = 3 + 2 * static_cast<int>(pick.below(2));
    auto blk = random_sglk(2, k, seed);
    CounterRng rng(seed + 1);
    auto x = testing::random_tensor({2, 2, 5, 5}, rng);
    auto f = testing::random_tensor({2, 2, 5, 5}, rng);
    std::vector<Td*> params{&x, &f};
    std::vector<std::string> names{"x", "f"};
    blk.visit("sglk", [&](const std::string& n, Td& t, bool trainable) {
      if (trainable) {
        params.push_back(&t);
        names.push_back(n);
      }
    });
    record("sglk_block", testing::grad_check([&] { return testing::project(blk.forward(x, f), seed); }, params, 1e-5,
                                             names));
  }
  const double secs = seconds_since(t0);
  if (secs >= 120.0) o.pass = false;
  o.detail = fmt("%d ops + SGLK block, %d instances, worst rel %.2e (%s), %.1f s", static_cast<int>(catalog.size()),
                 instances, worst, worst_name.c_str(), secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. oracle equivalence

Outcome oracle_equivalence() {
  double conv_err = 0.0, sge_err = 0.0, sglk_err = 0.0, loss_err = 0.0;
  // conv2d: random configurations plus depthwise k=9
  for (std::uint64_t i = 0; i < 10; ++i) {
    CounterRng rng(900 + i);
    struct Cfg {
      int cin, cout, k, stride, groups;
    };
    const Cfg cfgs[] = {{4, 4, 9, 1, 4}, {3, 5, 3, 1, 1}, {4, 6, 3, 2, 2}, {2, 3, 1, 1, 1}, {6, 6, 5, 2, 6}};
    const auto c = cfgs[i % 5];
    auto x = testing::random_tensor({2, c.cin, 9, 8}, rng, -1, 1, false);
    auto w = testing::random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, rng, -1, 1, false);
    auto b = testing::random_tensor({c.cout}, rng, -1, 1, false);
    const nn::Conv2dOptions opt{c.stride, nn::same_padding(c.k), c.groups};
    const auto y = nn::conv2d(x, w, b, opt);
    const auto ref = oracle::conv(oracle::from(x), w, b, c.stride, nn::same_padding(c.k), c.groups);
    conv_err = std::max(conv_err, oracle::max_abs_diff(ref.v, y.values()));
  }
  // SGE forward
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CounterRng rng(1100 + seed);
    guidance::SGE<double> sge({}, rng);
    for (auto& bn : sge.bns) randomize_bn(bn, rng);
    std::vector<double> mv(16 * 16);
    for (auto& v : mv) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    const Td mask({1, 1, 16, 16}, std::move(mv));
    const auto feats = sge.forward(mask);
    oracle::Arr f = oracle::from(mask);
    std::vector<oracle::Arr> levels;
    for (int i = 0; i < 3; ++i) {
      auto c = oracle::conv(f, sge.convs[i].weight, sge.convs[i].bias, 1, 1, 1);
      f = oracle::avgpool(oracle::map(oracle::bn_train(c, sge.bns[i].gamma, sge.bns[i].beta), oracle::relu), 2);
      levels.push_back(f);
    }
    for (int j = 0; j < 3; ++j) {
      auto ref = oracle::conv(oracle::upsample(levels[j], 2), sge.align[j].weight, sge.align[j].bias, 1, 0, 1);
      sge_err = std::max(sge_err, oracle::max_abs_diff(ref.v, feats[j].values()));
    }
  }
  // SGLK forward at k=9
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto blk = random_sglk(5, 9, 1200 + seed);
    CounterRng rng(1300 + seed);
    const auto x = testing::random_tensor({2, 5, 11, 11}, rng, -1.5, 1.5, false);
    const auto f = testing::random_tensor({2, 5, 11, 11}, rng, -1.5, 1.5, false);
    const auto out = blk.forward(x, f);
    const auto X = oracle::from(x);
    const Td none;
    auto detail = oracle::map(oracle::bn_train(oracle::conv(X, blk.detail_conv.weight, none, 1, 0, 1),
                                               blk.detail_bn.gamma, blk.detail_bn.beta),
                              oracle::silu);
    auto large = oracle::map(oracle::bn_train(oracle::conv(X, blk.context_conv.weight, none, 1, 4, 5),
                                              blk.context_bn.gamma, blk.context_bn.beta),
                             oracle::silu);
    auto gate = oracle::map(oracle::conv(oracle::from(f), blk.gate_proj.weight, blk.gate_proj.bias, 1, 0, 1),
                            oracle::sigmoid);
    auto res = oracle::bn_train(oracle::conv(X, blk.res_conv.weight, none, 1, 0, 1), blk.res_bn.gamma,
                                blk.res_bn.beta);
    const double g = blk.gamma.item();
    std::vector<double> ref(detail.v.size());
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = detail.v[i] + g * large.v[i] * gate.v[i] + res.v[i];
    sglk_err = std::max(sglk_err, oracle::max_abs_diff(ref, out.values()));
  }
  // total_loss
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    training::TrainConfig cfg;
    cfg.model.channels = {4, 8};
    cfg.model.kernel = 3;
    cfg.model.sge_channels = {2, 4};
    cfg.model.time_dim = 8;
    cfg.model.time_hidden = 8;
    cfg.timesteps = 10;
    cfg.data_seed = 40 + seed;
    CounterRng rng(1400 + seed);
    cfg.lambda1 = rng.uniform(0.2, 1.0);
    cfg.lambda2 = rng.uniform(0.05, 0.5);
    cfg.lambda3 = rng.uniform(0.01, 0.1);
    std::vector<data::SceneSample> scenes;
    for (int i = 0; i < 2; ++i) scenes.push_back(data::generate_scene(1500 + 2 * seed + i, 32, data::kAllClasses[i + seed % 3]));
    std::vector<edge::Payload> pl;
    for (const auto& s : scenes) pl.push_back(edge::encode(s, cfg.encode));
    const auto batch = training::make_batch<double>({&scenes[0], &scenes[1]}, {&pl[0], &pl[1]});
    diffusion::SaldModel<double> model(cfg.model, 1600 + seed);
    model.post.visit("post", [&](const std::string&, Td& t, bool) {
      for (auto& v : t.data()) v += 0.2 * (rng.uniform() - 0.5);
    });
    const training::PerceptualNet<double> phi(cfg.data_seed);
    const auto e = oracle::total_loss_errors(model, phi, batch, cfg, diffusion::default_schedule(cfg.timesteps),
                                             1700 + seed);
    loss_err = std::max(loss_err, e.worst());
  }
  Outcome o;
  o.pass = conv_err < 1e-10 && sge_err < 1e-10 && sglk_err < 1e-10 && loss_err < 1e-10;
  o.detail = fmt("max error conv2d %.1e, SGE %.1e, SGLK %.1e, total_loss %.1e (limit 1e-10)", conv_err, sge_err,
                 sglk_err, loss_err);
  return o;
}

// ---------------------------------------------------------------------------
// 3. diffusion invariants

Outcome diffusion_invariants() {
  Outcome o;
  std::string notes;
  for (int T : {10, 20, 50, 100, 200, 1000}) {
    const auto s = diffusion::default_schedule(T);
    bool ok = static_cast<int>(s.beta.size()) == T;
    for (int t = 0; t < T; ++t) {
      ok = ok && s.beta[t] > 0 && s.beta[t] < 1 && s.alpha_bar[t] > 0;
      if (t > 0) ok = ok && s.beta[t] > s.beta[t - 1] - 1e-15 && s.alpha_bar[t] < s.alpha_bar[t - 1];
    }
    if (!ok) {
      o.pass = false;
      notes += fmt(" schedule T=%d not monotone;", T);
    }
  }
  const auto t0 = Clock::now();
  const auto s = diffusion::default_schedule(50);
  const Td x0({1, 1, 2, 3}, std::vector<double>{-0.9, -0.3, 0.0, 0.2, 0.6, 1.0});
  double worst_mean = 0.0, worst_var = 0.0;
  for (int t : {0, 17, 49}) {
    const int draws = 10000;
    std::vector<double> sum(6, 0.0), sq(6, 0.0);
    for (int d = 0; d < draws; ++d) {
      const auto xt = diffusion::forward_noise(x0, t, diffusion::gaussian<double>(x0.shape(), 4242 + t, d), s);
      for (int i = 0; i < 6; ++i) {
        sum[i] += xt.at(i);
        sq[i] += xt.at(i) * xt.at(i);
      }
    }
    const double var = 1.0 - s.alpha_bar[t];
    for (int i = 0; i < 6; ++i) {
      const double mean = sum[i] / draws;
      const double v = sq[i] / draws - mean * mean;
      worst_mean = std::max(worst_mean, std::abs(mean - std::sqrt(s.alpha_bar[t]) * x0.at(i)) / std::sqrt(var / draws));
      worst_var = std::max(worst_var, std::abs(v / var - 1.0));
    }
  }
  const double mc_secs = seconds_since(t0);
  if (worst_mean > 4.0 || worst_var > 0.05 || mc_secs >= 60.0) o.pass = false;

  diffusion::ModelConfig mc;
  mc.channels = {4, 8, 8};
  mc.sge_channels = {4, 4, 4};
  mc.time_dim = 8;
  mc.time_hidden = 16;
  const auto scene = data::generate_scene(77, 32, data::SceneClass::mixed);
  const auto p = edge::encode(scene, {});
  bool det = true;
  {
    diffusion::SaldModel<float> m(mc, 3);
    det = det && diffusion::sample(m, p, diffusion::default_schedule(20), 99) ==
                     diffusion::sample(m, p, diffusion::default_schedule(20), 99);
    diffusion::SaldModel<double> md(mc, 3);
    det = det && diffusion::sample(md, p, diffusion::default_schedule(10), 5) ==
                     diffusion::sample(md, p, diffusion::default_schedule(10), 5);
  }
  if (!det) o.pass = false;
  o.detail = fmt("schedules monotone for T in {10..1000}; MC worst mean %.2f sigma, worst var %.2f%% (%.1f s); "
                 "seeded sampling %s",
                 worst_mean, 100 * worst_var, mc_secs, det ? "bit-exact" : "NOT reproducible") +
             notes;
  return o;
}

// ---------------------------------------------------------------------------
// 4. protocol exactness

edge::Payload random_payload(CounterRng& rng, int i) {
  edge::Payload p;
  const int ss[] = {1, 2, 4, 8};
  p.s = ss[rng.below(4)];
  p.q = 1 + static_cast<int>(rng.below(16));
  p.height = p.s * (1 + static_cast<int>(rng.below(24)));
  p.width = p.s * (1 + static_cast<int>(rng.below(24)));
  p.mask_mode = static_cast<edge::MaskMode>(rng.below(3));
  p.lr.resize(static_cast<std::size_t>(3) * p.lr_height() * p.lr_width());
  for (auto& v : p.lr) v = static_cast<std::uint16_t>(rng.below(1u << p.q));
  p.mask = Mask(p.height, p.width);
  switch (i % 5) {
    case 0: break;  // empty
    case 1: std::fill(p.mask.data.begin(), p.mask.data.end(), std::uint8_t{1}); break;
    case 2: p.mask.at(static_cast<int>(rng.below(p.height)), static_cast<int>(rng.below(p.width))) = 1; break;
    case 3:
      for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) p.mask.at(y, x) = (x + y) % 2;
      break;
    default: {
      const double density = rng.uniform();
      for (auto& v : p.mask.data) v = rng.uniform() < density ? 1 : 0;
    }
  }
  return p;
}

Outcome protocol_exactness() {
  CounterRng rng(31337);
  int round_trip = 0, sized = 0, identity = 0, exact_drop = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto p = random_payload(rng, i);
    const auto bytes = edge::serialize(p);
    round_trip += edge::deserialize(bytes) == p && edge::serialize(edge::deserialize(bytes)) == bytes;
    sized += edge::payload_bytes(p) == bytes.size();

    channel::ChannelConfig c;
    c.budget = bytes.size();
    c.seed = 7000 + i;
    identity += channel::transmit(p, c) == p;

    c.mask_missing_rate = rng.uniform();
    const auto out = channel::transmit(p, c);
    const std::size_t fg = p.mask.count();
    const auto expect = static_cast<std::size_t>(std::floor(c.mask_missing_rate * static_cast<double>(fg)));
    bool subset = out.lr == p.lr;
    for (std::size_t k = 0; k < p.mask.data.size(); ++k) subset = subset && out.mask.data[k] <= p.mask.data[k];
    exact_drop += subset && fg - out.mask.count() == expect;
  }
  Outcome o;
  o.pass = round_trip == n && sized == n && identity == n && exact_drop == n;
  o.detail = fmt("%d payloads: round trip %d, R==bytes %d, r=0 identity %d, exact floor(r|FG|) drop %d", n,
                 round_trip, sized, identity, exact_drop);
  return o;
}

// ---------------------------------------------------------------------------
// 5. metric fidelity

Outcome metric_fidelity() {
  CounterRng rng(55);
  Image a(3, 32, 32), b(3, 32, 32);
  for (auto& v : a.data) v = rng.uniform(0.0, 0.9);
  b = a;
  for (auto& v : b.data) v += 0.1;
  const double p = *metrics::psnr(a, b);
  Image c(3, 32, 32);
  for (auto& v : c.data) v = rng.uniform();
  const double self = metrics::ssim(c, c);
  const double sym = std::abs(metrics::ssim(a, c) - metrics::ssim(c, a));
  Outcome o;
  o.pass = std::abs(p - 20.0) <= 1e-6 && self == 1.0 && sym <= 1e-12;
  o.detail = fmt("PSNR offset 0.1 = %.9f dB; SSIM(a,a) = %.17g; |SSIM(a,b)-SSIM(b,a)| = %.1e", p, self, sym);
  return o;
}

// ---------------------------------------------------------------------------
// 6-8. desk-scale run

cli::RunConfig desk_config() {
  cli::RunConfig c;  // defaults are the desk recipe: 64x64, 64/32, s=4, q=5, T=50, k=9
  c.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return c;
}

struct DeskRun {
  fs::path dir;
  cli::RunConfig cfg;
  std::vector<cli::SweepRow> modules, mask, steps;
  std::vector<metrics::EvalRow> bicubic;
  double modules_seconds = 0.0, total_seconds = 0.0;
  bool trained = false;
};

double mean_of(const std::vector<metrics::EvalRow>& rows, double metrics::EvalRow::*field) {
  double s = 0.0;
  for (const auto& r : rows) s += r.*field;
  return rows.empty() ? 0.0 : s / rows.size();
}

void print_sweep(const char* title, const std::vector<cli::SweepRow>& rows) {
  std::printf("    %s\n    %-12s %8s %8s %9s %8s %8s\n", title, "setting", "psnr_db", "ssim", "edge_iou", "det_f1",
              "seconds");
  for (const auto& r : rows) {
    std::printf("    %-12s %8.3f %8.4f %9.4f %8.4f %8.1f\n", r.setting.c_str(), r.summary.psnr, r.summary.ssim,
                r.summary.edge_iou, r.summary.detection.f1, r.seconds);
  }
  std::fflush(stdout);
}

DeskRun& desk_run() {
  static DeskRun run;
  if (run.trained) return run;
  const char* env_dir = std::getenv("SALD_ACCEPTANCE_DIR");
  run.dir = env_dir ? fs::path(env_dir) : fs::path(SALD_ACCEPTANCE_DEFAULT_DIR);
  const char* reuse = std::getenv("SALD_ACCEPTANCE_REUSE");
  if (!(reuse && std::string(reuse) == "1")) fs::remove_all(run.dir);
  fs::create_directories(run.dir);
  run.cfg = desk_config();
  cli::write_resolved(run.dir, run.cfg);

  const auto t0 = Clock::now();
  cli::SweepInputs in;
  in.work_dir = run.dir;
  in.log = [t0](const std::string& m) {
    if (m.rfind("  epoch", 0) == 0 && m.find("epoch 1 ") == std::string::npos &&
        m.find("0 L_diff") == std::string::npos)
      return;  // every tenth epoch
    std::printf("    [%6.0f s] %s\n", seconds_since(t0), m.c_str());
    std::fflush(stdout);
  };
  run.modules = cli::run_sweep(cli::Sweep::modules, run.cfg, in);
  run.modules_seconds = seconds_since(t0);
  cli::write_sweep_csv(run.dir / "ablate_modules.csv", cli::Sweep::modules, run.modules);
  print_sweep("module grid", run.modules);

  const auto test = data::materialize(data::make_dataset(run.cfg.data.seed, run.cfg.data.train, run.cfg.data.test,
                                                         run.cfg.data.size)
                                          .test);
  run.bicubic = cli::evaluate_bicubic(test, run.cfg).rows;

  in.work_dir.clear();
  in.checkpoint = training::output_paths(run.dir / "modules" / "full").checkpoint;
  run.mask = cli::run_sweep(cli::Sweep::mask_missing, run.cfg, in);
  cli::write_sweep_csv(run.dir / "ablate_mask-missing.csv", cli::Sweep::mask_missing, run.mask);
  print_sweep("mask-missing sweep", run.mask);
  run.steps = cli::run_sweep(cli::Sweep::timesteps, run.cfg, in);
  cli::write_sweep_csv(run.dir / "ablate_timesteps.csv", cli::Sweep::timesteps, run.steps);
  print_sweep("timesteps sweep", run.steps);
  run.total_seconds = seconds_since(t0);
  run.trained = true;
  return run;
}

const cli::SweepRow& find(const std::vector<cli::SweepRow>& rows, const std::string& setting) {
  for (const auto& r : rows)
    if (r.setting == setting) return r;
  throw std::runtime_error("missing sweep row " + setting);
}

std::vector<double> diff_column(const fs::path& csv) {
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);  // header
  std::vector<double> out;
  while (std::getline(f, line)) {
    std::istringstream ls(line);
    std::string epoch, diff;
    std::getline(ls, epoch, ',');
    std::getline(ls, diff, ',');
    out.push_back(std::stod(diff));
  }
  return out;
}

Outcome desk_training() {
  auto& run = desk_run();
  Outcome o;
  const auto diffs = diff_column(training::output_paths(run.dir / "modules" / "full").epoch_csv);
  const bool a = !diffs.empty() && diffs.back() <= 0.5 * diffs.front();

  const auto& full = find(run.modules, "full").rows;
  int wins = 0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double s = full[i].psnr.value_or(metrics::kIdenticalPsnrDb);
    const double b = run.bicubic[i].psnr.value_or(metrics::kIdenticalPsnrDb);
    wins += s > b;
  }
  const double win_rate = full.empty() ? 0.0 : static_cast<double>(wins) / full.size();
  const double eiou_full = mean_of(full, &metrics::EvalRow::edge_iou);
  const double eiou_bic = mean_of(run.bicubic, &metrics::EvalRow::edge_iou);
  double psnr_bic = 0.0;
  for (const auto& r : run.bicubic) psnr_bic += r.psnr.value_or(metrics::kIdenticalPsnrDb) / run.bicubic.size();
  const bool b = win_rate >= 0.7 && eiou_full > eiou_bic;

  bool c = true;
  std::string ablations;
  for (const auto& r : run.modules) {
    if (r.setting == "full") continue;
    c = c && eiou_full >= r.summary.edge_iou - 0.02;
    ablations += fmt(" %s %.4f", r.setting.c_str(), r.summary.edge_iou);
  }
  const bool time_ok = run.total_seconds <= 7200.0;
  o.pass = a && b && c && time_ok;
  o.detail =
      fmt("(a) %s L_diff epoch 1 %.4f -> epoch %zu %.4f; ", a ? "ok" : "FAIL", diffs.empty() ? 0.0 : diffs.front(),
          diffs.size(), diffs.empty() ? 0.0 : diffs.back()) +
      fmt("(b) %s PSNR wins %d/%zu (%.0f%%, need 70%%), mean PSNR %.2f vs bicubic %.2f dB, edge-IoU %.4f vs %.4f; ",
          b ? "ok" : "FAIL", wins, full.size(), 100 * win_rate, find(run.modules, "full").summary.psnr,
          psnr_bic,
          eiou_full, eiou_bic) +
      fmt("(c) %s full edge-IoU %.4f vs%s; ", c ? "ok" : "FAIL", eiou_full, ablations.c_str()) +
      fmt("wall time %.0f s (%s 2 h)", run.total_seconds, time_ok ? "within" : "OVER");
  return o;
}

Outcome mask_robustness() {
  auto& run = desk_run();
  std::vector<double> e;
  std::string seq;
  for (const char* s : {"r=0%", "r=10%", "r=20%", "r=30%", "r=50%"}) {
    e.push_back(find(run.mask, s).summary.edge_iou);
    seq += fmt(" %s %.4f", s, e.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < e.size(); ++i) monotone = monotone && e[i] <= e[i - 1] + 0.02;
  const double zero = find(run.mask, "zero-mask").summary.edge_iou;
  const bool no_collapse = e.back() >= zero - 0.05;
  Outcome o;
  o.pass = monotone && no_collapse;
  o.detail = fmt("edge-IoU%s; %s within 0.02; r=50%% %.4f vs zero-mask %.4f (%s)", seq.c_str(),
                 monotone ? "non-increasing" : "NOT non-increasing", e.back(), zero,
                 no_collapse ? "no collapse" : "collapsed");
  return o;
}

Outcome timestep_direction() {
  auto& run = desk_run();
  const double e10 = find(run.steps, "T=10").summary.edge_iou;
  const double e50 = find(run.steps, "T=50").summary.edge_iou;
  bool linear = true;
  std::string lat;
  for (const auto& r : run.steps) {
    const int T = std::stoi(r.setting.substr(2));
    const double expect = T / 50.0;
    linear = linear && std::abs(r.relative_latency / expect - 1.0) <= 0.25;
    lat += fmt(" T=%d %.2fx", T, r.relative_latency);
  }
  Outcome o;
  o.pass = e10 < e50 && linear;
  o.detail = fmt("edge-IoU T=10 %.4f %s T=50 %.4f; relative latency%s (%s +-25%% of T/50)", e10, e10 < e50 ? "<" : ">=",
                 e50, lat.c_str(), linear ? "within" : "NOT within");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"oracle equivalence", oracle_equivalence},
      {"diffusion invariants", diffusion_invariants},
      {"protocol exactness", protocol_exactness},
      {"metric fidelity", metric_fidelity},
      {"desk-scale training run", desk_training},
      {"mask-missing robustness", mask_robustness},
      {"timestep direction", timestep_direction},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  std::vector<std::string> lines;
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    std::printf("criterion %d (%s): running\n", id, criteria[i].first.c_str());
    std::fflush(stdout);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    lines.push_back(fmt("[%s] criterion %d %s: ", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str()) +
                    o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nacceptance summary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return all ? 0 : 1;
}
