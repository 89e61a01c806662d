// SPDX-License-Identifier: Apache-2.0
#include "sald/cli/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"
#include "sald/training/trainer.hpp"

namespace sald::cli {

namespace {

constexpr int kChunk = 8;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

}  // namespace

std::vector<edge::Payload> encode_all(const std::vector<data::SceneSample>& scenes, const edge::EncodeOptions& opts) {
  std::vector<edge::Payload> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(edge::encode(s, opts));
  return out;
}

std::vector<edge::Payload> transmit_all(const std::vector<edge::Payload>& payloads,
                                        const std::vector<data::SceneSample>& scenes,
                                        const channel::ChannelConfig& cfg, bool zero_mask) {
  if (payloads.size() != scenes.size()) throw ConfigError("one payload per scene");
  std::vector<edge::Payload> out;
  out.reserve(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    auto c = cfg;
    c.seed = derive_seed(cfg.seed, scenes[i].seed);
    auto p = channel::transmit(payloads[i], c);
    if (zero_mask) std::fill(p.mask.data.begin(), p.mask.data.end(), std::uint8_t{0});
    out.push_back(std::move(p));
  }
  return out;
}

EvalRun evaluate_sald(diffusion::SaldModel<float>& model, const std::vector<data::SceneSample>& test,
                      const RunConfig& cfg, const EvalSetting& setting, metrics::SceneClassifier* clf,
                      const std::string& method) {
  EvalRun run;
  if (test.empty()) return run;
  const auto sent = encode_all(test, cfg.train.encode);
  auto ch = cfg.channel;
  ch.mask_missing_rate = setting.mask_missing_rate;
  const auto received = transmit_all(sent, test, ch, setting.zero_mask);
  const auto sched = diffusion::default_schedule(setting.timesteps);
  diffusion::SampleOptions opts;
  opts.use_mask = cfg.sampler.use_mask;
  opts.clip_x0 = cfg.sampler.clip_x0;

  const int n = static_cast<int>(test.size());
  const int chunks = (n + kChunk - 1) / kChunk;
  run.images.resize(n);
  model.set_training(false);
  std::atomic<int> next{0};
  auto worker = [&](diffusion::SaldModel<float> m) {
    for (int c = next++; c < chunks; c = next++) {
      std::vector<const edge::Payload*> ptrs;
      std::vector<std::uint64_t> seeds;
      for (int i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
        ptrs.push_back(&received[i]);
        seeds.push_back(derive_seed(cfg.sampler.seed, test[i].seed));
      }
      auto imgs = diffusion::sample(m, ptrs, seeds, sched, opts);
      for (std::size_t k = 0; k < imgs.size(); ++k) run.images[c * kChunk + k] = std::move(imgs[k]);
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  const int threads = std::min(cfg.threads, chunks);
  if (threads <= 1) {
    worker(model);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, model);
    for (auto& t : pool) t.join();
  }
  run.seconds = seconds_since(t0);

  for (int i = 0; i < n; ++i) {
    run.rows.push_back(metrics::measure(method, run.images[i], test[i], edge::bits_per_pixel(sent[i]), clf));
  }
  return run;
}

EvalRun evaluate_bicubic(const std::vector<data::SceneSample>& test, const RunConfig& cfg,
                         metrics::SceneClassifier* clf) {
  EvalRun run;
  const auto sent = encode_all(test, cfg.train.encode);
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& p : sent) run.images.push_back(metrics::bicubic_upsample(edge::dequantize_lr(p), p.s));
  run.seconds = seconds_since(t0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    // Bicubic consumes only the LR stream; the mask bytes are not needed.
    const double bpp = 8.0 * static_cast<double>(edge::payload_sizes(sent[i]).lr_data + edge::kHeaderBytes) /
                       (static_cast<double>(sent[i].height) * sent[i].width);
    run.rows.push_back(metrics::measure("bicubic", run.images[i], test[i], bpp, clf));
  }
  return run;
}

metrics::SceneClassifier fit_proxy_classifier(const RunConfig& cfg) {
  const auto split = data::make_dataset(derive_seed(cfg.classifier.fit.seed, hash_tag("classifier-data")),
                                        cfg.classifier.scenes, 1, cfg.data.size);
  return metrics::fit_classifier(data::materialize(split.train), cfg.classifier.fit);
}

diffusion::ModelConfig module_variant(diffusion::ModelConfig base, const std::string& name) {
  if (name == "baseline") {
    base.use_sge = base.use_sglk = false;
  } else if (name == "sglk") {
    base.use_sge = false;
    base.use_sglk = true;
  } else if (name == "sge") {
    base.use_sge = true;
    base.use_sglk = false;
  } else if (name == "full") {
    base.use_sge = base.use_sglk = true;
  } else {
    throw ConfigError("unknown module variant '" + name + "' (baseline|sglk|sge|full)");
  }
  return base;
}

Sweep parse_sweep(const std::string& s) {
  if (s == "modules") return Sweep::modules;
  if (s == "timesteps") return Sweep::timesteps;
  if (s == "kernel") return Sweep::kernel;
  if (s == "lambda2") return Sweep::lambda2;
  if (s == "mask-missing") return Sweep::mask_missing;
  throw ConfigError("unknown sweep '" + s + "' (modules|timesteps|kernel|lambda2|mask-missing)");
}

std::string to_string(Sweep s) {
  switch (s) {
    case Sweep::modules: return "modules";
    case Sweep::timesteps: return "timesteps";
    case Sweep::kernel: return "kernel";
    case Sweep::lambda2: return "lambda2";
    case Sweep::mask_missing: return "mask-missing";
  }
  return "?";
}

diffusion::SaldModel<float> load_trained(const std::filesystem::path& checkpoint) {
  if (checkpoint.empty() || !std::filesystem::exists(checkpoint)) {
    throw ConfigError("checkpoint not found: " + checkpoint.string());
  }
  return training::load_model<float>(training::load_checkpoint(checkpoint));
}

std::vector<SweepRow> run_sweep(Sweep sweep, const RunConfig& cfg, const SweepInputs& in) {
  const auto splits = data::make_dataset(cfg.data.seed, cfg.data.train, cfg.data.test, cfg.data.size);
  const auto test = data::materialize(splits.test);
  auto log = [&](const std::string& m) {
    if (in.log) in.log(m);
  };
  std::vector<SweepRow> rows;
  auto row = [&](const std::string& setting, diffusion::SaldModel<float>& model, const EvalSetting& es) {
    log(to_string(sweep) + ": evaluating " + setting);
    const auto run = evaluate_sald(model, test, cfg, es, in.classifier);
    SweepRow r;
    r.setting = setting;
    r.summary = metrics::summarize(run.rows);
    r.summary.method = setting;
    r.rows = run.rows;
    r.params = model.parameter_count();
    r.seconds = run.seconds;
    rows.push_back(r);
  };

  if (sweep == Sweep::timesteps || sweep == Sweep::mask_missing) {
    auto model = load_trained(in.checkpoint);
    EvalSetting es;
    es.timesteps = cfg.sampler.timesteps;
    if (sweep == Sweep::timesteps) {
      for (int t : {10, 20, 50, 100, 200}) {
        es.timesteps = t;
        row("T=" + std::to_string(t), model, es);
      }
      double ref = 0.0;
      for (const auto& r : rows)
        if (r.setting == "T=50") ref = r.seconds;
      for (auto& r : rows) r.relative_latency = ref > 0 ? r.seconds / ref : 0.0;
    } else {
      for (double rate : {0.0, 0.1, 0.2, 0.3, 0.5}) {
        es.mask_missing_rate = rate;
        row("r=" + std::to_string(static_cast<int>(rate * 100 + 0.5)) + "%", model, es);
      }
      es.mask_missing_rate = 0.0;
      es.zero_mask = true;
      row("zero-mask", model, es);
    }
    return rows;
  }

  if (in.work_dir.empty()) throw ConfigError("sweep '" + to_string(sweep) + "' needs a work directory");
  const auto train_set = data::materialize(splits.train);
  std::vector<std::pair<std::string, training::TrainConfig>> settings;
  if (sweep == Sweep::modules) {
    for (const char* v : {"baseline", "sglk", "sge", "full"}) {
      auto t = cfg.train;
      t.model = module_variant(t.model, v);
      settings.emplace_back(v, t);
    }
  } else if (sweep == Sweep::kernel) {
    for (int k : {3, 5, 7, 9, 11}) {
      auto t = cfg.train;
      t.model.kernel = k;
      settings.emplace_back("k=" + std::to_string(k), t);
    }
  } else {
    for (double l : {0.01, 0.05, 0.1, 0.5, 1.0}) {
      auto t = cfg.train;
      t.lambda2 = l;
      settings.emplace_back("lambda2=" + fmt(l), t);
    }
  }
  EvalSetting es;
  es.timesteps = cfg.sampler.timesteps;
  for (const auto& [name, tcfg] : settings) {
    const auto dir = in.work_dir / to_string(sweep) / name;
    log(to_string(sweep) + ": training " + name + " in " + dir.string());
    training::train(train_set, tcfg, dir, true, [&](const training::EpochLog& e) {
      log("  epoch " + std::to_string(e.epoch) + " L_diff " + fmt(e.diff));
    });
    auto model = load_trained(training::output_paths(dir).checkpoint);
    row(name, model, es);
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, Sweep sweep, const std::vector<SweepRow>& rows) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "# sweep " << to_string(sweep)
    << "; edge_iou (Sobel edge-map IoU) replaces LPIPS/FID; detection and top1 are synthetic proxies\n";
  f << "setting,samples,psnr_db,ssim,edge_iou,bpp,det_precision,det_recall,det_f1,top1,params,seconds,"
       "relative_latency\n";
  f.precision(10);
  for (const auto& r : rows) {
    const auto& s = r.summary;
    f << r.setting << ',' << s.samples << ',' << s.psnr << ',' << s.ssim << ',' << s.edge_iou << ',' << s.bpp << ','
      << s.detection.precision << ',' << s.detection.recall << ',' << s.detection.f1 << ','
      << (s.top1 ? fmt(*s.top1) : "") << ',' << r.params << ',' << r.seconds << ','
      << (sweep == Sweep::timesteps ? fmt(r.relative_latency) : "") << '\n';
  }
}

}  // namespace sald::cli
