// SPDX-License-Identifier: Apache-2.0
//
// sald: generate | train | encode | transmit | decode | evaluate | ablate
//
// Exit codes: 0 success, 2 configuration error, 3 budget or transmission
// error, 4 numeric abort, 1 anything else.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sald/cli/pipeline.hpp"
#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"
#include "sald/training/trainer.hpp"

using namespace sald;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Seed for training, channel and sampler");
  app->add_option("--threads", c.threads, "Worker threads for reconstruction")->check(CLI::PositiveNumber);
}

// Defaults < config file < flags. `patch` holds the flags as a config fragment.
cli::RunConfig resolve(const Common& c, json patch) {
  cli::RunConfig cfg;
  if (!c.config.empty()) cfg = cli::load_run_config(c.config, cfg);
  if (c.seed) {
    patch["train"]["seed"] = *c.seed;
    patch["channel"]["seed"] = *c.seed;
    patch["sampler"]["seed"] = *c.seed;
  }
  if (c.threads) patch["threads"] = *c.threads;
  if (!patch.is_null()) cfg = cli::merge_run_config(cfg, patch);
  cli::write_resolved(c.out_dir, cfg);
  return cfg;
}

template <typename V>
void set_if(json& patch, const std::optional<V>& v, std::initializer_list<const char*> path) {
  if (!v) return;
  json* node = &patch;
  for (auto it = path.begin(); it != path.end(); ++it) node = &(*node)[*it];
  *node = *v;
}

void print_summaries(const std::vector<metrics::EvalSummary>& s) { std::cout << metrics::summary_text(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bandwidth-constrained edge-cloud super-resolution simulator"};
  app.require_subcommand(1);
  Common common;

  // generate
  auto* gen = app.add_subcommand("generate", "Write the synthetic dataset (manifests and images)");
  add_common(gen, common);
  std::optional<int> n_train, n_test, size;
  std::optional<std::uint64_t> data_seed;
  bool no_images = false;
  gen->add_option("--train", n_train, "Training scenes");
  gen->add_option("--test", n_test, "Test scenes");
  gen->add_option("--size", size, "Scene size (32, 64 or 128)");
  gen->add_option("--data-seed", data_seed, "Dataset seed");
  gen->add_flag("--no-images", no_images, "Write manifests only");

  // train
  auto* tr = app.add_subcommand("train", "Train the reconstructor on the training split");
  add_common(tr, common);
  std::optional<int> epochs, batch, kernel, timesteps;
  std::optional<double> lr, lambda2;
  std::optional<std::string> codec;
  bool no_sge = false, no_sglk = false, resume = false, no_classifier = false;
  tr->add_option("--epochs", epochs);
  tr->add_option("--batch-size", batch);
  tr->add_option("--lr", lr, "Initial learning rate");
  tr->add_option("--kernel", kernel, "SGLK kernel size");
  tr->add_option("--timesteps", timesteps, "Diffusion steps T");
  tr->add_option("--lambda2", lambda2, "Reconstruction loss weight");
  tr->add_option("--codec", codec, "identity | tiny_ae");
  tr->add_flag("--no-sge", no_sge, "Drop the guidance engine (mask-free path)");
  tr->add_flag("--no-sglk", no_sglk, "Plain 3x3 blocks instead of SGLK");
  tr->add_flag("--resume", resume, "Continue from the checkpoint in --out-dir");
  tr->add_flag("--no-classifier", no_classifier, "Skip fitting the classification proxy");

  // encode
  auto* enc = app.add_subcommand("encode", "Encode a scene or PPM image into a payload");
  add_common(enc, common);
  std::string enc_input, enc_output, scene_class = "mixed";
  std::optional<std::uint64_t> scene_seed;
  std::optional<int> s_factor, q_bits;
  std::optional<std::string> mask_source;
  enc->add_option("--input", enc_input, "PPM image (mask from saliency or none)");
  enc->add_option("--scene", scene_seed, "Generate scene with this seed instead of reading a file");
  enc->add_option("--class", scene_class, "Scene class for --scene (vehicles-sparse, vehicles-dense, buildings, mixed)")->capture_default_str();
  enc->add_option("--s", s_factor, "Downsampling factor");
  enc->add_option("--q", q_bits, "Quantization bits");
  enc->add_option("--mask-source", mask_source, "oracle | saliency | none");
  enc->add_option("--output", enc_output, "Payload file (default <out-dir>/payload.bin)");

  // transmit
  auto* tx = app.add_subcommand("transmit", "Pass a payload through the lossy channel");
  add_common(tx, common);
  std::string tx_input, tx_output;
  std::optional<double> rate;
  std::optional<std::size_t> budget;
  std::optional<std::string> drop_mode;
  tx->add_option("--input", tx_input, "Payload file")->required()->check(CLI::ExistingFile);
  tx->add_option("--output", tx_output, "Degraded payload (default <out-dir>/received.bin)");
  tx->add_option("--rate", rate, "Mask missing rate r");
  tx->add_option("--budget", budget, "Byte budget");
  tx->add_option("--mode", drop_mode, "pixels | components");

  // decode
  auto* dec = app.add_subcommand("decode", "Reconstruct an image from a payload");
  add_common(dec, common);
  std::string dec_input, dec_output, dec_ckpt;
  std::optional<int> dec_steps;
  dec->add_option("--input", dec_input, "Payload file")->required()->check(CLI::ExistingFile);
  dec->add_option("--checkpoint", dec_ckpt, "Model checkpoint")->required();
  dec->add_option("--timesteps", dec_steps, "Sampling steps");
  dec->add_option("--output", dec_output, "Reconstruction PPM (default <out-dir>/reconstruction.ppm)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score reconstructions of the test split against bicubic");
  add_common(ev, common);
  std::string ev_ckpt, ev_clf;
  std::optional<int> ev_steps;
  std::optional<double> ev_rate;
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  ev->add_option("--classifier", ev_clf, "Classifier checkpoint (enables top-1)");
  ev->add_option("--timesteps", ev_steps, "Sampling steps");
  ev->add_option("--rate", ev_rate, "Mask missing rate r");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run one ablation sweep");
  add_common(ab, common);
  std::string sweep_name, ab_ckpt, ab_clf;
  std::optional<int> ab_epochs;
  ab->add_option("--sweep", sweep_name, "modules | timesteps | kernel | lambda2 | mask-missing")->required();
  ab->add_option("--checkpoint", ab_ckpt, "Trained checkpoint (timesteps, mask-missing)");
  ab->add_option("--classifier", ab_clf, "Classifier checkpoint (enables top-1)");
  ab->add_option("--epochs", ab_epochs, "Epochs per trained setting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::filesystem::path out = common.out_dir;
    if (gen->parsed()) {
      json patch;
      set_if(patch, n_train, {"data", "train"});
      set_if(patch, n_test, {"data", "test"});
      set_if(patch, size, {"data", "size"});
      set_if(patch, data_seed, {"data", "seed"});
      const auto cfg = resolve(common, patch);
      const auto splits = data::make_dataset(cfg.data.seed, cfg.data.train, cfg.data.test, cfg.data.size);
      data::export_dataset(out, splits, !no_images);
      std::cout << "wrote " << splits.train.size() << " train and " << splits.test.size() << " test scenes to "
                << out.string() << '\n';
    } else if (tr->parsed()) {
      json patch;
      set_if(patch, epochs, {"train", "epochs"});
      set_if(patch, batch, {"train", "batch_size"});
      set_if(patch, lr, {"train", "lr_init"});
      set_if(patch, kernel, {"train", "model", "kernel"});
      set_if(patch, timesteps, {"train", "timesteps"});
      set_if(patch, lambda2, {"train", "lambda2"});
      set_if(patch, codec, {"train", "model", "codec"});
      if (no_sge) patch["train"]["model"]["use_sge"] = false;
      if (no_sglk) patch["train"]["model"]["use_sglk"] = false;
      const auto cfg = resolve(common, patch);
      const auto splits = data::make_dataset(cfg.data.seed, cfg.data.train, cfg.data.test, cfg.data.size);
      training::train(data::materialize(splits.train), cfg.train, out, resume, [](const training::EpochLog& e) {
        std::cout << "epoch " << e.epoch << "  L_diff " << e.diff << "  L_rec " << e.rec << "  L_per " << e.per
                  << "  lr " << e.lr << std::endl;
      });
      if (!no_classifier) {
        auto clf = cli::fit_proxy_classifier(cfg);
        metrics::save_classifier(out / "classifier.sckp", clf);
      }
      std::cout << "checkpoint " << training::output_paths(out).checkpoint.string() << '\n';
    } else if (enc->parsed()) {
      json patch;
      set_if(patch, s_factor, {"train", "encode", "s"});
      set_if(patch, q_bits, {"train", "encode", "q"});
      set_if(patch, mask_source, {"train", "encode", "mask_source"});
      const auto cfg = resolve(common, patch);
      edge::Payload p;
      if (scene_seed) {
        const auto scene = data::generate_scene(*scene_seed, cfg.data.size, data::parse_scene_class(scene_class));
        p = edge::encode(scene, cfg.train.encode);
        write_ppm(out / "scene.ppm", scene.hr);
      } else if (!enc_input.empty()) {
        p = edge::encode_image(read_ppm(enc_input), nullptr, cfg.train.encode);
      } else {
        throw ConfigError("encode needs --input or --scene");
      }
      const std::filesystem::path dst = enc_output.empty() ? out / "payload.bin" : std::filesystem::path(enc_output);
      edge::save_payload(dst, p);
      std::cout << dst.string() << ": " << edge::payload_bytes(p) << " bytes, " << edge::bits_per_pixel(p) << " bpp\n";
    } else if (tx->parsed()) {
      json patch;
      set_if(patch, rate, {"channel", "mask_missing_rate"});
      set_if(patch, budget, {"channel", "budget"});
      set_if(patch, drop_mode, {"channel", "mode"});
      const auto cfg = resolve(common, patch);
      const auto received = channel::transmit(edge::load_payload(tx_input), cfg.channel);
      const std::filesystem::path dst = tx_output.empty() ? out / "received.bin" : std::filesystem::path(tx_output);
      edge::save_payload(dst, received);
      std::cout << dst.string() << ": mask foreground " << received.mask.count() << " px\n";
    } else if (dec->parsed()) {
      json patch;
      set_if(patch, dec_steps, {"sampler", "timesteps"});
      const auto cfg = resolve(common, patch);
      auto model = cli::load_trained(dec_ckpt);
      diffusion::SampleOptions opts;
      opts.use_mask = cfg.sampler.use_mask;
      opts.clip_x0 = cfg.sampler.clip_x0;
      const auto img = diffusion::sample(model, edge::load_payload(dec_input),
                                         diffusion::default_schedule(cfg.sampler.timesteps), cfg.sampler.seed, opts);
      const std::filesystem::path dst =
          dec_output.empty() ? out / "reconstruction.ppm" : std::filesystem::path(dec_output);
      write_ppm(dst, img);
      std::cout << "wrote " << dst.string() << '\n';
    } else if (ev->parsed()) {
      json patch;
      set_if(patch, ev_steps, {"sampler", "timesteps"});
      set_if(patch, ev_rate, {"channel", "mask_missing_rate"});
      const auto cfg = resolve(common, patch);
      auto model = cli::load_trained(ev_ckpt);
      std::optional<metrics::SceneClassifier> clf;
      if (!ev_clf.empty()) clf = metrics::load_classifier(ev_clf);
      const auto splits = data::make_dataset(cfg.data.seed, cfg.data.train, cfg.data.test, cfg.data.size);
      const auto test = data::materialize(splits.test);
      cli::EvalSetting es;
      es.timesteps = cfg.sampler.timesteps;
      es.mask_missing_rate = cfg.channel.mask_missing_rate;
      auto* cp = clf ? &*clf : nullptr;
      const auto sald_run = cli::evaluate_sald(model, test, cfg, es, cp);
      const auto bic_run = cli::evaluate_bicubic(test, cfg, cp);
      auto rows = bic_run.rows;
      rows.insert(rows.end(), sald_run.rows.begin(), sald_run.rows.end());
      metrics::write_eval_csv(out / "eval.csv", rows);
      const std::vector<metrics::EvalSummary> sums{metrics::summarize(bic_run.rows), metrics::summarize(sald_run.rows)};
      std::ofstream(out / "summary.txt") << metrics::summary_text(sums);
      for (int i = 0; i < std::min<int>(cfg.triptychs, static_cast<int>(test.size())); ++i) {
        metrics::write_triptych(out / ("triptych_" + std::to_string(i) + ".ppm"), test[i].hr, bic_run.images[i],
                                sald_run.images[i]);
      }
      print_summaries(sums);
    } else if (ab->parsed()) {
      json patch;
      set_if(patch, ab_epochs, {"train", "epochs"});
      const auto cfg = resolve(common, patch);
      const auto sweep = cli::parse_sweep(sweep_name);
      std::optional<metrics::SceneClassifier> clf;
      if (!ab_clf.empty()) clf = metrics::load_classifier(ab_clf);
      cli::SweepInputs in;
      in.checkpoint = ab_ckpt;
      in.work_dir = out;
      in.classifier = clf ? &*clf : nullptr;
      in.log = [](const std::string& m) { std::cout << m << std::endl; };
      const auto rows = cli::run_sweep(sweep, cfg, in);
      const auto csv = out / ("ablate_" + cli::to_string(sweep) + ".csv");
      cli::write_sweep_csv(csv, sweep, rows);
      std::vector<metrics::EvalSummary> sums;
      for (const auto& r : rows) sums.push_back(r.summary);
      print_summaries(sums);
      std::cout << "wrote " << csv.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 2;
  } catch (const BudgetExceeded& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 3;
  } catch (const TransmissionRejected& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "sald: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
