// SPDX-License-Identifier: Apache-2.0
#include "sald/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sald/error.hpp"

namespace sald::training {

using nlohmann::json;

template <typename T>
Trainer<T>::Trainer(const TrainConfig& cfg, std::vector<data::SceneSample> train_set)
    : cfg_(cfg),
      data_(std::move(train_set)),
      sched_(diffusion::default_schedule(cfg.timesteps)),
      model_(cfg.model, derive_seed(cfg.seed, hash_tag("model"))),
      phi_(cfg.data_seed),
      opt_({cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay}),
      shuffle_rng_(derive_seed(cfg.seed, hash_tag("shuffle"))) {
  cfg_.validate();
  if (data_.empty()) throw ConfigError("training set is empty");
  for (const auto& s : data_) payloads_.push_back(edge::encode(s, cfg_.encode));
  if (model_.codec.kind != diffusion::LatentCodecKind::identity) fit_codec();
  model_.visit([&](const std::string& name, nn::Tensor<T>& t, bool trainable) {
    if (trainable) opt_.add(name, t);
  });
}

template <typename T>
long Trainer<T>::total_steps() const {
  const long per_epoch = (static_cast<long>(data_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  return std::max(1L, per_epoch * cfg_.epochs);
}

template <typename T>
void Trainer<T>::fit_codec() {
  nn::AdamW<T> opt({0.9, 0.999, 1e-8, 0.0});
  model_.codec.visit("codec", [&](const std::string& n, nn::Tensor<T>& t, bool) { opt.add(n, t); });
  CounterRng rng(derive_seed(cfg_.seed, hash_tag("codec-fit")));
  const int bs = std::min<int>(cfg_.batch_size, static_cast<int>(data_.size()));
  for (int it = 0; it < cfg_.codec_steps; ++it) {
    std::vector<const Image*> imgs;
    for (int i = 0; i < bs; ++i) imgs.push_back(&data_[rng.below(data_.size())].hr);
    const auto x = nn::affine(to_tensor<T>(imgs), T(2), T(-1));
    const auto loss = nn::mse(model_.codec.decode(model_.codec.encode(x)), x);
    opt.zero_grad();
    loss.backward();
    opt.step(cfg_.codec_lr);
  }
  model_.codec.visit("codec", [](const std::string&, nn::Tensor<T>& t, bool) {
    t.zero_grad();
    t.set_requires_grad(false);
  });
}

template <typename T>
EpochLog Trainer<T>::run_epoch() {
  model_.set_training(true);
  const std::size_t n = data_.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng_.below(i)]);

  EpochLog e;
  e.epoch = epoch_ + 1;
  int batches = 0;
  for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
    const std::size_t end = std::min(n, start + cfg_.batch_size);
    std::vector<const data::SceneSample*> samples;
    std::vector<const edge::Payload*> payloads;
    for (std::size_t i = start; i < end; ++i) {
      samples.push_back(&data_[order[i]]);
      payloads.push_back(&payloads_[order[i]]);
    }
    const auto batch = make_batch<T>(samples, payloads);
    const double lr = nn::cosine_lr(std::min(step_, total_steps()), total_steps(), cfg_.lr_init, cfg_.lr_min);
    const auto loss = total_loss(model_, phi_, batch, cfg_, sched_, derive_seed(cfg_.seed, static_cast<std::uint64_t>(step_)));
    const double total = loss.total.item();
    if (!std::isfinite(total)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << e.epoch << ", step " << step_ << "; batch scene seeds:";
      for (auto s : batch.scene_seeds) msg << ' ' << s;
      throw NumericError(msg.str());
    }
    opt_.zero_grad();
    loss.total.backward();
    opt_.step(lr);

    StepLog s{step_, e.epoch, loss.diff.item(), loss.rec.item(), loss.per.item(), total, lr};
    step_logs_.push_back(s);
    ++step_;
    e.diff += s.diff;
    e.rec += s.rec;
    e.per += s.per;
    e.total += s.total;
    e.lr = lr;
    ++batches;
  }
  e.diff /= batches;
  e.rec /= batches;
  e.per /= batches;
  e.total /= batches;
  ++epoch_;
  epoch_logs_.push_back(e);
  return e;
}

template <typename T>
void Trainer<T>::fit(const std::function<void(const EpochLog&)>& on_epoch) {
  while (epoch_ < cfg_.epochs) {
    const auto e = run_epoch();
    if (on_epoch) on_epoch(e);
  }
}

namespace {

json to_json(const StepLog& s) {
  return {{"step", s.step}, {"epoch", s.epoch}, {"diff", s.diff}, {"rec", s.rec},
          {"per", s.per},   {"total", s.total}, {"lr", s.lr}};
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"diff", e.diff}, {"rec", e.rec}, {"per", e.per}, {"total", e.total}, {"lr", e.lr}};
}

}  // namespace

template <typename T>
void store_model(Checkpoint& c, diffusion::SaldModel<T>& model) {
  c.meta["model"] = to_json(model.cfg);
  model.visit([&](const std::string& name, nn::Tensor<T>& t, bool) { c.put("model/" + name, t); });
}

template <typename T>
diffusion::SaldModel<T> load_model(const Checkpoint& c) {
  if (!c.meta.contains("model")) throw FormatError("checkpoint has no model config");
  diffusion::SaldModel<T> m(model_config_from_json(c.meta.at("model")), 0);
  m.visit([&](const std::string& name, nn::Tensor<T>& t, bool) { c.get("model/" + name, t); });
  return m;
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint c;
  auto& self = const_cast<Trainer&>(*this);
  store_model(c, self.model_);
  for (const auto& s : opt_.slots()) {
    c.put("adam.m/" + s.name, nn::Tensor<T>(s.param.shape(), s.m));
    c.put("adam.v/" + s.name, nn::Tensor<T>(s.param.shape(), s.v));
  }
  c.meta["train"] = training::to_json(cfg_);
  c.meta["epoch"] = epoch_;
  c.meta["step"] = step_;
  c.meta["adam_steps"] = opt_.steps();
  c.meta["rng"] = {{"seed", shuffle_rng_.seed()}, {"counter", shuffle_rng_.counter()}};
  c.meta["epoch_log"] = json::array();
  for (const auto& e : epoch_logs_) c.meta["epoch_log"].push_back(to_json(e));
  c.meta["step_log"] = json::array();
  for (const auto& s : step_logs_) c.meta["step_log"].push_back(to_json(s));
  return c;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& c) {
  model_.visit([&](const std::string& name, nn::Tensor<T>& t, bool) { c.get("model/" + name, t); });
  for (auto& s : opt_.slots()) {
    const auto* m = c.find("adam.m/" + s.name);
    const auto* v = c.find("adam.v/" + s.name);
    if (!m || !v) throw FormatError("checkpoint lacks optimizer state for '" + s.name + "'");
    if (m->data.size() != s.m.size()) throw DimensionError("optimizer state size mismatch for '" + s.name + "'");
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      s.m[i] = static_cast<T>(m->data[i]);
      s.v[i] = static_cast<T>(v->data[i]);
    }
  }
  try {
    epoch_ = c.meta.at("epoch").get<int>();
    step_ = c.meta.at("step").get<long>();
    opt_.set_steps(c.meta.at("adam_steps").get<long>());
    shuffle_rng_ = CounterRng(c.meta.at("rng").at("seed").get<std::uint64_t>(),
                              c.meta.at("rng").at("counter").get<std::uint64_t>());
    epoch_logs_.clear();
    for (const auto& e : c.meta.at("epoch_log")) {
      epoch_logs_.push_back({e.at("epoch").get<int>(), e.at("diff").get<double>(), e.at("rec").get<double>(),
                             e.at("per").get<double>(), e.at("total").get<double>(), e.at("lr").get<double>()});
    }
    step_logs_.clear();
    for (const auto& s : c.meta.at("step_log")) {
      step_logs_.push_back({s.at("step").get<long>(), s.at("epoch").get<int>(), s.at("diff").get<double>(),
                            s.at("rec").get<double>(), s.at("per").get<double>(), s.at("total").get<double>(),
                            s.at("lr").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint training state: ") + e.what());
  }
}

TrainOutputs output_paths(const std::filesystem::path& dir) {
  return {dir / "model.sckp", dir / "train_log.csv", dir / "train_steps.csv"};
}

namespace {

template <typename T>
void write_logs(const Trainer<T>& tr, const TrainOutputs& out) {
  {
    std::ofstream f(out.epoch_csv);
    f << "epoch,L_diff,L_rec,L_per,total,lr\n";
    f.precision(9);
    for (const auto& e : tr.epoch_logs()) {
      f << e.epoch << ',' << e.diff << ',' << e.rec << ',' << e.per << ',' << e.total << ',' << e.lr << '\n';
    }
  }
  std::ofstream f(out.step_csv);
  f << "step,epoch,L_diff,L_rec,L_per,total,lr\n";
  f.precision(9);
  for (const auto& s : tr.step_logs()) {
    f << s.step << ',' << s.epoch << ',' << s.diff << ',' << s.rec << ',' << s.per << ',' << s.total << ','
      << s.lr << '\n';
  }
}

}  // namespace

std::vector<EpochLog> train(const std::vector<data::SceneSample>& train_set, const TrainConfig& cfg,
                            const std::filesystem::path& dir, bool resume,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  std::filesystem::create_directories(dir);
  const auto out = output_paths(dir);
  Trainer<float> tr(cfg, train_set);
  if (resume && std::filesystem::exists(out.checkpoint)) {
    const auto c = load_checkpoint(out.checkpoint);
    if (!c.meta.contains("train") || c.meta.at("train") != to_json(cfg)) {
      throw ConfigError("checkpoint in " + dir.string() + " was trained with a different configuration");
    }
    tr.restore(c);
  }
  tr.fit([&](const EpochLog& e) {
    write_logs(tr, out);
    save_checkpoint(out.checkpoint, tr.checkpoint());
    if (on_epoch) on_epoch(e);
  });
  if (tr.epoch_logs().empty() || !std::filesystem::exists(out.checkpoint)) {
    write_logs(tr, out);
    save_checkpoint(out.checkpoint, tr.checkpoint());
  }
  return tr.epoch_logs();
}

template class Trainer<float>;
template class Trainer<double>;
template void store_model(Checkpoint&, diffusion::SaldModel<float>&);
template void store_model(Checkpoint&, diffusion::SaldModel<double>&);
template diffusion::SaldModel<float> load_model(const Checkpoint&);
template diffusion::SaldModel<double> load_model(const Checkpoint&);

}  // namespace sald::training
