// SPDX-License-Identifier: Apache-2.0
#include "sald/metrics/classifier.hpp"

#include "sald/error.hpp"
#include "sald/nn/optim.hpp"
#include "sald/training/checkpoint.hpp"

namespace sald::metrics {

SceneClassifier::SceneClassifier(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, hash_tag("classifier")));
  c1 = nn::Conv2d<float>(3, 8, 3, rng, {1, 1, 1}, false);
  c2 = nn::Conv2d<float>(8, 16, 3, rng, {2, 1, 1}, false);
  c3 = nn::Conv2d<float>(16, 32, 3, rng, {2, 1, 1}, false);
  b1 = nn::BatchNorm2d<float>(8);
  b2 = nn::BatchNorm2d<float>(16);
  b3 = nn::BatchNorm2d<float>(32);
  fc = nn::Linear<float>(32, data::kNumClasses, rng);
}

nn::Tensor<float> SceneClassifier::logits(const nn::Tensor<float>& x) {
  auto h = nn::relu(b1(c1(x)));
  h = nn::relu(b2(c2(h)));
  h = nn::relu(b3(c3(h)));
  return fc(nn::global_avg_pool(h));
}

void SceneClassifier::set_training(bool on) {
  b1.training = b2.training = b3.training = on;
}

int SceneClassifier::predict(const Image& img) {
  nn::NoGradGuard guard;
  set_training(false);
  const auto z = logits(to_tensor<float>(img));
  const auto v = z.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void SceneClassifier::visit(const nn::ParamVisitor<float>& fn) {
  c1.visit("clf.c1", fn);
  b1.visit("clf.b1", fn);
  c2.visit("clf.c2", fn);
  b2.visit("clf.b2", fn);
  c3.visit("clf.c3", fn);
  b3.visit("clf.b3", fn);
  fc.visit("clf.fc", fn);
}

Image dihedral(const Image& img, int k) {
  if (k < 0 || k >= 8) throw ConfigError("dihedral index must be in [0,8)");
  if (img.height != img.width) throw DimensionError("dihedral needs a square image");
  const int n = img.height;
  Image out(img.channels, n, n);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        int sy = y, sx = (k & 4) ? n - 1 - x : x;
        for (int r = 0; r < (k & 3); ++r) {
          const int t = sy;
          sy = n - 1 - sx;
          sx = t;
        }
        out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

SceneClassifier fit_classifier(const std::vector<data::SceneSample>& train, const ClassifierConfig& cfg) {
  if (train.empty()) throw ConfigError("classifier training set is empty");
  SceneClassifier clf(cfg.seed);
  nn::AdamW<float> opt({0.9, 0.999, 1e-8, 1e-4});
  clf.visit([&](const std::string& n, nn::Tensor<float>& t, bool trainable) {
    if (trainable) opt.add(n, t);
  });
  CounterRng rng(derive_seed(cfg.seed, hash_tag("classifier-batches")));
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Image> imgs;
    std::vector<int> labels;
    for (int i = 0; i < cfg.batch_size; ++i) {
      const auto& s = train[rng.below(train.size())];
      imgs.push_back(dihedral(s.hr, static_cast<int>(rng.below(8))));
      labels.push_back(static_cast<int>(s.scene_class));
    }
    std::vector<const Image*> ptrs;
    for (const auto& im : imgs) ptrs.push_back(&im);
    clf.set_training(true);
    const auto loss = nn::cross_entropy(clf.logits(to_tensor<float>(ptrs)), std::span<const int>(labels));
    opt.zero_grad();
    loss.backward();
    opt.step(nn::cosine_lr(step, cfg.steps, cfg.lr, cfg.lr * 0.05));
  }
  clf.set_training(false);
  return clf;
}

double top1(SceneClassifier& clf, const std::vector<const Image*>& images,
            const std::vector<data::SceneClass>& labels) {
  if (images.size() != labels.size() || images.empty()) throw ConfigError("top1 needs one label per image");
  int hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) hits += clf.predict(*images[i]) == static_cast<int>(labels[i]);
  return static_cast<double>(hits) / images.size();
}

void save_classifier(const std::filesystem::path& path, SceneClassifier& clf) {
  training::Checkpoint c;
  c.meta["kind"] = "scene-classifier";
  clf.visit([&](const std::string& n, nn::Tensor<float>& t, bool) { c.put(n, t); });
  training::save_checkpoint(path, c);
}

SceneClassifier load_classifier(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("classifier checkpoint not found: " + path.string());
  const auto c = training::load_checkpoint(path);
  if (c.meta.value("kind", "") != "scene-classifier") throw FormatError("not a classifier checkpoint: " + path.string());
  SceneClassifier clf(0);
  clf.visit([&](const std::string& n, nn::Tensor<float>& t, bool) { c.get(n, t); });
  return clf;
}

}  // namespace sald::metrics
