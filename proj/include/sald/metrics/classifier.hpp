// SPDX-License-Identifier: Apache-2.0
//
// Scene-class proxy: three conv-BN-ReLU stages (8/16/32 channels, strides
// 1/2/2), global average pooling and a linear head over the four scene classes.
#pragma once

#include <filesystem>
#include <vector>

#include "sald/data/scene.hpp"
#include "sald/nn/layers.hpp"

namespace sald::metrics {

struct ClassifierConfig {
  int steps = 300;
  int batch_size = 16;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct SceneClassifier {
  nn::Conv2d<float> c1, c2, c3;
  nn::BatchNorm2d<float> b1, b2, b3;
  nn::Linear<float> fc;

  SceneClassifier() = default;
  explicit SceneClassifier(std::uint64_t seed);

  /// [N,3,H,W] -> [N,4]
  nn::Tensor<float> logits(const nn::Tensor<float>& x);
  int predict(const Image& img);
  void set_training(bool on);
  void visit(const nn::ParamVisitor<float>& fn);
};

/// k in [0,8): k&3 quarter turns, then a horizontal flip when k&4.
Image dihedral(const Image& img, int k);

/// Cross-entropy training on the HR images with random dihedral augmentation.
SceneClassifier fit_classifier(const std::vector<data::SceneSample>& train, const ClassifierConfig& cfg = {});

double top1(SceneClassifier& clf, const std::vector<const Image*>& images,
            const std::vector<data::SceneClass>& labels);

void save_classifier(const std::filesystem::path& path, SceneClassifier& clf);
/// Throws ConfigError when the file is missing.
SceneClassifier load_classifier(const std::filesystem::path& path);

}  // namespace sald::metrics
