// SPDX-License-Identifier: Apache-2.0
//
// Procedural aerial scenes: value-noise ground, anti-aliased rectangular
// buildings and small bright vehicles, all a pure function of the seed.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sald/image.hpp"

namespace sald::data {

enum class SceneClass { vehicles_sparse = 0, vehicles_dense = 1, buildings = 2, mixed = 3 };
inline constexpr int kNumClasses = 4;
inline constexpr std::array<SceneClass, 4> kAllClasses{
    SceneClass::vehicles_sparse, SceneClass::vehicles_dense, SceneClass::buildings,
    SceneClass::mixed};

std::string_view to_string(SceneClass c);
SceneClass parse_scene_class(std::string_view s);

struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

double box_iou(const Box& a, const Box& b);

/// Rendering contract, shared with the detection proxy.
struct SceneStyle {
  double ground_lo = 0.30, ground_hi = 0.45;  // background luminance range
  double dark_roof_lo = 0.05, dark_roof_hi = 0.12;
  double light_roof_lo = 0.62, light_roof_hi = 0.68;
  double vehicle_lo = 0.93;  // every vehicle channel is in [vehicle_lo, 1]
  int building_min = 8, building_max = 24;
  int vehicle_min = 2, vehicle_max = 4;
  double max_foreground = 0.45;
  /// Vehicles are found at median luminance + this margin.
  double detect_margin = 0.4;
};

/// Inclusive count ranges per class.
struct ClassRecipe {
  int buildings_min, buildings_max;
  int vehicles_min, vehicles_max;
};
ClassRecipe recipe(SceneClass c);

struct SceneSample {
  Image hr;  // 3 x size x size
  Mask gt_mask;
  SceneClass scene_class = SceneClass::vehicles_sparse;
  std::vector<Box> targets;  // one per rendered vehicle
  std::uint64_t seed = 0;
  int size = 0;
  int buildings = 0;  // rendered building count
};

/// size must be 32, 64 or 128.
SceneSample generate_scene(std::uint64_t seed, int size, SceneClass scene_class,
                           const SceneStyle& style = {});

struct ManifestEntry {
  std::uint64_t seed = 0;
  SceneClass scene_class = SceneClass::vehicles_sparse;
  int size = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetSplits {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

/// Class-balanced splits: entry i has class i mod 4. Train seeds have the top
/// bit clear and test seeds have it set, so the ranges are disjoint.
DatasetSplits make_dataset(std::uint64_t seed, int n_train, int n_test, int size);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::vector<SceneSample> materialize(const std::vector<ManifestEntry>& entries);

/// Writes train.manifest, test.manifest and per-sample PPM/PGM files.
void export_dataset(const std::filesystem::path& dir, const DatasetSplits& splits,
                    bool with_images = true);

}  // namespace sald::data
