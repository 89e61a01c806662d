// SPDX-License-Identifier: Apache-2.0
#include "sald/data/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sald/error.hpp"
#include "sald/rng.hpp"

namespace sald::data {

std::string_view to_string(SceneClass c) {
  switch (c) {
    case SceneClass::vehicles_sparse: return "vehicles-sparse";
    case SceneClass::vehicles_dense: return "vehicles-dense";
    case SceneClass::buildings: return "buildings";
    case SceneClass::mixed: return "mixed";
  }
  return "unknown";
}

SceneClass parse_scene_class(std::string_view s) {
  for (SceneClass c : kAllClasses)
    if (to_string(c) == s) return c;
  throw ConfigError("unknown scene class '" + std::string(s) + "'");
}

double box_iou(const Box& a, const Box& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

ClassRecipe recipe(SceneClass c) {
  switch (c) {
    case SceneClass::vehicles_sparse: return {0, 0, 1, 4};
    case SceneClass::vehicles_dense: return {0, 0, 8, 16};
    case SceneClass::buildings: return {2, 4, 0, 0};
    case SceneClass::mixed: return {1, 2, 2, 5};
  }
  throw ConfigError("unknown scene class");
}

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Three octaves of lattice value noise with halving amplitude, in [0, 1].
std::vector<double> value_noise(int size, CounterRng& rng) {
  std::vector<double> acc(static_cast<std::size_t>(size) * size, 0.0);
  double amp = 1.0, total = 0.0;
  for (int octave = 0; octave < 3; ++octave) {
    const int cells = 2 << octave;
    const double spacing = static_cast<double>(size) / cells;
    std::vector<double> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (auto& v : lattice) v = rng.uniform();
    for (int y = 0; y < size; ++y) {
      const double v = (y + 0.5) / spacing;
      const int iy = std::min(static_cast<int>(v), cells - 1);
      const double fy = smoothstep(v - iy);
      for (int x = 0; x < size; ++x) {
        const double u = (x + 0.5) / spacing;
        const int ix = std::min(static_cast<int>(u), cells - 1);
        const double fx = smoothstep(u - ix);
        auto at = [&](int j, int i) { return lattice[static_cast<std::size_t>(j) * (cells + 1) + i]; };
        const double top = at(iy, ix) * (1 - fx) + at(iy, ix + 1) * fx;
        const double bot = at(iy + 1, ix) * (1 - fx) + at(iy + 1, ix + 1) * fx;
        acc[static_cast<std::size_t>(y) * size + x] += amp * (top * (1 - fy) + bot * fy);
      }
    }
    total += amp;
    amp *= 0.5;
  }
  for (auto& v : acc) v /= total;
  return acc;
}

// Per-channel multipliers with unit luma, so luminance ranges are preserved.
std::array<double, 3> tint(CounterRng& rng, double spread) {
  std::array<double, 3> t{rng.uniform(1 - spread, 1 + spread), rng.uniform(1 - spread, 1 + spread),
                          rng.uniform(1 - spread, 1 + spread)};
  const double luma = 0.299 * t[0] + 0.587 * t[1] + 0.114 * t[2];
  for (auto& v : t) v /= luma;
  return t;
}

struct Rect {
  double x0, y0, w, h;
  int px0() const { return static_cast<int>(std::floor(x0)); }
  int py0() const { return static_cast<int>(std::floor(y0)); }
  int px1() const { return static_cast<int>(std::ceil(x0 + w)); }  // exclusive
  int py1() const { return static_cast<int>(std::ceil(y0 + h)); }
  long footprint() const { return static_cast<long>(px1() - px0()) * (py1() - py0()); }
  bool near(const Rect& o, int gap) const {
    return px0() - gap < o.px1() && o.px0() - gap < px1() && py0() - gap < o.py1() &&
           o.py0() - gap < py1();
  }
};

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

SceneSample generate_scene(std::uint64_t seed, int size, SceneClass scene_class,
                           const SceneStyle& style) {
  if (size != 32 && size != 64 && size != 128) {
    throw ConfigError("scene size must be 32, 64 or 128, got " + std::to_string(size));
  }
  const ClassRecipe rc = recipe(scene_class);
  SceneSample s;
  s.seed = seed;
  s.size = size;
  s.scene_class = scene_class;
  s.hr = Image(3, size, size);
  s.gt_mask = Mask(size, size);

  CounterRng ground_rng(derive_seed(seed, hash_tag("ground")));
  CounterRng building_rng(derive_seed(seed, hash_tag("buildings")));
  CounterRng vehicle_rng(derive_seed(seed, hash_tag("vehicles")));

  const auto noise = value_noise(size, ground_rng);
  const auto ground_tint = tint(ground_rng, 0.1);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < s.hr.plane(); ++i) {
      const double lum = style.ground_lo + (style.ground_hi - style.ground_lo) * noise[i];
      s.hr.data[c * s.hr.plane() + i] = lum * ground_tint[c];
    }

  // Buildings: fractional placement, coverage-weighted compositing.
  const int bmax = std::min(style.building_max, size * 3 / 8);
  const int bmin = std::min(style.building_min, bmax);
  const long area_cap = static_cast<long>(style.max_foreground * size * size);
  const int n_buildings =
      static_cast<int>(building_rng.range(rc.buildings_min, rc.buildings_max));
  std::vector<Rect> rects;
  long footprint = 0;
  for (int b = 0; b < n_buildings; ++b) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double w = static_cast<double>(building_rng.range(bmin, bmax));
      const double h = static_cast<double>(building_rng.range(bmin, bmax));
      Rect r{building_rng.uniform(1.0, size - 1.0 - w), building_rng.uniform(1.0, size - 1.0 - h),
             w, h};
      const bool clash =
          std::any_of(rects.begin(), rects.end(), [&](const Rect& o) { return r.near(o, 2); });
      if (clash || footprint + r.footprint() > area_cap) continue;
      rects.push_back(r);
      footprint += r.footprint();
      break;
    }
  }
  for (const Rect& r : rects) {
    const bool dark = building_rng.uniform() < 0.5;
    const double lum = dark ? building_rng.uniform(style.dark_roof_lo, style.dark_roof_hi)
                            : building_rng.uniform(style.light_roof_lo, style.light_roof_hi);
    const auto roof_tint = tint(building_rng, 0.04);
    for (int y = r.py0(); y < r.py1(); ++y)
      for (int x = r.px0(); x < r.px1(); ++x) {
        const double cov = overlap(x, x + 1.0, r.x0, r.x0 + r.w) * overlap(y, y + 1.0, r.y0, r.y0 + r.h);
        if (cov <= 0.0) continue;
        s.gt_mask.at(y, x) = 1;
        for (int c = 0; c < 3; ++c) {
          double& p = s.hr.at(c, y, x);
          p = (1.0 - cov) * p + cov * std::min(1.0, lum * roof_tint[c]);
        }
      }
  }
  s.buildings = static_cast<int>(rects.size());

  // Vehicles: integer-aligned, at least one clear pixel from any structure.
  const int n_vehicles = static_cast<int>(vehicle_rng.range(rc.vehicles_min, rc.vehicles_max));
  for (int v = 0; v < n_vehicles; ++v) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      const int side = static_cast<int>(vehicle_rng.range(style.vehicle_min, style.vehicle_max));
      const int x0 = static_cast<int>(vehicle_rng.range(1, size - 1 - side));
      const int y0 = static_cast<int>(vehicle_rng.range(1, size - 1 - side));
      bool clear = true;
      for (int y = y0 - 1; y <= y0 + side && clear; ++y)
        for (int x = x0 - 1; x <= x0 + side && clear; ++x) clear = s.gt_mask.at(y, x) == 0;
      if (!clear) continue;
      std::array<double, 3> rgb{};
      for (auto& c : rgb) c = vehicle_rng.uniform(style.vehicle_lo, 1.0);
      for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) {
          s.gt_mask.at(y, x) = 1;
          for (int c = 0; c < 3; ++c) s.hr.at(c, y, x) = rgb[c];
        }
      s.targets.push_back({x0, y0, side, side});
      break;
    }
  }
  return s;
}

DatasetSplits make_dataset(std::uint64_t seed, int n_train, int n_test, int size) {
  if (n_train <= 0 || n_test <= 0) throw ConfigError("dataset splits must be non-empty");
  if (size != 32 && size != 64 && size != 128) throw ConfigError("unsupported scene size");
  constexpr std::uint64_t top = 1ULL << 63;
  DatasetSplits d;
  const std::uint64_t train_root = derive_seed(seed, hash_tag("train"));
  const std::uint64_t test_root = derive_seed(seed, hash_tag("test"));
  for (int i = 0; i < n_train; ++i)
    d.train.push_back({derive_seed(train_root, static_cast<std::uint64_t>(i)) & ~top,
                       kAllClasses[i % kNumClasses], size});
  for (int i = 0; i < n_test; ++i)
    d.test.push_back({derive_seed(test_root, static_cast<std::uint64_t>(i)) | top,
                      kAllClasses[i % kNumClasses], size});
  return d;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : entries) out << e.seed << ',' << to_string(e.scene_class) << ',' << e.size << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected seed,class,size");
    }
    ManifestEntry e;
    const char* b = line.data();
    if (std::from_chars(b, b + c1, e.seed).ec != std::errc{} ||
        std::from_chars(b + c2 + 1, b + line.size(), e.size).ec != std::errc{}) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    e.scene_class = parse_scene_class(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
    out.push_back(e);
  }
  return out;
}

std::vector<SceneSample> materialize(const std::vector<ManifestEntry>& entries) {
  std::vector<SceneSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(generate_scene(e.seed, e.size, e.scene_class));
  return out;
}

void export_dataset(const std::filesystem::path& dir, const DatasetSplits& splits,
                    bool with_images) {
  write_manifest(dir / "train.manifest", splits.train);
  write_manifest(dir / "test.manifest", splits.test);
  if (!with_images) return;
  auto dump = [&](const std::vector<ManifestEntry>& entries, const char* split) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto s = generate_scene(entries[i].seed, entries[i].size, entries[i].scene_class);
      char stem[32];
      std::snprintf(stem, sizeof stem, "%06zu", i);
      write_ppm(dir / split / (std::string(stem) + "_hr.ppm"), s.hr);
      write_pgm(dir / split / (std::string(stem) + "_mask.pgm"), s.gt_mask);
    }
  };
  dump(splits.train, "train");
  dump(splits.test, "test");
}

}  // namespace sald::data
