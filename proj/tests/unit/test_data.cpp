// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "sald/data/scene.hpp"
#include "sald/error.hpp"

using namespace sald;
using namespace sald::data;

namespace {

std::filesystem::path scratch(const char* name) {
  auto p = std::filesystem::temp_directory_path() / "sald_test_data" / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generate_scene is deterministic") {
  for (SceneClass c : kAllClasses) {
    const auto a = generate_scene(77, 64, c);
    const auto b = generate_scene(77, 64, c);
    CHECK(a.hr == b.hr);
    CHECK(a.gt_mask == b.gt_mask);
    CHECK(a.targets == b.targets);
  }
  CHECK(generate_scene(77, 64, SceneClass::mixed).hr != generate_scene(78, 64, SceneClass::mixed).hr);
}

TEST_CASE("class definitions") {
  const auto b = generate_scene(5, 64, SceneClass::buildings);
  CHECK(b.targets.empty());
  CHECK(b.gt_mask.count() > 0);
  CHECK(b.buildings >= 2);

  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = generate_scene(seed, 64, SceneClass::vehicles_dense);
    CHECK(s.targets.size() >= 8);
    CHECK(s.targets.size() <= 16);
    total += static_cast<double>(s.targets.size());
  }
  const double mean = total / 100.0;
  CHECK(mean >= 8.0);
  CHECK(mean <= 16.0);
}

TEST_CASE("unsupported size") {
  CHECK_THROWS_AS(generate_scene(1, 48, SceneClass::buildings), ConfigError);
  CHECK_THROWS_AS(generate_scene(1, 16, SceneClass::buildings), ConfigError);
}

TEST_CASE("scene invariants over a sweep") {
  for (int size : {32, 64, 128})
    for (SceneClass c : kAllClasses)
      for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto s = generate_scene(seed * 1000 + 7, size, c);
        INFO(to_string(c), " size ", size, " seed ", seed);
        for (double v : s.hr.data) REQUIRE((v >= 0.0 && v <= 1.0));
        const double frac = static_cast<double>(s.gt_mask.count()) / (size * size);
        CHECK(frac > 0.0);
        CHECK(frac < 0.5);
        const auto r = recipe(c);
        CHECK(static_cast<int>(s.targets.size()) >= r.vehicles_min);
        CHECK(static_cast<int>(s.targets.size()) <= r.vehicles_max);
        Mask vehicles(size, size);
        for (const auto& b : s.targets) {
          CHECK(b.x >= 0);
          CHECK(b.y >= 0);
          CHECK(b.x + b.w <= size);
          CHECK(b.y + b.h <= size);
          for (int y = b.y; y < b.y + b.h; ++y)
            for (int x = b.x; x < b.x + b.w; ++x) {
              CHECK(s.gt_mask.at(y, x) == 1);
              vehicles.at(y, x) = 1;
            }
        }
        // Building pixels are mask pixels not claimed by a vehicle; no vehicle
        // box may sit on them.
        for (const auto& b : s.targets) {
          int on_building = 0;
          for (int y = b.y; y < b.y + b.h; ++y)
            for (int x = b.x; x < b.x + b.w; ++x)
              on_building += s.gt_mask.at(y, x) && !vehicles.at(y, x);
          CHECK(on_building <= b.w * b.h / 2);
        }
      }
}

TEST_CASE("gt_mask marks exactly the rendered pixels") {
  // With a flat ground every untouched pixel keeps the ground colour, so the
  // mask can be recovered by comparing against it.
  SceneStyle flat;
  flat.ground_lo = flat.ground_hi = 0.375;
  for (SceneClass c : kAllClasses)
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = generate_scene(seed, 64, c, flat);
      const double r0 = s.hr.at(0, 0, 0), g0 = s.hr.at(1, 0, 0), b0 = s.hr.at(2, 0, 0);
      REQUIRE(s.gt_mask.at(0, 0) == 0);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          const bool changed =
              s.hr.at(0, y, x) != r0 || s.hr.at(1, y, x) != g0 || s.hr.at(2, y, x) != b0;
          CHECK(changed == (s.gt_mask.at(y, x) == 1));
        }
    }
}

TEST_CASE("vehicles sit above the detection threshold contract") {
  const SceneStyle st;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_scene(seed, 64, SceneClass::mixed);
    auto lum = luminance(s.hr);
    auto sorted = lum;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double thr = sorted[sorted.size() / 2] + st.detect_margin;
    for (const auto& b : s.targets)
      for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) CHECK(lum[y * 64 + x] > thr);
    for (std::size_t i = 0; i < lum.size(); ++i) {
      bool in_vehicle = false;
      for (const auto& b : s.targets)
        in_vehicle = in_vehicle || (static_cast<int>(i % 64) >= b.x && static_cast<int>(i % 64) < b.x + b.w &&
                                    static_cast<int>(i / 64) >= b.y && static_cast<int>(i / 64) < b.y + b.h);
      if (!in_vehicle) CHECK(lum[i] < thr);
    }
  }
}

TEST_CASE("make_dataset") {
  const auto d = make_dataset(42, 4, 8, 64);
  REQUIRE(d.train.size() == 4);
  std::set<SceneClass> classes;
  for (const auto& e : d.train) classes.insert(e.scene_class);
  CHECK(classes.size() == 4);

  const auto big = make_dataset(42, 64, 32, 64);
  std::set<std::uint64_t> train, test;
  for (const auto& e : big.train) train.insert(e.seed);
  for (const auto& e : big.test) test.insert(e.seed);
  CHECK(train.size() == 64);
  CHECK(test.size() == 32);
  for (auto s : test) CHECK(train.count(s) == 0);

  CHECK_THROWS_AS(make_dataset(1, 0, 4, 64), ConfigError);
  CHECK_THROWS_AS(make_dataset(1, 4, 0, 64), ConfigError);
}

TEST_CASE("regenerate from manifest") {
  const auto d = make_dataset(9, 8, 4, 32);
  const auto dir = scratch("manifest");
  export_dataset(dir, d, true);
  CHECK(std::filesystem::exists(dir / "train" / "000007_hr.ppm"));
  CHECK(std::filesystem::exists(dir / "test" / "000003_mask.pgm"));
  const auto back = read_manifest(dir / "train.manifest");
  CHECK(back == d.train);
  const auto a = materialize(d.train);
  const auto b = materialize(back);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].hr == b[i].hr);
    CHECK(a[i].gt_mask == b[i].gt_mask);
  }
  // Exported 8-bit images are within half a code of the source.
  const auto img = read_ppm(dir / "train" / "000000_hr.ppm");
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(img.data[i] - a[0].hr.data[i]) <= 0.5 / 255 + 1e-12);
  CHECK(read_pgm(dir / "train" / "000000_mask.pgm") == a[0].gt_mask);
}

TEST_CASE("manifest parse errors") {
  const auto dir = scratch("bad");
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "m") << "12,buildings\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "m"), FormatError);
  {
    std::ofstream(dir / "m") << "12,castles,64\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "m"), ConfigError);
}
