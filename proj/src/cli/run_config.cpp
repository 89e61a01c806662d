// SPDX-License-Identifier: Apache-2.0
#include "sald/cli/run_config.hpp"

#include <fstream>

#include "sald/error.hpp"

namespace sald::cli {

using nlohmann::json;

namespace {

std::string to_string(channel::DropMode m) { return m == channel::DropMode::pixels ? "pixels" : "components"; }

channel::DropMode parse_drop_mode(const std::string& s) {
  if (s == "pixels") return channel::DropMode::pixels;
  if (s == "components") return channel::DropMode::components;
  throw ConfigError("unknown drop mode '" + s + "' (pixels|components)");
}

// Every key of `j` must exist in `known`, recursively.
void check_known(const json& j, const json& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError((where.empty() ? std::string("config") : where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    const std::string path = where.empty() ? k : where + "." + k;
    if (!known.contains(k)) throw ConfigError("unknown config key '" + path + "'");
    if (known.at(k).is_object()) check_known(v, known.at(k), path);
  }
}

template <typename V>
V field(const json& j, const char* key) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

training::TrainConfig desk_train_config() {
  training::TrainConfig t;
  t.epochs = 120;
  t.batch_size = 4;
  t.lr_init = 1e-3;
  t.seed = 1;
  return t;
}

json to_json(const RunConfig& c) {
  return {{"data", {{"seed", c.data.seed}, {"train", c.data.train}, {"test", c.data.test}, {"size", c.data.size}}},
          {"train", training::to_json(c.train)},
          {"channel",
           {{"budget", c.channel.budget},
            {"mask_missing_rate", c.channel.mask_missing_rate},
            {"seed", c.channel.seed},
            {"mode", to_string(c.channel.mode)}}},
          {"sampler",
           {{"timesteps", c.sampler.timesteps},
            {"seed", c.sampler.seed},
            {"use_mask", c.sampler.use_mask},
            {"clip_x0", c.sampler.clip_x0}}},
          {"classifier",
           {{"steps", c.classifier.fit.steps},
            {"batch_size", c.classifier.fit.batch_size},
            {"lr", c.classifier.fit.lr},
            {"seed", c.classifier.fit.seed},
            {"scenes", c.classifier.scenes}}},
          {"triptychs", c.triptychs},
          {"threads", c.threads}};
}

RunConfig merge_run_config(RunConfig base, const json& j) {
  json full = to_json(base);
  check_known(j, full, "");
  full.merge_patch(j);

  RunConfig c;
  const auto& d = full.at("data");
  c.data = {field<std::uint64_t>(d, "seed"), field<int>(d, "train"), field<int>(d, "test"), field<int>(d, "size")};
  c.train = training::train_config_from_json(full.at("train"));
  const auto& ch = full.at("channel");
  c.channel.budget = field<std::size_t>(ch, "budget");
  c.channel.mask_missing_rate = field<double>(ch, "mask_missing_rate");
  c.channel.seed = field<std::uint64_t>(ch, "seed");
  c.channel.mode = parse_drop_mode(field<std::string>(ch, "mode"));
  const auto& s = full.at("sampler");
  c.sampler = {field<int>(s, "timesteps"), field<std::uint64_t>(s, "seed"), field<bool>(s, "use_mask"),
               field<bool>(s, "clip_x0")};
  const auto& k = full.at("classifier");
  c.classifier.fit = {field<int>(k, "steps"), field<int>(k, "batch_size"), field<double>(k, "lr"),
                      field<std::uint64_t>(k, "seed")};
  c.classifier.scenes = field<int>(k, "scenes");
  c.triptychs = field<int>(full, "triptychs");
  c.threads = field<int>(full, "threads");
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return merge_run_config(std::move(base), j);
}

void validate(const RunConfig& c) {
  if (c.data.train < 1 || c.data.test < 0) throw ConfigError("need at least one training scene");
  if (c.data.size != 32 && c.data.size != 64 && c.data.size != 128) throw ConfigError("scene size must be 32, 64 or 128");
  c.train.validate();
  channel::validate(c.channel);
  if (c.sampler.timesteps < 2) throw ConfigError("sampler timesteps must be at least 2");
  if (c.classifier.fit.steps < 1 || c.classifier.fit.batch_size < 1 || !(c.classifier.fit.lr > 0) ||
      c.classifier.scenes < 4) {
    throw ConfigError("invalid classifier settings");
  }
  if (c.triptychs < 0) throw ConfigError("triptychs must be non-negative");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
}

void write_resolved(const std::filesystem::path& dir, const RunConfig& c) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "resolved.json");
  if (!f) throw ConfigError("cannot write " + (dir / "resolved.json").string());
  f << to_json(c).dump(2) << '\n';
}

}  // namespace sald::cli
