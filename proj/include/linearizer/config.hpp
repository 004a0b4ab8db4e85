#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "linearizer/flow.hpp"
#include "linearizer/ign.hpp"

namespace linearizer {

using Json = nlohmann::ordered_json;

struct ModelConfig {
  std::size_t dim = 2;
  std::size_t blocks = 6;
  std::size_t rank = 16;
  std::size_t width = 64;
  std::size_t hidden_layers = 2;
  double log_scale_clamp = 2.0;
  double output_gain = 0.25;
  std::size_t hyper_features = 32;
  std::size_t hyper_width = 64;
  double hyper_gain = 0.1;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainingConfig {
  std::size_t steps = 20000;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t log_every = 1000;
  std::size_t eval_size = 1024;
  std::string loss_space = "latent";  // latent | data
  double alignment_weight = 1.0;
  bool operator==(const TrainingConfig&) const = default;
};

struct DataConfig {
  std::string dataset = "two-moons";
  std::size_t count = 4000;
  std::uint64_t seed = 1;
  std::string input;  // CSV; overrides the generator when set
  bool operator==(const DataConfig&) const = default;
};

struct SamplerConfig {
  std::size_t steps = 100;
  std::string scheme = "euler";
  bool one_step = false;
  std::size_t count = 1000;
  std::uint64_t seed = 7;
  bool operator==(const SamplerConfig&) const = default;
};

struct IGNConfig {
  std::size_t dim = 16;
  std::size_t blocks = 6;
  std::size_t width = 64;
  double initial_logit = 1.0;
  double w_rec = 1.0;
  double w_sparse = 0.75;
  double w_iso = 0.001;
  std::size_t steps = 3000;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::size_t log_every = 100;
  std::size_t probes = 1000;
  bool operator==(const IGNConfig&) const = default;
};

struct InterpConfig {
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::string blend = "induced";  // induced | euclidean
  std::size_t pairs = 8;
  bool operator==(const InterpConfig&) const = default;
};

struct StyleConfig {
  std::vector<double> alphas{0.0, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 1.0};
  std::size_t steps = 2000;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::size_t log_every = 200;
  std::string checkpoint_a;
  std::string checkpoint_b;
  bool operator==(const StyleConfig&) const = default;
};

struct PathsConfig {
  std::string out_dir = "out";
  std::string checkpoint;  // defaults per task inside out_dir
  std::string collapsed;
  std::string output;
  bool operator==(const PathsConfig&) const = default;
};

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"verify", "train-flow", "sample",   "collapse",     "invert",
                                              "interp", "train-ign",  "project", "style-interp", "train-style"};
  return names;
}

struct Config {
  std::string task = "verify";
  ModelConfig model;
  TrainingConfig training;
  DataConfig data;
  SamplerConfig sampler;
  IGNConfig ign;
  InterpConfig interp;
  StyleConfig style;
  PathsConfig paths;

  bool operator==(const Config&) const = default;
};

Json to_json(const Config& config);
// Strict: unknown keys and wrong types raise ConfigError naming the field path.
// Keys that are absent keep the values already in `base`.
Config config_from_json(const Json& j, Config base = {});
Config load_config(const std::string& path);
// Range and enum checks; throws ConfigError with the field path.
void validate(const Config& config);

FlowOptions flow_options(const Config& config);
FlowTrainOptions flow_train_options(const Config& config);
IGNOptions ign_options(const Config& config);
IGNTrainOptions ign_train_options(const Config& config);
LossSpace parse_loss_space(const std::string& name);
Blend parse_blend(const std::string& name);

}  // namespace linearizer
