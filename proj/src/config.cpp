#include "linearizer/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "linearizer/datasets.hpp"
#include "linearizer/errors.hpp"

namespace linearizer {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read through the size_t overload");

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads known keys of one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  void get(const char* key, std::size_t& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
        throw ConfigError(join(path_, key), "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<double>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(join(path_, key), "expected an array of numbers");
      std::vector<double> values;
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(join(path_, key), "expected an array of numbers");
        values.push_back(e.get<double>());
      }
      out = std::move(values);
    }
  }
  template <typename T, typename F>
  void section(const char* key, T& out, F read) {
    if (const Json* v = find(key)) {
      Reader sub(*v, join(path_, key));
      read(sub, out);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

 private:
  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(Reader& r, ModelConfig& m) {
  r.get("dim", m.dim);
  r.get("blocks", m.blocks);
  r.get("rank", m.rank);
  r.get("width", m.width);
  r.get("hidden_layers", m.hidden_layers);
  r.get("log_scale_clamp", m.log_scale_clamp);
  r.get("output_gain", m.output_gain);
  r.get("hyper_features", m.hyper_features);
  r.get("hyper_width", m.hyper_width);
  r.get("hyper_gain", m.hyper_gain);
}

void read_training(Reader& r, TrainingConfig& t) {
  r.get("steps", t.steps);
  r.get("batch", t.batch);
  r.get("lr", t.lr);
  r.get("seed", t.seed);
  r.get("log_every", t.log_every);
  r.get("eval_size", t.eval_size);
  r.get("loss_space", t.loss_space);
  r.get("alignment_weight", t.alignment_weight);
}

void read_data(Reader& r, DataConfig& d) {
  r.get("dataset", d.dataset);
  r.get("count", d.count);
  r.get("seed", d.seed);
  r.get("input", d.input);
}

void read_sampler(Reader& r, SamplerConfig& s) {
  r.get("steps", s.steps);
  r.get("scheme", s.scheme);
  r.get("one_step", s.one_step);
  r.get("count", s.count);
  r.get("seed", s.seed);
}

void read_ign(Reader& r, IGNConfig& i) {
  r.get("dim", i.dim);
  r.get("blocks", i.blocks);
  r.get("width", i.width);
  r.get("initial_logit", i.initial_logit);
  r.get("w_rec", i.w_rec);
  r.get("w_sparse", i.w_sparse);
  r.get("w_iso", i.w_iso);
  r.get("steps", i.steps);
  r.get("batch", i.batch);
  r.get("lr", i.lr);
  r.get("log_every", i.log_every);
  r.get("probes", i.probes);
}

void read_interp(Reader& r, InterpConfig& i) {
  r.get("alphas", i.alphas);
  r.get("blend", i.blend);
  r.get("pairs", i.pairs);
}

void read_style(Reader& r, StyleConfig& s) {
  r.get("alphas", s.alphas);
  r.get("steps", s.steps);
  r.get("batch", s.batch);
  r.get("lr", s.lr);
  r.get("log_every", s.log_every);
  r.get("checkpoint_a", s.checkpoint_a);
  r.get("checkpoint_b", s.checkpoint_b);
}

void read_paths(Reader& r, PathsConfig& p) {
  r.get("out_dir", p.out_dir);
  r.get("checkpoint", p.checkpoint);
  r.get("collapsed", p.collapsed);
  r.get("output", p.output);
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

Json to_json(const Config& c) {
  Json j;
  j["task"] = c.task;
  j["model"] = {{"dim", c.model.dim},
                {"blocks", c.model.blocks},
                {"rank", c.model.rank},
                {"width", c.model.width},
                {"hidden_layers", c.model.hidden_layers},
                {"log_scale_clamp", c.model.log_scale_clamp},
                {"output_gain", c.model.output_gain},
                {"hyper_features", c.model.hyper_features},
                {"hyper_width", c.model.hyper_width},
                {"hyper_gain", c.model.hyper_gain}};
  j["training"] = {{"steps", c.training.steps},
                   {"batch", c.training.batch},
                   {"lr", c.training.lr},
                   {"seed", c.training.seed},
                   {"log_every", c.training.log_every},
                   {"eval_size", c.training.eval_size},
                   {"loss_space", c.training.loss_space},
                   {"alignment_weight", c.training.alignment_weight}};
  j["data"] = {{"dataset", c.data.dataset}, {"count", c.data.count}, {"seed", c.data.seed}, {"input", c.data.input}};
  j["sampler"] = {{"steps", c.sampler.steps},
                  {"scheme", c.sampler.scheme},
                  {"one_step", c.sampler.one_step},
                  {"count", c.sampler.count},
                  {"seed", c.sampler.seed}};
  j["ign"] = {{"dim", c.ign.dim},         {"blocks", c.ign.blocks},       {"width", c.ign.width},
              {"initial_logit", c.ign.initial_logit},
              {"w_rec", c.ign.w_rec},     {"w_sparse", c.ign.w_sparse}, {"w_iso", c.ign.w_iso},
              {"steps", c.ign.steps},     {"batch", c.ign.batch},       {"lr", c.ign.lr},
              {"log_every", c.ign.log_every},
              {"probes", c.ign.probes}};
  j["interp"] = {{"alphas", c.interp.alphas}, {"blend", c.interp.blend}, {"pairs", c.interp.pairs}};
  j["style"] = {{"alphas", c.style.alphas},
                {"steps", c.style.steps},
                {"batch", c.style.batch},
                {"lr", c.style.lr},
                {"log_every", c.style.log_every},
                {"checkpoint_a", c.style.checkpoint_a},
                {"checkpoint_b", c.style.checkpoint_b}};
  j["paths"] = {{"out_dir", c.paths.out_dir},
                {"checkpoint", c.paths.checkpoint},
                {"collapsed", c.paths.collapsed},
                {"output", c.paths.output}};
  return j;
}

Config config_from_json(const Json& j, Config c) {
  Reader r(j, "");
  r.get("task", c.task);
  r.section("model", c.model, read_model);
  r.section("training", c.training, read_training);
  r.section("data", c.data, read_data);
  r.section("sampler", c.sampler, read_sampler);
  r.section("ign", c.ign, read_ign);
  r.section("interp", c.interp, read_interp);
  r.section("style", c.style, read_style);
  r.section("paths", c.paths, read_paths);
  r.finish();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", "config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void validate(const Config& c) {
  const auto& tasks = task_names();
  require(std::find(tasks.begin(), tasks.end(), c.task) != tasks.end(), "task", "unknown task '" + c.task + "'");
  require(c.model.dim >= 2, "model.dim", "must be at least 2");
  require(c.model.blocks >= 1, "model.blocks", "must be at least 1");
  require(c.model.rank >= 1, "model.rank", "must be at least 1");
  require(c.model.width >= 1, "model.width", "must be at least 1");
  require(c.model.hidden_layers >= 1, "model.hidden_layers", "must be at least 1");
  require(c.model.log_scale_clamp > 0.0, "model.log_scale_clamp", "must be positive");
  require(c.model.hyper_features >= 2 && c.model.hyper_features % 2 == 0, "model.hyper_features",
          "must be even and at least 2");
  require(c.model.hyper_width >= 1, "model.hyper_width", "must be at least 1");
  require(c.training.batch >= 1, "training.batch", "must be at least 1");
  require(c.training.lr > 0.0, "training.lr", "must be positive");
  require(c.training.eval_size >= 1, "training.eval_size", "must be at least 1");
  require(c.training.loss_space == "latent" || c.training.loss_space == "data", "training.loss_space",
          "expected latent or data");
  const auto& names = dataset_names();
  require(!c.data.input.empty() || std::find(names.begin(), names.end(), c.data.dataset) != names.end(),
          "data.dataset", "unknown dataset '" + c.data.dataset + "'");
  require(c.data.count >= 1, "data.count", "must be at least 1");
  require(c.sampler.steps >= 1, "sampler.steps", "must be at least 1");
  require(c.sampler.scheme == "euler" || c.sampler.scheme == "rk4", "sampler.scheme", "expected euler or rk4");
  require(c.sampler.count >= 1, "sampler.count", "must be at least 1");
  require(c.ign.dim >= 2, "ign.dim", "must be at least 2");
  require(c.ign.blocks >= 1, "ign.blocks", "must be at least 1");
  require(c.ign.width >= 1, "ign.width", "must be at least 1");
  require(c.ign.batch >= 1, "ign.batch", "must be at least 1");
  require(c.ign.lr > 0.0, "ign.lr", "must be positive");
  require(c.interp.blend == "induced" || c.interp.blend == "euclidean", "interp.blend",
          "expected induced or euclidean");
  require(c.interp.pairs >= 1, "interp.pairs", "must be at least 1");
  require(c.style.batch >= 1, "style.batch", "must be at least 1");
  require(c.style.lr > 0.0, "style.lr", "must be positive");
  require(!c.paths.out_dir.empty(), "paths.out_dir", "must not be empty");
}

FlowOptions flow_options(const Config& c) {
  FlowOptions o;
  o.dim = c.model.dim;
  o.blocks = c.model.blocks;
  o.rank = c.model.rank;
  o.conditioner.width = c.model.width;
  o.conditioner.hidden_layers = c.model.hidden_layers;
  o.conditioner.log_scale_clamp = c.model.log_scale_clamp;
  o.conditioner.output_gain = c.model.output_gain;
  o.hyper.features = c.model.hyper_features;
  o.hyper.width = c.model.hyper_width;
  o.hyper.output_gain = c.model.hyper_gain;
  return o;
}

LossSpace parse_loss_space(const std::string& name) {
  if (name == "latent") return LossSpace::Latent;
  if (name == "data") return LossSpace::Data;
  throw ConfigError("training.loss_space", "expected latent or data");
}

Blend parse_blend(const std::string& name) {
  if (name == "induced") return Blend::Induced;
  if (name == "euclidean") return Blend::Euclidean;
  throw ConfigError("interp.blend", "expected induced or euclidean");
}

FlowTrainOptions flow_train_options(const Config& c) {
  FlowTrainOptions o;
  o.steps = c.training.steps;
  o.batch = c.training.batch;
  o.lr = c.training.lr;
  o.seed = c.training.seed;
  o.log_every = c.training.log_every;
  o.eval_size = c.training.eval_size;
  o.loss.space = parse_loss_space(c.training.loss_space);
  o.loss.alignment_weight = c.training.alignment_weight;
  return o;
}

IGNOptions ign_options(const Config& c) {
  IGNOptions o;
  o.dim = c.ign.dim;
  o.blocks = c.ign.blocks;
  o.conditioner.width = c.ign.width;
  o.conditioner.hidden_layers = c.model.hidden_layers;
  o.initial_logit = c.ign.initial_logit;
  o.weights = {c.ign.w_rec, c.ign.w_sparse, c.ign.w_iso};
  return o;
}

IGNTrainOptions ign_train_options(const Config& c) {
  IGNTrainOptions o;
  o.steps = c.ign.steps;
  o.batch = c.ign.batch;
  o.lr = c.ign.lr;
  o.seed = c.training.seed;
  o.log_every = c.ign.log_every;
  o.probes = c.ign.probes;
  return o;
}

}  // namespace linearizer
