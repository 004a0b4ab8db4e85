#include "linearizer/app.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "linearizer/checksum.hpp"
#include "linearizer/datasets.hpp"
#include "linearizer/errors.hpp"
#include "linearizer/optim.hpp"
#include "linearizer/verify.hpp"

namespace linearizer {

namespace fs = std::filesystem;

namespace {

// Model initialization draws from its own substream, away from the per-step
// batch substreams (0, 1, 2, ...) and the evaluation batch.
constexpr std::uint64_t kInitStream = 0x1417ULL << 40;

RngStream init_rng(const Config& c) { return RngStream(c.training.seed).substream(kInitStream); }

std::string json_line(const Json& j) { return j.dump() + "\n"; }

Json tensor_json(const Tensor& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> column_names(const std::string& prefix, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Tensor load_points(const Config& c) {
  if (!c.data.input.empty()) return ingest_csv(c.data.input);
  return make_dataset(c.data.dataset, c.data.count, c.data.seed);
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

fs::path flow_path(const Config& c) { return or_default(c.paths.checkpoint, output_dir(c) / "flow.ckpt"); }
fs::path collapsed_path(const Config& c) { return or_default(c.paths.collapsed, output_dir(c) / "collapsed.ckpt"); }
fs::path ign_path(const Config& c) { return or_default(c.paths.checkpoint, output_dir(c) / "ign.ckpt"); }
fs::path style_a_path(const Config& c) { return or_default(c.style.checkpoint_a, output_dir(c) / "style_a.ckpt"); }
fs::path style_b_path(const Config& c) { return or_default(c.style.checkpoint_b, output_dir(c) / "style_b.ckpt"); }
fs::path output_file(const Config& c, const std::string& name) { return or_default(c.paths.output, output_dir(c) / name); }

std::string hex_checksum(const ParameterList& params) { return hex32(parameters_checksum(params)); }

CollapsedOperator load_collapsed(const Config& c, const FlowModel& model) {
  const fs::path path = collapsed_path(c);
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "collapsed") throw IoError(path.string() + ": expected a collapsed operator, found " + ckpt.kind);
  const std::string expected = hex32(model.checksum());
  if (ckpt.info.at("model_checksum").get<std::string>() != expected) {
    throw ContractError(path.string() + " was collapsed from a different flow model");
  }
  CollapsedOperator op;
  op.b = ckpt.tensor("B");
  op.scheme = parse_scheme(ckpt.info.at("scheme").get<std::string>());
  op.steps = ckpt.info.at("steps").get<std::size_t>();
  op.model_checksum = model.checksum();
  return op;
}

// The collapsed file if one exists, otherwise a fresh collapse with the sampler settings.
CollapsedOperator collapsed_or_fresh(const Config& c, const FlowModel& model) {
  if (!c.paths.collapsed.empty() || fs::exists(collapsed_path(c))) return load_collapsed(c, model);
  return collapse(model, c.sampler.steps, parse_scheme(c.sampler.scheme));
}

int task_verify(const Config& c, std::ostream& out) {
  std::string lines;
  const auto results = verify_suite(c.training.seed, [&](const CheckResult& r) {
    const Json j{{"check", r.name}, {"value", r.value}, {"tolerance", r.tolerance}, {"passed", r.passed}};
    lines += json_line(j);
    out << json_line(j) << std::flush;
  });
  write_file_atomic(output_file(c, "verify.jsonl"), lines);
  const bool ok = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
  return ok ? kExitOk : kExitNumeric;
}

int task_train_flow(const Config& c, std::ostream& out) {
  const Tensor data = load_points(c);
  FlowModel model = make_flow_model(c);
  std::string lines;
  const FlowTrainResult r = train_flow(model, data, flow_train_options(c), [&](const FlowMetrics& m) {
    lines += json_line(
        {{"step", m.step}, {"loss", m.loss}, {"fm", m.fm}, {"alignment", m.alignment}, {"eval_fm", m.eval_fm}});
  });
  Checkpoint ckpt = flow_checkpoint(model, c, c.training.steps);
  ckpt.info["initial_eval_fm"] = r.initial_eval_fm;
  ckpt.info["final_eval_fm"] = r.final_eval_fm;
  write_file_atomic(output_dir(c) / "flow_metrics.jsonl", lines);
  save_checkpoint(flow_path(c), ckpt);
  out << json_line({{"task", "train-flow"},
                    {"checkpoint", flow_path(c).string()},
                    {"steps", c.training.steps},
                    {"initial_eval_fm", r.initial_eval_fm},
                    {"final_eval_fm", r.final_eval_fm},
                    {"checksum", hex32(model.checksum())}});
  return kExitOk;
}

int task_collapse(const Config& c, std::ostream& out) {
  const FlowModel model = load_flow_model(load_checkpoint(flow_path(c)));
  const Scheme scheme = parse_scheme(c.sampler.scheme);
  const CollapsedOperator op = collapse(model, c.sampler.steps, scheme);
  Checkpoint ckpt;
  ckpt.kind = "collapsed";
  ckpt.config = config_snapshot(c);
  ckpt.info = {{"scheme", to_string(scheme)}, {"steps", op.steps}, {"model_checksum", hex32(op.model_checksum)}};
  ckpt.tensors.emplace_back("B", op.b);
  save_checkpoint(collapsed_path(c), ckpt);
  out << json_line({{"task", "collapse"},
                    {"checkpoint", collapsed_path(c).string()},
                    {"scheme", to_string(scheme)},
                    {"steps", op.steps},
                    {"B", tensor_json(op.b)}});
  return kExitOk;
}

int task_sample(const Config& c, std::ostream& out) {
  const FlowModel model = load_flow_model(load_checkpoint(flow_path(c)));
  const Tensor x0 = RngStream(c.sampler.seed).normal_tensor(c.sampler.count, model.dim());
  Tensor x1;
  Json summary{{"task", "sample"}};
  if (c.sampler.one_step) {
    const CollapsedOperator op = load_collapsed(c, model);
    x1 = one_step_sample(model, op.b, x0);
    summary["mode"] = "one-step";
    summary["scheme"] = to_string(op.scheme);
    summary["steps"] = op.steps;
  } else {
    const Scheme scheme = parse_scheme(c.sampler.scheme);
    x1 = sample(model, x0, c.sampler.steps, scheme);
    summary["mode"] = "iterative";
    summary["scheme"] = to_string(scheme);
    summary["steps"] = c.sampler.steps;
  }
  const SampleStats stats = sample_statistics(x1);
  const fs::path path = output_file(c, "samples.csv");
  write_file_atomic(path, to_csv(column_names("x", model.dim()), x1));
  summary["output"] = path.string();
  summary["count"] = x1.rows();
  summary["mean"] = tensor_json(stats.mean)[0];
  summary["covariance"] = tensor_json(stats.covariance);
  out << json_line(summary);
  return kExitOk;
}

int task_invert(const Config& c, std::ostream& out) {
  const FlowModel model = load_flow_model(load_checkpoint(flow_path(c)));
  const CollapsedOperator op = collapsed_or_fresh(c, model);
  const Tensor x = load_points(c);
  if (x.cols() != model.dim()) throw DimensionError("points have " + std::to_string(x.cols()) + " columns, model has " +
                                                    std::to_string(model.dim()));
  const Linearizer f = collapsed_linearizer(model, op.b);
  const Tensor code = pinv(f)(x);
  const Tensor recon = f(code);
  const InducedSpace space = model.space();
  const std::size_t n = model.dim();
  Tensor rows = Tensor::zeros(x.rows(), 3 * n + 1);
  double worst = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double res = space.residual(recon.row_at(r), x.row_at(r));
    worst = std::max(worst, res);
    for (std::size_t k = 0; k < n; ++k) {
      rows(r, k) = x(r, k);
      rows(r, n + k) = code(r, k);
      rows(r, 2 * n + k) = recon(r, k);
    }
    rows(r, 3 * n) = res;
  }
  const fs::path path = output_file(c, "inversion.csv");
  const auto header = concat(concat(concat(column_names("x", n), column_names("code", n)), column_names("recon", n)),
                             {"residual"});
  write_file_atomic(path, to_csv(header, rows));
  out << json_line({{"task", "invert"}, {"output", path.string()}, {"count", x.rows()}, {"max_residual", worst}});
  return kExitOk;
}

int task_interp(const Config& c, std::ostream& out) {
  const FlowModel model = load_flow_model(load_checkpoint(flow_path(c)));
  const CollapsedOperator op = collapsed_or_fresh(c, model);
  const Tensor pts = load_points(c);
  const std::size_t pairs = c.interp.pairs;
  if (pts.rows() < 2 * pairs) throw ContractError("interp needs " + std::to_string(2 * pairs) + " points");
  std::vector<Tensor> first, second;
  for (std::size_t i = 0; i < pairs; ++i) {
    first.push_back(pts.row_at(i));
    second.push_back(pts.row_at(pairs + i));
  }
  const Tensor x1 = vstack(first);
  const Tensor x2 = vstack(second);
  const Blend blend = parse_blend(c.interp.blend);
  const std::size_t n = model.dim();
  std::vector<Tensor> rows;
  for (double a : c.interp.alphas) {
    const Tensor y = latent_interpolate(model, op.b, x1, x2, a, blend);
    for (std::size_t p = 0; p < pairs; ++p) {
      Tensor row = Tensor::zeros(1, n + 2);
      row(0, 0) = static_cast<double>(p);
      row(0, 1) = a;
      for (std::size_t k = 0; k < n; ++k) row(0, 2 + k) = y(p, k);
      rows.push_back(std::move(row));
    }
  }
  const fs::path path = output_file(c, "interp.csv");
  write_file_atomic(path, to_csv(concat({"pair", "alpha"}, column_names("x", n)), vstack(rows)));
  out << json_line({{"task", "interp"}, {"output", path.string()}, {"pairs", pairs}, {"alphas", c.interp.alphas}});
  return kExitOk;
}

int task_train_ign(const Config& c, std::ostream& out) {
  const Tensor raw = load_points(c);
  if (raw.cols() > c.ign.dim) throw DimensionError("data has more columns than ign.dim");
  const Tensor data = embed(raw, c.ign.dim);
  IGNModel model = make_ign_model(c);
  std::string lines;
  const auto log = train_ign(model, data, ign_train_options(c), [&](const IGNMetrics& m) {
    lines += json_line({{"step", m.step},
                        {"loss", m.loss},
                        {"rec", m.rec},
                        {"sparse", m.sparse},
                        {"iso", m.iso},
                        {"rank", m.rank},
                        {"g0_norm", m.g0_norm},
                        {"idempotency", m.idempotency}});
  });
  Checkpoint ckpt;
  ckpt.kind = "ign";
  ckpt.config = config_snapshot(c);
  ckpt.rng_seed = c.training.seed;
  ckpt.rng_counter = c.ign.steps;
  ckpt.info = {{"rank", model.rank()}, {"checksum", hex32(model.checksum())}};
  add_parameters(ckpt, model.parameters());
  write_file_atomic(output_dir(c) / "ign_metrics.jsonl", lines);
  save_checkpoint(ign_path(c), ckpt);
  out << json_line({{"task", "train-ign"},
                    {"checkpoint", ign_path(c).string()},
                    {"rank", model.rank()},
                    {"final_idempotency", log.back().idempotency}});
  return kExitOk;
}

int task_project(const Config& c, std::ostream& out) {
  const IGNModel model = load_ign_model(load_checkpoint(ign_path(c)));
  const Tensor raw = load_points(c);
  if (raw.cols() > model.dim()) throw DimensionError("points have more columns than the projector");
  const Tensor x = embed(raw, model.dim());
  const Linearizer f = model.linearizer();
  const Tensor y = f(x);
  const Tensor yy = f(y);
  const InducedSpace space(model.g());
  const std::size_t n = model.dim();
  Tensor rows = Tensor::zeros(x.rows(), 2 * n + 2);
  double worst = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      rows(r, k) = x(r, k);
      rows(r, n + k) = y(r, k);
      d += (y(r, k) - x(r, k)) * (y(r, k) - x(r, k));
    }
    rows(r, 2 * n) = std::sqrt(d);
    rows(r, 2 * n + 1) = space.residual(yy.row_at(r), y.row_at(r));
    worst = std::max(worst, rows(r, 2 * n + 1));
  }
  const fs::path path = output_file(c, "projection.csv");
  const auto header = concat(concat(column_names("x", n), column_names("y", n)), {"residual", "idempotency"});
  write_file_atomic(path, to_csv(header, rows));
  out << json_line({{"task", "project"},
                    {"output", path.string()},
                    {"count", x.rows()},
                    {"rank", model.rank()},
                    {"max_idempotency", worst}});
  return kExitOk;
}

// Two toy styles of the same 2-D data: a quarter turn and a parabolic bend.
Tensor style_target(const Tensor& x, bool bend) {
  Tensor y = Tensor::zeros(x.rows(), 2);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (bend) {
      y(r, 0) = x(r, 0);
      y(r, 1) = x(r, 1) - 0.5 * x(r, 0) * x(r, 0);
    } else {
      y(r, 0) = -x(r, 1);
      y(r, 1) = x(r, 0);
    }
  }
  return y;
}

MapPtr make_style_map(const Config& c) {
  StackOptions so;
  so.dim = 2;
  so.blocks = c.model.blocks;
  so.conditioner = flow_options(c).conditioner;
  RngStream rng = init_rng(c);
  return make_coupling_stack(so, rng);
}

int task_train_style(const Config& c, std::ostream& out) {
  const Tensor data = load_points(c);
  if (data.cols() != 2) throw DimensionError("style training expects 2-D points");
  const MapPtr g = make_style_map(c);
  const auto core_a = std::make_shared<DenseCore>(Tensor::identity(2), true);
  const auto core_b = std::make_shared<DenseCore>(Tensor::identity(2), true);
  ParameterList params = parameters_of(*g, "g");
  core_a->collect_parameters(params, "core_a");
  core_b->collect_parameters(params, "core_b");
  Adam adam(params, {.lr = c.style.lr});
  const Linearizer fa = Linearizer::shared(g, core_a);
  const Linearizer fb = Linearizer::shared(g, core_b);
  const RngStream root(c.training.seed);
  std::string lines;
  for (std::size_t step = 0; step < c.style.steps; ++step) {
    RngStream rng = root.substream(step);
    std::vector<Tensor> rows;
    for (std::size_t i = 0; i < c.style.batch; ++i) rows.push_back(data.row_at(rng.below(data.rows())));
    const Tensor x = vstack(rows);
    const double inv_b = 1.0 / static_cast<double>(x.rows());
    adam.zero_grad();
    const Var la = ops::scale(ops::sum(ops::square(fa.apply(constant(x)) - constant(style_target(x, false)))), inv_b);
    const Var lb = ops::scale(ops::sum(ops::square(fb.apply(constant(x)) - constant(style_target(x, true)))), inv_b);
    const Var loss = la + lb;
    try {
      backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("style training failed at step " + std::to_string(step + 1) + ": " + e.what());
    }
    adam.step();
    const std::size_t done = step + 1;
    if (done == c.style.steps || (c.style.log_every > 0 && done % c.style.log_every == 0)) {
      lines += json_line({{"step", done}, {"loss", loss.item()}, {"loss_a", la.item()}, {"loss_b", lb.item()}});
    }
  }
  const std::string map_sum = hex_checksum(parameters_of(*g, "g"));
  for (const auto& [style, core, path] : {std::tuple{"a", core_a, style_a_path(c)}, std::tuple{"b", core_b, style_b_path(c)}}) {
    Checkpoint ckpt;
    ckpt.kind = "style";
    ckpt.config = config_snapshot(c);
    ckpt.rng_seed = c.training.seed;
    ckpt.rng_counter = c.style.steps;
    ckpt.info = {{"style", style}, {"map_checksum", map_sum}};
    add_parameters(ckpt, parameters_of(*g, "g"));
    ckpt.tensors.emplace_back("core", materialize(*core));
    save_checkpoint(path, ckpt);
  }
  write_file_atomic(output_dir(c) / "style_metrics.jsonl", lines);
  out << json_line({{"task", "train-style"},
                    {"checkpoint_a", style_a_path(c).string()},
                    {"checkpoint_b", style_b_path(c).string()},
                    {"map_checksum", map_sum}});
  return kExitOk;
}

struct StyleModel {
  MapPtr g;
  Tensor core;
  std::string map_checksum;
};

StyleModel load_style(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "style") throw IoError(path.string() + ": expected a style checkpoint, found " + ckpt.kind);
  const Config c = config_from_json(ckpt.config);
  MapPtr g = make_style_map(c);
  const ParameterList params = parameters_of(*g, "g");
  assign_parameters(ckpt, params);
  return {g, ckpt.tensor("core"), hex_checksum(params)};
}

int task_style_interp(const Config& c, std::ostream& out) {
  const StyleModel a = load_style(style_a_path(c));
  const StyleModel b = load_style(style_b_path(c));
  if (a.map_checksum != b.map_checksum) {
    throw ContractError("style checkpoints use different maps (" + a.map_checksum + " vs " + b.map_checksum + ")");
  }
  const Tensor x = load_points(c);
  if (x.cols() != 2) throw DimensionError("style interpolation expects 2-D points");
  const DenseCore core_a(a.core);
  const DenseCore core_b(b.core);
  std::vector<Tensor> rows;
  for (double alpha : c.style.alphas) {
    const Tensor y = Linearizer::shared(a.g, interpolate_cores(core_a, core_b, alpha))(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      rows.push_back(Tensor::row({alpha, x(r, 0), x(r, 1), y(r, 0), y(r, 1)}));
    }
  }
  const fs::path path = output_file(c, "style_interp.csv");
  write_file_atomic(path, to_csv({"alpha", "x0", "x1", "y0", "y1"}, vstack(rows)));
  out << json_line({{"task", "style-interp"}, {"output", path.string()}, {"alphas", c.style.alphas}});
  return kExitOk;
}

// Flags map onto config fields; values are patched into the JSON form so
// that type errors name the field path just like config files do.
enum class Kind { Uint, Number, String, Numbers, Flag };

struct FlagSpec {
  const char* flag;
  const char* path;  // "section.key"
  Kind kind;
  const char* help;
};

const std::vector<FlagSpec>& flag_specs() {
  static const std::vector<FlagSpec> specs{
      {"--seed", "training.seed", Kind::Uint, "seed for initialization and training batches"},
      {"--batch", "training.batch", Kind::Uint, "flow training batch size"},
      {"--lr", "training.lr", Kind::Number, "flow training learning rate"},
      {"--log-every", "training.log_every", Kind::Uint, "flow metrics interval"},
      {"--eval-size", "training.eval_size", Kind::Uint, "fixed evaluation batch size"},
      {"--loss-space", "training.loss_space", Kind::String, "latent or data"},
      {"--alignment-weight", "training.alignment_weight", Kind::Number, "weight of the alignment term"},
      {"--dim", "model.dim", Kind::Uint, "flow data dimension"},
      {"--blocks", "model.blocks", Kind::Uint, "coupling blocks"},
      {"--rank", "model.rank", Kind::Uint, "rank of the velocity operator factors"},
      {"--width", "model.width", Kind::Uint, "conditioner width"},
      {"--hidden-layers", "model.hidden_layers", Kind::Uint, "conditioner hidden layers"},
      {"--hyper-features", "model.hyper_features", Kind::Uint, "time embedding size"},
      {"--hyper-width", "model.hyper_width", Kind::Uint, "time network width"},
      {"--hyper-gain", "model.hyper_gain", Kind::Number, "time network output gain"},
      {"--dataset", "data.dataset", Kind::String, "two-moons, 8-gaussians or checkerboard"},
      {"--count", "data.count", Kind::Uint, "number of generated points"},
      {"--data-seed", "data.seed", Kind::Uint, "dataset seed"},
      {"--input", "data.input", Kind::String, "CSV of points instead of a generated dataset"},
      {"--scheme", "sampler.scheme", Kind::String, "euler or rk4"},
      {"--one-step", "sampler.one_step", Kind::Flag, "sample with the collapsed operator"},
      {"--samples", "sampler.count", Kind::Uint, "number of prior draws"},
      {"--sample-seed", "sampler.seed", Kind::Uint, "seed of the prior draws"},
      {"--a", "interp.alphas", Kind::Numbers, "interpolation weights (comma separated)"},
      {"--blend", "interp.blend", Kind::String, "induced or euclidean"},
      {"--pairs", "interp.pairs", Kind::Uint, "number of interpolated pairs"},
      {"--ign-dim", "ign.dim", Kind::Uint, "projector dimension"},
      {"--ign-blocks", "ign.blocks", Kind::Uint, "projector coupling blocks"},
      {"--w-rec", "ign.w_rec", Kind::Number, "reconstruction weight"},
      {"--w-sparse", "ign.w_sparse", Kind::Number, "rank sparsity weight"},
      {"--w-iso", "ign.w_iso", Kind::Number, "isometry weight"},
      {"--alphas", "style.alphas", Kind::Numbers, "style weights (comma separated)"},
      {"--checkpoint-a", "style.checkpoint_a", Kind::String, "first style checkpoint"},
      {"--checkpoint-b", "style.checkpoint_b", Kind::String, "second style checkpoint"},
      {"--out-dir", "paths.out_dir", Kind::String, "output directory"},
      {"--checkpoint", "paths.checkpoint", Kind::String, "model checkpoint path"},
      {"--collapsed", "paths.collapsed", Kind::String, "collapsed operator path"},
      {"--output", "paths.output", Kind::String, "main output file"},
  };
  return specs;
}

const char* task_help(const std::string& task) {
  static const std::map<std::string, const char*> help{
      {"verify", "check the algebraic identities on random models"},
      {"train-flow", "train the latent flow model and save a checkpoint"},
      {"sample", "draw samples iteratively or with the collapsed operator"},
      {"collapse", "fold the solver steps into one operator"},
      {"invert", "pseudo-invert points through the collapsed linearizer"},
      {"interp", "interpolate between data points in latent space"},
      {"train-ign", "train the idempotent projector"},
      {"project", "apply the trained projector to points"},
      {"train-style", "train two styles that share one map"},
      {"style-interp", "blend two style operators"}};
  return help.at(task);
}

// --steps means the step count of whatever the task iterates.
const char* steps_path(const std::string& task) {
  if (task == "train-flow") return "training.steps";
  if (task == "train-ign") return "ign.steps";
  if (task == "train-style") return "style.steps";
  return "sampler.steps";
}

Json parse_flag_value(const std::string& path, Kind kind, const std::string& text) {
  auto bad = [&](const char* what) { return ConfigError(path, "expected " + std::string(what) + ", got '" + text + "'"); };
  auto number = [&](const std::string& s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) throw bad("a number");
    return v;
  };
  switch (kind) {
    case Kind::Uint: {
      std::uint64_t v = 0;
      const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || end != text.data() + text.size()) throw bad("a non-negative integer");
      return v;
    }
    case Kind::Number:
      return number(text);
    case Kind::String:
      return text;
    case Kind::Numbers: {
      Json arr = Json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(number(item));
      if (arr.empty()) throw bad("a comma separated list of numbers");
      return arr;
    }
    case Kind::Flag:
      return true;
  }
  return nullptr;
}

void set_path(Json& j, const std::string& path, Json value) {
  const auto dot = path.find('.');
  j[path.substr(0, dot)][path.substr(dot + 1)] = std::move(value);
}

}  // namespace

fs::path output_dir(const Config& config) {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return fs::path(env);
  return fs::path(config.paths.out_dir);
}

Json config_snapshot(const Config& config) {
  Json j = to_json(config);
  j.erase("paths");
  return j;
}

FlowModel make_flow_model(const Config& config) {
  RngStream rng = init_rng(config);
  return FlowModel::create(flow_options(config), rng);
}

Checkpoint flow_checkpoint(const FlowModel& model, const Config& config, std::uint64_t steps_done) {
  Checkpoint ckpt;
  ckpt.kind = "flow";
  ckpt.config = config_snapshot(config);
  ckpt.rng_seed = config.training.seed;
  ckpt.rng_counter = steps_done;
  ckpt.info = {{"checksum", hex32(model.checksum())}};
  add_parameters(ckpt, model.parameters());
  return ckpt;
}

FlowModel load_flow_model(const Checkpoint& ckpt) {
  if (ckpt.kind != "flow") throw IoError("expected a flow checkpoint, found " + ckpt.kind);
  const FlowModel model = make_flow_model(config_from_json(ckpt.config));
  assign_parameters(ckpt, model.parameters());
  return model;
}

IGNModel make_ign_model(const Config& config) {
  RngStream rng = init_rng(config);
  return IGNModel::create(ign_options(config), rng);
}

IGNModel load_ign_model(const Checkpoint& ckpt) {
  if (ckpt.kind != "ign") throw IoError("expected an ign checkpoint, found " + ckpt.kind);
  const IGNModel model = make_ign_model(config_from_json(ckpt.config));
  assign_parameters(ckpt, model.parameters());
  return model;
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string to_csv(const std::vector<std::string>& header, const Tensor& rows) {
  if (!rows.empty() && header.size() != rows.cols()) throw DimensionError("CSV header does not match columns");
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += "\n";
  for (std::size_t r = 0; r < (rows.empty() ? 0 : rows.rows()); ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      if (c) s += ",";
      s += format_double(rows(r, c));
    }
    s += "\n";
  }
  return s;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const Error*>(&e)) return kExitUsage;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitNumeric;
}

int run_task(const Config& config, std::ostream& out) {
  validate(config);
  static const std::map<std::string, std::function<int(const Config&, std::ostream&)>> tasks{
      {"verify", task_verify},         {"train-flow", task_train_flow}, {"sample", task_sample},
      {"collapse", task_collapse},     {"invert", task_invert},         {"interp", task_interp},
      {"train-ign", task_train_ign},   {"project", task_project},       {"style-interp", task_style_interp},
      {"train-style", task_train_style}};
  return tasks.at(config.task)(config, out);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linearizer toolkit: induced-space algebra, one-step flows and idempotent projectors", "linearizer"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::App*> subs;
  for (const std::string& task : task_names()) {
    CLI::App* sub = app.add_subcommand(task, task_help(task));
    // Repeated options keep the last value, so scripts can append overrides.
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--config", config_path, "JSON config; flags override its values");
    sub->add_option("--steps", values["--steps"], "steps of the task's loop (training or sampler)");
    for (const FlagSpec& spec : flag_specs()) {
      if (spec.kind == Kind::Flag) {
        sub->add_flag(spec.flag, flags[spec.flag], spec.help);
      } else {
        sub->add_option(spec.flag, values[spec.flag], spec.help);
      }
    }
    subs[task] = sub;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // Subcommand help.
      for (const auto& [name, sub] : subs) {
        if (sub->parsed()) out << sub->help();
      }
      if (std::none_of(subs.begin(), subs.end(), [](const auto& s) { return s.second->parsed(); })) out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    std::string task;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) task = name;
    }
    Config base = config_path.empty() ? Config{} : load_config(config_path);
    Json patch = Json::object();
    const CLI::App* sub = subs.at(task);
    if (sub->count("--steps") > 0) {
      const std::string path = steps_path(task);
      set_path(patch, path, parse_flag_value(path, Kind::Uint, values["--steps"]));
    }
    for (const FlagSpec& spec : flag_specs()) {
      if (spec.kind == Kind::Flag ? !flags[spec.flag] : sub->count(spec.flag) == 0) continue;
      const std::string text = spec.kind == Kind::Flag ? "" : values[spec.flag];
      set_path(patch, spec.path, parse_flag_value(spec.path, spec.kind, text));
    }
    Config config = config_from_json(patch, base);
    config.task = task;
    return run_task(config, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const char* label = code == kExitIo ? "i/o error" : code == kExitNumeric ? "numeric error" : "usage error";
    err << label << ": " << e.what() << "\n";
    return code;
  }
}

}  // namespace linearizer
