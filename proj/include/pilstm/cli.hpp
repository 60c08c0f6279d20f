#pragma once

// Command implementations behind the `pilstm` executable:
//   generate | train | sweep | lyapunov | evaluate | replay
// Each command resolves a RunConfig, validates dimensions up front, writes
// its outputs atomically and finishes with a manifest.json that is enough
// to replay the run.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"
#include "pilstm/evaluation.hpp"
#include "pilstm/io.hpp"
#include "pilstm/lyapunov.hpp"
#include "pilstm/network.hpp"
#include "pilstm/training.hpp"

namespace pilstm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kOutputDirEnv = "PILSTM_OUTPUT_DIR";

// Fixed offsets from the single run seed.
inline constexpr std::uint64_t kTrainDataSeedOffset = 1;
inline constexpr std::uint64_t kTestDataSeedOffset = 2;
inline constexpr std::uint64_t kTrainSeedOffset = 3;

struct DataConfig {
  long n_washout = 10000;
  long n_steps = 20000;
  long test_steps = 80000;
};

struct LyapunovConfig {
  long n_steps = 500000;
  long warmup = 10000;
  int renorm_interval = 10;
  int network_renorm_interval = 1;
  long network_steps = 100000;
  int n_exponents = 0;  // 0 means N
};

struct EvaluateConfig {
  double rollout_lyap_times = 1000.0;
  long washout = 100;
  int n_bins = 100;
  long le_warmup = 10000;
};

struct RunConfig {
  std::string preset;
  SystemSpec system;
  std::vector<int> unmeasured{9};
  DataConfig data;
  TrainConfig train;
  SweepGrid grid = published_grid();
  LyapunovConfig lyapunov;
  EvaluateConfig evaluate;
  std::uint64_t seed = 0;

  ObservationSplit split() const { return ObservationSplit::from_unmeasured(system.n_dim, unmeasured); }

  void validate() const {
    system.validate();
    split();
    train.validate();
    if (data.n_steps < 1 || data.test_steps < 1 || data.n_washout < 0) throw InvalidInput("invalid data lengths");
  }
};

/// Preset values overwrite the split and the network hyperparameters.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  const auto preset = find_preset(name);
  if (!preset) throw InvalidInput("unknown preset '" + name + "' (expected case-i, case-ii or case-iii)");
  cfg.preset = name;
  cfg.unmeasured = ObservationSplit::tail(cfg.system.n_dim, preset->n_unmeasured).unmeasured;
  cfg.train.n_hidden = preset->n_hidden;
  cfg.train.alpha_pi = preset->alpha_pi;
}

inline json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  return json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"system", {{"n_dim", c.system.n_dim}, {"forcing", c.system.forcing}, {"dt", c.system.dt}}},
      {"unmeasured", c.unmeasured},
      {"data", {{"n_washout", c.data.n_washout}, {"n_steps", c.data.n_steps}, {"test_steps", c.data.test_steps}}},
      {"train",
       {{"n_hidden", t.n_hidden},
        {"window_len", t.window_len},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"alpha_pi", t.alpha_pi},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience},
        {"val_fraction", t.val_fraction},
        {"cell_variant", std::string(to_string(t.cell_variant))},
        {"clip_norm", t.clip_norm}}},
      {"sweep", {{"n_hidden", c.grid.n_hidden}, {"alpha_pi", c.grid.alpha_pi}}},
      {"lyapunov",
       {{"n_steps", c.lyapunov.n_steps},
        {"warmup", c.lyapunov.warmup},
        {"renorm_interval", c.lyapunov.renorm_interval},
        {"network_renorm_interval", c.lyapunov.network_renorm_interval},
        {"network_steps", c.lyapunov.network_steps},
        {"n_exponents", c.lyapunov.n_exponents}}},
      {"evaluate",
       {{"rollout_lyap_times", c.evaluate.rollout_lyap_times},
        {"washout", c.evaluate.washout},
        {"n_bins", c.evaluate.n_bins},
        {"le_warmup", c.evaluate.le_warmup}}},
  };
}

namespace detail {
template <class T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) j.at(key).get_to(dst);
}
}  // namespace detail

/// Missing keys keep their defaults. A manifest is accepted in place of a
/// config and its "config" snapshot is used.
inline RunConfig config_from_json(const json& in) {
  const json& j = in.contains("config") && in.contains("command") ? in.at("config") : in;
  RunConfig c;
  try {
    if (j.contains("preset") && !j.at("preset").get<std::string>().empty()) apply_preset(c, j.at("preset"));
    detail::maybe(j, "seed", c.seed);
    if (j.contains("system")) {
      const json& s = j.at("system");
      detail::maybe(s, "n_dim", c.system.n_dim);
      detail::maybe(s, "forcing", c.system.forcing);
      detail::maybe(s, "dt", c.system.dt);
      if (j.contains("preset") && !j.at("preset").get<std::string>().empty()) apply_preset(c, j.at("preset"));
    }
    detail::maybe(j, "unmeasured", c.unmeasured);
    if (j.contains("data")) {
      const json& d = j.at("data");
      detail::maybe(d, "n_washout", c.data.n_washout);
      detail::maybe(d, "n_steps", c.data.n_steps);
      detail::maybe(d, "test_steps", c.data.test_steps);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      TrainConfig& tc = c.train;
      detail::maybe(t, "n_hidden", tc.n_hidden);
      detail::maybe(t, "window_len", tc.window_len);
      detail::maybe(t, "batch_size", tc.batch_size);
      detail::maybe(t, "learning_rate", tc.learning_rate);
      detail::maybe(t, "adam_beta1", tc.adam_beta1);
      detail::maybe(t, "adam_beta2", tc.adam_beta2);
      detail::maybe(t, "adam_eps", tc.adam_eps);
      detail::maybe(t, "alpha_pi", tc.alpha_pi);
      detail::maybe(t, "max_epochs", tc.max_epochs);
      detail::maybe(t, "patience", tc.patience);
      detail::maybe(t, "val_fraction", tc.val_fraction);
      detail::maybe(t, "clip_norm", tc.clip_norm);
      if (t.contains("cell_variant")) tc.cell_variant = parse_cell_variant(t.at("cell_variant").get<std::string>());
    }
    if (j.contains("sweep")) {
      detail::maybe(j.at("sweep"), "n_hidden", c.grid.n_hidden);
      detail::maybe(j.at("sweep"), "alpha_pi", c.grid.alpha_pi);
    }
    if (j.contains("lyapunov")) {
      const json& l = j.at("lyapunov");
      detail::maybe(l, "n_steps", c.lyapunov.n_steps);
      detail::maybe(l, "warmup", c.lyapunov.warmup);
      detail::maybe(l, "renorm_interval", c.lyapunov.renorm_interval);
      detail::maybe(l, "network_renorm_interval", c.lyapunov.network_renorm_interval);
      detail::maybe(l, "network_steps", c.lyapunov.network_steps);
      detail::maybe(l, "n_exponents", c.lyapunov.n_exponents);
    }
    if (j.contains("evaluate")) {
      const json& e = j.at("evaluate");
      detail::maybe(e, "rollout_lyap_times", c.evaluate.rollout_lyap_times);
      detail::maybe(e, "washout", c.evaluate.washout);
      detail::maybe(e, "n_bins", c.evaluate.n_bins);
      detail::maybe(e, "le_warmup", c.evaluate.le_warmup);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad config value: ") + e.what());
  }
  return c;
}

/// Field-level command-line overrides; unset fields leave the config alone.
struct Overrides {
  std::optional<std::string> preset;
  std::optional<double> alpha_pi;
  std::optional<int> n_hidden;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  std::optional<long> steps;
};

inline RunConfig resolve_config(const std::optional<fs::path>& path, const Overrides& o) {
  RunConfig c = path ? config_from_json(io::read_json(*path)) : RunConfig{};
  if (o.preset) apply_preset(c, *o.preset);
  if (o.alpha_pi) c.train.alpha_pi = *o.alpha_pi;
  if (o.n_hidden) c.train.n_hidden = *o.n_hidden;
  if (o.seed) c.seed = *o.seed;
  if (o.max_epochs) c.train.max_epochs = *o.max_epochs;
  if (o.steps) c.data.n_steps = *o.steps;
  c.validate();
  return c;
}

inline std::string sha256_file(const fs::path& path) {
  const std::string data = io::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed for " + path.string());
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

inline fs::path default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "pilstm_out";
}

/// Accumulates what a command read and wrote, then writes manifest.json.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg, json args)
      : command_(std::move(command)), config_(to_json(cfg)), args_(std::move(args)), seed_(cfg.seed),
        start_(std::chrono::steady_clock::now()) {}

  void input(const fs::path& p) { inputs_[p.string()] = sha256_file(p); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  json finish(const fs::path& manifest_path) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json j{{"command", command_},       {"config", config_},    {"args", args_},
           {"inputs", inputs_},         {"outputs", outputs_},  {"seed", seed_},
           {"tool_version", kToolVersion}, {"wall_clock_seconds", secs}};
    io::write_json(manifest_path, j);
    return j;
  }

 private:
  std::string command_;
  json config_;
  json args_;
  json inputs_ = json::object();
  json outputs_ = json::array();
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
};

inline void refuse_overwrite(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) throw InvalidInput(p.string() + " exists; pass --force to overwrite");
}

inline Trajectory load_checked_trajectory(const fs::path& path, const RunConfig& cfg) {
  Trajectory t = io::load_trajectory(path);
  if (t.n_dim() != cfg.system.n_dim)
    throw InvalidInput("dataset " + path.string() + " has " + std::to_string(t.n_dim()) +
                       " components but the config says n_dim = " + std::to_string(cfg.system.n_dim));
  if (std::abs(t.dt - cfg.system.dt) > 1e-12 * cfg.system.dt)
    throw InvalidInput("dataset dt " + io::format_double(t.dt) + " differs from config dt " +
                       io::format_double(cfg.system.dt));
  return t;
}

inline LstmParams load_checked_checkpoint(const fs::path& path, const RunConfig& cfg) {
  LstmParams p = io::load_checkpoint(path);
  if (p.dims.n_state() != cfg.system.n_dim)
    throw InvalidInput("checkpoint " + path.string() + " predicts " + std::to_string(p.dims.n_state()) +
                       " components but the config says n_dim = " + std::to_string(cfg.system.n_dim));
  if (!(p.split == cfg.split()))
    throw InvalidInput("checkpoint " + path.string() + " was trained with a different observation split");
  return p;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  fs::path out;
  std::string role = "train";  // train | test
  bool force = false;
};

inline json cmd_generate(const RunConfig& cfg, const GenerateArgs& a) {
  if (a.role != "train" && a.role != "test") throw InvalidInput("role must be 'train' or 'test'");
  refuse_overwrite(a.out, a.force);
  io::TrajectoryMeta meta;
  meta.n_dim = cfg.system.n_dim;
  meta.forcing = cfg.system.forcing;
  meta.dt = cfg.system.dt;
  meta.n_washout = cfg.data.n_washout;
  meta.n_steps = a.role == "train" ? cfg.data.n_steps : cfg.data.test_steps;
  meta.seed = cfg.seed + (a.role == "train" ? kTrainDataSeedOffset : kTestDataSeedOffset);
  meta.t0 = 0.0;

  Manifest m("generate", cfg, {{"out", a.out.string()}, {"role", a.role}});
  const Trajectory t = generate_trajectory(cfg.system, default_initial_condition(cfg.system), meta.n_washout,
                                           meta.n_steps, meta.seed, meta.t0);
  io::save_trajectory(a.out, t, meta);
  m.output(a.out);
  m.output(io::meta_path(a.out));
  m.finish(fs::path(a.out).replace_extension(".manifest.json"));
  return {{"command", "generate"}, {"path", a.out.string()}, {"rows", t.n_states()}, {"seed", meta.seed}};
}

struct TrainArgs {
  fs::path data;
  fs::path out;
  bool force = false;
};

inline Dataset make_dataset(const RunConfig& cfg, const fs::path& data) {
  Dataset d;
  d.spec = cfg.system;
  d.split = cfg.split();
  d.traj = load_checked_trajectory(data, cfg);
  return d;
}

inline TrainConfig effective_train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed + kTrainSeedOffset;
  return t;
}

inline json cmd_train(const RunConfig& cfg, const TrainArgs& a) {
  const fs::path ckpt = a.out / "checkpoint.txt";
  refuse_overwrite(ckpt, a.force);
  const Dataset d = make_dataset(cfg, a.data);
  Manifest m("train", cfg, {{"data", a.data.string()}, {"out", a.out.string()}});
  m.input(a.data);
  const TrainResult r = train(d, effective_train_config(cfg));
  io::save_checkpoint(ckpt, r.params);
  io::write_atomic(a.out / "history.csv", io::history_csv(r.history));
  m.output(ckpt);
  m.output(a.out / "history.csv");
  m.finish(a.out / "manifest.json");
  const auto& best = r.history.epochs[static_cast<std::size_t>(r.history.best_epoch)];
  return {{"command", "train"},
          {"checkpoint", ckpt.string()},
          {"epochs", r.history.epochs.size()},
          {"best_epoch", r.history.best_epoch},
          {"stop_reason", std::string(to_string(r.history.stop_reason))},
          {"best_val_total", best.val.l_total},
          {"alpha_pi", cfg.train.alpha_pi},
          {"n_hidden", cfg.train.n_hidden}};
}

struct SweepArgs {
  fs::path data;
  fs::path out;
};

inline std::string sweep_csv(const std::vector<TrialResult>& trials) {
  std::string out = "rank,trial,n_hidden,alpha_pi,seed,status,best_val_total,best_epoch,epochs\n";
  int rank = 1;
  for (const TrialResult& t : trials) {
    out += std::to_string(rank++) + "," + std::to_string(t.index) + "," + std::to_string(t.n_hidden) + "," +
           io::format_double(t.alpha_pi) + "," + std::to_string(t.seed) + "," + (t.ok ? "ok" : "failed") + "," +
           io::format_double(t.best_val_total) + "," + std::to_string(t.best_epoch) + "," +
           std::to_string(t.epochs_run) + "\n";
  }
  return out;
}

inline json trial_json(const TrialResult& t) {
  return {{"index", t.index},         {"n_hidden", t.n_hidden},     {"alpha_pi", t.alpha_pi},
          {"seed", t.seed},           {"ok", t.ok},                 {"error", t.error},
          {"best_val_total", io::number_or_null(t.best_val_total)}, {"best_epoch", t.best_epoch},
          {"epochs_run", t.epochs_run}};
}

/// Trials whose trial.json exists in the output tree are loaded instead of
/// retrained, so an interrupted sweep resumes where it stopped.
inline json cmd_sweep(const RunConfig& cfg, const SweepArgs& a) {
  const Dataset d = make_dataset(cfg, a.data);
  Manifest m("sweep", cfg, {{"data", a.data.string()}, {"out", a.out.string()}});
  m.input(a.data);
  auto trial_dir = [&](int index) { return a.out / ("trial_" + std::to_string(index)); };
  int resumed = 0;

  SweepHooks hooks;
  hooks.completed = [&](const TrialResult& planned) -> std::optional<TrialResult> {
    const fs::path marker = trial_dir(planned.index) / "trial.json";
    if (!fs::exists(marker)) return std::nullopt;
    const json j = io::read_json(marker);
    if (j.at("n_hidden").get<int>() != planned.n_hidden || j.at("alpha_pi").get<double>() != planned.alpha_pi ||
        j.at("seed").get<std::uint64_t>() != planned.seed)
      return std::nullopt;
    TrialResult t = planned;
    t.ok = j.at("ok").get<bool>();
    t.error = j.at("error").get<std::string>();
    t.best_val_total =
        j.at("best_val_total").is_null() ? std::numeric_limits<double>::infinity() : j.at("best_val_total").get<double>();
    t.best_epoch = j.at("best_epoch").get<int>();
    t.epochs_run = j.at("epochs_run").get<int>();
    ++resumed;
    return t;
  };
  hooks.on_trial = [&](const TrialResult& t) {
    const fs::path dir = trial_dir(t.index);
    if (t.ok) {
      io::save_checkpoint(dir / "checkpoint.txt", t.result->params);
      io::write_atomic(dir / "history.csv", io::history_csv(t.result->history));
    }
    io::write_json(dir / "trial.json", trial_json(t));
  };

  TrainConfig base = effective_train_config(cfg);
  const std::vector<TrialResult> trials = sweep(d, cfg.grid, base, hooks);
  io::write_atomic(a.out / "sweep.csv", sweep_csv(trials));
  for (const TrialResult& t : trials) {
    if (t.ok) m.output(trial_dir(t.index) / "checkpoint.txt");
  }
  m.output(a.out / "sweep.csv");
  m.finish(a.out / "manifest.json");
  json best = trials.front().ok ? trial_json(trials.front()) : json(nullptr);
  return {{"command", "sweep"}, {"trials", trials.size()}, {"resumed", resumed}, {"best", best}};
}

struct LyapunovArgs {
  fs::path out;
  std::optional<fs::path> checkpoint;
  std::optional<std::string> map;  // test hook, e.g. "diag:2,0.5"
  bool force = false;
};

/// Parses "diag:a,b,..." into a diagonal matrix.
inline Matrix parse_diag_map(const std::string& spec) {
  const std::string prefix = "diag:";
  if (spec.rfind(prefix, 0) != 0) throw InvalidInput("unsupported --map '" + spec + "' (expected diag:a,b,...)");
  std::vector<double> values;
  for (const auto& cell : io::split_csv_line(spec.substr(prefix.size()))) values.push_back(io::parse_double(cell));
  if (values.empty()) throw InvalidInput("--map needs at least one value");
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) a(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = values[k];
  return a;
}

inline json cmd_lyapunov(const RunConfig& cfg, const LyapunovArgs& a) {
  const fs::path csv = a.out / "spectrum.csv";
  refuse_overwrite(csv, a.force);
  json args{{"out", a.out.string()}};
  if (a.checkpoint) args["checkpoint"] = a.checkpoint->string();
  if (a.map) args["map"] = *a.map;
  Manifest m("lyapunov", cfg, args);

  const int n_exp = cfg.lyapunov.n_exponents > 0 ? cfg.lyapunov.n_exponents : cfg.system.n_dim;
  LyapunovSpectrum s;
  std::string mode;
  if (a.map) {
    mode = "map";
    const Matrix diag = parse_diag_map(*a.map);
    BenettinOptions o;
    o.n_exponents = static_cast<int>(diag.rows());
    o.n_steps = 1000;
    o.dt = 1.0;
    o.warmup = 0;
    o.source_label = *a.map;
    s = benettin_spectrum(LinearMap(diag), Vector::Zero(diag.rows()), o);
  } else if (a.checkpoint) {
    mode = "network";
    m.input(*a.checkpoint);
    const LstmParams p = load_checked_checkpoint(*a.checkpoint, cfg);
    const ClosedLoopMap map(p);
    BenettinOptions o;
    o.n_exponents = std::min(n_exp, 2 * p.dims.n_hidden);
    o.n_steps = cfg.lyapunov.network_steps;
    o.renorm_interval = cfg.lyapunov.network_renorm_interval;
    o.dt = cfg.system.dt;
    o.warmup = cfg.lyapunov.warmup;
    o.source_label = "network:" + a.checkpoint->string();
    s = benettin_spectrum(map, LstmState::zeros(p.dims.n_hidden).stacked(), o);
  } else {
    mode = "reference";
    ReferenceSpectrumOptions ro;
    ro.n_steps = cfg.lyapunov.n_steps;
    ro.warmup = cfg.lyapunov.warmup;
    ro.n_washout = cfg.data.n_washout;
    ro.renorm_interval = cfg.lyapunov.renorm_interval;
    ro.n_exponents = n_exp;
    ro.seed = cfg.seed + kTrainDataSeedOffset;
    s = reference_spectrum(cfg.system, ro);
  }
  io::write_atomic(csv, io::spectrum_csv(s));
  json meta = io::spectrum_json(s);
  meta["mode"] = mode;
  io::write_json(a.out / "spectrum.json", meta);
  m.output(csv);
  m.output(a.out / "spectrum.json");
  m.finish(a.out / "manifest.json");
  return {{"command", "lyapunov"}, {"mode", mode}, {"spectrum", meta}};
}

struct EvaluateArgs {
  fs::path test_data;
  fs::path out;
  std::vector<fs::path> checkpoints;
  std::vector<std::string> labels;
  bool identity = false;
  bool force = false;
};

inline EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions o;
  o.rollout_lyap_times = cfg.evaluate.rollout_lyap_times;
  o.washout = cfg.evaluate.washout;
  o.n_bins = cfg.evaluate.n_bins;
  o.le_warmup = cfg.evaluate.le_warmup;
  o.n_exponents = cfg.lyapunov.n_exponents;
  o.renorm_interval = cfg.lyapunov.network_renorm_interval;
  o.reference_options.n_steps = cfg.lyapunov.n_steps;
  o.reference_options.warmup = cfg.lyapunov.warmup;
  o.reference_options.n_washout = cfg.data.n_washout;
  o.reference_options.renorm_interval = cfg.lyapunov.renorm_interval;
  o.reference_options.n_exponents = cfg.lyapunov.n_exponents;
  o.reference_options.seed = cfg.seed + kTrainDataSeedOffset;
  return o;
}

inline json cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& a) {
  std::vector<std::string> labels = a.labels;
  const std::size_t n_runs = a.checkpoints.size() + (a.identity ? 1 : 0);
  if (n_runs == 0) throw InvalidInput("evaluate needs at least one --checkpoint or --identity");
  if (labels.empty()) {
    if (a.identity) labels.push_back("identity");
    for (std::size_t k = 0; k < a.checkpoints.size(); ++k)
      labels.push_back(a.checkpoints.size() == 1 ? "model" : "model" + std::to_string(k + 1));
  }
  if (labels.size() != n_runs) throw InvalidInput("need one --label per evaluated run");
  refuse_overwrite(a.out / "les.csv", a.force);

  json args{{"test_data", a.test_data.string()}, {"out", a.out.string()}, {"labels", labels},
            {"identity", a.identity}};
  json ck = json::array();
  for (const auto& c : a.checkpoints) ck.push_back(c.string());
  args["checkpoints"] = ck;
  Manifest m("evaluate", cfg, args);

  const Trajectory test = load_checked_trajectory(a.test_data, cfg);
  m.input(a.test_data);
  std::vector<LstmParams> params;
  for (const auto& c : a.checkpoints) {
    params.push_back(load_checked_checkpoint(c, cfg));
    m.input(c);
  }

  EvalOptions opt = eval_options(cfg);
  opt.reference = reference_spectrum(cfg.system, opt.reference_options);
  const ObservationSplit split = cfg.split();

  std::vector<ReconstructionReport> reports;
  if (a.identity) reports.push_back(evaluate_identity(test, split, cfg.system, opt));
  for (const LstmParams& p : params) reports.push_back(evaluate_model(p, test, split, cfg.system, opt));

  json summary = json::array();
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const fs::path dir = n_runs == 1 ? a.out : a.out / labels[k];
    io::save_report(dir, reports[k]);
    m.output(dir / "report.json");
    json r = io::report_json(reports[k]);
    summary.push_back({{"label", labels[k]},
                       {"lambda1", r["model_spectrum"]["exponents"][0]},
                       {"lambda1_rel_error", r["lambda1_rel_error"]},
                       {"chaotic", r["chaotic"]},
                       {"diverged", r["diverged"]},
                       {"unmeasured", r["unmeasured"]}});
  }
  const ComparisonTable table = compare_runs(reports, labels);
  io::write_atomic(a.out / "les.csv", io::les_csv(table));
  io::write_atomic(a.out / "distances.csv", io::distances_csv(table));
  m.output(a.out / "les.csv");
  m.output(a.out / "distances.csv");
  m.finish(a.out / "manifest.json");
  return {{"command", "evaluate"}, {"runs", summary}};
}

/// Re-executes a manifest's command with its recorded config and arguments,
/// writing into `out` instead of the recorded output location.
inline json cmd_replay(const fs::path& manifest_path, const fs::path& out) {
  const json man = io::read_json(manifest_path);
  const std::string cmd = man.at("command");
  const RunConfig cfg = config_from_json(man);
  const json& args = man.at("args");
  if (cmd == "generate") {
    const fs::path file = fs::path(args.at("out").get<std::string>()).filename();
    return cmd_generate(cfg, {out / file, args.at("role"), true});
  }
  if (cmd == "train") return cmd_train(cfg, {args.at("data").get<std::string>(), out, true});
  if (cmd == "sweep") return cmd_sweep(cfg, {args.at("data").get<std::string>(), out});
  if (cmd == "lyapunov") {
    LyapunovArgs la{out, std::nullopt, std::nullopt, true};
    if (args.contains("checkpoint")) la.checkpoint = args.at("checkpoint").get<std::string>();
    if (args.contains("map")) la.map = args.at("map").get<std::string>();
    return cmd_lyapunov(cfg, la);
  }
  if (cmd == "evaluate") {
    EvaluateArgs ea;
    ea.test_data = args.at("test_data").get<std::string>();
    ea.out = out;
    for (const auto& c : args.at("checkpoints")) ea.checkpoints.emplace_back(c.get<std::string>());
    ea.labels = args.at("labels").get<std::vector<std::string>>();
    ea.identity = args.at("identity");
    ea.force = true;
    return cmd_evaluate(cfg, ea);
  }
  throw InvalidInput("manifest names unknown command '" + cmd + "'");
}

}  // namespace pilstm::cli
