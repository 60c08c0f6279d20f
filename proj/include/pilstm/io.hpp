#pragma once

// File formats: trajectory CSV + JSON sidecar, versioned text checkpoint,
// spectrum CSV, training log, evaluation report files. Every writer goes
// through write_atomic.

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"
#include "pilstm/evaluation.hpp"
#include "pilstm/lyapunov.hpp"
#include "pilstm/network.hpp"
#include "pilstm/training.hpp"

namespace pilstm::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) throw InvalidInput("not a number: '" + s + "'");
  return v;
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Trajectory

struct TrajectoryMeta {
  int n_dim = 0;
  double forcing = 0.0;
  double dt = 0.0;
  long n_washout = 0;
  long n_steps = 0;
  std::uint64_t seed = 0;
  double t0 = 0.0;
};

inline void to_json(json& j, const TrajectoryMeta& m) {
  j = json{{"n_dim", m.n_dim}, {"forcing", m.forcing}, {"dt", m.dt}, {"n_washout", m.n_washout},
           {"n_steps", m.n_steps}, {"seed", m.seed}, {"t0", m.t0}};
}

inline void from_json(const json& j, TrajectoryMeta& m) {
  j.at("n_dim").get_to(m.n_dim);
  j.at("forcing").get_to(m.forcing);
  j.at("dt").get_to(m.dt);
  j.at("n_washout").get_to(m.n_washout);
  j.at("n_steps").get_to(m.n_steps);
  j.at("seed").get_to(m.seed);
  j.at("t0").get_to(m.t0);
}

inline fs::path meta_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t";
  for (Eigen::Index j = 0; j < traj.n_dim(); ++j) out += ",y" + std::to_string(j + 1);
  out += '\n';
  for (Eigen::Index i = 0; i < traj.n_states(); ++i) {
    out += format_double(traj.time(i));
    for (Eigen::Index j = 0; j < traj.n_dim(); ++j) {
      out += ',';
      out += format_double(traj.states(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void save_trajectory(const fs::path& csv, const Trajectory& traj, const TrajectoryMeta& meta) {
  write_atomic(csv, trajectory_csv(traj));
  write_json(meta_path(csv), meta);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

/// Reads the CSV; dt and t0 come from the sidecar when present, otherwise
/// from the time column.
inline Trajectory load_trajectory(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw InvalidInput("cannot open trajectory " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty trajectory file " + csv.string());
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t") throw InvalidInput("trajectory header must start with 't'");
  const auto n = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index j = 0; j < n; ++j)
    if (header[static_cast<std::size_t>(j + 1)] != "y" + std::to_string(j + 1))
      throw InvalidInput("unexpected trajectory column '" + header[static_cast<std::size_t>(j + 1)] + "'");

  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1)
      throw InvalidInput("trajectory row " + std::to_string(times.size() + 1) + " has the wrong width");
    times.push_back(parse_double(cells[0]));
    for (Eigen::Index j = 0; j < n; ++j) values.push_back(parse_double(cells[static_cast<std::size_t>(j + 1)]));
  }
  if (times.empty()) throw InvalidInput("trajectory has no rows");
  Trajectory traj;
  traj.states = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(times.size()), n);
  traj.t0 = times.front();
  traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  if (fs::exists(meta_path(csv))) {
    const TrajectoryMeta meta = read_json(meta_path(csv)).get<TrajectoryMeta>();
    if (meta.n_dim != n) throw InvalidInput("trajectory sidecar n_dim disagrees with the CSV");
    traj.dt = meta.dt;
    traj.t0 = meta.t0;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   pilstm-checkpoint 1
//   dims <n_obs> <n_unmeasured> <n_hidden>
//   cell_variant <paper|standard>
//   observed <i> ...
//   unmeasured <i> ...
//   array <name> <rows> <cols>
//   <row-major values, one row per line>
//   ...
//   end

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class A>
void put_array(std::string& out, const std::string& name, const A& a) {
  out += "array " + name + " " + std::to_string(a.rows()) + " " + std::to_string(a.cols()) + "\n";
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (c) out += ' ';
      out += format_double(a(r, c));
    }
    out += '\n';
  }
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (int i : v) out += " " + std::to_string(i);
  return out;
}

}  // namespace detail

inline std::string checkpoint_text(const LstmParams& p) {
  p.validate();
  std::string out = "pilstm-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  out += "dims " + std::to_string(p.dims.n_obs) + " " + std::to_string(p.dims.n_unmeasured) + " " +
         std::to_string(p.dims.n_hidden) + "\n";
  out += "cell_variant " + std::string(to_string(p.variant)) + "\n";
  out += "observed" + detail::join_ints(p.split.observed) + "\n";
  out += "unmeasured" + detail::join_ints(p.split.unmeasured) + "\n";
  const auto& w = p.weights;
  detail::put_array(out, "W_i", w.gate(Gate::input));
  detail::put_array(out, "W_f", w.gate(Gate::forget));
  detail::put_array(out, "W_o", w.gate(Gate::output));
  detail::put_array(out, "W_g", w.gate(Gate::candidate));
  detail::put_array(out, "b_i", w.bias(Gate::input));
  detail::put_array(out, "b_f", w.bias(Gate::forget));
  detail::put_array(out, "b_o", w.bias(Gate::output));
  detail::put_array(out, "b_g", w.bias(Gate::candidate));
  detail::put_array(out, "W_dense", w.dense);
  detail::put_array(out, "b_dense", w.dense_bias);
  detail::put_array(out, "norm_mean", p.norm_mean);
  detail::put_array(out, "norm_std", p.norm_std);
  out += "end\n";
  return out;
}

inline void save_checkpoint(const fs::path& path, const LstmParams& p) { write_atomic(path, checkpoint_text(p)); }

inline LstmParams parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "pilstm-checkpoint") throw InvalidInput("not a checkpoint file");
  if (version != kCheckpointVersion) throw InvalidInput("unsupported checkpoint version " + std::to_string(version));

  LstmParams p;
  auto expect = [&](const char* want) {
    if (!(in >> tag) || tag != want) throw InvalidInput(std::string("checkpoint: expected '") + want + "'");
  };
  expect("dims");
  in >> p.dims.n_obs >> p.dims.n_unmeasured >> p.dims.n_hidden;
  expect("cell_variant");
  in >> tag;
  p.variant = parse_cell_variant(tag);
  auto read_ints = [&](std::vector<int>& v) {
    std::string line;
    std::getline(in, line);
    std::istringstream ls(line);
    int i;
    while (ls >> i) v.push_back(i);
  };
  expect("observed");
  read_ints(p.split.observed);
  expect("unmeasured");
  read_ints(p.split.unmeasured);
  if (!in) throw InvalidInput("checkpoint header is truncated");

  p.weights = LstmWeights::zeros(p.dims);
  p.norm_mean = Vector::Zero(p.dims.n_state());
  p.norm_std = Vector::Ones(p.dims.n_state());
  auto read_into = [&](const std::string& name, auto&& dst) {
    expect("array");
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    in >> got >> rows >> cols;
    if (got != name) throw InvalidInput("checkpoint: expected array " + name + ", found " + got);
    if (rows != dst.rows() || cols != dst.cols()) throw InvalidInput("checkpoint: array " + name + " has wrong shape");
    std::string cell;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> cell)) throw InvalidInput("checkpoint: array " + name + " is truncated");
        dst(r, c) = parse_double(cell);
      }
  };
  auto& w = p.weights;
  read_into("W_i", w.gate(Gate::input));
  read_into("W_f", w.gate(Gate::forget));
  read_into("W_o", w.gate(Gate::output));
  read_into("W_g", w.gate(Gate::candidate));
  read_into("b_i", w.bias(Gate::input));
  read_into("b_f", w.bias(Gate::forget));
  read_into("b_o", w.bias(Gate::output));
  read_into("b_g", w.bias(Gate::candidate));
  read_into("W_dense", w.dense);
  read_into("b_dense", w.dense_bias);
  read_into("norm_mean", p.norm_mean);
  read_into("norm_std", p.norm_std);
  expect("end");
  p.validate();
  return p;
}

inline LstmParams load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidInput("checkpoint not found: " + path.string());
  return parse_checkpoint(read_file(path));
}

// ---------------------------------------------------------------------------
// Spectrum, training log, report

inline std::string spectrum_csv(const LyapunovSpectrum& s) {
  std::string out = "index,exponent\n";
  for (Eigen::Index k = 0; k < s.exponents.size(); ++k)
    out += std::to_string(k + 1) + "," + format_double(s.exponents[k]) + "\n";
  return out;
}

/// NaN becomes null so the JSON stays valid.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json spectrum_json(const LyapunovSpectrum& s) {
  json ex = json::array();
  for (double v : s.exponents) ex.push_back(number_or_null(v));
  json j{{"exponents", ex},       {"n_steps", s.n_steps},           {"dt", s.dt},
         {"renorm_interval", s.renorm_interval}, {"source", s.source_label}, {"n_positive", s.n_positive()}};
  if (auto tau = s.lyapunov_time()) j["lyapunov_time"] = *tau;
  return j;
}

inline std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_ldd,train_lpi,train_total,val_ldd,val_lpi,val_total\n";
  for (const EpochRecord& e : h.epochs) {
    out += std::to_string(e.epoch);
    for (double v : {e.train.l_dd, e.train.l_pi, e.train.l_total, e.val.l_dd, e.val.l_pi, e.val.l_total})
      out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

inline std::string pdf_csv(const VariableReport& v) {
  std::string out = "bin_center,target_density,model_density\n";
  for (Eigen::Index k = 0; k < v.reference_pdf.n_bins(); ++k)
    out += format_double(v.reference_pdf.bin_center(k)) + "," + format_double(v.reference_pdf.density[k]) + "," +
           format_double(v.model_pdf.density[k]) + "\n";
  return out;
}

/// One column per run after the reference, rows in descending exponent order.
inline std::string les_csv(const ComparisonTable& t) {
  std::string out = "index,reference";
  if (t.labels.size() == 1)
    out += ",model";
  else
    for (const auto& l : t.labels) out += "," + l;
  out += '\n';
  for (Eigen::Index k = 0; k < t.reference.size(); ++k) {
    out += std::to_string(k + 1) + "," + format_double(t.reference[k]);
    for (const Vector& e : t.exponents) out += "," + (k < e.size() ? format_double(e[k]) : std::string("nan"));
    out += '\n';
  }
  return out;
}

inline std::string distances_csv(const ComparisonTable& t) {
  std::string out = "variable";
  for (const auto& l : t.labels) out += "," + l + "_wasserstein," + l + "_histogram";
  out += '\n';
  for (std::size_t k = 0; k < t.variables.size(); ++k) {
    out += "y" + std::to_string(t.variables[k] + 1);
    for (std::size_t r = 0; r < t.labels.size(); ++r)
      out += "," + format_double(t.distances[k][r]) + "," + format_double(t.histogram[k][r]);
    out += '\n';
  }
  return out;
}

inline json variable_json(const VariableReport& v) {
  return json{{"variable", v.index},
              {"name", "y" + std::to_string(v.index + 1)},
              {"wasserstein", number_or_null(v.wasserstein)},
              {"histogram_distance", number_or_null(v.histogram_distance)},
              {"reference_mean", v.reference_mean},
              {"reference_std", v.reference_std},
              {"model_mean", number_or_null(v.model_mean)},
              {"model_std", number_or_null(v.model_std)}};
}

inline json report_json(const ReconstructionReport& r) {
  json unm = json::array(), obs = json::array();
  for (const auto& v : r.unmeasured) unm.push_back(variable_json(v));
  for (const auto& v : r.observed) obs.push_back(variable_json(v));
  return json{{"unmeasured", unm},
              {"observed", obs},
              {"model_spectrum", spectrum_json(r.model_spectrum)},
              {"reference_spectrum", spectrum_json(r.reference_spectrum)},
              {"lambda1_rel_error", number_or_null(r.lambda1_rel_error)},
              {"chaotic", r.chaotic},
              {"diverged", r.diverged},
              {"divergence_message", r.divergence_message},
              {"rollout_steps", r.rollout_steps},
              {"rollout_length_in_lyapunov_times", r.rollout_length_in_lyapunov_times}};
}

/// report.json, pdf_<var>.csv and les.csv for one evaluated model.
inline void save_report(const fs::path& dir, const ReconstructionReport& r) {
  write_json(dir / "report.json", report_json(r));
  for (const auto& v : r.unmeasured) write_atomic(dir / ("pdf_y" + std::to_string(v.index + 1) + ".csv"), pdf_csv(v));
  write_atomic(dir / "les.csv", les_csv(compare_runs({r}, {"model"})));
}

}  // namespace pilstm::io
