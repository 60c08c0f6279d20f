#pragma once

// Physics-regularized training of the LSTM.
//
// Loss on a window of L teacher-forced predictions:
//   l_dd = mean_{t,k} (x_hat_t - x_t)^2                 normalized units
//   l_pi = mean_{t<L-1,k} ((y_{t+1} - y_t)/dt - f(y_t))^2  physical units
//   l    = l_dd + alpha_pi * l_pi
// The residual at the last index of a window is dropped. Gradients are
// exact reverse mode through the recurrence, the forward difference and
// the de-normalization.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"
#include "pilstm/network.hpp"

namespace pilstm {

struct LossBreakdown {
  double l_dd = 0.0;
  double l_pi = 0.0;
  double l_total = 0.0;
  double alpha_pi = 0.0;
};

inline LossBreakdown total_loss(double l_dd, double l_pi, double alpha_pi) {
  if (alpha_pi < 0.0 || !std::isfinite(alpha_pi)) throw InvalidInput("alpha_pi must be finite and >= 0");
  if (l_dd < 0.0 || l_pi < 0.0) throw InvalidInput("loss terms must be nonnegative");
  return {l_dd, l_pi, l_dd + alpha_pi * l_pi, alpha_pi};
}

/// Mean squared error over time steps and components; rows are time.
inline double data_driven_loss(const RowMatrix& pred_x, const RowMatrix& target_x) {
  if (pred_x.rows() != target_x.rows() || pred_x.cols() != target_x.cols())
    throw InvalidInput("prediction and target shapes differ");
  if (pred_x.size() == 0) throw InvalidInput("empty loss input");
  return (pred_x - target_x).squaredNorm() / static_cast<double>(pred_x.size());
}

/// Mean squared forward-difference residual of Lorenz-96 over rows 0..L-2.
/// `pred_y` holds physical states in index order, one per row.
inline double physics_loss(const RowMatrix& pred_y, const SystemSpec& spec) {
  spec.validate();
  if (pred_y.rows() < 2) throw InvalidInput("physics_loss needs at least two states");
  if (pred_y.cols() != spec.n_dim) throw InvalidInput("state width does not match spec");
  double sum = 0.0;
  for (Eigen::Index t = 0; t + 1 < pred_y.rows(); ++t) {
    const Vector y0 = pred_y.row(t).transpose();
    const Vector y1 = pred_y.row(t + 1).transpose();
    const Vector r = (y1 - y0) / spec.dt - lorenz96_rhs(y0, spec.forcing);
    sum += r.squaredNorm();
  }
  return sum / static_cast<double>((pred_y.rows() - 1) * pred_y.cols());
}

struct TrainConfig {
  int n_hidden = 20;
  int window_len = 64;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha_pi = 0.0;
  int max_epochs = 200;
  int patience = 20;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
  CellVariant cell_variant = CellVariant::paper;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const {
    if (n_hidden < 1) throw InvalidInput("n_hidden must be >= 1");
    if (window_len < 2) throw InvalidInput("window_len must be >= 2");
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw InvalidInput("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw InvalidInput("adam_eps must be positive");
    if (alpha_pi < 0.0 || !std::isfinite(alpha_pi)) throw InvalidInput("alpha_pi must be finite and >= 0");
    if (max_epochs < 1) throw InvalidInput("max_epochs must be >= 1");
    if (patience < 0) throw InvalidInput("patience must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidInput("val_fraction must lie in (0, 1)");
    if (clip_norm < 0.0) throw InvalidInput("clip_norm must be >= 0");
  }
};

/// A batch of equal-length windows laid out per time step: inputs[t] and
/// targets[t] are N_x x B, one column per window.
struct WindowBatch {
  std::vector<Matrix> inputs;
  std::vector<Matrix> targets;

  int length() const { return static_cast<int>(inputs.size()); }
  Eigen::Index batch() const { return inputs.empty() ? 0 : inputs.front().cols(); }

  static WindowBatch single(const RowMatrix& inputs, const RowMatrix& targets) {
    if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols())
      throw InvalidInput("window inputs and targets differ in shape");
    WindowBatch b;
    for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
      b.inputs.emplace_back(inputs.row(t).transpose());
      b.targets.emplace_back(targets.row(t).transpose());
    }
    return b;
  }

  /// Windows cut from a normalized observed sequence: window b reads rows
  /// starts[b] .. starts[b]+len-1 and predicts the rows one step later.
  static WindowBatch gather(const RowMatrix& sequence, const std::vector<Eigen::Index>& starts, int len) {
    WindowBatch b;
    const auto n = static_cast<Eigen::Index>(starts.size());
    b.inputs.assign(static_cast<std::size_t>(len), Matrix(sequence.cols(), n));
    b.targets.assign(static_cast<std::size_t>(len), Matrix(sequence.cols(), n));
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index s = starts[static_cast<std::size_t>(j)];
      if (s < 0 || s + len >= sequence.rows()) throw InvalidInput("window runs past the end of the sequence");
      for (int t = 0; t < len; ++t) {
        b.inputs[static_cast<std::size_t>(t)].col(j) = sequence.row(s + t).transpose();
        b.targets[static_cast<std::size_t>(t)].col(j) = sequence.row(s + t + 1).transpose();
      }
    }
    return b;
  }
};

struct GradientResult {
  LstmWeights grad;
  LossBreakdown loss;
};

/// Weights of the two loss terms in the backward pass. The reported loss
/// always uses `pi` as alpha_pi.
struct LossWeights {
  double dd = 1.0;
  double pi = 0.0;
};

namespace detail {

/// Columnwise Lorenz-96 residual pieces for a batch of physical states
/// (N x B, index order).
inline Matrix rhs_columns(const Matrix& y, double forcing) {
  Matrix out(y.rows(), y.cols());
  for (Eigen::Index b = 0; b < y.cols(); ++b) out.col(b) = lorenz96_rhs(y.col(b), forcing);
  return out;
}

inline Matrix vjp_columns(const Matrix& y, const Matrix& r) {
  Matrix out(y.rows(), y.cols());
  for (Eigen::Index b = 0; b < y.cols(); ++b) out.col(b) = lorenz96_vjp(y.col(b), r.col(b));
  return out;
}

/// Forward pass, loss, and (optionally) the full backward pass over a batch.
inline GradientResult run_batch(const LstmParams& p, const WindowBatch& batch, const SystemSpec& spec,
                                LossWeights weights, bool with_gradient) {
  const int len = batch.length();
  const Eigen::Index bsz = batch.batch();
  const Eigen::Index nh = p.dims.n_hidden;
  const Eigen::Index nx = p.dims.n_obs;
  const Eigen::Index n = p.dims.n_state();
  if (len < 2) throw InvalidInput("window length must be >= 2");
  if (bsz < 1) throw InvalidInput("empty batch");
  if (spec.n_dim != n) throw InvalidInput("network state size does not match the system");

  // Forward.
  std::vector<CellBatch> cells(static_cast<std::size_t>(len));
  std::vector<Matrix> preds(static_cast<std::size_t>(len));
  const Matrix zeros = Matrix::Zero(nh, bsz);
  for (int t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Matrix& c_prev = t == 0 ? zeros : cells[ts - 1].c;
    const Matrix& h_prev = t == 0 ? zeros : cells[ts - 1].h;
    cell_forward(p, batch.inputs[ts], c_prev, h_prev, cells[ts]);
    preds[ts].noalias() = p.weights.dense * cells[ts].h;
    preds[ts].colwise() += p.weights.dense_bias;
    if (!preds[ts].allFinite()) throw NumericError("non-finite prediction", ts);
  }

  // Physical states in index order.
  const std::vector<int> order = p.split.readout_order();
  std::vector<Matrix> phys(static_cast<std::size_t>(len), Matrix(n, bsz));
  for (int t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    for (Eigen::Index k = 0; k < n; ++k)
      phys[ts].row(order[static_cast<std::size_t>(k)]) =
          (preds[ts].row(k).array() * p.norm_std[k] + p.norm_mean[k]).matrix();
  }

  const double dd_scale = 1.0 / static_cast<double>(bsz * len * nx);
  const double pi_scale = 1.0 / static_cast<double>(bsz * (len - 1) * n);
  double dd_sum = 0.0;
  double pi_sum = 0.0;
  std::vector<Matrix> residual(static_cast<std::size_t>(len - 1));
  for (int t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    dd_sum += (preds[ts].topRows(nx) - batch.targets[ts]).squaredNorm();
    if (t + 1 < len) {
      residual[ts] = (phys[ts + 1] - phys[ts]) / spec.dt - rhs_columns(phys[ts], spec.forcing);
      pi_sum += residual[ts].squaredNorm();
    }
  }

  GradientResult out;
  out.loss = total_loss(dd_sum * dd_scale, pi_sum * pi_scale, weights.pi);
  if (!with_gradient) return out;

  // dL/d(pred_t) in normalized readout order.
  std::vector<Matrix> dpred(static_cast<std::size_t>(len), Matrix::Zero(n, bsz));
  for (int t = 0; t < len; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    if (weights.dd != 0.0)
      dpred[ts].topRows(nx) = (2.0 * weights.dd * dd_scale) * (preds[ts].topRows(nx) - batch.targets[ts]);
    if (weights.pi != 0.0) {
      Matrix gphys = Matrix::Zero(n, bsz);
      if (t + 1 < len) gphys -= residual[ts] / spec.dt + vjp_columns(phys[ts], residual[ts]);
      if (t > 0) gphys += residual[ts - 1] / spec.dt;
      gphys *= 2.0 * weights.pi * pi_scale;
      for (Eigen::Index k = 0; k < n; ++k)
        dpred[ts].row(k) += p.norm_std[k] * gphys.row(order[static_cast<std::size_t>(k)]);
    }
  }

  // Backward through readout and recurrence.
  out.grad = LstmWeights::zeros(p.dims);
  LstmWeights& g = out.grad;
  Matrix dh_next = Matrix::Zero(nh, bsz);
  Matrix dc_next = Matrix::Zero(nh, bsz);
  Matrix dpre(4 * nh, bsz);
  for (int t = len - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    const CellBatch& cb = cells[ts];
    const Matrix& c_prev = t == 0 ? zeros : cells[ts - 1].c;
    const Matrix& h_prev = t == 0 ? zeros : cells[ts - 1].h;

    g.dense.noalias() += dpred[ts] * cb.h.transpose();
    g.dense_bias += dpred[ts].rowwise().sum();
    Matrix dh = dh_next;
    dh.noalias() += p.weights.dense.transpose() * dpred[ts];

    const auto i = cb.gates.topRows(nh).array();
    const auto f = cb.gates.middleRows(nh, nh).array();
    const auto o = cb.gates.middleRows(2 * nh, nh).array();
    const auto gg = cb.gates.bottomRows(nh).array();

    Eigen::ArrayXXd dc = dc_next.array() + dh.array() * o * (1.0 - cb.tanh_c.array().square());
    Eigen::ArrayXXd du = dc;
    if (p.variant == CellVariant::paper) du *= cb.c.array() * (1.0 - cb.c.array());

    dpre.topRows(nh) = (du * gg * i * (1.0 - i)).matrix();
    dpre.middleRows(nh, nh) = (du * c_prev.array() * f * (1.0 - f)).matrix();
    dpre.middleRows(2 * nh, nh) = (dh.array() * cb.tanh_c.array() * o * (1.0 - o)).matrix();
    dpre.bottomRows(nh) = (du * i * (1.0 - gg.square())).matrix();

    g.gates.leftCols(nx).noalias() += dpre * batch.inputs[ts].transpose();
    g.gates.rightCols(nh).noalias() += dpre * h_prev.transpose();
    g.gate_bias += dpre.rowwise().sum();

    dh_next.noalias() = p.weights.gates.rightCols(nh).transpose() * dpre;
    dc_next = (du * f).matrix();
  }
  if (!g.allFinite()) throw NumericError("non-finite gradient", 0);
  return out;
}

}  // namespace detail

/// Exact gradient of l_dd + alpha_pi * l_pi over one teacher-forced window.
/// `inputs` row t is x(t_t), `targets` row t is x(t_{t+1}), both normalized.
inline GradientResult bptt_gradient(const LstmParams& p, const RowMatrix& inputs, const RowMatrix& targets,
                                    const SystemSpec& spec, double alpha_pi) {
  if (alpha_pi < 0.0) throw InvalidInput("alpha_pi must be >= 0");
  return detail::run_batch(p, WindowBatch::single(inputs, targets), spec, {1.0, alpha_pi}, true);
}

/// Gradient averaged over a batch of windows.
inline GradientResult batch_gradient(const LstmParams& p, const WindowBatch& batch, const SystemSpec& spec,
                                     LossWeights weights) {
  return detail::run_batch(p, batch, spec, weights, true);
}

inline LossBreakdown batch_loss(const LstmParams& p, const WindowBatch& batch, const SystemSpec& spec,
                                double alpha_pi) {
  return detail::run_batch(p, batch, spec, {1.0, alpha_pi}, false).loss;
}

struct AdamState {
  LstmWeights m;
  LstmWeights v;
  long t = 0;

  static AdamState zeros(const LstmDims& d) { return {LstmWeights::zeros(d), LstmWeights::zeros(d), 0}; }
};

inline void adam_step(LstmWeights& params, const LstmWeights& grads, AdamState& state, const TrainConfig& cfg) {
  state.t += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for_each_array(
      [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        p.array() -= cfg.learning_rate * (m.array() / corr1) / ((v.array() / corr2).sqrt() + cfg.adam_eps);
      },
      params, grads, state.m, state.v);
}

inline double gradient_norm(const LstmWeights& g) {
  double sq = 0.0;
  for_each_array([&](const auto& a) { sq += a.squaredNorm(); }, g);
  return std::sqrt(sq);
}

enum class StopReason { early_stop, max_epochs };

inline std::string_view to_string(StopReason r) { return r == StopReason::early_stop ? "early_stop" : "max_epochs"; }

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;
  LossBreakdown val;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  StopReason stop_reason = StopReason::max_epochs;
};

/// An observed-only training trajectory; `traj` may contain the unmeasured
/// columns but training never reads them.
struct Dataset {
  Trajectory traj;
  ObservationSplit split;
  SystemSpec spec;
};

/// Chronological train/validation layout of a dataset.
struct DataLayout {
  Eigen::Index n_train_rows = 0;
  Eigen::Index n_val_rows = 0;
  std::vector<Eigen::Index> train_starts;
  std::vector<Eigen::Index> val_starts;  // relative to the validation block
};

inline DataLayout layout_dataset(Eigen::Index n_rows, const TrainConfig& cfg) {
  DataLayout d;
  d.n_val_rows = static_cast<Eigen::Index>(std::floor(cfg.val_fraction * static_cast<double>(n_rows)));
  d.n_train_rows = n_rows - d.n_val_rows;
  auto cut = [&](Eigen::Index rows) {
    std::vector<Eigen::Index> starts;
    for (Eigen::Index s = 0; s + cfg.window_len < rows; s += cfg.window_len) starts.push_back(s);
    return starts;
  };
  d.train_starts = cut(d.n_train_rows);
  d.val_starts = cut(d.n_val_rows);
  if (d.train_starts.empty() || d.val_starts.empty())
    throw InvalidInput("dataset of " + std::to_string(n_rows) + " states is too short for window_len " +
                       std::to_string(cfg.window_len) + " and val_fraction " + std::to_string(cfg.val_fraction));
  return d;
}

/// Per-component z-score statistics of the observed columns of the training
/// block. Unmeasured components get the pooled observed mean and rms std,
/// since their own data is never available.
inline void fit_normalization(LstmParams& p, const RowMatrix& observed_train) {
  const Eigen::Index nx = observed_train.cols();
  const double rows = static_cast<double>(observed_train.rows());
  Vector mean(nx), var(nx);
  for (Eigen::Index j = 0; j < nx; ++j) {
    mean[j] = observed_train.col(j).sum() / rows;
    var[j] = (observed_train.col(j).array() - mean[j]).square().sum() / rows;
  }
  p.norm_mean.resize(p.dims.n_state());
  p.norm_std.resize(p.dims.n_state());
  for (Eigen::Index j = 0; j < nx; ++j) {
    p.norm_mean[j] = mean[j];
    p.norm_std[j] = var[j] > 1e-24 ? std::sqrt(var[j]) : 1.0;
  }
  const double pooled_mean = mean.mean();
  const double pooled_var = var.mean();
  for (Eigen::Index j = nx; j < p.dims.n_state(); ++j) {
    p.norm_mean[j] = pooled_mean;
    p.norm_std[j] = pooled_var > 1e-24 ? std::sqrt(pooled_var) : 1.0;
  }
}

struct TrainResult {
  LstmParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  data.spec.validate();
  data.split.validate(data.spec.n_dim);
  if (data.traj.n_dim() != data.spec.n_dim)
    throw InvalidInput("dataset has " + std::to_string(data.traj.n_dim()) + " components, spec expects " +
                       std::to_string(data.spec.n_dim));
  if (data.split.observed.empty()) throw InvalidInput("at least one variable must be observed");

  const DataLayout layout = layout_dataset(data.traj.n_states(), cfg);
  const RowMatrix observed = split_observations(data.traj, data.split).first;

  const LstmDims dims{static_cast<int>(data.split.observed.size()), static_cast<int>(data.split.unmeasured.size()),
                      cfg.n_hidden};
  LstmParams params = init_params(dims, cfg.seed, data.split, cfg.cell_variant);
  fit_normalization(params, observed.topRows(layout.n_train_rows));

  const RowMatrix normalized = normalize_observed(params, observed);
  const RowMatrix train_seq = normalized.topRows(layout.n_train_rows);
  const RowMatrix val_seq = normalized.bottomRows(layout.n_val_rows);
  const WindowBatch val_batch = WindowBatch::gather(val_seq, layout.val_starts, cfg.window_len);

  std::mt19937_64 shuffle_rng(cfg.seed + 1);
  AdamState adam = AdamState::zeros(dims);
  TrainResult result;
  LstmWeights best_weights = params.weights;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<Eigen::Index> order = layout.train_starts;

  result.history.stop_reason = StopReason::max_epochs;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the portable uniform draw.
    for (std::size_t k = order.size(); k > 1; --k) {
      const auto j = static_cast<std::size_t>(uniform01(shuffle_rng) * static_cast<double>(k));
      std::swap(order[k - 1], order[std::min(j, k - 1)]);
    }

    double dd = 0.0, pi = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Eigen::Index> starts(order.begin() + static_cast<std::ptrdiff_t>(first),
                                             order.begin() + static_cast<std::ptrdiff_t>(last));
      const WindowBatch batch = WindowBatch::gather(train_seq, starts, cfg.window_len);
      GradientResult gr = batch_gradient(params, batch, data.spec, {1.0, cfg.alpha_pi});
      if (cfg.clip_norm > 0.0) {
        const double norm = gradient_norm(gr.grad);
        if (norm > cfg.clip_norm)
          for_each_array([&](auto& a) { a *= cfg.clip_norm / norm; }, gr.grad);
      }
      adam_step(params.weights, gr.grad, adam, cfg);
      const double w = static_cast<double>(last - first);
      dd += w * gr.loss.l_dd;
      pi += w * gr.loss.l_pi;
    }
    const double n_win = static_cast<double>(order.size());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = total_loss(dd / n_win, pi / n_win, cfg.alpha_pi);
    rec.val = batch_loss(params, val_batch, data.spec, cfg.alpha_pi);
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!std::isfinite(rec.val.l_total)) throw NumericError("validation loss is not finite", static_cast<std::size_t>(epoch));
    if (rec.val.l_total < best_val) {
      best_val = rec.val.l_total;
      best_weights = params.weights;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      result.history.stop_reason = StopReason::early_stop;
      break;
    }
  }
  params.weights = best_weights;
  result.params = std::move(params);
  return result;
}

struct SweepGrid {
  std::vector<int> n_hidden;
  std::vector<double> alpha_pi;

  std::size_t size() const { return n_hidden.size() * alpha_pi.size(); }
};

struct TrialResult {
  int index = 0;
  int n_hidden = 0;
  double alpha_pi = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double best_val_total = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  std::optional<TrainResult> result;  // absent for resumed or failed trials
};

struct SweepHooks {
  /// Returns a stored result to skip a trial already completed.
  std::function<std::optional<TrialResult>(const TrialResult& planned)> completed;
  std::function<void(const TrialResult&)> on_trial;
};

/// Offset between per-trial seeds.
inline constexpr std::uint64_t kTrialSeedStride = 1000;

/// Trains every grid point, n_hidden outer, alpha_pi inner. Returns trials
/// ranked by best validation loss; failed trials sort last.
inline std::vector<TrialResult> sweep(const Dataset& data, const SweepGrid& grid, const TrainConfig& base,
                                      const SweepHooks& hooks = {}) {
  if (grid.size() == 0) throw InvalidInput("sweep grid is empty");
  std::vector<TrialResult> trials;
  int index = 0;
  for (int nh : grid.n_hidden) {
    for (double alpha : grid.alpha_pi) {
      TrialResult trial;
      trial.index = index;
      trial.n_hidden = nh;
      trial.alpha_pi = alpha;
      trial.seed = base.seed + kTrialSeedStride * static_cast<std::uint64_t>(index);
      ++index;
      if (hooks.completed) {
        if (auto done = hooks.completed(trial)) {
          trials.push_back(std::move(*done));
          continue;
        }
      }
      TrainConfig cfg = base;
      cfg.n_hidden = nh;
      cfg.alpha_pi = alpha;
      cfg.seed = trial.seed;
      try {
        TrainResult r = train(data, cfg);
        trial.ok = true;
        trial.best_epoch = r.history.best_epoch;
        trial.epochs_run = static_cast<int>(r.history.epochs.size());
        trial.best_val_total = r.history.epochs[static_cast<std::size_t>(r.history.best_epoch)].val.l_total;
        trial.result = std::move(r);
      } catch (const Error& e) {
        trial.ok = false;
        trial.error = e.what();
      }
      if (hooks.on_trial) hooks.on_trial(trial);
      trials.push_back(std::move(trial));
    }
  }
  std::stable_sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.ok != b.ok) return a.ok;
    return a.best_val_total < b.best_val_total;
  });
  return trials;
}

/// Published hyperparameters of the three reconstruction cases.
struct Preset {
  std::string name;
  int n_unmeasured = 0;
  int n_hidden = 0;
  double alpha_pi = 0.0;
};

inline std::optional<Preset> find_preset(std::string_view name) {
  static const Preset presets[] = {
      {"case-i", 1, 100, 0.01},
      {"case-ii", 3, 100, 0.01},
      {"case-iii", 5, 50, 0.001},
  };
  for (const Preset& p : presets)
    if (p.name == name) return p;
  return std::nullopt;
}

/// N_h in {20, 50, 100} and alpha_pi = 1e-9 .. 1 in decades.
inline SweepGrid published_grid() {
  SweepGrid g;
  g.n_hidden = {20, 50, 100};
  for (int e = -9; e <= 0; ++e) g.alpha_pi.push_back(std::pow(10.0, e));
  return g;
}

}  // namespace pilstm
