#pragma once

// LSTM cell with dense full-state readout, run either teacher-forced (open
// loop) or autonomously on its own observed-variable predictions (closed
// loop).
//
// Cell update, with a = [x; h]:
//   i = sig(W_i a + b_i)   f = sig(W_f a + b_f)   o = sig(W_o a + b_o)
//   g = tanh(W_g a + b_g)
//   c' = sig(f*c + i*g)          (CellVariant::paper)
//   c' = f*c + i*g               (CellVariant::standard)
//   h' = tanh(c') * o
//   y  = W_dense h' + b_dense    (rows: observed, then unmeasured)
//
// Everything the network sees and produces is z-scored with the stored
// per-component statistics.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"

namespace pilstm {

enum class CellVariant { paper, standard };

inline std::string_view to_string(CellVariant v) { return v == CellVariant::paper ? "paper" : "standard"; }

inline CellVariant parse_cell_variant(std::string_view s) {
  if (s == "paper") return CellVariant::paper;
  if (s == "standard") return CellVariant::standard;
  throw InvalidInput("unknown cell variant: " + std::string(s));
}

enum class Gate : int { input = 0, forget = 1, output = 2, candidate = 3 };

struct LstmDims {
  int n_obs = 0;
  int n_unmeasured = 0;
  int n_hidden = 0;

  int n_state() const { return n_obs + n_unmeasured; }
  int n_input() const { return n_obs + n_hidden; }
  bool operator==(const LstmDims&) const = default;
};

/// Trainable arrays. Gate weights are stacked row-wise in the order
/// input, forget, output, candidate; each block is N_h x (N_x + N_h) with
/// the input columns first.
struct LstmWeights {
  Matrix gates;
  Vector gate_bias;
  Matrix dense;
  Vector dense_bias;

  static LstmWeights zeros(const LstmDims& d) {
    return {Matrix::Zero(4 * d.n_hidden, d.n_input()), Vector::Zero(4 * d.n_hidden),
            Matrix::Zero(d.n_state(), d.n_hidden), Vector::Zero(d.n_state())};
  }

  Eigen::Index size() const { return gates.size() + gate_bias.size() + dense.size() + dense_bias.size(); }

  auto gate(Gate g) { return gates.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto gate(Gate g) const { return gates.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto bias(Gate g) { return gate_bias.segment(static_cast<int>(g) * hidden(), hidden()); }
  auto bias(Gate g) const { return gate_bias.segment(static_cast<int>(g) * hidden(), hidden()); }

  bool allFinite() const {
    return gates.allFinite() && gate_bias.allFinite() && dense.allFinite() && dense_bias.allFinite();
  }

  bool operator==(const LstmWeights& o) const {
    return gates == o.gates && gate_bias == o.gate_bias && dense == o.dense && dense_bias == o.dense_bias;
  }

 private:
  Eigen::Index hidden() const { return gates.rows() / 4; }
};

/// Calls f on the matching arrays of every argument, one array at a time.
template <class F, class... W>
void for_each_array(F&& f, W&... w) {
  f(w.gates...);
  f(w.gate_bias...);
  f(w.dense...);
  f(w.dense_bias...);
}

inline Vector flatten(const LstmWeights& w) {
  Vector out(w.size());
  Eigen::Index pos = 0;
  for_each_array(
      [&](const auto& a) {
        out.segment(pos, a.size()) = a.reshaped();
        pos += a.size();
      },
      w);
  return out;
}

inline void unflatten(const Vector& flat, LstmWeights& w) {
  if (flat.size() != w.size()) throw InvalidInput("flat parameter vector has the wrong length");
  Eigen::Index pos = 0;
  for_each_array(
      [&](auto& a) {
        a.reshaped() = flat.segment(pos, a.size());
        pos += a.size();
      },
      w);
}

struct LstmParams {
  LstmDims dims;
  CellVariant variant = CellVariant::paper;
  ObservationSplit split;
  LstmWeights weights;
  Vector norm_mean;  // readout order: observed then unmeasured, physical units
  Vector norm_std;

  void validate() const {
    if (dims.n_obs < 1 || dims.n_hidden < 1 || dims.n_unmeasured < 0) throw InvalidInput("invalid network dims");
    split.validate(dims.n_state());
    if (static_cast<int>(split.observed.size()) != dims.n_obs)
      throw InvalidInput("split does not match network dims");
    const auto& w = weights;
    if (w.gates.rows() != 4 * dims.n_hidden || w.gates.cols() != dims.n_input() ||
        w.gate_bias.size() != 4 * dims.n_hidden || w.dense.rows() != dims.n_state() ||
        w.dense.cols() != dims.n_hidden || w.dense_bias.size() != dims.n_state())
      throw InvalidInput("weight shapes do not match network dims");
    if (norm_mean.size() != dims.n_state() || norm_std.size() != dims.n_state())
      throw InvalidInput("normalization statistics have the wrong length");
    if (!(norm_std.array() > 0.0).all()) throw InvalidInput("normalization std must be positive");
    if (!w.allFinite() || !norm_mean.allFinite() || !norm_std.allFinite())
      throw InvalidInput("parameters contain non-finite values");
  }

  bool operator==(const LstmParams&) const = default;
};

struct LstmState {
  Vector c;
  Vector h;

  static LstmState zeros(int n_hidden) { return {Vector::Zero(n_hidden), Vector::Zero(n_hidden)}; }

  /// (c; h) as one vector, the state of the closed-loop map.
  Vector stacked() const {
    Vector s(c.size() + h.size());
    s << c, h;
    return s;
  }
  static LstmState from_stacked(const Vector& s) {
    const Eigen::Index n = s.size() / 2;
    return {s.head(n), s.tail(n)};
  }
};

/// Pre-activations and activations of one cell step, stacked like the gate
/// weights. `cell_input` is f*c + i*g before the (optional) outer sigmoid.
struct GateActivations {
  Vector pre;
  Vector gates;
  Vector cell_input;

  Eigen::Index hidden() const { return cell_input.size(); }
  auto input_gate() const { return gates.segment(0, hidden()); }
  auto forget_gate() const { return gates.segment(hidden(), hidden()); }
  auto output_gate() const { return gates.segment(2 * hidden(), hidden()); }
  auto candidate() const { return gates.segment(3 * hidden(), hidden()); }
};

struct Prediction {
  Vector x_hat;   // normalized
  Vector xi_hat;  // normalized

  Vector full() const {
    Vector y(x_hat.size() + xi_hat.size());
    y << x_hat, xi_hat;
    return y;
  }
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Batched cell forward; columns are independent sequences.
struct CellBatch {
  Matrix pre;         // 4N_h x B
  Matrix gates;       // 4N_h x B
  Matrix cell_input;  // N_h x B
  Matrix c;           // N_h x B
  Matrix tanh_c;      // N_h x B
  Matrix h;           // N_h x B
};

inline void cell_forward(const LstmParams& p, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& c_prev,
                         const Eigen::Ref<const Matrix>& h_prev, CellBatch& out) {
  const Eigen::Index nh = p.dims.n_hidden;
  const Eigen::Index nx = p.dims.n_obs;
  const Matrix& w = p.weights.gates;
  out.pre.noalias() = w.leftCols(nx) * x;
  out.pre.noalias() += w.rightCols(nh) * h_prev;
  out.pre.colwise() += p.weights.gate_bias;
  out.gates.resize(out.pre.rows(), out.pre.cols());
  out.gates.topRows(3 * nh) = out.pre.topRows(3 * nh).unaryExpr([](double z) { return sigmoid(z); });
  out.gates.bottomRows(nh) = out.pre.bottomRows(nh).array().tanh();
  out.cell_input = out.gates.middleRows(nh, nh).cwiseProduct(c_prev) +
                   out.gates.topRows(nh).cwiseProduct(out.gates.bottomRows(nh));
  if (p.variant == CellVariant::paper)
    out.c = out.cell_input.unaryExpr([](double u) { return sigmoid(u); });
  else
    out.c = out.cell_input;
  out.tanh_c = out.c.array().tanh();
  out.h = out.tanh_c.cwiseProduct(out.gates.middleRows(2 * nh, nh));
}

/// d(c', h')/d(c, h) given the cell activations and the matrix through which
/// h reaches the gate pre-activations (4N_h x N_h).
inline Matrix cell_state_jacobian(const LstmParams& p, const Vector& c_prev, const Vector& gates,
                                  const Vector& c_next, const Matrix& h_to_pre) {
  const Eigen::Index nh = p.dims.n_hidden;
  const auto i = gates.segment(0, nh).array();
  const auto f = gates.segment(nh, nh).array();
  const auto o = gates.segment(2 * nh, nh).array();
  const auto g = gates.segment(3 * nh, nh).array();

  Eigen::ArrayXd outer = Eigen::ArrayXd::Ones(nh);
  if (p.variant == CellVariant::paper) outer = c_next.array() * (1.0 - c_next.array());

  const Eigen::ArrayXd coef_f = outer * c_prev.array() * f * (1.0 - f);
  const Eigen::ArrayXd coef_i = outer * g * i * (1.0 - i);
  const Eigen::ArrayXd coef_g = outer * i * (1.0 - g.square());

  Matrix dc_dh = coef_f.matrix().asDiagonal() * h_to_pre.middleRows(nh, nh);
  dc_dh.noalias() += coef_i.matrix().asDiagonal() * h_to_pre.topRows(nh);
  dc_dh.noalias() += coef_g.matrix().asDiagonal() * h_to_pre.bottomRows(nh);
  const Eigen::ArrayXd dc_dc = outer * f;

  const Eigen::ArrayXd tanh_c = c_next.array().tanh();
  const Eigen::ArrayXd dh_dc_next = o * (1.0 - tanh_c.square());
  const Eigen::ArrayXd coef_o = tanh_c * o * (1.0 - o);

  Matrix jac(2 * nh, 2 * nh);
  jac.topLeftCorner(nh, nh) = dc_dc.matrix().asDiagonal();
  jac.topRightCorner(nh, nh) = dc_dh;
  jac.bottomLeftCorner(nh, nh) = (dh_dc_next * dc_dc).matrix().asDiagonal();
  jac.bottomRightCorner(nh, nh) = dh_dc_next.matrix().asDiagonal() * dc_dh;
  jac.bottomRightCorner(nh, nh).noalias() += coef_o.matrix().asDiagonal() * h_to_pre.middleRows(2 * nh, nh);
  return jac;
}

inline void require_shapes(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s) {
  if (x.size() != p.dims.n_obs) throw InvalidInput("input has " + std::to_string(x.size()) + " entries, expected " +
                                                   std::to_string(p.dims.n_obs));
  if (s.c.size() != p.dims.n_hidden || s.h.size() != p.dims.n_hidden)
    throw InvalidInput("state size does not match n_hidden");
}

}  // namespace detail

struct CellStep {
  LstmState state;
  GateActivations activations;
};

inline CellStep cell_step(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s) {
  detail::require_shapes(p, x, s);
  detail::CellBatch b;
  detail::cell_forward(p, x, s.c, s.h, b);
  return {{b.c.col(0), b.h.col(0)}, {b.pre.col(0), b.gates.col(0), b.cell_input.col(0)}};
}

/// Jacobian of (c, h) -> (c', h') with the input x held fixed.
inline Matrix cell_jacobian(const LstmParams& p, const Eigen::Ref<const Vector>& x, const LstmState& s) {
  const CellStep step = cell_step(p, x, s);
  return detail::cell_state_jacobian(p, s.c, step.activations.gates, step.state.c,
                                     p.weights.gates.rightCols(p.dims.n_hidden));
}

inline Prediction readout(const LstmParams& p, const Eigen::Ref<const Vector>& h) {
  if (h.size() != p.dims.n_hidden) throw InvalidInput("hidden state size does not match n_hidden");
  Vector y = p.weights.dense * h + p.weights.dense_bias;
  return {y.head(p.dims.n_obs), y.tail(p.dims.n_unmeasured)};
}

/// Readout-order normalized vector to a physical state in index order.
inline StateVector to_physical_state(const LstmParams& p, const Eigen::Ref<const Vector>& y_norm) {
  const Vector phys = p.norm_mean + p.norm_std.cwiseProduct(y_norm);
  const std::vector<int> order = p.split.readout_order();
  StateVector out(p.dims.n_state());
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = phys[static_cast<Eigen::Index>(k)];
  return out;
}

inline StateVector to_physical_state(const LstmParams& p, const Prediction& pred) {
  return to_physical_state(p, pred.full());
}

/// Observed columns (physical units, rows = time) to network input units.
inline RowMatrix normalize_observed(const LstmParams& p, const RowMatrix& observed) {
  if (observed.cols() != p.dims.n_obs) throw InvalidInput("observed width does not match network");
  RowMatrix out = observed;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - p.norm_mean[j]) / p.norm_std[j];
  return out;
}

struct OpenLoopResult {
  std::vector<Prediction> predictions;  // predictions[k] is the estimate at t_{k+1}
  std::vector<LstmState> states;        // states[k] is the state after input k
  std::vector<GateActivations> activations;
  LstmState final_state;
};

/// Teacher-forced pass: row k of `inputs` is x(t_k).
inline OpenLoopResult open_loop(const LstmParams& p, const RowMatrix& inputs, const LstmState& s0) {
  if (inputs.rows() < 1) throw InvalidInput("open_loop needs a nonempty input sequence");
  OpenLoopResult out;
  out.predictions.reserve(static_cast<std::size_t>(inputs.rows()));
  out.states.reserve(static_cast<std::size_t>(inputs.rows()));
  out.activations.reserve(static_cast<std::size_t>(inputs.rows()));
  LstmState s = s0;
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    CellStep step = cell_step(p, inputs.row(k).transpose(), s);
    if (!step.state.h.allFinite() || !step.state.c.allFinite())
      throw NumericError("non-finite activation in open loop", static_cast<std::size_t>(k));
    s = step.state;
    out.predictions.push_back(readout(p, s.h));
    out.states.push_back(s);
    out.activations.push_back(std::move(step.activations));
  }
  out.final_state = s;
  return out;
}

struct ClosedLoopResult {
  std::vector<Prediction> predictions;
  LstmState final_state;
};

/// Autonomous rollout: the first step consumes x0, every later step the
/// observed part of the previous prediction.
inline ClosedLoopResult closed_loop(const LstmParams& p, const LstmState& s0, const Eigen::Ref<const Vector>& x0,
                                    long n_steps) {
  if (n_steps < 0) throw InvalidInput("n_steps must be >= 0");
  ClosedLoopResult out;
  out.predictions.reserve(static_cast<std::size_t>(n_steps));
  LstmState s = s0;
  Vector x = x0;
  for (long k = 0; k < n_steps; ++k) {
    s = cell_step(p, x, s).state;
    if (!s.h.allFinite() || !s.c.allFinite())
      throw DivergenceError("closed-loop state became non-finite", static_cast<std::size_t>(k));
    Prediction pred = readout(p, s.h);
    x = pred.x_hat;
    out.predictions.push_back(std::move(pred));
  }
  out.final_state = s;
  return out;
}

/// The closed-loop network as a map on s = (c; h): the input is the
/// observed part of the readout of h.
class ClosedLoopMap {
 public:
  explicit ClosedLoopMap(const LstmParams& p) : p_(p) {
    p_.validate();
    const Eigen::Index nx = p_.dims.n_obs;
    const Eigen::Index nh = p_.dims.n_hidden;
    h_to_pre_ = p_.weights.gates.rightCols(nh);
    h_to_pre_.noalias() += p_.weights.gates.leftCols(nx) * p_.weights.dense.topRows(nx);
  }

  Vector step(const Vector& s) const {
    const LstmState st = LstmState::from_stacked(s);
    const Prediction pred = readout(p_, st.h);
    return cell_step(p_, pred.x_hat, st).state.stacked();
  }

  Matrix jacobian(const Vector& s) const {
    const LstmState st = LstmState::from_stacked(s);
    const Prediction pred = readout(p_, st.h);
    const CellStep step = cell_step(p_, pred.x_hat, st);
    return detail::cell_state_jacobian(p_, st.c, step.activations.gates, step.state.c, h_to_pre_);
  }

  const LstmParams& params() const { return p_; }

 private:
  LstmParams p_;
  Matrix h_to_pre_;  // d(pre-activations)/dh including the readout feedback
};

inline Matrix closed_loop_jacobian(const LstmParams& p, const LstmState& s) {
  return ClosedLoopMap(p).jacobian(s.stacked());
}

/// Zero-mean uniform weights scaled by sqrt(6 / (fan_in + fan_out)) per
/// matrix, zero biases, identity normalization.
inline LstmParams init_params(const LstmDims& dims, std::uint64_t seed, const ObservationSplit& split,
                              CellVariant variant = CellVariant::paper) {
  if (dims.n_obs < 1 || dims.n_hidden < 1 || dims.n_unmeasured < 0) throw InvalidInput("dims must be positive");
  LstmParams p;
  p.dims = dims;
  p.variant = variant;
  p.split = split;
  p.weights = LstmWeights::zeros(dims);
  p.norm_mean = Vector::Zero(dims.n_state());
  p.norm_std = Vector::Ones(dims.n_state());

  std::mt19937_64 rng(seed);
  auto fill = [&](auto&& block, double fan_in, double fan_out) {
    const double scale = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = scale * (2.0 * uniform01(rng) - 1.0);
  };
  for (Gate g : {Gate::input, Gate::forget, Gate::output, Gate::candidate})
    fill(p.weights.gate(g), dims.n_input(), dims.n_hidden);
  fill(p.weights.dense, dims.n_hidden, dims.n_state());
  p.validate();
  return p;
}

inline double init_scale(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

}  // namespace pilstm
