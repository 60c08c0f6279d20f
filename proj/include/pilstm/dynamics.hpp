#pragma once

// Lorenz-96 right-hand side, its Jacobian, explicit Euler integration and
// the observed/unmeasured column split of a trajectory.
//
// Indices are 0-based. The cyclic neighbours of component i are taken
// modulo N, so y[-1] = y[N-1], y[-2] = y[N-2] and y[N] = y[0].

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pilstm/error.hpp"

namespace pilstm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StateVector = Vector;

/// Uniform double in [0, 1) built from the top 53 bits, so the stream is
/// identical on every standard library.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct SystemSpec {
  int n_dim = 10;
  double forcing = 8.0;
  double dt = 0.01;

  void validate() const {
    if (n_dim < 4) throw InvalidInput("Lorenz-96 needs n_dim >= 4, got " + std::to_string(n_dim));
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("dt must be positive and finite");
    if (!std::isfinite(forcing)) throw InvalidInput("forcing must be finite");
  }
};

/// States stored one per row; row i sits at time t0 + i*dt.
struct Trajectory {
  RowMatrix states;
  double dt = 0.01;
  double t0 = 0.0;

  Eigen::Index n_states() const { return states.rows(); }
  Eigen::Index n_dim() const { return states.cols(); }
  double time(Eigen::Index i) const { return t0 + static_cast<double>(i) * dt; }
  StateVector state(Eigen::Index i) const { return states.row(i).transpose(); }
};

/// Which state components are fed to the network and which are inferred.
struct ObservationSplit {
  std::vector<int> observed;
  std::vector<int> unmeasured;

  int n_dim() const { return static_cast<int>(observed.size() + unmeasured.size()); }

  void validate(int n) const {
    if (n_dim() != n)
      throw InvalidInput("split covers " + std::to_string(n_dim()) + " components, system has " +
                         std::to_string(n));
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    auto mark = [&](const std::vector<int>& idx, const char* name) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        int i = idx[k];
        if (i < 0 || i >= n) throw InvalidInput(std::string(name) + " index out of range: " + std::to_string(i));
        if (seen[static_cast<std::size_t>(i)]++) throw InvalidInput("split index listed twice: " + std::to_string(i));
        if (k > 0 && idx[k - 1] >= i) throw InvalidInput(std::string(name) + " indices must be sorted ascending");
      }
    };
    mark(observed, "observed");
    mark(unmeasured, "unmeasured");
  }

  /// Everything not listed in `unmeasured` is observed.
  static ObservationSplit from_unmeasured(int n, std::vector<int> unmeasured) {
    std::sort(unmeasured.begin(), unmeasured.end());
    ObservationSplit s;
    s.unmeasured = unmeasured;
    for (int i = 0; i < n; ++i)
      if (!std::binary_search(unmeasured.begin(), unmeasured.end(), i)) s.observed.push_back(i);
    s.validate(n);
    return s;
  }

  /// The last `n_unmeasured` components are hidden from the network.
  static ObservationSplit tail(int n, int n_unmeasured) {
    if (n_unmeasured < 0 || n_unmeasured > n) throw InvalidInput("n_unmeasured out of range");
    std::vector<int> u;
    for (int i = n - n_unmeasured; i < n; ++i) u.push_back(i);
    return from_unmeasured(n, u);
  }

  /// Observed indices followed by unmeasured ones; this is the layout of the
  /// network's full-state output.
  std::vector<int> readout_order() const {
    std::vector<int> order = observed;
    order.insert(order.end(), unmeasured.begin(), unmeasured.end());
    return order;
  }

  bool operator==(const ObservationSplit&) const = default;
};

namespace detail {
inline void require_dim(Eigen::Index n) {
  if (n < 4) throw InvalidInput("Lorenz-96 needs at least 4 components, got " + std::to_string(n));
}
inline Eigen::Index wrap(Eigen::Index i, Eigen::Index n) { return ((i % n) + n) % n; }
}  // namespace detail

/// dy_i/dt = (y_{i+1} - y_{i-2}) y_{i-1} - y_i + F
inline StateVector lorenz96_rhs(const Eigen::Ref<const Vector>& y, double forcing) {
  const Eigen::Index n = y.size();
  detail::require_dim(n);
  StateVector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double yp1 = y[detail::wrap(i + 1, n)];
    const double ym1 = y[detail::wrap(i - 1, n)];
    const double ym2 = y[detail::wrap(i - 2, n)];
    out[i] = (yp1 - ym2) * ym1 - y[i] + forcing;
  }
  return out;
}

inline Matrix lorenz96_jacobian(const Eigen::Ref<const Vector>& y, double /*forcing*/) {
  const Eigen::Index n = y.size();
  detail::require_dim(n);
  Matrix jac = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ip1 = detail::wrap(i + 1, n);
    const Eigen::Index im1 = detail::wrap(i - 1, n);
    const Eigen::Index im2 = detail::wrap(i - 2, n);
    jac(i, i) = -1.0;
    jac(i, ip1) = y[im1];
    jac(i, im1) = y[ip1] - y[im2];
    jac(i, im2) = -y[im1];
  }
  return jac;
}

/// Returns J(y)^T r without forming J. Used by the physics-loss backward pass.
inline Vector lorenz96_vjp(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& r) {
  const Eigen::Index n = y.size();
  detail::require_dim(n);
  Vector out = -r;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index ip1 = detail::wrap(i + 1, n);
    const Eigen::Index im1 = detail::wrap(i - 1, n);
    const Eigen::Index im2 = detail::wrap(i - 2, n);
    out[ip1] += y[im1] * r[i];
    out[im1] += (y[ip1] - y[im2]) * r[i];
    out[im2] -= y[im1] * r[i];
  }
  return out;
}

inline StateVector euler_step(const Eigen::Ref<const Vector>& y, const SystemSpec& spec) {
  if (y.size() != spec.n_dim)
    throw InvalidInput("state has " + std::to_string(y.size()) + " components, spec expects " +
                       std::to_string(spec.n_dim));
  return y + spec.dt * lorenz96_rhs(y, spec.forcing);
}

/// F*(1,...,1) with +0.01 on component 0.
inline StateVector default_initial_condition(const SystemSpec& spec) {
  StateVector y = StateVector::Constant(spec.n_dim, spec.forcing);
  y[0] += 0.01;
  return y;
}

/// Seeded perturbation of size up to 0.01 per component. Seed 0 leaves y0 alone.
inline StateVector perturb_initial_condition(StateVector y0, std::uint64_t seed) {
  if (seed == 0) return y0;
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < y0.size(); ++i) y0[i] += 0.01 * (2.0 * uniform01(rng) - 1.0);
  return y0;
}

/// Integrates n_washout + n_steps Euler steps from the (seed-perturbed) y0
/// and keeps the last n_steps + 1 states.
inline Trajectory generate_trajectory(const SystemSpec& spec, const StateVector& y0, long n_washout,
                                      long n_steps, std::uint64_t seed, double t0 = 0.0) {
  spec.validate();
  if (n_steps < 1) throw InvalidInput("n_steps must be >= 1");
  if (n_washout < 0) throw InvalidInput("n_washout must be >= 0");
  if (y0.size() != spec.n_dim) throw InvalidInput("initial state dimension does not match spec");

  StateVector y = perturb_initial_condition(y0, seed);
  auto check = [](const StateVector& s, long step) {
    if (!s.allFinite()) throw DivergenceError("trajectory became non-finite", static_cast<std::size_t>(step));
  };
  for (long k = 0; k < n_washout; ++k) {
    y = euler_step(y, spec);
    check(y, k + 1);
  }

  Trajectory traj;
  traj.dt = spec.dt;
  traj.t0 = t0;
  traj.states.resize(n_steps + 1, spec.n_dim);
  traj.states.row(0) = y.transpose();
  for (long k = 1; k <= n_steps; ++k) {
    y = euler_step(y, spec);
    check(y, n_washout + k);
    traj.states.row(k) = y.transpose();
  }
  return traj;
}

/// Column projection onto (observed, unmeasured).
inline std::pair<RowMatrix, RowMatrix> split_observations(const Trajectory& traj,
                                                          const ObservationSplit& split) {
  split.validate(static_cast<int>(traj.n_dim()));
  auto take = [&](const std::vector<int>& idx) {
    RowMatrix out(traj.n_states(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = traj.states.col(idx[k]);
    return out;
  };
  return {take(split.observed), take(split.unmeasured)};
}

/// Inverse of split_observations.
inline RowMatrix reassemble(const RowMatrix& observed, const RowMatrix& unmeasured,
                            const ObservationSplit& split) {
  const int n = split.n_dim();
  split.validate(n);
  if (observed.cols() != static_cast<Eigen::Index>(split.observed.size()) ||
      unmeasured.cols() != static_cast<Eigen::Index>(split.unmeasured.size()))
    throw InvalidInput("column counts do not match the split");
  const Eigen::Index rows = split.observed.empty() ? unmeasured.rows() : observed.rows();
  if (!split.observed.empty() && !split.unmeasured.empty() && observed.rows() != unmeasured.rows())
    throw InvalidInput("observed and unmeasured sequences differ in length");
  RowMatrix out(rows, n);
  for (std::size_t k = 0; k < split.observed.size(); ++k)
    out.col(split.observed[k]) = observed.col(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < split.unmeasured.size(); ++k)
    out.col(split.unmeasured[k]) = unmeasured.col(static_cast<Eigen::Index>(k));
  return out;
}

}  // namespace pilstm
