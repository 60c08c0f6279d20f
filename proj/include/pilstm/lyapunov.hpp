#pragma once

// Lyapunov spectra of discrete-time maps by tangent propagation and
// repeated QR reorthonormalization (Benettin's algorithm).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"

namespace pilstm {

struct LyapunovSpectrum {
  Vector exponents;  // descending, 1/time
  long n_steps = 0;
  double dt = 0.0;
  int renorm_interval = 1;
  std::string source_label;

  /// 1/lambda_1, only meaningful for a chaotic spectrum.
  std::optional<double> lyapunov_time() const {
    if (exponents.size() == 0 || !(exponents[0] > 0.0)) return std::nullopt;
    return 1.0 / exponents[0];
  }
  /// Exponents above `neutral_band`; a band of the order of the finite-time
  /// noise keeps the flow's zero exponent out of the count.
  int n_positive(double neutral_band = 0.0) const {
    return static_cast<int>((exponents.array() > neutral_band).count());
  }
};

/// Finite-time noise of a 5e5-step Lorenz-96 estimate is about 1/(n_steps dt) = 2e-4.
inline constexpr double kNeutralExponentBand = 1e-3;

struct QrResult {
  Matrix q;
  Matrix r;
};

/// Thin QR by modified Gram-Schmidt. R has a strictly positive diagonal.
inline QrResult qr_positive(const Eigen::Ref<const Matrix>& a) {
  const Eigen::Index m = a.rows();
  const Eigen::Index k = a.cols();
  if (k > m) throw InvalidInput("qr_positive needs cols <= rows");
  QrResult out{a, Matrix::Zero(k, k)};
  Matrix& q = out.q;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double norm = q.col(j).norm();
    if (!(norm >= 1e-300)) throw DegenerateTangent("tangent basis lost rank at column " + std::to_string(j));
    out.r(j, j) = norm;
    q.col(j) /= norm;
    for (Eigen::Index i = j + 1; i < k; ++i) {
      const double proj = q.col(j).dot(q.col(i));
      out.r(j, i) = proj;
      q.col(i) -= proj * q.col(j);
    }
  }
  return out;
}

/// A map s -> step(s) with Jacobian jacobian(s).
template <class M>
concept DifferentiableMap = requires(const M& map, const Vector& s) {
  { map.step(s) } -> std::convertible_to<Vector>;
  { map.jacobian(s) } -> std::convertible_to<Matrix>;
};

struct BenettinOptions {
  int n_exponents = 0;
  long n_steps = 0;
  int renorm_interval = 1;
  double dt = 1.0;
  long warmup = 10000;
  std::string source_label;
  std::optional<Matrix> initial_basis;  // defaults to the leading canonical vectors
};

/// Called once per accumulation step with the state after the step.
using StateObserver = std::function<void(long step, const Vector& state)>;

template <DifferentiableMap M>
LyapunovSpectrum benettin_spectrum(const M& map, const Vector& s0, const BenettinOptions& opt,
                                   const StateObserver& observer = {}) {
  const Eigen::Index dim = s0.size();
  if (opt.n_exponents < 1 || opt.n_exponents > dim)
    throw InvalidInput("n_exponents must be in [1, state dimension]");
  if (opt.n_steps < 1) throw InvalidInput("n_steps must be >= 1");
  if (opt.renorm_interval < 1) throw InvalidInput("renorm_interval must be >= 1");
  if (!(opt.dt > 0.0)) throw InvalidInput("dt must be positive");
  if (opt.warmup < 0) throw InvalidInput("warmup must be >= 0");

  Matrix basis;
  if (opt.initial_basis) {
    if (opt.initial_basis->rows() != dim || opt.initial_basis->cols() != opt.n_exponents)
      throw InvalidInput("initial basis has the wrong shape");
    basis = qr_positive(*opt.initial_basis).q;
  } else {
    basis = Matrix::Identity(dim, opt.n_exponents);
  }

  Vector state = s0;
  Vector log_stretch = Vector::Zero(opt.n_exponents);
  const long total = opt.warmup + opt.n_steps;
  for (long k = 0; k < total; ++k) {
    basis = map.jacobian(state) * basis;
    state = map.step(state);
    if (!state.allFinite()) throw DivergenceError("map state became non-finite", static_cast<std::size_t>(k + 1));

    const bool accumulating = k >= opt.warmup;
    const long local = accumulating ? k - opt.warmup + 1 : k + 1;
    const bool last_of_phase = accumulating ? (k + 1 == total) : (k + 1 == opt.warmup);
    if (local % opt.renorm_interval == 0 || last_of_phase) {
      QrResult qr = qr_positive(basis);
      basis = std::move(qr.q);
      if (accumulating) log_stretch.array() += qr.r.diagonal().array().log();
    }
    if (accumulating && observer) observer(k - opt.warmup, state);
  }

  LyapunovSpectrum spectrum;
  spectrum.exponents = log_stretch / (static_cast<double>(opt.n_steps) * opt.dt);
  std::sort(spectrum.exponents.begin(), spectrum.exponents.end(), std::greater<>());
  spectrum.n_steps = opt.n_steps;
  spectrum.dt = opt.dt;
  spectrum.renorm_interval = opt.renorm_interval;
  spectrum.source_label = opt.source_label;
  return spectrum;
}

/// Euler-discretized Lorenz-96: y -> y + dt f(y), Jacobian I + dt J(y).
class EulerTangentMap {
 public:
  explicit EulerTangentMap(SystemSpec spec) : spec_(spec) { spec_.validate(); }

  Vector step(const Vector& y) const { return euler_step(y, spec_); }
  Matrix jacobian(const Vector& y) const {
    Matrix jac = spec_.dt * lorenz96_jacobian(y, spec_.forcing);
    jac.diagonal().array() += 1.0;
    return jac;
  }
  const SystemSpec& spec() const { return spec_; }

 private:
  SystemSpec spec_;
};

inline EulerTangentMap ode_tangent_map(const SystemSpec& spec) { return EulerTangentMap(spec); }

/// Fixed linear map s -> A s. Used as a test hook with known spectra.
class LinearMap {
 public:
  explicit LinearMap(Matrix a) : a_(std::move(a)) {}
  Vector step(const Vector& s) const { return a_ * s; }
  Matrix jacobian(const Vector&) const { return a_; }

 private:
  Matrix a_;
};

struct ReferenceSpectrumOptions {
  long n_steps = 500000;
  long warmup = 10000;
  long n_washout = 10000;
  int renorm_interval = 10;
  int n_exponents = 0;  // 0 means all N
  std::uint64_t seed = 0;
};

/// Spectrum of the Euler-discretized Lorenz-96 system started on the attractor.
inline LyapunovSpectrum reference_spectrum(const SystemSpec& spec, const ReferenceSpectrumOptions& ro = {}) {
  spec.validate();
  StateVector y = perturb_initial_condition(default_initial_condition(spec), ro.seed);
  for (long k = 0; k < ro.n_washout; ++k) y = euler_step(y, spec);
  BenettinOptions opt;
  opt.n_exponents = ro.n_exponents > 0 ? ro.n_exponents : spec.n_dim;
  opt.n_steps = ro.n_steps;
  opt.renorm_interval = ro.renorm_interval;
  opt.dt = spec.dt;
  opt.warmup = ro.warmup;
  opt.source_label = "reference";
  return benettin_spectrum(ode_tangent_map(spec), y, opt);
}

}  // namespace pilstm
