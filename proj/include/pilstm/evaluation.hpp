#pragma once

// Long closed-loop rollouts compared against a reference trajectory:
// per-variable PDFs and Wasserstein distances of the reconstructed
// variables, and the Lyapunov spectrum of the closed-loop network.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pilstm/dynamics.hpp"
#include "pilstm/error.hpp"
#include "pilstm/lyapunov.hpp"
#include "pilstm/network.hpp"

namespace pilstm {

struct PdfEstimate {
  Vector bin_edges;  // n_bins + 1
  Vector density;    // n_bins
  long sample_count = 0;

  Eigen::Index n_bins() const { return density.size(); }
  double bin_width() const { return (bin_edges[bin_edges.size() - 1] - bin_edges[0]) / static_cast<double>(n_bins()); }
  double bin_center(Eigen::Index k) const { return 0.5 * (bin_edges[k] + bin_edges[k + 1]); }
};

/// Equal-width histogram normalized to unit integral. Samples outside
/// [lo, hi] are counted in the edge bins.
inline PdfEstimate histogram_pdf(std::span<const double> samples, int n_bins, double lo, double hi) {
  if (samples.empty()) throw InvalidInput("histogram_pdf needs samples");
  if (n_bins < 1) throw InvalidInput("n_bins must be >= 1");
  if (!(lo < hi)) throw InvalidInput("histogram range must satisfy lo < hi");
  PdfEstimate pdf;
  pdf.bin_edges = Vector::LinSpaced(n_bins + 1, lo, hi);
  pdf.density = Vector::Zero(n_bins);
  const double width = (hi - lo) / n_bins;
  for (double s : samples) {
    if (std::isnan(s)) throw InvalidInput("histogram_pdf got a NaN sample");
    auto k = static_cast<long>(std::floor((s - lo) / width));
    k = std::clamp(k, 0L, static_cast<long>(n_bins) - 1);
    pdf.density[k] += 1.0;
  }
  pdf.sample_count = static_cast<long>(samples.size());
  pdf.density /= static_cast<double>(samples.size()) * width;
  return pdf;
}

/// Total variation between two densities on the same bins, in [0, 1].
inline double histogram_distance(const PdfEstimate& a, const PdfEstimate& b) {
  if (a.n_bins() != b.n_bins()) throw InvalidInput("histograms have different bin counts");
  return 0.5 * (a.density - b.density).cwiseAbs().sum() * a.bin_width();
}

/// Empirical 1-Wasserstein distance, the integral of |F_a - F_b|. For equal
/// sample counts this is the mean absolute gap between sorted samples.
inline double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("wasserstein1 needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double sum = 0.0;
    for (std::size_t k = 0; k < sa.size(); ++k) sum += std::abs(sa[k] - sb[k]);
    return sum / static_cast<double>(sa.size());
  }
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double x = std::min(sa.front(), sb.front());
  double dist = 0.0;
  while (ia < sa.size() || ib < sb.size()) {
    double next;
    if (ib >= sb.size() || (ia < sa.size() && sa[ia] <= sb[ib]))
      next = sa[ia];
    else
      next = sb[ib];
    dist += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (next - x);
    x = next;
    while (ia < sa.size() && sa[ia] == x) ++ia;
    while (ib < sb.size() && sb[ib] == x) ++ib;
  }
  return dist;
}

struct VariableReport {
  int index = 0;  // state component
  double wasserstein = 0.0;
  double histogram_distance = 0.0;
  double reference_mean = 0.0;
  double reference_std = 0.0;
  double model_mean = 0.0;
  double model_std = 0.0;
  PdfEstimate reference_pdf;
  PdfEstimate model_pdf;
};

struct ReconstructionReport {
  std::vector<VariableReport> unmeasured;
  std::vector<VariableReport> observed;  // reported, not gated
  LyapunovSpectrum model_spectrum;
  LyapunovSpectrum reference_spectrum;
  double lambda1_rel_error = std::numeric_limits<double>::quiet_NaN();
  bool chaotic = false;
  bool diverged = false;
  std::string divergence_message;
  double rollout_length_in_lyapunov_times = 0.0;
  long rollout_steps = 0;
};

struct EvalOptions {
  double rollout_lyap_times = 1000.0;
  long washout = 100;
  int n_bins = 100;
  double range_padding = 0.05;
  int n_exponents = 0;  // 0 means N
  long le_warmup = 10000;
  int renorm_interval = 1;
  std::optional<LyapunovSpectrum> reference;  // computed when absent
  ReferenceSpectrumOptions reference_options;
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Bins span the reference min/max widened by `padding` of the range.
inline VariableReport compare_variable(int index, std::span<const double> reference, std::span<const double> model,
                                       const EvalOptions& opt) {
  VariableReport vr;
  vr.index = index;
  const auto [lo_it, hi_it] = std::minmax_element(reference.begin(), reference.end());
  double lo = *lo_it, hi = *hi_it;
  const double pad = opt.range_padding * std::max(hi - lo, 1e-12);
  lo -= pad;
  hi += pad;
  vr.reference_pdf = histogram_pdf(reference, opt.n_bins, lo, hi);
  vr.model_pdf = histogram_pdf(model, opt.n_bins, lo, hi);
  vr.wasserstein = wasserstein1(reference, model);
  vr.histogram_distance = pilstm::histogram_distance(vr.reference_pdf, vr.model_pdf);
  vr.reference_mean = mean_of(reference);
  vr.reference_std = std_of(reference);
  vr.model_mean = mean_of(model);
  vr.model_std = std_of(model);
  return vr;
}

inline std::vector<double> column(const RowMatrix& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

inline LyapunovSpectrum resolve_reference(const SystemSpec& spec, const EvalOptions& opt) {
  if (opt.reference) return *opt.reference;
  return reference_spectrum(spec, opt.reference_options);
}

inline void fill_comparisons(ReconstructionReport& rep, const RowMatrix& reference, const RowMatrix& model,
                             const ObservationSplit& split, const EvalOptions& opt) {
  for (int j : split.unmeasured)
    rep.unmeasured.push_back(compare_variable(j, column(reference, j), column(model, j), opt));
  for (int j : split.observed) rep.observed.push_back(compare_variable(j, column(reference, j), column(model, j), opt));
}

// Distances are NaN when the rollout never completed.
inline void fill_diverged(ReconstructionReport& rep, const RowMatrix& reference, const ObservationSplit& split,
                          const EvalOptions& opt) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto one = [&](int j) {
    const std::vector<double> ref = column(reference, j);
    VariableReport vr = compare_variable(j, ref, ref, opt);
    vr.wasserstein = vr.histogram_distance = vr.model_mean = vr.model_std = nan;
    vr.model_pdf.density.setConstant(nan);
    return vr;
  };
  for (int j : split.unmeasured) rep.unmeasured.push_back(one(j));
  for (int j : split.observed) rep.observed.push_back(one(j));
}

inline void finish_report(ReconstructionReport& rep) {
  const auto& m = rep.model_spectrum.exponents;
  const auto& r = rep.reference_spectrum.exponents;
  rep.chaotic = !rep.diverged && m.size() > 0 && m[0] > 0.0;
  if (!rep.diverged && m.size() > 0 && r.size() > 0) rep.lambda1_rel_error = std::abs(m[0] - r[0]) / std::abs(r[0]);
}

inline long rollout_steps(const LyapunovSpectrum& ref, const SystemSpec& spec, double lyap_times) {
  const auto tau = ref.lyapunov_time();
  if (!tau) throw InvalidInput("reference spectrum is not chaotic; Lyapunov time undefined");
  return std::max(1L, static_cast<long>(std::llround(lyap_times * *tau / spec.dt)));
}

}  // namespace detail

/// Open-loop washout on the first `washout` observations of `test_traj`,
/// then a closed-loop rollout of rollout_lyap_times Lyapunov times (after
/// `le_warmup` unrecorded steps). The same rollout feeds the statistics and
/// the network spectrum.
inline ReconstructionReport evaluate_model(const LstmParams& params, const Trajectory& test_traj,
                                           const ObservationSplit& split, const SystemSpec& spec,
                                           const EvalOptions& opt = {}) {
  params.validate();
  spec.validate();
  split.validate(spec.n_dim);
  if (!(params.split == split)) throw InvalidInput("checkpoint split does not match the evaluation split");
  if (test_traj.n_dim() != spec.n_dim) throw InvalidInput("test trajectory dimension does not match spec");
  if (opt.washout < 1 || opt.washout >= test_traj.n_states()) throw InvalidInput("washout must fit inside the test trajectory");

  ReconstructionReport rep;
  rep.reference_spectrum = detail::resolve_reference(spec, opt);
  rep.rollout_steps = detail::rollout_steps(rep.reference_spectrum, spec, opt.rollout_lyap_times);
  rep.rollout_length_in_lyapunov_times =
      static_cast<double>(rep.rollout_steps) * spec.dt / *rep.reference_spectrum.lyapunov_time();

  const RowMatrix observed = split_observations(test_traj, split).first;
  const RowMatrix inputs = normalize_observed(params, observed.topRows(opt.washout));
  const LstmState s0 = open_loop(params, inputs, LstmState::zeros(params.dims.n_hidden)).final_state;

  RowMatrix rollout(rep.rollout_steps, spec.n_dim);
  const ClosedLoopMap map(params);
  BenettinOptions bo;
  bo.n_exponents = opt.n_exponents > 0 ? opt.n_exponents : spec.n_dim;
  bo.n_steps = rep.rollout_steps;
  bo.renorm_interval = opt.renorm_interval;
  bo.dt = spec.dt;
  bo.warmup = opt.le_warmup;
  bo.source_label = "network";
  const Eigen::Index nh = params.dims.n_hidden;
  try {
    rep.model_spectrum = benettin_spectrum(map, s0.stacked(), bo, [&](long k, const Vector& s) {
      rollout.row(k) = to_physical_state(params, readout(params, s.tail(nh)).full()).transpose();
      if (!rollout.row(k).allFinite())
        throw DivergenceError("closed-loop rollout left the finite range", static_cast<std::size_t>(k));
    });
  } catch (const Error& e) {
    rep.diverged = true;
    rep.divergence_message = e.what();
    rep.model_spectrum.exponents = Vector::Constant(bo.n_exponents, std::numeric_limits<double>::quiet_NaN());
    rep.model_spectrum.source_label = "network";
    rep.model_spectrum.dt = spec.dt;
    rep.model_spectrum.renorm_interval = opt.renorm_interval;
    detail::fill_diverged(rep, test_traj.states, split, opt);
    detail::finish_report(rep);
    return rep;
  }

  detail::fill_comparisons(rep, test_traj.states, rollout, split, opt);
  detail::finish_report(rep);
  return rep;
}

/// Self-comparison harness: the "model" is the reference trajectory itself
/// and its spectrum is computed along that trajectory.
inline ReconstructionReport evaluate_identity(const Trajectory& test_traj, const ObservationSplit& split,
                                              const SystemSpec& spec, const EvalOptions& opt = {}) {
  spec.validate();
  split.validate(spec.n_dim);
  ReconstructionReport rep;
  rep.reference_spectrum = detail::resolve_reference(spec, opt);
  rep.rollout_steps = test_traj.n_states();
  rep.rollout_length_in_lyapunov_times =
      static_cast<double>(test_traj.n_states()) * spec.dt / rep.reference_spectrum.lyapunov_time().value_or(1.0);

  BenettinOptions bo;
  bo.n_exponents = opt.n_exponents > 0 ? opt.n_exponents : spec.n_dim;
  bo.n_steps = rep.reference_spectrum.n_steps > 0 ? rep.reference_spectrum.n_steps : 500000;
  bo.renorm_interval = opt.reference_options.renorm_interval;
  bo.dt = spec.dt;
  bo.warmup = opt.reference_options.warmup;
  bo.source_label = "identity";
  rep.model_spectrum = benettin_spectrum(ode_tangent_map(spec), test_traj.state(0), bo);

  detail::fill_comparisons(rep, test_traj.states, test_traj.states, split, opt);
  detail::finish_report(rep);
  return rep;
}

struct ComparisonTable {
  std::vector<std::string> labels;
  std::vector<int> variables;                  // unmeasured component indices
  std::vector<std::vector<double>> distances;  // [variable][run] Wasserstein-1
  std::vector<std::vector<double>> histogram;  // [variable][run]
  Vector reference;                            // exponents, descending
  std::vector<Vector> exponents;               // [run]
};

inline ComparisonTable compare_runs(const std::vector<ReconstructionReport>& reports,
                                    const std::vector<std::string>& labels) {
  if (reports.empty()) throw InvalidInput("compare_runs needs at least one report");
  if (reports.size() != labels.size()) throw InvalidInput("one label per report is required");
  ComparisonTable t;
  t.labels = labels;
  const ReconstructionReport& first = reports.front();
  for (const VariableReport& v : first.unmeasured) t.variables.push_back(v.index);
  t.reference = first.reference_spectrum.exponents;
  for (const ReconstructionReport& r : reports) {
    if (r.unmeasured.size() != first.unmeasured.size()) throw InvalidInput("reports cover different variables");
    for (std::size_t k = 0; k < r.unmeasured.size(); ++k)
      if (r.unmeasured[k].index != first.unmeasured[k].index) throw InvalidInput("reports cover different variables");
    if (r.model_spectrum.exponents.size() != first.model_spectrum.exponents.size() ||
        r.reference_spectrum.exponents.size() != first.reference_spectrum.exponents.size())
      throw InvalidInput("spectra lengths differ between reports");
    t.exponents.push_back(r.model_spectrum.exponents);
  }
  t.distances.resize(t.variables.size());
  t.histogram.resize(t.variables.size());
  for (std::size_t k = 0; k < t.variables.size(); ++k)
    for (const ReconstructionReport& r : reports) {
      t.distances[k].push_back(r.unmeasured[k].wasserstein);
      t.histogram[k].push_back(r.unmeasured[k].histogram_distance);
    }
  return t;
}

}  // namespace pilstm
