#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pilstm/evaluation.hpp"

namespace pilstm {
namespace {

std::vector<double> random_samples(std::mt19937_64& rng, std::size_t n, double lo = -3.0, double hi = 5.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double integral(const PdfEstimate& p) { return p.density.sum() * p.bin_width(); }

TEST(HistogramPdf, SingleBinAllEqual) {
  const std::vector<double> s(7, 0.3);
  const PdfEstimate p = histogram_pdf(s, 1, 0.0, 2.0);
  EXPECT_DOUBLE_EQ(p.density[0], 0.5);
  EXPECT_EQ(p.sample_count, 7);
}

TEST(HistogramPdf, UniformGridIsFlat) {
  const int n = 1000, bins = 10;
  std::vector<double> s;
  for (int k = 0; k < n; ++k) s.push_back((k + 0.5) / n);
  const PdfEstimate p = histogram_pdf(s, bins, 0.0, 1.0);
  for (Eigen::Index k = 0; k < p.n_bins(); ++k) EXPECT_NEAR(p.density[k], 1.0, 1.0 / n);
}

TEST(HistogramPdf, NormalizedForRandomInputs) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_samples(rng, 50 + 37 * trial);
    // narrower range than the samples, so clipping is exercised
    const PdfEstimate p = histogram_pdf(s, 1 + trial * 7, -1.0, 2.5);
    EXPECT_NEAR(integral(p), 1.0, 1e-12);
    EXPECT_GE(p.density.minCoeff(), 0.0);
    EXPECT_EQ(p.bin_edges.size(), p.n_bins() + 1);
  }
}

TEST(HistogramPdf, ClipsIntoEdgeBins) {
  const std::vector<double> s{-10.0, 0.25, 10.0};
  const PdfEstimate p = histogram_pdf(s, 2, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(p.density[0], 2.0 / 3.0 / 0.5);
  EXPECT_DOUBLE_EQ(p.density[1], 1.0 / 3.0 / 0.5);
}

TEST(HistogramPdf, Errors) {
  const std::vector<double> none;
  const std::vector<double> one{1.0};
  EXPECT_THROW(histogram_pdf(none, 10, 0.0, 1.0), InvalidInput);
  EXPECT_THROW(histogram_pdf(one, 0, 0.0, 1.0), InvalidInput);
  EXPECT_THROW(histogram_pdf(one, 10, 1.0, 1.0), InvalidInput);
}

TEST(HistogramDistance, ZeroForSelfAndOneForDisjoint) {
  const std::vector<double> a{0.1, 0.2}, b{0.8, 0.9};
  const PdfEstimate pa = histogram_pdf(a, 4, 0.0, 1.0);
  const PdfEstimate pb = histogram_pdf(b, 4, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(histogram_distance(pa, pa), 0.0);
  EXPECT_NEAR(histogram_distance(pa, pb), 1.0, 1e-15);
}

TEST(Wasserstein, HandExamples) {
  const std::vector<double> a{0.0, 1.0}, b{0.0, 0.0};
  EXPECT_DOUBLE_EQ(wasserstein1(a, b), 0.5);
  EXPECT_DOUBLE_EQ(wasserstein1(a, a), 0.0);

  std::mt19937_64 rng(8);
  const auto x = random_samples(rng, 300);
  std::vector<double> shifted = x;
  for (auto& v : shifted) v += 0.75;
  EXPECT_NEAR(wasserstein1(x, shifted), 0.75, 1e-12);
}

TEST(Wasserstein, UnequalSizesUseCdfIntegral) {
  // {0,1} against {0,0,1,1}: same distribution
  const std::vector<double> a{0.0, 1.0}, b{0.0, 0.0, 1.0, 1.0}, c{0.0};
  EXPECT_NEAR(wasserstein1(a, b), 0.0, 1e-15);
  EXPECT_NEAR(wasserstein1(a, c), 0.5, 1e-15);
}

TEST(Wasserstein, MetricProperties) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + static_cast<std::size_t>(trial);
    const auto a = random_samples(rng, n);
    const auto b = random_samples(rng, trial % 2 ? n : n + 7, -1.0, 7.0);
    const auto c = random_samples(rng, n + 3, -5.0, 2.0);
    const double ab = wasserstein1(a, b), ba = wasserstein1(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(wasserstein1(a, c), ab + wasserstein1(b, c) + 1e-12);
    std::vector<double> perm = a;
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_EQ(wasserstein1(a, perm), 0.0);
  }
}

TEST(Wasserstein, EmptyInputThrows) {
  const std::vector<double> none, one{1.0};
  EXPECT_THROW(wasserstein1(none, one), InvalidInput);
  EXPECT_THROW(wasserstein1(one, none), InvalidInput);
}

class EvaluationHarness : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spec_ = new SystemSpec{};
    traj_ = new Trajectory(generate_trajectory(*spec_, default_initial_condition(*spec_), 10000, 20000, 5));
    ReferenceSpectrumOptions ro;
    ro.n_steps = 500000;
    ro.seed = 1;
    opt_ = new EvalOptions{};
    opt_->reference_options = ro;
    opt_->reference = reference_spectrum(*spec_, ro);
  }
  static void TearDownTestSuite() {
    delete spec_;
    delete traj_;
    delete opt_;
  }
  static SystemSpec* spec_;
  static Trajectory* traj_;
  static EvalOptions* opt_;
};
SystemSpec* EvaluationHarness::spec_ = nullptr;
Trajectory* EvaluationHarness::traj_ = nullptr;
EvalOptions* EvaluationHarness::opt_ = nullptr;

TEST_F(EvaluationHarness, IdentityHasZeroDistancesAndReferenceSpectrum) {
  const ObservationSplit split = ObservationSplit::tail(10, 3);
  const ReconstructionReport r = evaluate_identity(*traj_, split, *spec_, *opt_);
  ASSERT_EQ(r.unmeasured.size(), 3u);
  for (const auto& v : r.unmeasured) {
    EXPECT_EQ(v.wasserstein, 0.0);
    EXPECT_EQ(v.histogram_distance, 0.0);
    EXPECT_NEAR(integral(v.reference_pdf), 1.0, 1e-12);
  }
  for (const auto& v : r.observed) EXPECT_EQ(v.wasserstein, 0.0);
  EXPECT_EQ(r.unmeasured[0].index, 7);
  ASSERT_EQ(r.model_spectrum.exponents.size(), 10);
  // independent starting points, so the tolerance is the statistical spread
  // of a 5e5-step estimate rather than the same-orbit renorm tolerance
  for (Eigen::Index k = 0; k < 10; ++k)
    EXPECT_NEAR(r.model_spectrum.exponents[k], r.reference_spectrum.exponents[k], 5e-2) << k;
  EXPECT_TRUE(r.chaotic);
  EXPECT_DOUBLE_EQ(r.lambda1_rel_error,
                   std::abs(r.model_spectrum.exponents[0] - r.reference_spectrum.exponents[0]) /
                       std::abs(r.reference_spectrum.exponents[0]));
}

TEST_F(EvaluationHarness, ZeroNetworkIsNotChaotic) {
  const ObservationSplit split = ObservationSplit::tail(10, 1);
  LstmParams p = init_params({9, 1, 12}, 3, split);
  p.weights = LstmWeights::zeros(p.dims);
  EvalOptions opt = *opt_;
  opt.rollout_lyap_times = 20.0;
  opt.le_warmup = 200;
  const ReconstructionReport r = evaluate_model(p, *traj_, split, *spec_, opt);
  EXPECT_FALSE(r.diverged);
  EXPECT_FALSE(r.chaotic);
  EXPECT_EQ(r.chaotic, r.model_spectrum.exponents[0] > 0.0);
  // every exponent below the zero-parameter contraction bound ln(1/8)/dt
  EXPECT_LE(r.model_spectrum.exponents.maxCoeff(), std::log(0.125) / spec_->dt);
  // constant output is a delta-like PDF, far from the reference
  EXPECT_GT(r.unmeasured[0].wasserstein, 1.0);
  EXPECT_NEAR(r.unmeasured[0].model_std, 0.0, 1e-9);
  EXPECT_EQ(r.rollout_steps, std::llround(20.0 / r.reference_spectrum.exponents[0] / spec_->dt));
}

TEST_F(EvaluationHarness, DivergenceIsReportedNotThrown) {
  const ObservationSplit split = ObservationSplit::tail(10, 1);
  LstmParams p = init_params({9, 1, 4}, 3, split);
  p.weights = LstmWeights::zeros(p.dims);
  p.norm_std.setConstant(1e308);
  p.weights.dense_bias.setConstant(10.0);
  EvalOptions opt = *opt_;
  opt.rollout_lyap_times = 5.0;
  opt.le_warmup = 0;
  const ReconstructionReport r = evaluate_model(p, *traj_, split, *spec_, opt);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.chaotic);
  EXPECT_FALSE(r.divergence_message.empty());
  ASSERT_EQ(r.unmeasured.size(), 1u);
  EXPECT_TRUE(std::isnan(r.unmeasured[0].wasserstein));
  EXPECT_TRUE(std::isnan(r.lambda1_rel_error));
}

TEST_F(EvaluationHarness, RejectsMismatchedSplit) {
  LstmParams p = init_params({9, 1, 4}, 3, ObservationSplit::tail(10, 1));
  EXPECT_THROW(evaluate_model(p, *traj_, ObservationSplit::tail(10, 2), *spec_, *opt_), InvalidInput);
}

ReconstructionReport fake_report(std::vector<int> vars, Eigen::Index n_exp, double w) {
  ReconstructionReport r;
  for (int v : vars) {
    VariableReport vr;
    vr.index = v;
    vr.wasserstein = w;
    r.unmeasured.push_back(vr);
  }
  r.model_spectrum.exponents = Vector::LinSpaced(n_exp, 1.0, -1.0);
  r.reference_spectrum.exponents = Vector::LinSpaced(n_exp, 1.5, -1.5);
  return r;
}

TEST(CompareRuns, TableShape) {
  const auto a = fake_report({7, 8, 9}, 10, 0.1);
  const auto b = fake_report({7, 8, 9}, 10, 0.4);
  const ComparisonTable t = compare_runs({a, b}, {"pi", "dd"});
  EXPECT_EQ(t.variables, (std::vector<int>{7, 8, 9}));
  ASSERT_EQ(t.distances.size(), 3u);
  EXPECT_EQ(t.distances[1], (std::vector<double>{0.1, 0.4}));
  ASSERT_EQ(t.exponents.size(), 2u);
  EXPECT_TRUE(std::is_sorted(t.reference.begin(), t.reference.end(), std::greater<>()));

  const ComparisonTable self = compare_runs({a, a}, {"x", "y"});
  EXPECT_EQ(self.exponents[0], self.exponents[1]);
  EXPECT_EQ(self.distances[0][0], self.distances[0][1]);
}

TEST(CompareRuns, MismatchedShapesThrow) {
  const auto a = fake_report({9}, 10, 0.1);
  EXPECT_THROW(compare_runs({a, fake_report({8}, 10, 0.1)}, {"a", "b"}), InvalidInput);
  EXPECT_THROW(compare_runs({a, fake_report({9}, 5, 0.1)}, {"a", "b"}), InvalidInput);
  EXPECT_THROW(compare_runs({a}, {"a", "b"}), InvalidInput);
  EXPECT_THROW(compare_runs({}, {}), InvalidInput);
}

}  // namespace
}  // namespace pilstm
