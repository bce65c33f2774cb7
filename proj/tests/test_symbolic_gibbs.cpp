#include <gtest/gtest.h>

#include <random>

#include "glmix/gibbs.hpp"

using namespace glmix;

namespace {

const double kPhi = (1.0 + std::sqrt(5.0)) / 2.0;

SftSpace golden() { return build_sft(2, {{1, 1}, {1, 0}}, 0.5); }
SftSpace full(int A, double theta = 0.5) { return build_sft(A, std::vector<std::vector<int>>(A, std::vector<int>(A, 1)), theta); }

}  // namespace

TEST(Sft, RejectsNonMixingAndDeadSymbols) {
  EXPECT_THROW(build_sft(2, {{0, 1}, {1, 0}}, 0.5), Error);
  try {
    build_sft(2, {{1, 0}, {0, 0}}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DeadSymbol);
  }
  EXPECT_THROW(build_sft(2, {{1, 1}, {1, 1}}, 1.5), Error);
}

TEST(Sft, GoldenMeanWordCountsAreFibonacci) {
  auto sft = golden();
  int a = 1, b = 2;  // F(2), F(3)
  for (int n = 1; n <= 12; ++n) {
    WordSpace ws(sft, n);
    EXPECT_EQ(ws.size(), b) << "n=" << n;
    int c = a + b;
    a = b;
    b = c;
  }
}

TEST(Sft, PreimagesAreOneStepExtensions) {
  auto sft = golden();
  WordSpace ws(sft, 4);
  for (int x = 0; x < ws.size(); ++x) {
    const Word& wx = ws.word(x);
    int count = 0;
    for (int a = 0; a < 2; ++a)
      if (sft.allowed(a, wx[0])) ++count;
    EXPECT_EQ(int(ws.preimage_indices(x).size()), count);
    for (int y : ws.preimage_indices(x)) {
      const Word& wy = ws.word(y);
      for (int j = 1; j < 4; ++j) EXPECT_EQ(wy[j], wx[j - 1]);
    }
  }
}

TEST(Sft, LipschitzSeminormMatchesPairwiseDefinition) {
  auto sft = full(3, 0.4);
  auto ws = make_word_space(sft, 3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 20; ++t) {
    StateFunction v(ws);
    for (int i = 0; i < v.size(); ++i) v[i] = cplx(U(rng), U(rng));
    double brute = 0.0;
    for (int i = 0; i < v.size(); ++i)
      for (int j = 0; j < v.size(); ++j)
        if (i != j) brute = std::max(brute, std::abs(v[i] - v[j]) / word_metric(ws->word(i), ws->word(j), 0.4));
    EXPECT_NEAR(lipschitz_seminorm(v, 0.4), brute, 1e-12 * brute);
  }
}

TEST(Sft, WordMetricAndParse) {
  auto a = Word::parse("0110"), b = Word::parse("0101");
  EXPECT_DOUBLE_EQ(word_metric(a, b, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(word_metric(a, a, 0.5), 1.0 / 16.0);
  EXPECT_EQ(a.str(), "0110");
  EXPECT_THROW(word_metric(a, Word::parse("01"), 0.5), Error);
}

TEST(Gibbs, GoldenMeanParryMeasure) {
  auto sft = golden();
  auto u = make_table(sft, 1, [](const Word&) { return 0.0; });
  EXPECT_THROW(rpf_eigendata(sft, u, 1), Error);  // depth 1 cannot carry the transitions
  for (int m = 2; m <= 5; ++m) {
    auto r = rpf_eigendata(sft, u, m);
    EXPECT_NEAR(r.lambda, kPhi, 1e-10);
    int zero = 0;
    EXPECT_NEAR(r.cylinder_measure(&zero, 1), kPhi * kPhi / (kPhi * kPhi + 1.0), 1e-10);
    EXPECT_NEAR(r.gap_modulus, 1.0 / (kPhi * kPhi), 1e-9);
  }
}

TEST(Gibbs, NormalizedBernoulli) {
  auto sft = full(2);
  auto u = make_table(sft, 1, [](const Word&) { return -std::log(2.0); });
  auto r = rpf_eigendata(sft, u, 1);
  EXPECT_NEAR(r.lambda, 1.0, 1e-12);
  for (double g : r.g) EXPECT_NEAR(g, 0.5, 1e-14);
  auto w = Word::parse("01101");
  EXPECT_NEAR(r.cylinder_measure(w), 1.0 / 32.0, 1e-15);
}

// Oracle: a dense eigen-decomposition of the Ruelle matrix, independent of the power iteration.
TEST(Gibbs, RandomPotentialsAgainstDenseEigensolver) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    auto sft = trial % 2 ? full(3) : build_sft(3, {{1, 1, 0}, {0, 1, 1}, {1, 1, 1}}, 0.5);
    auto u = make_table(sft, 2, [&](const Word&) { return U(rng); });
    auto R = ruelle_matrix(sft, u, 2);
    Eigen::EigenSolver<Eigen::MatrixXd> es(R.M);
    double lam = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) lam = std::max(lam, es.eigenvalues()[i].real());
    auto r = rpf_eigendata(R);
    EXPECT_NEAR(r.lambda, lam, 1e-10 * lam);
    auto one = r.transfer(std::vector<double>(r.size(), 1.0));
    for (double v : one) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Gibbs, CylinderConsistencyAndShiftInvariance) {
  auto sft = build_sft(3, {{1, 1, 0}, {0, 1, 1}, {1, 1, 1}}, 0.5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  auto u = make_table(sft, 2, [&](const Word&) { return U(rng); });
  auto r = rpf_eigendata(sft, u, 3);
  std::uniform_int_distribution<int> len(1, 6), sym(0, 2);
  int checked = 0;
  while (checked < 1000) {
    std::vector<int> s(len(rng));
    for (auto& c : s) c = sym(rng);
    Word w(s);
    if (!sft.admissible(w)) continue;
    double mw = r.cylinder_measure(w), right = 0.0, left = 0.0;
    for (int a = 0; a < 3; ++a) {
      right += r.cylinder_measure(concat(w, Word({a})));
      left += r.cylinder_measure(concat(Word({a}), w));
    }
    ASSERT_NEAR(right, mw, 1e-13);
    ASSERT_NEAR(left, mw, 1e-13);
    ++checked;
  }
}

TEST(Gibbs, ChainFrequenciesMatchMeasure) {
  auto sft = golden();
  auto u = make_table(sft, 1, [](const Word&) { return 0.0; });
  auto r = rpf_eigendata(sft, u, 2);
  GibbsChain chain(r);
  auto orbit = sample_orbit(chain, 200000, 42);
  double zeros = 0, pairs00 = 0;
  for (std::size_t i = 0; i < orbit.size(); ++i) {
    zeros += orbit[i] == 0;
    if (i + 1 < orbit.size()) pairs00 += orbit[i] == 0 && orbit[i + 1] == 0;
    if (i + 1 < orbit.size()) ASSERT_TRUE(sft.allowed(orbit[i], orbit[i + 1]));
  }
  const double p0 = kPhi * kPhi / (kPhi * kPhi + 1.0);
  EXPECT_NEAR(zeros / orbit.size(), p0, 0.01);
  EXPECT_NEAR(pairs00 / (orbit.size() - 1), p0 / kPhi, 0.01);
}

TEST(Gibbs, BallFitAndGapOnIidMeasure) {
  auto sft = full(2);
  auto u = make_table(sft, 1, [](const Word& w) { return w[0] ? -0.2 : -1.0; });
  auto r = rpf_eigendata(sft, u, 1);
  // balls are cylinders; the smallest one of length j has mass pmin^j
  const double pmin = std::exp(-1.0) / (std::exp(-1.0) + std::exp(-0.2));
  auto fit = gibbs_ball_fit(r, {0.5, 0.25, 0.125, 0.0625, 0.03125});
  EXPECT_NEAR(fit.d, std::log(pmin) / std::log(0.5), 1e-10);
  EXPECT_NEAR(fit.C_u, 1.0, 1e-10);
  // an iid measure forgets everything after one step
  auto gap = fit_spectral_gap(r, 4, 6, 1);
  EXPECT_LT(gap.errors[1], 1e-14);
}
