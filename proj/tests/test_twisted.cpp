#include <gtest/gtest.h>

#include <random>

#include "glmix/presets.hpp"
#include "glmix/twisted.hpp"

using namespace glmix;

namespace {

const std::vector<double> kGrid = {0.25, 0.5, 1.0, 2.0, 4.0};

}  // namespace

TEST(Twisted, ZeroFrequencyIsTheNormalizedTransfer) {
  auto s = presets::golden_mean();
  auto op = twisted_matrix(s.rpf, s.f, 0.0, 3);
  RpfData r = lift(s.rpf, 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(r.size());
    for (auto& x : v) x = U(rng);
    auto a = r.transfer(v);
    auto b = op.apply(std::vector<cplx>(v.begin(), v.end()));
    for (int i = 0; i < r.size(); ++i) ASSERT_NEAR(std::abs(b[i] - a[i]), 0.0, 1e-14);
  }
  auto one = op.apply(std::vector<cplx>(op.size(), 1.0));
  for (auto z : one) EXPECT_NEAR(std::abs(z - 1.0), 0.0, 1e-13);
  EXPECT_THROW(twisted_matrix(s.rpf, s.f, 0.0, 1), Error);
}

TEST(Twisted, TwistMultipliesByThePhase) {
  auto s = presets::bernoulli_s1();
  auto op = twisted_matrix(s.rpf, s.f, 0.7, 2);
  for (int y = 0; y < op.size(); ++y) {
    double fy = s.f.eval(op.space->word(y).data());
    EXPECT_NEAR(std::abs(op.gt[y] - 0.5 * std::polar(1.0, 0.7 * fy)), 0.0, 1e-15);
  }
  EXPECT_NEAR(wrap_angle(3 * M_PI), M_PI, 1e-15);
  EXPECT_NEAR(wrap_angle(-M_PI), M_PI, 1e-15);
}

// Hand oracle: f = a(x0) s(x1) with E s = 0, so E f^2 = 1.5 and every lagged covariance vanishes.
TEST(SpectralCurve, S1CurvatureMatchesVariance) {
  auto s = presets::bernoulli_s1();
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.01 * i);
  auto c = spectral_curve(s.rpf, s.f, grid, 2);
  EXPECT_FALSE(c.crossing);
  EXPECT_NEAR(c.gk_terms[0], 1.5, 1e-13);
  for (std::size_t k = 1; k < c.gk_terms.size(); ++k) EXPECT_NEAR(c.gk_terms[k], 0.0, 1e-13);
  EXPECT_NEAR(c.sigma2, 1.5, 1e-12);
  EXPECT_NEAR(c.curvature, -1.5, 1.5 * 0.02);
  EXPECT_NEAR(c.two_A, 0.75, 0.03);
  EXPECT_NEAR(std::abs(c.lambda[0] - 1.0), 0.0, 1e-12);
  for (auto l : c.lambda) EXPECT_LE(std::abs(l), 1.0 + 1e-12);
  EXPECT_THROW(spectral_curve(s.rpf, s.f, {0.5}, 2), Error);
}

TEST(SpectralCurve, GoldenMeanGreenKuboAgainstCurvature) {
  auto s = presets::golden_mean();
  auto c = spectral_curve(s.rpf, s.f, {0.0, 0.05, 0.1}, 2, 0.3, 0.2, 60);
  EXPECT_GT(c.sigma2, 0.0);
  EXPECT_NEAR(-c.curvature, c.sigma2, 0.02 * c.sigma2);
}

TEST(Norms, HNormDefinition) {
  auto s = presets::bernoulli_s1();
  auto space = make_word_space(s.sft, 5);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    auto v = random_state_function(*space, rng);
    double sup = 0.0;
    for (auto z : v) sup = std::max(sup, std::abs(z));
    double a = h_norm(v, *space, 1.0, 0.5), b = h_norm(v, *space, 3.0, 0.5);
    ASSERT_GE(a, b);
    ASSERT_GE(b, sup);
    ASSERT_NEAR(a, std::max(sup, lipschitz_seminorm(*space, v, 0.5)), 1e-14 * a);
  }
  EXPECT_THROW(h_norm(std::vector<cplx>(space->size()), *space, 0.5, 0.5), Error);
}

TEST(Norms, LasotaYorkeWithCalibratedConstant) {
  auto s = presets::bernoulli_s1();
  const double C0 = calibrate_c0(s.rpf, s.f, 2, kGrid);
  EXPECT_GT(C0, 0.0);
  std::mt19937_64 rng(8);
  for (double xi : kGrid) {
    auto op = twisted_matrix(s.rpf, s.f, xi, 2, C0);
    EXPECT_GE(op.R + 1e-12, op.R_cert);
    EXPECT_NEAR(op.H, std::max(1.0, 2 * op.R / (1 - op.theta)), 1e-14);
    EXPECT_LE(witness_c0(op, 200, 3), C0 + 1e-12) << xi;
    for (int t = 0; t < 200; ++t) {
      auto v = random_state_function(*op.space, rng);
      double sup = 0.0;
      for (auto z : v) sup = std::max(sup, std::abs(z));
      double lhs = lipschitz_seminorm(*op.space, op.apply(v), op.theta);
      ASSERT_LE(lhs, op.theta * lipschitz_seminorm(*op.space, v, op.theta) + C0 * op.gt_seminorm * sup + 1e-12);
    }
  }
}

TEST(Decay, ProfileIsNormalizedAndDecays) {
  auto s = presets::bernoulli_s1();
  const double C0 = calibrate_c0(s.rpf, s.f, 2, kGrid);
  auto op = twisted_matrix(s.rpf, s.f, 1.0, 2, C0);
  std::mt19937_64 rng(2);
  auto p = norm_decay_profile(op, random_state_function(*op.space, rng), 200);
  EXPECT_EQ(p.w.size(), 201u);
  EXPECT_DOUBLE_EQ(p.w[0], 1.0);
  EXPECT_GE(p.first_below(1e-8), 0);
  EXPECT_LT(p.rate, 1.0);
  EXPECT_THROW(norm_decay_profile(op, std::vector<cplx>(op.size()), 5), Error);
}

// |z1 + z2| <= |z1| + |z2| - eps is what cancellation needs.
TEST(Tolerances, AngleLemmaNeedsTheCorrectedHypothesis) {
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const double alpha = std::sqrt(3 * eps);
    // the weaker hypothesis eps (1/|z1| + 1/|z2|) <= 2 (1 - cos alpha) holds ...
    EXPECT_LE(eps * 2.0, 2.0 * (1 - std::cos(alpha)));
    // ... but the conclusion fails
    EXPECT_GT(std::abs(1.0 + std::polar(1.0, alpha)), 2.0 - eps);
  }
}

TEST(Tolerances, StableToleranceCounterexampleAndCorrection) {
  const double eps = 0.01, g = 0.5, rho = 1 - eps;
  auto lhs = [&](double a) { return g * rho * std::abs(1.0 + std::polar(1.0, a)); };
  const double rhs = 2 * g * rho - eps;
  // just outside the uncorrected tolerance the pair still fails to cancel
  const double d = stable_tolerance(g, g, eps);
  EXPECT_NEAR(1 - std::cos(d), 4 * eps, 1e-15);
  EXPECT_GT(lhs(std::acos(1 - 4 * eps - eps * eps)), rhs);
  const double dc = stable_tolerance_corrected(g, g, eps);
  EXPECT_GT(dc, d);
  EXPECT_LE(lhs(dc), rhs + 1e-15);

  // random weights, moduli in (1-eps, 1), angles beyond the corrected tolerance
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 1000; ++t) {
    double e = 0.001 + 0.05 * U(rng), gx = 0.05 + 0.95 * U(rng), gy = 0.05 + 0.95 * U(rng);
    double tol;
    try {
      tol = stable_tolerance_corrected(gx, gy, e);
    } catch (const Error&) {
      continue;
    }
    double rx = 1 - e * U(rng), ry = 1 - e * U(rng), a = tol + (M_PI - tol) * U(rng);
    ASSERT_LE(std::abs(gx * rx + gy * ry * std::polar(1.0, a)), gx * rx + gy * ry - e + 1e-13);
  }
  EXPECT_THROW(stable_tolerance(0.01, 0.01, 0.02), Error);
  EXPECT_THROW(stable_tolerance_corrected(0.5, 0.5, 0.6), Error);
}

TEST(Tolerances, UnstableToleranceBoundsPhaseDrift) {
  EXPECT_NEAR(unstable_tolerance(0.125, 1.0), std::asin(0.25), 1e-15);
  EXPECT_THROW(unstable_tolerance(0.5, 1.0), Error);
  auto s = presets::bernoulli_s1();
  auto space = make_word_space(s.sft, 6);
  for (double H : {1.0, 2.0, 4.0})
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto v = sample_nice(space, H, 0.1, seed);
      for (int i = 0; i < v.size(); ++i)
        for (int j = 0; j < v.size(); ++j) {
          double d = word_metric(space->word(i), space->word(j), 0.5);
          if (2 * H * d >= 1) continue;
          ASSERT_LE(std::abs(wrap_angle(std::arg(v[j]) - std::arg(v[i]))), unstable_tolerance(d, H) + 1e-12);
        }
    }
}

TEST(Nice, SamplesPassTheAudit) {
  auto s = presets::golden_mean();
  auto space = make_word_space(s.sft, 8);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    double eps = 0.01 + 0.2 * detail::unit(detail::splitmix(seed));
    auto v = sample_nice(space, 3.0, eps, seed);
    ASSERT_NO_THROW(audit_nice(v, eps, 3.0)) << seed;
  }
  StateFunction bad(space);
  for (int i = 0; i < bad.size(); ++i) bad[i] = 1.0;
  EXPECT_THROW(audit_nice(bad, 0.1, 3.0), Error);
}

TEST(StablePairs, EnumerationSharesTheSuffix) {
  auto s = presets::golden_mean();
  auto op = twisted_matrix(s.rpf, s.f, 1.0, 2);
  auto suffix = Word::parse("01");
  auto pairs = stable_pairs(op, 3, suffix);
  // golden-mean heads of length 3 ending in a symbol allowed before 0: F-count 5
  EXPECT_EQ(pairs.size(), 25u);
  for (const auto& p : pairs) {
    EXPECT_TRUE(s.sft.admissible(p.x));
    EXPECT_EQ(p.x[3], 0);
    EXPECT_EQ(p.y[4], 1);
    double fx = 0;
    for (int j = 0; j < 3; ++j) fx += s.f.eval(p.x.data() + j);
    EXPECT_NEAR(p.fx, fx, 1e-14);
    EXPECT_NEAR(p.phase, wrap_angle(p.fy - p.fx), 1e-14);
  }
  auto p = pairs[0];
  auto t = tolerances(p, 1e-3, 1.0, 0.5);
  EXPECT_DOUBLE_EQ(t.stable, stable_tolerance(p.gx, p.gy, 1e-3));
  EXPECT_DOUBLE_EQ(t.unstable, std::asin(2.0 / 32.0));
  EXPECT_THROW(stable_pairs(s.sft, 3, Word::parse("11")), Error);
}

// The cycle is re-audited from its words alone: phases, tolerances and the margin.
TEST(UsCycle, S1AtUnitFrequency) {
  auto s = presets::bernoulli_s1();
  const double C0 = calibrate_c0(s.rpf, s.f, 2, kGrid);
  auto op = twisted_matrix(s.rpf, s.f, 1.0, 2, C0);
  UsCycleOptions opt;
  auto cyc = find_us_cycle(op, 8, 4, std::size_t(2e6), opt);
  ASSERT_GT(cyc.margin, 0.0);
  EXPECT_NEAR(cyc.eps, 0.01 / (2 * std::pow(2.0, 8)), 1e-18);
  const int L = int(cyc.pairs.size()), n = 8;
  double raw = 0, tol = 0;
  for (int k = 0; k < L; ++k) {
    const auto& p = cyc.pairs[k];
    const auto& q = cyc.pairs[(k + 1) % L];
    EXPECT_FALSE(p.x == p.y);
    EXPECT_TRUE(std::equal(p.x.symbols.begin() + n, p.x.symbols.end(), p.y.symbols.begin() + n));
    EXPECT_TRUE(std::equal(p.y.symbols.begin(), p.y.symbols.begin() + n - opt.c, q.x.symbols.begin()));
    double fx = 0, fy = 0;
    for (int j = 0; j < n; ++j) fx += s.f.eval(p.x.data() + j), fy += s.f.eval(p.y.data() + j);
    raw += fy - fx;
    double d = word_metric(p.y, q.x, 0.5);
    tol += stable_tolerance_corrected(std::pow(0.5, n), std::pow(0.5, n), cyc.eps) + std::asin(2 * op.H * d);
  }
  EXPECT_NEAR(cyc.phase, wrap_angle(raw), 1e-12);
  EXPECT_NEAR(cyc.tolerance, tol, 1e-12);
  EXPECT_NEAR(cyc.margin, wrap_angle(raw) - tol, 1e-12);
  EXPECT_GE(cyc.tolerance, cyc.tolerance_uncorrected);

  // no cycle exists without a twist
  auto op0 = twisted_matrix(s.rpf, s.f, 0.0, 2, C0);
  EXPECT_THROW(find_us_cycle(op0, 4, 2, 100000, opt), Error);
}

// Oracle for the cancellation value: apply the depth-(n+m) operator n times.
TEST(UsCycle, CancellationPairsBoundTheTransfer) {
  auto s = presets::bernoulli_s1();
  const double C0 = calibrate_c0(s.rpf, s.f, 2, kGrid);
  auto op = twisted_matrix(s.rpf, s.f, 1.0, 2, C0);
  auto cyc = find_us_cycle(op, 8, 4, std::size_t(2e6));
  auto space = make_word_space(s.sft, 10);
  auto deep = twisted_matrix(s.rpf, s.f, 1.0, 10);
  int drawn_with_cancel = 0, checked = 0;
  for (std::uint64_t d = 0; d < 100; ++d) {
    auto v = sample_nice(space, op.H, cyc.eps, detail::splitmix(d + 1));
    bool any = false;
    for (const auto& p : cyc.pairs) {
      auto chk = cancellation_pair_check(p, v, op, cyc.eps);
      any = any || chk.cancels;
      if (!chk.cancels) continue;
      EXPECT_TRUE(chk.lemma_holds);
      if (checked++ < 10) {
        // L^8 v at a depth-10 word only sees its first two symbols
        std::vector<int> z(10, 0);
        z[0] = p.x[8], z[1] = p.x[9];
        auto Lv = deep.apply_pow(v.values, 8);
        EXPECT_NEAR(std::abs(Lv[space->require_index(Word(z))]), chk.lemma_value, 1e-12);
      }
    }
    drawn_with_cancel += any;
  }
  EXPECT_EQ(drawn_with_cancel, 100);
}
