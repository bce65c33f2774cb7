#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <unordered_map>

#include "glmix/observables.hpp"
#include "glmix/quadrature.hpp"
#include "glmix/twisted.hpp"

namespace glmix {

/// One covariance estimate with its error and (spectral only) band breakdown.
struct CovEstimate {
  int n = 0;
  cplx value;
  double err = 0.0;  // stderr (direct) or quadrature error estimate
  cplx band0, band_low, band_high;
  bool quadrature_warning = false;
  std::size_t evals = 0;
  std::string estimator;
};

struct CorrelationSeries {
  std::string estimator;
  std::vector<int> n;
  std::vector<cplx> cov;
  std::vector<double> err;
  std::vector<cplx> band0, band_low, band_high;

  void push(const CovEstimate& e) {
    if (!n.empty() && e.n <= n.back()) fail(ErrorKind::InvalidArgument, "series n must be strictly increasing");
    if (estimator.empty()) estimator = e.estimator;
    n.push_back(e.n);
    cov.push_back(e.value);
    err.push_back(std::max(0.0, e.err));
    band0.push_back(e.band0);
    band_low.push_back(e.band_low);
    band_high.push_back(e.band_high);
  }
  std::size_t size() const { return n.size(); }
};

namespace detail {

// int Phi(r + s) psi(r) dr from the samples of psi at stride k. Heavy-tailed spectral densities give
// Phi a derivative jump at 0, so the sum is split at r = -s: Gregory-corrected trapezoid sums on both
// sides, Gauss-Legendre on a 7-cell window around the kink with psi interpolated by one polynomial.
inline cplx pairing_at_stride(const SpectralMeasure& eta, const LocalObservable& psi, const std::vector<double>& row,
                              double s, int k) {
  const double h = k * psi.grid.dr;
  const int i_lo = psi.lo / k - 6, i_hi = (psi.hi - 1) / k + 6;  // padded with zeros
  auto sample = [&](int i) {
    const int j = i * k;
    return j >= psi.lo && j < psi.hi ? row[static_cast<std::size_t>(j)] : 0.0;
  };
  auto x = [&](int i) { return psi.grid.r(i * k); };
  auto F = [&](int i) {
    double v = sample(i);
    return v == 0.0 ? cplx(0.0) : eta.spatial(x(i) + s) * v;
  };
  const double u = (-s - psi.grid.r(0)) / h;  // kink position in stride units
  if (u < i_lo + 6 || u > i_hi - 6) {
    cplx acc = 0.0;
    for (int i = i_lo; i <= i_hi; ++i) acc += F(i);
    return acc * h;
  }
  const int m = static_cast<int>(std::floor(u)), a = m - 3, b = m + 4;
  std::vector<cplx> L(5), R(5);
  for (int q = 0; q < 5; ++q) L[q] = F(a - 4 + q), R[q] = F(b + q);
  cplx acc = 0.5 * (L[4] + R[0]);
  for (int i = i_lo; i < a; ++i) acc += F(i);
  for (int i = b + 1; i <= i_hi; ++i) acc += F(i);
  // backward differences at a, forward at b
  const cplx d1 = L[4] - L[3], d2 = L[4] - 2.0 * L[3] + L[2], d3 = L[4] - 3.0 * L[3] + 3.0 * L[2] - L[1],
             d4 = L[4] - 4.0 * L[3] + 6.0 * L[2] - 4.0 * L[1] + L[0];
  const cplx f1 = R[1] - R[0], f2 = R[2] - 2.0 * R[1] + R[0], f3 = R[3] - 3.0 * R[2] + 3.0 * R[1] - R[0],
             f4 = R[4] - 4.0 * R[3] + 6.0 * R[2] - 4.0 * R[1] + R[0];
  acc += -(d1 - f1) / 12.0 - (d2 + f2) / 24.0 - 19.0 * (d3 - f3) / 720.0 - 3.0 * (d4 + f4) / 160.0;
  cplx total = acc * h;

  // psi on [x_a, x_b] through its 8 samples, barycentric form
  static constexpr double bw[8] = {1, -7, 21, -35, 35, -21, 7, -1};
  double ys[8];
  for (int q = 0; q < 8; ++q) ys[q] = sample(a + q);
  auto psi_at = [&](double r) {
    const double t = (r - x(a)) / h;
    double num = 0.0, den = 0.0;
    for (int q = 0; q < 8; ++q) {
      if (std::abs(t - q) < 1e-14) return ys[q];
      double w = bw[q] / (t - q);
      num += w * ys[q];
      den += w;
    }
    return num / den;
  };
  using GL = boost::math::quadrature::gauss<double, 20>;
  auto piece = [&](double lo, double hi) {
    const double c = 0.5 * (lo + hi), hw = 0.5 * (hi - lo);
    cplx p = 0.0;
    for (std::size_t q = 0; q < GL::abscissa().size(); ++q)
      for (double sg : {-1.0, 1.0}) {
        const double r = c + sg * hw * GL::abscissa()[q];
        p += GL::weights()[q] * eta.spatial(r + s) * psi_at(r);
      }
    return p * hw;
  };
  return total + piece(x(a), -s) + piece(-s, x(b));
}

// the pairing at spacing dr, and at 2 dr for the error estimate
inline std::pair<cplx, cplx> fiber_pairing(const SpectralMeasure& eta, const LocalObservable& psi, int ipsi, double s) {
  const auto& row = psi.values[static_cast<std::size_t>(ipsi)];
  return {pairing_at_stride(eta, psi, row, s, 1), pairing_at_stride(eta, psi, row, s, 2)};
}

struct CovKey {
  int ipsi, iphi;
  std::int64_t fq;
  bool operator<(const CovKey& o) const { return std::tie(ipsi, iphi, fq) < std::tie(o.ipsi, o.iphi, o.fq); }
};

inline std::int64_t fkey(double s) { return std::llround(s * 0x1.0p36); }

inline int cov_depth(const RpfData& rpf, const FiberCocycle& f, const GlobalObservable& Phi, const LocalObservable& psi,
                     int n) {
  int D = std::max(rpf.depth(), psi.depth());
  D = std::max(D, n + Phi.depth());
  if (n > 0) D = std::max(D, n + f.depth() - 1);
  return D;
}

inline void check_spaces(const RpfData& rpf, const FiberCocycle& f, const GlobalObservable& Phi, const LocalObservable& psi) {
  const auto& a = rpf.sft();
  for (const SftSpace* s : {&f.table.space->sft(), &Phi.space->sft(), &psi.space->sft()})
    if (s->alphabet_size() != a.alphabet_size() || s->transitions() != a.transitions())
      fail(ErrorKind::InvalidArgument, "observables and system live on different shifts");
}

}  // namespace detail

/// Exact enumeration over admissible depth-D cylinders, D = max(depths, n + depth(Phi)).
inline CovEstimate cov_exact(const RpfData& rpf, const FiberCocycle& f, const GlobalObservable& Phi,
                             const LocalObservable& psi, int n, std::size_t budget = std::size_t(1) << 24) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "n must be >= 0");
  detail::check_spaces(rpf, f, Phi, psi);
  const SftSpace& sft = rpf.sft();
  const int D = detail::cov_depth(rpf, f, Phi, psi, n), m = rpf.depth(), k = f.depth(), A = sft.alphabet_size();

  // DFS with running products of g windows and partial Birkhoff sums
  std::map<detail::CovKey, double> mass;
  std::vector<int> w(D);
  std::vector<double> gp(D + 1, 1.0), fp(D + 1, 0.0);
  std::size_t count = 0;
  auto rec = [&](auto&& self, int pos) -> void {
    if (pos == D) {
      if (++count > budget) fail(ErrorKind::BudgetExceeded, "cov_exact: more than " + std::to_string(budget) + " cylinders");
      double mu = gp[D] * rpf.marginal(w.data() + D - m + 1);
      detail::CovKey key{psi.space->index_of(w.data()), Phi.space->index_of(w.data() + n), detail::fkey(fp[D])};
      mass[key] += mu;
      return;
    }
    for (int a = 0; a < A; ++a) {
      if (pos > 0 && !sft.allowed(w[pos - 1], a)) continue;
      w[pos] = a;
      gp[pos + 1] = gp[pos];
      fp[pos + 1] = fp[pos];
      int start = pos - m + 1;
      if (start >= 0) gp[pos + 1] *= rpf.g[rpf.space()->index_of(w.data() + start)];
      int fs = pos - k + 1;
      if (fs >= 0 && fs < n) fp[pos + 1] += f.eval(w.data() + fs);
      self(self, pos + 1);
    }
  };
  rec(rec, 0);

  CovEstimate e;
  e.n = n;
  e.estimator = "exact";
  cplx total = 0.0, coarse = 0.0;
  for (const auto& [key, mu] : mass) {
    auto [a, b] = detail::fiber_pairing(Phi.at(key.iphi), psi, key.ipsi, double(key.fq) * 0x1.0p-36);
    total += mu * a;
    coarse += mu * b;
  }
  cplx sub = nu_av_global(Phi, rpf) * nu_local(psi, rpf);
  e.value = total - sub;
  e.err = std::abs(total - coarse) + 1e-15 * (1.0 + std::abs(total));
  e.evals = count;
  return e;
}

/// Monte Carlo over x ~ mu; deterministic per seed.
inline CovEstimate cov_direct(const RpfData& rpf, const FiberCocycle& f, const GlobalObservable& Phi,
                              const LocalObservable& psi, int n, int samples, std::uint64_t seed) {
  if (samples < 2) fail(ErrorKind::InvalidArgument, "need at least two samples");
  detail::check_spaces(rpf, f, Phi, psi);
  const int D = detail::cov_depth(rpf, f, Phi, psi, n);
  GibbsChain chain(rpf);
  std::mt19937_64 rng(seed);
  std::map<detail::CovKey, cplx> memo;
  double mr = 0.0, mi = 0.0, sr = 0.0, si = 0.0;
  for (int t = 0; t < samples; ++t) {
    std::vector<int> w = chain.sample(D, rng);
    double s = n > 0 ? birkhoff_sum(f, w.data(), n) : 0.0;
    detail::CovKey key{psi.space->index_of(w.data()), Phi.space->index_of(w.data() + n), detail::fkey(s)};
    auto it = memo.find(key);
    if (it == memo.end()) it = memo.emplace(key, detail::fiber_pairing(Phi.at(key.iphi), psi, key.ipsi, s).first).first;
    const cplx v = it->second;
    // Welford
    double dr = v.real() - mr, di = v.imag() - mi;
    mr += dr / (t + 1);
    mi += di / (t + 1);
    sr += dr * (v.real() - mr);
    si += di * (v.imag() - mi);
  }
  CovEstimate e;
  e.n = n;
  e.estimator = "direct";
  e.value = cplx(mr, mi) - nu_av_global(Phi, rpf) * nu_local(psi, rpf);
  e.err = std::sqrt((sr + si) / (samples - 1) / samples);
  e.evals = static_cast<std::size_t>(samples);
  return e;
}

struct SpectralOptions {
  double alpha = 0.4;
  double abs_tol = 1e-11;  // per density panel
  int max_depth = 48;
};

/// Frequency-side evaluation: int dmu(y) int deta_y(xi) (L_{-xi}^n psi^_xi)(y), minus nu_av(Phi) nu(psi),
/// split into the xi = 0, 0 < |xi| < n^-alpha and |xi| >= n^-alpha bands.
inline CovEstimate cov_spectral(const RpfData& rpf, const FiberCocycle& f, const GlobalObservable& Phi,
                                const LocalObservable& psi, int n, SpectralOptions opt = {}) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "n must be >= 0");
  if (!(opt.alpha > 0.0 && opt.alpha < 0.5)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1/2)");
  detail::check_spaces(rpf, f, Phi, psi);
  const int D = std::max({rpf.depth(), f.depth(), psi.depth(), Phi.depth()});
  const RpfData r = lift(rpf, D);
  const WordSpace& space = *r.space();
  const int N = space.size();
  const std::vector<double> fv = lift_values(f, space);
  std::vector<int> to_psi(N), to_phi(N);
  for (int y = 0; y < N; ++y) {
    to_psi[y] = psi.space->index_of(space.word(y).data());
    to_phi[y] = Phi.space->index_of(space.word(y).data());
  }
  // words grouped by their spectral measure
  std::vector<const SpectralMeasure*> measures;
  std::vector<int> group(N);
  for (int y = 0; y < N; ++y) {
    const SpectralMeasure* p = &Phi.at(to_phi[y]);
    auto it = std::find(measures.begin(), measures.end(), p);
    group[y] = static_cast<int>(it - measures.begin());
    if (it == measures.end()) measures.push_back(p);
  }

  // (L_{-xi}^n psi^_xi)(y) weighted by mu(y), summed per measure group
  auto transported = [&](double xi) {
    StateFunction ph = fiber_fourier(psi, xi);
    std::vector<cplx> v(N);
    for (int y = 0; y < N; ++y) v[y] = ph[to_psi[y]];
    std::vector<cplx> gt(N);
    for (int y = 0; y < N; ++y) gt[y] = r.g[y] * std::polar(1.0, -xi * fv[y]);
    std::vector<cplx> next(N);
    for (int k = 0; k < n; ++k) {
      for (int x = 0; x < N; ++x) {
        cplx acc = 0.0;
        for (int y : space.preimage_indices(x)) acc += gt[y] * v[y];
        next[x] = acc;
      }
      v.swap(next);
    }
    std::vector<cplx> per(measures.size(), 0.0);
    for (int y = 0; y < N; ++y) per[group[y]] += r.mu[y] * v[y];
    return per;
  };

  CovEstimate e;
  e.n = n;
  e.estimator = "spectral";
  const double cut = n > 0 ? std::pow(double(n), -opt.alpha) : std::numeric_limits<double>::infinity();

  // atoms, exactly
  std::map<double, std::vector<cplx>> atom_cache;
  for (std::size_t gi = 0; gi < measures.size(); ++gi)
    for (const auto& a : measures[gi]->atoms) {
      auto it = atom_cache.find(a.xi);
      if (it == atom_cache.end()) it = atom_cache.emplace(a.xi, transported(a.xi)).first;
      cplx c = a.weight * it->second[gi];
      double ax = std::abs(a.xi);
      if (ax <= 1e-15)
        e.band0 += c;
      else if (ax < cut)
        e.band_low += c;
      else
        e.band_high += c;
    }

  // densities, by adaptive quadrature on panels split at 0 and +-cut
  bool any_density = false;
  double support = 0.0;
  for (const auto* m : measures)
    if (m->has_density()) {
      any_density = true;
      support = std::max(support, m->support > 0 ? m->support : std::numeric_limits<double>::infinity());
    }
  if (any_density) {
    const double nyquist = M_PI / psi.grid.dr;
    const double xmax = std::min(support, nyquist);
    auto integrand = [&](double xi) {
      auto per = transported(xi);
      cplx s = 0.0;
      for (std::size_t gi = 0; gi < measures.size(); ++gi)
        if (measures[gi]->has_density()) s += measures[gi]->density(xi) * per[gi];
      return s;
    };
    QuadStats st;
    auto panel = [&](double a, double b) {
      return integrate_complex(integrand, a, b, opt.abs_tol, st, opt.max_depth);
    };
    const double c = std::min(cut, xmax);
    e.band_low += panel(-c, 0.0) + panel(0.0, c);
    if (c < xmax) e.band_high += panel(-xmax, -c) + panel(c, xmax);
    e.evals = st.evals;
    e.quadrature_warning = !st.converged;
    e.err = 4.0 * opt.abs_tol;
    // mass beyond the resolvable band, times the smoothness bound on |psi^_xi|
    if (xmax < support) {
      double tail = 0.0;
      for (const auto* m : measures)
        if (m->has_density()) tail = std::max(tail, m->abs_tail(xmax));
      double decay = psi.Max.empty() ? 0.0 : psi.Max[0];
      for (int l = 1; l <= psi.l_max(); ++l) decay = std::min(decay, psi.Max[l] / std::pow(xmax, l));
      e.err += tail * decay;
    }
  }
  e.band0 -= nu_av_global(Phi, rpf) * nu_local(psi, rpf);
  e.value = e.band0 + e.band_low + e.band_high;
  e.err += 1e-14 * std::abs(e.value);
  return e;
}

// ---- rate fitting ----------------------------------------------------------

struct RateFit {
  int lo = 0, hi = 0;
  std::size_t points = 0;       // points used in the slope fit
  bool exponent_valid = false;
  double exponent = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN(), ci_hi = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> levels;
  std::vector<bool> rapid_pass;
  std::vector<double> rapid_ratio;  // max_n c_n / head constant
};

/// Least-squares slope of log|cov| against log n on [lo, hi]; the rapid-decay classifier
/// asks c_n = |cov(n)| n^l to stay within a factor 10 of its head constant, the largest c_n
/// on the first quarter of the window.
inline RateFit rate_fit(const CorrelationSeries& s, int lo, int hi, std::vector<int> levels = {1, 2, 3, 4, 5, 6}) {
  RateFit fit;
  fit.lo = lo;
  fit.hi = hi;
  fit.levels = levels;
  std::vector<double> nn, av, lx, ly;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.n[i] < lo || s.n[i] > hi) continue;
    double a = std::abs(s.cov[i]);
    if (a <= 0.0 || s.n[i] <= 0) continue;
    nn.push_back(s.n[i]);
    av.push_back(a);
    if (a >= 10.0 * s.err[i]) {
      lx.push_back(std::log(double(s.n[i])));
      ly.push_back(std::log(a));
    }
  }
  if (nn.size() < 5) fail(ErrorKind::DegenerateWindow, "fewer than 5 nonzero points in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  fit.points = lx.size();
  if (lx.size() >= 5) {
    const double k = double(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= k;
    my /= k;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    fit.exponent = sxy / sxx;
    double rss = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      double res = ly[i] - (my + fit.exponent * (lx[i] - mx));
      rss += res * res;
    }
    double se = std::sqrt(rss / (k - 2.0) / sxx);
    boost::math::students_t dist(k - 2.0);
    double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    fit.ci_lo = fit.exponent - q * se;
    fit.ci_hi = fit.exponent + q * se;
    fit.exponent_valid = true;
  }
  const std::size_t head = std::max<std::size_t>(1, nn.size() / 4);
  for (int l : levels) {
    double ch = 0.0, cmax = 0.0;
    for (std::size_t i = 0; i < nn.size(); ++i) {
      double c = av[i] * std::pow(nn[i], l);
      if (i < head) ch = std::max(ch, c);
      cmax = std::max(cmax, c);
    }
    double ratio = cmax / ch;
    fit.rapid_ratio.push_back(ratio);
    fit.rapid_pass.push_back(ratio <= 10.0);
  }
  return fit;
}

struct LfBound {
  double C = 0.0;
  bool pass = false;
  std::vector<int> n;
  std::vector<double> envelope, ratio;
  double head_C = 0.0;
};

/// |cov(n)| <= C (LF(Phi, n^{-1/2+eps}) + n^{-k}); C is the smallest constant over the series.
/// A finite C only means something if the ratio stays bounded, so the ratio must not outgrow
/// its head constant (first quarter of the series) by more than a factor 10.
inline LfBound lf_bound_check(const CorrelationSeries& s, const GlobalObservable& Phi, const RpfData& rpf, int k,
                              double eps) {
  LfBound b;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.n[i] < 1) continue;
    double nn = s.n[i];
    double env = low_freq_variation(Phi, rpf, std::pow(nn, -0.5 + eps)) + std::pow(nn, -double(k));
    b.n.push_back(s.n[i]);
    b.envelope.push_back(env);
    b.ratio.push_back(std::abs(s.cov[i]) / env);
  }
  if (b.ratio.empty()) return b;
  const std::size_t head = std::max<std::size_t>(1, b.ratio.size() / 4);
  for (std::size_t i = 0; i < b.ratio.size(); ++i) {
    b.C = std::max(b.C, b.ratio[i]);
    if (i < head) b.head_C = std::max(b.head_C, b.ratio[i]);
  }
  b.pass = std::isfinite(b.C) && b.C <= 10.0 * b.head_C + 1e-300;
  return b;
}

}  // namespace glmix
