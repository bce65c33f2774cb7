#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <unordered_map>

#include "glmix/gibbs.hpp"
#include "glmix/skewprod.hpp"

namespace glmix {

/// Angle reduced to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

/// Re-expresses rpf data on depth m' >= m words: g'(y) = g(y[0..m-1]), mu' the cylinder measure.
inline RpfData lift(const RpfData& rpf, int m) {
  if (m < rpf.depth()) fail(ErrorKind::DepthTooSmall, "cannot lower the depth of rpf data");
  if (m == rpf.depth()) return rpf;
  auto space = make_word_space(rpf.sft(), m);
  RpfData d(space);
  d.lambda = rpf.lambda;
  d.gap_modulus = rpf.gap_modulus;
  d.iterations = rpf.iterations;
  const int N = space->size();
  d.g.resize(N);
  d.h.resize(N);
  d.nu.resize(N);
  d.mu.resize(N);
  for (int i = 0; i < N; ++i) {
    const Word& w = space->word(i);
    int base = rpf.space()->index_of(w.data());
    d.g[i] = rpf.g[base];
    d.h[i] = rpf.h[base];
    d.mu[i] = rpf.cylinder_measure(w);
    d.nu[i] = d.mu[i] / d.h[i];
  }
  d.finalize_marginals();
  return d;
}

/// Values of a cocycle table on the words of a (deeper) word space.
inline std::vector<double> lift_values(const FiberCocycle& f, const WordSpace& space) {
  if (space.depth() < f.depth()) fail(ErrorKind::DepthTooSmall, "cocycle deeper than the word space");
  std::vector<double> out(space.size());
  for (int i = 0; i < space.size(); ++i) out[i] = f.eval(space.word(i).data());
  return out;
}

/// (L_xi v)(x) = sum over preimages y of g(y) e^{i xi f(y)} v(y).
inline std::vector<cplx> twisted_apply(const WordSpace& space, const std::vector<double>& g, const std::vector<double>& f,
                                       double xi, const std::vector<cplx>& v) {
  std::vector<cplx> out(v.size());
  for (int x = 0; x < space.size(); ++x) {
    cplx acc = 0.0;
    for (int y : space.preimage_indices(x)) acc += g[y] * std::polar(1.0, xi * f[y]) * v[y];
    out[x] = acc;
  }
  return out;
}

struct TwistedOperator {
  WordSpacePtr space;
  double xi = 0.0, theta = 0.5;
  std::vector<double> g, f;
  std::vector<cplx> gt;
  double gt_seminorm = 0.0;  // |g~_xi|_theta
  double R_cert = 0.0;       // certified Lasota-Yorke constant
  double C0 = 0.0;
  double R = 0.0;            // max(C0 |g~|_theta, R_cert)
  double H = 1.0;            // max(1, 2R/(1-theta))

  int depth() const { return space->depth(); }
  int size() const { return space->size(); }

  std::vector<cplx> apply(const std::vector<cplx>& v) const {
    std::vector<cplx> out(v.size());
    for (int x = 0; x < size(); ++x) {
      cplx acc = 0.0;
      for (int y : space->preimage_indices(x)) acc += gt[y] * v[y];
      out[x] = acc;
    }
    return out;
  }
  StateFunction apply(const StateFunction& v) const { return StateFunction(space, apply(v.values)); }
  std::vector<cplx> apply_pow(std::vector<cplx> v, int n) const {
    for (int k = 0; k < n; ++k) v = apply(v);
    return v;
  }
  /// Dense matrix, (L v)(x) = sum_y M(x, y) v(y).
  Eigen::MatrixXcd matrix() const {
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(size(), size());
    for (int x = 0; x < size(); ++x)
      for (int y : space->preimage_indices(x)) M(x, y) = gt[y];
    return M;
  }
};

namespace detail {

// max over word pairs of beta/d, with beta bounding the Lipschitz defect of one transfer step
inline double certified_R(const WordSpace& space, const std::vector<double>& g, const std::vector<cplx>& gt, double theta) {
  const int N = space.size(), m = space.depth(), A = space.sft().alphabet_size();
  double best = 0.0;
  std::vector<int> pa(A), pb(A);
  for (int i = 0; i < N; ++i) {
    int lcp = m;
    for (int j = i + 1; j < N; ++j) {
      lcp = std::min(lcp, space.lcp_next(j - 1));
      if (lcp >= m - 1) continue;  // identical preimage sets and weights
      std::fill(pa.begin(), pa.end(), -1);
      std::fill(pb.begin(), pb.end(), -1);
      for (int y : space.preimage_indices(i)) pa[space.word(y)[0]] = y;
      for (int y : space.preimage_indices(j)) pb[space.word(y)[0]] = y;
      double beta = 0.0;
      for (int a = 0; a < A; ++a) {
        if (pa[a] >= 0 && pb[a] >= 0)
          beta += std::abs(gt[pa[a]] - gt[pb[a]]);
        else if (pa[a] >= 0)
          beta += g[pa[a]];
        else if (pb[a] >= 0)
          beta += g[pb[a]];
      }
      best = std::max(best, beta / std::pow(theta, lcp));
    }
  }
  return best;
}

}  // namespace detail

/// Builds L_xi on the depth of rpf (already lifted). C0 = 0 uses the certified R alone.
inline TwistedOperator make_twisted(const RpfData& rpf, const std::vector<double>& fvals, double xi, double C0 = 0.0,
                                    bool with_norms = true) {
  TwistedOperator op;
  op.space = rpf.space();
  op.xi = xi;
  op.theta = rpf.theta();
  op.g = rpf.g;
  op.f = fvals;
  op.gt.resize(op.g.size());
  for (std::size_t i = 0; i < op.g.size(); ++i) op.gt[i] = op.g[i] * std::polar(1.0, xi * op.f[i]);
  op.C0 = C0;
  if (with_norms) {
    op.gt_seminorm = lipschitz_seminorm(*op.space, op.gt, op.theta);
    op.R_cert = detail::certified_R(*op.space, op.g, op.gt, op.theta);
    op.R = std::max(C0 * op.gt_seminorm, op.R_cert);
    op.H = std::max(1.0, 2.0 * op.R / (1.0 - op.theta));
  }
  return op;
}

inline TwistedOperator twisted_matrix(const RpfData& rpf, const FiberCocycle& f, double xi, int m, double C0 = 0.0) {
  if (m < std::max(rpf.depth(), f.depth()))
    fail(ErrorKind::DepthTooSmall, "twisted operator depth " + std::to_string(m) + " below potential/cocycle depth");
  RpfData r = lift(rpf, m);
  return make_twisted(r, lift_values(f, *r.space()), xi, C0);
}

/// Smallest C0 with C0 |g~_xi|_theta >= certified R over the grid.
inline double calibrate_c0(const RpfData& rpf, const FiberCocycle& f, int m, const std::vector<double>& xi_grid) {
  RpfData r = lift(rpf, std::max(m, std::max(rpf.depth(), f.depth())));
  auto fv = lift_values(f, *r.space());
  double c0 = 0.0;
  for (double xi : xi_grid) {
    auto op = make_twisted(r, fv, xi);
    if (op.gt_seminorm > 1e-300) c0 = std::max(c0, op.R_cert / op.gt_seminorm);
  }
  return c0;
}

inline double h_norm(const std::vector<cplx>& v, const WordSpace& space, double H, double theta) {
  if (!(H >= 1.0)) fail(ErrorKind::InvalidArgument, "H must be >= 1");
  double sup = 0.0;
  for (auto z : v) sup = std::max(sup, std::abs(z));
  return std::max(sup, lipschitz_seminorm(space, v, theta) / H);
}

inline double h_norm(const StateFunction& v, double H, double theta) { return h_norm(v.values, *v.space, H, theta); }

/// Random locally constant function mixing scales: used by the property suites.
inline std::vector<cplx> random_state_function(const WordSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double decay = 0.2 + 0.8 * (U(rng) + 1.0) / 2.0;
  std::vector<cplx> v(space.size());
  std::unordered_map<std::uint64_t, cplx> bumps;
  for (int i = 0; i < space.size(); ++i) {
    const Word& w = space.word(i);
    cplx acc = 0.0;
    std::uint64_t code = 1;
    for (int j = 0; j < space.depth(); ++j) {
      code = code * 131 + std::uint64_t(w[j]) + 1;
      auto it = bumps.find(code);
      if (it == bumps.end()) it = bumps.emplace(code, cplx(U(rng), U(rng))).first;
      acc += std::pow(decay, j) * it->second;
    }
    v[i] = acc;
  }
  return v;
}

/// Smallest C0 making |L v|_theta <= theta |v|_theta + C0 |g~|_theta ||v|| hold on random v.
inline double witness_c0(const TwistedOperator& op, int trials, std::uint64_t seed) {
  if (op.gt_seminorm <= 1e-300) return 0.0;
  std::mt19937_64 rng(seed);
  double c0 = 0.0;
  for (int t = 0; t < trials; ++t) {
    auto v = random_state_function(*op.space, rng);
    double sup = 0.0;
    for (auto z : v) sup = std::max(sup, std::abs(z));
    double lhs = lipschitz_seminorm(*op.space, op.apply(v), op.theta) - op.theta * lipschitz_seminorm(*op.space, v, op.theta);
    c0 = std::max(c0, lhs / (sup * op.gt_seminorm));
  }
  return c0;
}

// ---- spectral curve --------------------------------------------------------

struct SpectralCurve {
  std::vector<double> xi;
  std::vector<cplx> lambda;
  bool crossing = false;
  double crossing_xi = std::numeric_limits<double>::quiet_NaN();
  double curvature = 0.0;   // finite-difference lambda''(0)
  double sigma2 = 0.0;      // Green-Kubo variance
  std::vector<double> gk_terms;  // C_0, C_1, ..., C_K
  double two_A = 0.0;       // least-squares fit of 1 - Re lambda = (2A) xi^2
  double B = 0.0;           // max |lambda - (1 - 2A xi^2)| / xi^3 on the fit points
};

/// Green-Kubo terms C_k = int f . (f o sigma^k) dmu = int (L^k f) f dmu for the centered f.
inline std::vector<double> green_kubo_terms(const RpfData& rpf, const std::vector<double>& f, int K) {
  double mean = rpf.integral(f);
  std::vector<double> fc = f;
  for (auto& x : fc) x -= mean;
  std::vector<double> terms;
  std::vector<double> v = fc;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) v = rpf.transfer(v);
    double s = 0.0;
    for (int i = 0; i < rpf.size(); ++i) s += rpf.mu[i] * fc[i] * v[i];
    terms.push_back(s);
  }
  return terms;
}

namespace detail {

inline std::vector<cplx> eigenvalues(const TwistedOperator& op) {
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(op.matrix(), false);
  std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  return ev;
}

inline cplx nearest(const std::vector<cplx>& ev, cplx target, bool& dominant) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < ev.size(); ++i)
    if (std::abs(ev[i] - target) < std::abs(ev[best] - target)) best = i;
  dominant = true;
  for (std::size_t i = 0; i < ev.size(); ++i)
    if (i != best && std::abs(ev[i]) > std::abs(ev[best]) + 1e-12) dominant = false;
  return ev[best];
}

}  // namespace detail

inline cplx leading_eigenvalue(const RpfData& rpf_m, const std::vector<double>& fv, double xi, cplx guess = 1.0) {
  bool dom = true;
  return detail::nearest(detail::eigenvalues(make_twisted(rpf_m, fv, xi, 0.0, false)), guess, dom);
}

inline SpectralCurve spectral_curve(const RpfData& rpf, const FiberCocycle& f, std::vector<double> xi_grid, int m,
                                    double kappa = 0.3, double fit_max = 0.2, int K = 30) {
  RpfData r = lift(rpf, std::max(m, std::max(rpf.depth(), f.depth())));
  auto fv = lift_values(f, *r.space());
  for (double x : xi_grid)
    if (std::abs(x) >= kappa) fail(ErrorKind::InvalidArgument, "xi grid must lie inside (-kappa, kappa)");
  std::sort(xi_grid.begin(), xi_grid.end());
  xi_grid.erase(std::unique(xi_grid.begin(), xi_grid.end()), xi_grid.end());

  SpectralCurve c;
  // track outward from 0 on each side
  std::vector<std::pair<double, cplx>> pos, neg;
  for (int side = 0; side < 2; ++side) {
    cplx prev = 1.0;
    std::vector<double> pts;
    for (double x : xi_grid)
      if (side == 0 ? x >= 0 : x < 0) pts.push_back(x);
    if (side == 1) std::reverse(pts.begin(), pts.end());
    for (double x : pts) {
      bool dom = true;
      cplx l = detail::nearest(detail::eigenvalues(make_twisted(r, fv, x, 0.0, false)), prev, dom);
      if (!dom) {
        c.crossing = true;
        if (std::isnan(c.crossing_xi) || std::abs(x) < std::abs(c.crossing_xi)) c.crossing_xi = x;
        break;
      }
      (side == 0 ? pos : neg).push_back({x, l});
      prev = l;
    }
  }
  std::reverse(neg.begin(), neg.end());
  for (auto& p : neg) c.xi.push_back(p.first), c.lambda.push_back(p.second);
  for (auto& p : pos) c.xi.push_back(p.first), c.lambda.push_back(p.second);

  const double h = 1e-3;
  cplx lp = leading_eigenvalue(r, fv, h), lm = leading_eigenvalue(r, fv, -h);
  c.curvature = (lp.real() + lm.real() - 2.0) / (h * h);

  c.gk_terms = green_kubo_terms(r, fv, K);
  c.sigma2 = c.gk_terms[0];
  for (int k = 1; k <= K; ++k) c.sigma2 += 2.0 * c.gk_terms[k];

  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < c.xi.size(); ++i) {
    double x = std::abs(c.xi[i]);
    if (x <= 0.0 || x > fit_max) continue;
    sxy += (1.0 - c.lambda[i].real()) * x * x;
    sxx += x * x * x * x;
  }
  c.two_A = sxx > 0 ? sxy / sxx : 0.0;
  for (std::size_t i = 0; i < c.xi.size(); ++i) {
    double x = std::abs(c.xi[i]);
    if (x <= 0.0 || x > fit_max) continue;
    c.B = std::max(c.B, std::abs(c.lambda[i] - cplx(1.0 - c.two_A * x * x, 0.0)) / (x * x * x));
  }
  return c;
}

// ---- decay profiles --------------------------------------------------------

struct DecayProfile {
  double xi = 0.0, H = 1.0;
  std::vector<double> w;  // w[n] = ||L_xi^n probe||_H, w[0] = 1
  bool monotone = true;
  double rate = 0.0;      // fitted per-step factor exp(slope of log w_n)

  int first_below(double level) const {
    for (std::size_t n = 0; n < w.size(); ++n)
      if (w[n] < level) return static_cast<int>(n);
    return -1;
  }
};

inline DecayProfile norm_decay_profile(const TwistedOperator& op, const std::vector<cplx>& probe, int n_max) {
  DecayProfile p;
  p.xi = op.xi;
  p.H = op.H;
  double n0 = h_norm(probe, *op.space, op.H, op.theta);
  if (n0 == 0.0) fail(ErrorKind::InvalidArgument, "zero probe");
  std::vector<cplx> v = probe;
  for (auto& z : v) z /= n0;
  p.w.push_back(1.0);
  for (int n = 1; n <= n_max; ++n) {
    v = op.apply(v);
    p.w.push_back(h_norm(v, *op.space, op.H, op.theta));
    if (p.w[n] > p.w[n - 1] + 1e-12) p.monotone = false;
  }
  std::vector<double> xs, ys;
  for (int n = n_max / 4; n <= n_max; ++n)
    if (p.w[n] > 1e-280) xs.push_back(n), ys.push_back(std::log(p.w[n]));
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
    p.rate = std::exp(sxy / sxx);
  }
  return p;
}

// ---- stable pairs and tolerances -------------------------------------------

struct StablePair {
  Word x, y;
  int n = 0;
  double gx = 0.0, gy = 0.0;  // g_n
  double fx = 0.0, fy = 0.0;  // f_n
  cplx gtx, gty;              // g~_n
  double phase = 0.0;         // arg(g~_n(y) / g~_n(x)) in (-pi, pi]
};

/// All ordered pairs of admissible words (head of length n) + suffix, lexicographic.
inline std::vector<StablePair> stable_pairs(const SftSpace& sft, int n, const Word& suffix,
                                            std::size_t budget = std::size_t(1) << 22) {
  if (n < 1) fail(ErrorKind::InvalidArgument, "n must be >= 1");
  if (suffix.depth() < 1 || !sft.admissible(suffix)) fail(ErrorKind::InadmissibleWord, "'" + suffix.str() + "'");
  std::vector<Word> words;
  std::vector<int> cur(n + suffix.depth());
  std::copy(suffix.symbols.begin(), suffix.symbols.end(), cur.begin() + n);
  auto rec = [&](auto&& self, int pos) -> void {
    if (pos == n) {
      if (sft.allowed(cur[n - 1], cur[n])) words.emplace_back(cur);
      if (words.size() * words.size() > budget) fail(ErrorKind::BudgetExceeded, "stable pair enumeration");
      return;
    }
    for (int a = 0; a < sft.alphabet_size(); ++a) {
      if (pos > 0 && !sft.allowed(cur[pos - 1], a)) continue;
      cur[pos] = a;
      self(self, pos + 1);
    }
  };
  rec(rec, 0);
  std::vector<StablePair> out;
  for (const auto& x : words)
    for (const auto& y : words) {
      StablePair p;
      p.x = x;
      p.y = y;
      p.n = n;
      out.push_back(std::move(p));
    }
  return out;
}

inline void evaluate_pair(StablePair& p, const TwistedOperator& op) {
  const int m = op.depth();
  if (p.x.depth() < p.n + m - 1 || p.y.depth() != p.x.depth())
    fail(ErrorKind::DepthTooSmall, "pair words too short for the operator depth");
  auto eval = [&](const Word& w, double& gn, double& fn) {
    gn = 1.0;
    fn = 0.0;
    for (int j = 0; j < p.n; ++j) {
      int i = op.space->index_of(w.data() + j);
      if (i < 0) fail(ErrorKind::InadmissibleWord, "'" + w.str() + "'");
      gn *= op.g[i];
      fn += op.f[i];
    }
  };
  eval(p.x, p.gx, p.fx);
  eval(p.y, p.gy, p.fy);
  p.gtx = p.gx * std::polar(1.0, op.xi * p.fx);
  p.gty = p.gy * std::polar(1.0, op.xi * p.fy);
  p.phase = wrap_angle(op.xi * (p.fy - p.fx));
}

inline std::vector<StablePair> stable_pairs(const TwistedOperator& op, int n, const Word& suffix) {
  auto pairs = stable_pairs(op.space->sft(), n, suffix);
  for (auto& p : pairs) evaluate_pair(p, op);
  return pairs;
}

/// 1 - cos(delta) = eps (1/g_n(x) + 1/g_n(y)).
inline double stable_tolerance(double gx, double gy, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::InvalidArgument, "epsilon must be positive");
  double rhs = eps * (1.0 / gx + 1.0 / gy);
  if (!(rhs < 2.0)) fail(ErrorKind::ToleranceUndefined, "stable tolerance: eps(1/g_x + 1/g_y) >= 2");
  return std::acos(1.0 - rhs);
}

/// The tolerance that actually separates non-cancelling pairs:
/// 1 - cos(delta) = eps/(1-eps) (1/g_n(x) + 1/g_n(y)).
inline double stable_tolerance_corrected(double gx, double gy, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) fail(ErrorKind::InvalidArgument, "epsilon must lie in (0, 1/2)");
  return stable_tolerance(gx, gy, eps / (1.0 - eps));
}

/// sin(delta) = 2 H d.
inline double unstable_tolerance(double d, double H) {
  double rhs = 2.0 * H * d;
  if (!(rhs < 1.0)) fail(ErrorKind::ToleranceUndefined, "unstable tolerance: 2 H d >= 1");
  return std::asin(rhs);
}

struct Tolerances {
  double stable = 0.0, unstable = 0.0;
};

/// Stable tolerance of the pair and unstable tolerance at the pair's own distance d(x, y).
inline Tolerances tolerances(const StablePair& p, double eps, double H, double theta) {
  Tolerances t;
  t.stable = stable_tolerance(p.gx, p.gy, eps);
  t.unstable = unstable_tolerance(word_metric(p.x, p.y, theta), H);
  return t;
}

// ---- us-cycles -------------------------------------------------------------

struct UsCycleOptions {
  int c = 2;             // junctions share a prefix of length >= n - c
  double a_tol = 0.01;   // eps = a_tol / (2 G^n)
  double eps = 0.0;      // explicit epsilon overrides the schedule when > 0
  bool corrected = true; // margin uses the corrected stable tolerance
};

struct UsCycle {
  double xi = 0.0, eps = 0.0, H = 1.0;
  int n = 0, c = 2;
  std::vector<StablePair> pairs;
  std::vector<double> stable_tol, stable_tol_uncorrected, unstable_tol, junction_d;
  double phase = 0.0;            // in (-pi, pi]
  double tolerance = 0.0;        // the one the margin uses
  double tolerance_uncorrected = 0.0;  // uncorrected stable tolerances + unstable
  double margin = 0.0;
  std::size_t work = 0;
};

/// G = sup 1/g over the normalized weights.
inline double max_inverse_weight(const std::vector<double>& g) {
  double G = 0.0;
  for (double x : g)
    if (x > 0) G = std::max(G, 1.0 / x);
  return G;
}

inline double schedule_epsilon(const std::vector<double>& g, int n, double a_tol) {
  return a_tol / (2.0 * std::pow(max_inverse_weight(g), n));
}

inline UsCycle find_us_cycle(const TwistedOperator& op, int n, int N, std::size_t budget, UsCycleOptions opt = {}) {
  if (n < 1 || N < 1) fail(ErrorKind::InvalidArgument, "n and N must be positive");
  const int m = op.depth(), D = n + m, P = std::max(0, n - opt.c);
  const double theta = op.theta;
  const double eps = opt.eps > 0 ? opt.eps : schedule_epsilon(op.g, n, opt.a_tol);
  auto space = make_word_space(op.space->sft(), D);
  const int W = space->size();
  const int A = op.space->sft().alphabet_size();

  std::vector<double> fn(W), gn(W);
  for (int i = 0; i < W; ++i) {
    const Word& w = space->word(i);
    double gg = 1.0, ff = 0.0;
    for (int j = 0; j < n; ++j) {
      int k = op.space->index_of(w.data() + j);
      gg *= op.g[k];
      ff += op.f[k];
    }
    gn[i] = gg;
    fn[i] = ff;
  }
  auto code = [&](const Word& w, int from, int len) {
    std::uint64_t c = 1;
    for (int k = from; k < from + len; ++k) c = c * std::uint64_t(A + 1) + std::uint64_t(w[k]);
    return c;
  };
  std::unordered_map<std::uint64_t, std::vector<int>> by_suffix, by_prefix, by_both;
  std::vector<std::uint64_t> suf(W), pre(W);
  for (int i = 0; i < W; ++i) {
    const Word& w = space->word(i);
    suf[i] = code(w, n, D - n);
    pre[i] = code(w, 0, P);
    by_suffix[suf[i]].push_back(i);
    by_prefix[pre[i]].push_back(i);
    by_both[pre[i] * 1000003ULL ^ suf[i]].push_back(i);
  }

  auto dist = [&](int a, int b) { return word_metric(space->word(a), space->word(b), theta); };
  auto stol = [&](int x, int y) {
    return opt.corrected ? stable_tolerance_corrected(gn[x], gn[y], eps) : stable_tolerance(gn[x], gn[y], eps);
  };

  UsCycle best;
  best.margin = -std::numeric_limits<double>::infinity();
  std::size_t work = 0;
  bool exhausted = false;

  std::vector<int> xs, ys;
  for (int L = 1; L <= N && !exhausted; ++L) {
    auto record = [&](double raw, double tol) {
      double S = wrap_angle(raw);
      double margin = S - tol;
      if (margin <= best.margin) return;
      best = UsCycle{};
      best.margin = margin;
      best.phase = S;
      best.tolerance = tol;
      for (int k = 0; k < L; ++k) {
        StablePair p;
        p.x = space->word(xs[k]);
        p.y = space->word(ys[k]);
        p.n = n;
        evaluate_pair(p, op);
        best.pairs.push_back(p);
      }
    };
    auto rec = [&](auto&& self, int k, double raw, double tol) -> void {
      if (exhausted) return;
      const int x = xs[k];
      if (k == L - 1) {
        auto it = by_both.find(pre[xs[0]] * 1000003ULL ^ suf[x]);
        if (it == by_both.end()) return;
        for (int y : it->second) {
          if (++work > budget) {
            exhausted = true;
            return;
          }
          if (y == x || suf[y] != suf[x] || pre[y] != pre[xs[0]]) continue;
          double t2;
          try {
            t2 = tol + stol(x, y) + unstable_tolerance(dist(y, xs[0]), op.H);
          } catch (const Error&) {
            continue;
          }
          ys[k] = y;
          record(raw + op.xi * (fn[y] - fn[x]), t2);
        }
        return;
      }
      for (int y : by_suffix[suf[x]]) {
        if (y == x) continue;
        double t1;
        try {
          t1 = tol + stol(x, y);
        } catch (const Error&) {
          continue;
        }
        if (t1 >= M_PI) continue;
        ys[k] = y;
        for (int x2 : by_prefix[pre[y]]) {
          if (++work > budget) {
            exhausted = true;
            return;
          }
          double t2;
          try {
            t2 = t1 + unstable_tolerance(dist(y, x2), op.H);
          } catch (const Error&) {
            continue;
          }
          if (t2 >= M_PI) continue;
          xs[k + 1] = x2;
          self(self, k + 1, raw + op.xi * (fn[y] - fn[x]), t2);
          if (exhausted) return;
        }
      }
    };
    xs.assign(L, 0);
    ys.assign(L, 0);
    for (int x1 = 0; x1 < W && !exhausted; ++x1) {
      xs[0] = x1;
      rec(rec, 0, 0.0, 0.0);
    }
    if (best.margin > 0) break;
  }
  if (!(best.margin > 0))
    fail(ErrorKind::NotFound, "no us-cycle with positive margin within budget " + std::to_string(budget) +
                                  (exhausted ? " (budget exhausted)" : " (search space exhausted)"));

  // audit trail, recomputed from the stored words
  best.xi = op.xi;
  best.eps = eps;
  best.H = op.H;
  best.n = n;
  best.c = opt.c;
  best.work = work;
  double raw = 0.0, tol = 0.0, tol_uncorrected = 0.0;
  const int L = static_cast<int>(best.pairs.size());
  for (int k = 0; k < L; ++k) {
    const auto& p = best.pairs[k];
    raw += p.phase;
    best.stable_tol.push_back(stable_tolerance_corrected(p.gx, p.gy, eps));
    best.stable_tol_uncorrected.push_back(stable_tolerance(p.gx, p.gy, eps));
    double d = word_metric(p.y, best.pairs[(k + 1) % L].x, theta);
    best.junction_d.push_back(d);
    best.unstable_tol.push_back(unstable_tolerance(d, op.H));
    tol += (opt.corrected ? best.stable_tol.back() : best.stable_tol_uncorrected.back()) + best.unstable_tol.back();
    tol_uncorrected += best.stable_tol_uncorrected.back() + best.unstable_tol.back();
  }
  best.phase = wrap_angle(raw);
  best.tolerance = tol;
  best.tolerance_uncorrected = tol_uncorrected;
  best.margin = best.phase - tol;
  return best;
}

inline UsCycle find_us_cycle(const RpfData& rpf, const FiberCocycle& f, double xi0, int n, int N, std::size_t budget,
                             UsCycleOptions opt = {}, double C0 = 0.0) {
  auto op = twisted_matrix(rpf, f, xi0, std::max(rpf.depth(), f.depth()), C0);
  return find_us_cycle(op, n, N, budget, opt);
}

// ---- nice observables and cancellation -------------------------------------

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
inline double unit(std::uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Random nice observable on the words of `space`: 1-eps < |v| < 1 and |v|_theta <= H.
/// Phases are prefix-correlated sums with theta-decaying scales.
inline StateFunction sample_nice(WordSpacePtr space, double H, double eps, std::uint64_t seed) {
  const double theta = space->sft().theta();
  const int N = space->size(), D = space->depth();
  std::vector<double> phi(N), dev(N);
  for (int i = 0; i < N; ++i) {
    const Word& w = space->word(i);
    std::uint64_t h = detail::splitmix(seed);
    double acc = 0.0, s = 0.25 * H;
    for (int j = 0; j < D; ++j) {
      h = detail::splitmix(h ^ std::uint64_t(w[j] + 1));
      acc += s * (2.0 * detail::unit(h) - 1.0) * M_PI;
      s *= theta;
    }
    phi[i] = acc;
    dev[i] = 0.05 + 0.9 * detail::unit(detail::splitmix(h ^ 0x5bd1e995ULL));
  }
  double shrink = 1.0;
  StateFunction v(space);
  for (int attempt = 0; attempt < 200; ++attempt) {
    for (int i = 0; i < N; ++i) {
      double rho = 1.0 - eps * (0.5 + (dev[i] - 0.5) * shrink);
      v[i] = std::polar(rho, phi[i] * shrink);
    }
    if (lipschitz_seminorm(v, theta) <= H) return v;
    shrink *= 0.8;
  }
  for (int i = 0; i < N; ++i) v[i] = 1.0 - 0.5 * eps;
  return v;
}

inline void audit_nice(const StateFunction& v, double eps, double H) {
  for (int i = 0; i < v.size(); ++i) {
    double a = std::abs(v[i]);
    if (!(a > 1.0 - eps && a < 1.0)) fail(ErrorKind::NotNice, "|v| outside (1-eps, 1) at '" + v.space->word(i).str() + "'");
  }
  if (lipschitz_seminorm(v, v.space->sft().theta()) > H) fail(ErrorKind::NotNice, "|v|_theta exceeds H");
}

struct CancellationCheck {
  bool cancels = false;
  double lhs = 0.0, rhs = 0.0;  // |g~x v(x) + g~y v(y)| vs g x |v(x)| + g y |v(y)| - eps
  double lemma_value = 0.0;     // |L^n v(p)| at the shared suffix p
  bool lemma_holds = true;
};

/// The defining inequality of a cancellation pair; when it holds, L^n v at the shared
/// suffix is recomputed by full enumeration and compared with 1 - eps.
inline CancellationCheck cancellation_pair_check(StablePair p, const StateFunction& v, const TwistedOperator& op,
                                                 double eps, bool audit = true) {
  if (audit) audit_nice(v, eps, op.H);
  if (p.x.depth() != v.depth()) fail(ErrorKind::DepthMismatch, "pair and observable depths differ");
  evaluate_pair(p, op);
  const cplx vx = v.at(p.x), vy = v.at(p.y);
  CancellationCheck r;
  r.lhs = std::abs(p.gtx * vx + p.gty * vy);
  r.rhs = p.gx * std::abs(vx) + p.gy * std::abs(vy) - eps;
  r.cancels = r.lhs <= r.rhs;
  if (r.cancels) {
    const int n = p.n, D = v.depth();
    cplx acc = 0.0;
    for (int q = 0; q < v.size(); ++q) {
      const Word& w = v.space->word(q);
      if (!std::equal(w.symbols.begin() + n, w.symbols.end(), p.x.symbols.begin() + n)) continue;
      cplx gq = 1.0;
      for (int j = 0; j < n; ++j) gq *= op.gt[op.space->index_of(w.data() + j)];
      acc += gq * v[q];
    }
    (void)D;
    r.lemma_value = std::abs(acc);
    r.lemma_holds = r.lemma_value <= 1.0 - eps + 1e-12;
  }
  return r;
}

}  // namespace glmix
