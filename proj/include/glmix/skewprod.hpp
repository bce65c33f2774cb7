#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "glmix/gibbs.hpp"

namespace glmix {

/// Locally constant real cocycle f driving F(x, r) = (sigma x, r + f(x)).
struct FiberCocycle {
  WordTable table;
  double mean = 0.0;

  FiberCocycle() = default;
  explicit FiberCocycle(WordTable t, double m = 0.0) : table(std::move(t)), mean(m) {}

  int depth() const { return table.depth(); }
  double eval(const int* s) const { return table.eval(s); }
  double operator()(const Word& w) const { return table(w); }
  double max_abs() const {
    double m = 0.0;
    for (double v : table.values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// f_n on the word starting at s: sum of n window evaluations (no admissibility checks).
inline double birkhoff_sum(const FiberCocycle& f, const int* s, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += f.eval(s + i);
  return acc;
}

inline double birkhoff_sum(const FiberCocycle& f, const Word& w, int n) {
  if (n < 0) fail(ErrorKind::InvalidArgument, "negative n");
  if (n > 0 && w.depth() < n + f.depth() - 1)
    fail(ErrorKind::WordTooShort, "depth " + std::to_string(w.depth()) + " < n + k - 1 = " + std::to_string(n + f.depth() - 1));
  if (!f.table.space->sft().admissible(w)) fail(ErrorKind::InadmissibleWord, "'" + w.str() + "'");
  return birkhoff_sum(f, w.data(), n);
}

/// Integral of a locally constant function against mu, via cylinder measures.
inline double integrate_table(const WordTable& t, const RpfData& rpf) {
  double acc = 0.0;
  for (int i = 0; i < t.space->size(); ++i) acc += rpf.cylinder_measure(t.space->word(i)) * t.values[i];
  return acc;
}

inline FiberCocycle center(const FiberCocycle& f, const RpfData& rpf) {
  double mean = integrate_table(f.table, rpf);
  std::vector<double> v = f.table.values;
  for (auto& x : v) x -= mean;
  WordTable t(f.table.space, std::move(v));
  double residual = integrate_table(t, rpf);
  return FiberCocycle(std::move(t), residual);
}

/// f depending on x_{-k}..x_k; the table is indexed by windows of length 2k+1.
struct TwoSidedCocycle {
  int range = 0;
  WordTable table;
};

/// Output of the finite telescoping f = f+ + h - h o sigma.
/// f+ depends on x_0..x_{2k}; h on x_{-k}..x_{2k-1} (its table has windows of length 3k,
/// first coordinate -k). For k = 0, h is identically zero and h_table is empty.
struct ReducedCocycle {
  FiberCocycle f_plus;
  int k = 0;
  std::optional<WordTable> h_table;

  /// h at the two-sided window starting at coordinate -k.
  double h(const int* s) const { return h_table ? h_table->eval(s) : 0.0; }
};

inline ReducedCocycle reduce_to_one_sided(const TwoSidedCocycle& f2) {
  const int k = f2.range;
  const SftSpace& sft = f2.table.space->sft();
  ReducedCocycle out;
  out.k = k;
  // f+ = f o sigma^k reads the same window table, shifted to start at coordinate 0
  out.f_plus = FiberCocycle(f2.table, 0.0);
  if (k == 0) return out;
  out.h_table = make_table(sft, 3 * k, [&](const Word& w) {
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += f2.table.eval(w.data() + j);
    return acc;
  });
  return out;
}

/// max |f+ + h - h o sigma - f| over all admissible windows x_{-k}..x_{2k}.
inline double cohomology_defect(const TwoSidedCocycle& f2, const ReducedCocycle& r) {
  const int k = f2.range;
  const SftSpace& sft = f2.table.space->sft();
  const int len = 3 * k + 1;
  WordSpace windows(sft, len);
  double worst = 0.0;
  for (const auto& w : windows.words()) {
    const int* s = w.data();  // s[j] = x_{j-k}
    double lhs = r.f_plus.eval(s + k) + r.h(s) - r.h(s + 1);
    worst = std::max(worst, std::abs(lhs - f2.table.eval(s)));
  }
  return worst;
}

struct AccessReport {
  int n = 0, N = 0, c = 0;
  std::size_t budget = 0;
  Word base;
  std::vector<double> achieved;      // sorted, in [0,1]
  std::vector<int> cycle_length;     // minimal number of stable pairs per achieved value
  double covering_radius = 0.5;
  std::vector<double> radius_by_length;  // covering radius using cycles of <= j pairs, j = 1..N
  std::vector<double> symmetric_window;  // all achieved values in [-1,1]
  double C = 1.0;                    // closeness constant theta^{-c} realized by the junctions
  bool budget_exceeded = false;
  std::size_t work = 0;
};

inline double covering_radius_of(const std::vector<double>& pts) {
  if (pts.empty()) return 0.5;
  double gap = std::max(pts.front(), 1.0 - pts.back());
  for (std::size_t i = 1; i < pts.size(); ++i) gap = std::max(gap, pts[i] - pts[i - 1]);
  return gap / 2.0;
}

namespace detail {

// Value sets are kept as sorted, quantized integers (resolution 2^-32).
constexpr double kQuant = 4294967296.0;
using ValueSet = std::vector<std::int64_t>;

inline std::int64_t quantize(double v) { return static_cast<std::int64_t>(std::llround(v * kQuant)); }
inline double dequantize(std::int64_t q) { return double(q) / kQuant; }

inline void normalize_set(ValueSet& s) {
  std::sort(s.begin(), s.end());
  ValueSet out;
  out.reserve(s.size());
  for (auto v : s)
    if (out.empty() || v - out.back() > 4) out.push_back(v);
  s.swap(out);
}

}  // namespace detail

/// Achievable sums of Birkhoff-sum differences over cycles of <= N stable pairs.
///
/// Points are depth-(n+k) words. A stable move keeps the tail (positions >= n) and changes
/// the head; a junction keeps the first n-c symbols. Values are propagated class-wise:
/// after a junction the reachable set depends only on the (n-c)-prefix, before a stable
/// move only on the tail, which keeps the search polynomial in the number of classes.
inline AccessReport collapsed_access_coverage(const RpfData& rpf, const FiberCocycle& f, int n, int N,
                                              std::size_t budget, int c = 2,
                                              std::optional<Word> base = std::nullopt) {
  (void)rpf;
  const SftSpace& sft = f.table.space->sft();
  const int k = f.depth();
  if (n < 2 * N) fail(ErrorKind::InvalidArgument, "collapsed accessibility needs n >= 2N");
  if (c < 0 || c > n) fail(ErrorKind::InvalidArgument, "junction slack c must lie in [0, n]");
  const int D = n + k, plen = n - c;

  AccessReport rep;
  rep.n = n;
  rep.N = N;
  rep.c = c;
  rep.budget = budget;
  rep.C = std::pow(sft.theta(), -c);

  WordSpace pts(sft, D);
  if (std::size_t(pts.size()) > budget) fail(ErrorKind::BudgetExceeded, "point space exceeds budget");
  rep.base = base ? *base : pts.word(0);
  const int b = pts.require_index(rep.base);

  // classes: prefix (first n-c symbols) and tail (last k symbols)
  std::map<std::vector<int>, int> pmap, tmap;
  std::vector<int> pcls(pts.size()), tcls(pts.size());
  std::vector<double> fn(pts.size());
  for (int i = 0; i < pts.size(); ++i) {
    const Word& w = pts.word(i);
    std::vector<int> p(w.symbols.begin(), w.symbols.begin() + plen), t(w.symbols.begin() + n, w.symbols.end());
    pcls[i] = pmap.emplace(p, int(pmap.size())).first->second;
    tcls[i] = tmap.emplace(t, int(tmap.size())).first->second;
    fn[i] = birkhoff_sum(f, w.data(), n);
  }
  const int P = int(pmap.size()), T = int(tmap.size());
  // F[p][t]: distinct f_n values of points with prefix class p and tail class t
  std::vector<std::vector<std::vector<double>>> F(P, std::vector<std::vector<double>>(T));
  double fmin = 1e300, fmax = -1e300;
  for (int i = 0; i < pts.size(); ++i) {
    F[pcls[i]][tcls[i]].push_back(fn[i]);
    fmin = std::min(fmin, fn[i]);
    fmax = std::max(fmax, fn[i]);
  }
  for (auto& row : F)
    for (auto& cell : row) {
      std::sort(cell.begin(), cell.end());
      cell.erase(std::unique(cell.begin(), cell.end(), [](double a, double b2) { return std::abs(a - b2) < 1e-12; }), cell.end());
    }
  const double span = fmax - fmin;

  using detail::ValueSet;
  std::vector<ValueSet> W(T), V(P);
  W[tcls[b]] = {detail::quantize(fn[b])};
  std::vector<ValueSet> closed;  // values returning to the base after j pairs

  for (int j = 1; j <= N && !rep.budget_exceeded; ++j) {
    // stable move: subtract f_n(y) for y in the tail class
    for (auto& s : V) s.clear();
    for (int p = 0; p < P; ++p) {
      ValueSet acc;
      for (int t = 0; t < T; ++t) {
        if (W[t].empty() || F[p][t].empty()) continue;
        for (double fy : F[p][t]) {
          auto q = detail::quantize(fy);
          for (auto v : W[t]) acc.push_back(v - q);
        }
        rep.work += W[t].size() * F[p][t].size();
      }
      // remaining N-j pairs move the sum by at most span each
      const double slack = (N - j) * span + 1e-9;
      const auto lo = detail::quantize(-1.0 - slack), hi = detail::quantize(1.0 + slack);
      acc.erase(std::remove_if(acc.begin(), acc.end(), [&](std::int64_t v) { return v < lo || v > hi; }), acc.end());
      detail::normalize_set(acc);
      V[p] = std::move(acc);
    }
    closed.push_back(V[pcls[b]]);
    if (rep.work > budget) {
      rep.budget_exceeded = true;
      break;
    }
    if (j == N) break;
    // junction then next stable move: add f_n(z) for z in the prefix class
    for (auto& s : W) s.clear();
    for (int t = 0; t < T; ++t) {
      ValueSet acc;
      for (int p = 0; p < P; ++p) {
        if (V[p].empty() || F[p][t].empty()) continue;
        for (double fz : F[p][t]) {
          auto q = detail::quantize(fz);
          for (auto v : V[p]) acc.push_back(v + q);
        }
        rep.work += V[p].size() * F[p][t].size();
      }
      detail::normalize_set(acc);
      W[t] = std::move(acc);
    }
    if (rep.work > budget) rep.budget_exceeded = true;
  }

  // minimal cycle length per value; sets are nested because trivial pairs are allowed
  const ValueSet& all = closed.back();
  auto contains = [](const ValueSet& s, std::int64_t v) {
    auto it = std::lower_bound(s.begin(), s.end(), v - 4);
    return it != s.end() && *it <= v + 4;
  };
  for (auto v : all) {
    double t = detail::dequantize(v);
    if (t >= -1.0 - 1e-12 && t <= 1.0 + 1e-12) rep.symmetric_window.push_back(std::clamp(t, -1.0, 1.0));
    if (t < -1e-12 || t > 1.0 + 1e-12) continue;
    int len = int(closed.size());
    for (std::size_t j = 0; j < closed.size(); ++j)
      if (contains(closed[j], v)) {
        len = int(j) + 1;
        break;
      }
    rep.achieved.push_back(std::clamp(t, 0.0, 1.0));
    rep.cycle_length.push_back(len);
  }
  rep.covering_radius = covering_radius_of(rep.achieved);
  for (int j = 1; j <= int(closed.size()); ++j) {
    std::vector<double> sub;
    for (std::size_t i = 0; i < rep.achieved.size(); ++i)
      if (rep.cycle_length[i] <= j) sub.push_back(rep.achieved[i]);
    rep.radius_by_length.push_back(covering_radius_of(sub));
  }
  return rep;
}

struct PeriodicOrbit {
  Word word;   // lexicographically minimal rotation
  double sum;  // f_p along the orbit
};

struct ArithmeticityReport {
  int max_period = 0;
  std::vector<PeriodicOrbit> orbits;
  std::vector<double> normalized;  // f_p / p per orbit
  bool cohomologous_to_constant = false;
  bool lattice_candidate = false;
  double lattice_r = 0.0;
};

/// Real gcd by the Euclidean algorithm; returns 0 when the values have no common period
/// above `floor`.
inline double real_gcd(const std::vector<double>& vals, double tol = 1e-9, double floor = 1e-6) {
  double g = 0.0;
  for (double v : vals) {
    double a = std::max(g, std::abs(v)), b = std::min(g, std::abs(v));
    while (b > tol) {
      double r = std::fmod(a, b);
      if (r > b - tol) r = 0.0;
      a = b;
      b = r;
    }
    g = a;
    if (g < floor) return 0.0;
  }
  for (double v : vals) {
    double q = v / g;
    if (std::abs(q - std::round(q)) > 1e-7) return 0.0;
  }
  return g;
}

inline ArithmeticityReport non_arithmeticity_probe(const SftSpace& sft, const FiberCocycle& f, int max_period) {
  ArithmeticityReport rep;
  rep.max_period = max_period;
  const int k = f.depth();
  const int A = sft.alphabet_size();
  std::map<int, std::vector<double>> by_period;
  for (int p = 1; p <= max_period; ++p) {
    std::vector<int> w(p, 0);
    // odometer over all length-p words; keep cyclically admissible primitive minimal rotations
    while (true) {
      bool ok = true;
      for (int i = 0; i < p && ok; ++i) ok = sft.allowed(w[i], w[(i + 1) % p]);
      if (ok) {
        bool minimal = true, primitive = true;
        for (int r = 1; r < p && minimal; ++r) {
          std::vector<int> rot(p);
          for (int i = 0; i < p; ++i) rot[i] = w[(i + r) % p];
          if (rot < w) minimal = false;
          if (rot == w) primitive = false;
        }
        if (minimal && primitive) {
          std::vector<int> ext(p + k);
          for (int i = 0; i < p + k; ++i) ext[i] = w[i % p];
          double s = birkhoff_sum(f, ext.data(), p);
          rep.orbits.push_back({Word(w), s});
          rep.normalized.push_back(s / p);
          by_period[p].push_back(s);
        }
      }
      int i = p - 1;
      while (i >= 0 && ++w[i] == A) w[i--] = 0;
      if (i < 0) break;
    }
  }
  if (rep.normalized.empty()) return rep;
  double lo = *std::min_element(rep.normalized.begin(), rep.normalized.end());
  double hi = *std::max_element(rep.normalized.begin(), rep.normalized.end());
  rep.cohomologous_to_constant = hi - lo <= 1e-10;

  std::vector<double> diffs;
  for (auto& [p, sums] : by_period)
    for (std::size_t i = 1; i < sums.size(); ++i)
      if (std::abs(sums[i] - sums[0]) > 1e-10) diffs.push_back(sums[i] - sums[0]);
  if (!rep.cohomologous_to_constant && !diffs.empty()) {
    rep.lattice_r = real_gcd(diffs);
    rep.lattice_candidate = rep.lattice_r > 0.0;
  }
  return rep;
}

}  // namespace glmix
