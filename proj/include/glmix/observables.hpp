#pragma once

#include <gsl/gsl_sf_expint.h>

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>

#include "glmix/gibbs.hpp"
#include "glmix/quadrature.hpp"
#include "glmix/skewprod.hpp"

namespace glmix {

/// Uniform fiber grid on [-r_max, r_max].
struct FiberGrid {
  double r_max = 40.0;
  double dr = 1.0 / 64.0;

  int size() const { return static_cast<int>(std::lround(2.0 * r_max / dr)) + 1; }
  double r(int j) const { return -r_max + j * dr; }
};

/// psi(w, r) sampled on the fiber grid, one row per admissible depth-m word.
struct LocalObservable {
  WordSpacePtr space;
  FiberGrid grid;
  std::string name;
  std::vector<std::vector<double>> values;
  int lo = 0, hi = 0;  // support [lo, hi) of the union over words
  std::vector<double> Max, Lip;  // per derivative order 0..l_max

  int depth() const { return space->depth(); }
  int l_max() const { return static_cast<int>(Max.size()) - 1; }
};

namespace detail {

// l-th grid derivative: repeated second differences, one central first difference for odd l
inline std::vector<double> grid_derivative(const std::vector<double>& v, double dr, int l) {
  std::vector<double> cur = v, next(v.size(), 0.0);
  const std::size_t n = v.size();
  if (l % 2 == 1) {
    for (std::size_t j = 0; j < n; ++j) {
      double a = j + 1 < n ? cur[j + 1] : 0.0, b = j > 0 ? cur[j - 1] : 0.0;
      next[j] = (a - b) / (2.0 * dr);
    }
    cur.swap(next);
  }
  for (int k = 0; k < l / 2; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      double a = j + 1 < n ? cur[j + 1] : 0.0, b = j > 0 ? cur[j - 1] : 0.0;
      next[j] = (a - 2.0 * cur[j] + b) / (dr * dr);
    }
    cur.swap(next);
  }
  return cur;
}

}  // namespace detail

/// Samples fn on the grid; values below 1e-18 of the peak are set to zero so the
/// support is compact on the grid.
inline LocalObservable make_local(WordSpacePtr space, const FiberGrid& grid,
                                  const std::function<double(const Word&, double)>& fn, std::string name,
                                  int l_max = 4) {
  LocalObservable psi;
  psi.space = std::move(space);
  psi.grid = grid;
  psi.name = std::move(name);
  const int G = grid.size(), N = psi.space->size();
  psi.values.assign(N, std::vector<double>(G, 0.0));
  double peak = 0.0;
  for (int w = 0; w < N; ++w)
    for (int j = 0; j < G; ++j) {
      double v = fn(psi.space->word(w), grid.r(j));
      if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "non-finite local observable value");
      psi.values[w][j] = v;
      peak = std::max(peak, std::abs(v));
    }
  psi.lo = G;
  psi.hi = 0;
  for (int w = 0; w < N; ++w)
    for (int j = 0; j < G; ++j) {
      if (std::abs(psi.values[w][j]) < 1e-18 * peak) psi.values[w][j] = 0.0;
      if (psi.values[w][j] != 0.0) {
        psi.lo = std::min(psi.lo, j);
        psi.hi = std::max(psi.hi, j + 1);
      }
    }
  if (psi.lo >= psi.hi) psi.lo = psi.hi = 0;
  if (psi.lo == 0 && psi.hi > 0 && psi.values.size() && (psi.hi == G))
    fail(ErrorKind::InvalidArgument, "local observable is not compactly supported on the grid");

  const double theta = psi.space->sft().theta();
  psi.Max.assign(l_max + 1, 0.0);
  psi.Lip.assign(l_max + 1, 0.0);
  for (int l = 0; l <= l_max; ++l) {
    std::vector<std::vector<double>> d(N);
    for (int w = 0; w < N; ++w) {
      d[w] = detail::grid_derivative(psi.values[w], grid.dr, l);
      double s = 0.0;
      for (double x : d[w]) s += std::abs(x);
      psi.Max[l] = std::max(psi.Max[l], s * grid.dr);
    }
    for (int a = 0; a < N; ++a)
      for (int b = a + 1; b < N; ++b) {
        double s = 0.0;
        for (int j = 0; j < G; ++j) s += std::abs(d[a][j] - d[b][j]);
        double dist = word_metric(psi.space->word(a), psi.space->word(b), theta);
        psi.Lip[l] = std::max(psi.Lip[l], s * grid.dr / dist);
      }
  }
  return psi;
}

/// psi-hat_xi(w) = sum_j dr e^{-i r_j xi} psi(w, r_j) (trapezoid; psi vanishes at the ends).
inline StateFunction fiber_fourier(const LocalObservable& psi, double xi) {
  StateFunction out(psi.space);
  if (psi.hi <= psi.lo) return out;
  const int N = psi.space->size();
  const cplx step = std::polar(1.0, -xi * psi.grid.dr);
  cplx ph;
  for (int j = psi.lo; j < psi.hi; ++j) {
    // re-anchor the rotation every 128 steps to keep rounding at machine level
    if ((j - psi.lo) % 128 == 0)
      ph = std::polar(1.0, -xi * psi.grid.r(j));
    else
      ph *= step;
    for (int w = 0; w < N; ++w) out.values[w] += ph * psi.values[w][j];
  }
  for (auto& v : out.values) v *= psi.grid.dr;
  return out;
}

struct Atom {
  double xi;
  cplx weight;
};

/// Finite complex measure eta = atoms + density, with the closed forms the estimators need.
/// Missing closures are filled numerically by finalize().
struct SpectralMeasure {
  std::string name;
  std::vector<Atom> atoms;
  std::function<cplx(double)> density;            // empty when purely atomic
  std::function<cplx(double)> transform;          // r -> int rho(xi) e^{-i r xi} dxi
  std::function<double(double)> abs_within;       // r -> |rho|((-r, r))
  std::function<double(double)> abs_tail;         // r -> |rho|(R \ [-r, r])
  double density_total = 0.0;                     // |rho|(R)
  double support = 0.0;                           // |rho| negligible beyond
  bool singular_at_zero = false;

  bool has_density() const { return static_cast<bool>(density); }

  double tv() const {
    double s = density_total;
    for (const auto& a : atoms) s += std::abs(a.weight);
    return s;
  }
  cplx atom_at_zero() const {
    cplx s = 0.0;
    for (const auto& a : atoms)
      if (std::abs(a.xi) <= 1e-15) s += a.weight;
    return s;
  }
  /// |eta|((-r, r) \ {0})
  double low_freq(double r) const {
    double s = 0.0;
    for (const auto& a : atoms)
      if (std::abs(a.xi) > 1e-15 && std::abs(a.xi) < r) s += std::abs(a.weight);
    if (has_density()) s += abs_within(r);
    return s;
  }
  /// |eta|(R \ [-r, r])
  double tail(double r) const {
    double s = 0.0;
    for (const auto& a : atoms)
      if (std::abs(a.xi) > r) s += std::abs(a.weight);
    if (has_density()) s += abs_tail(r);
    return s;
  }
  /// Phi(r) = int e^{-i r xi} d eta(xi)
  cplx spatial(double r) const {
    cplx s = 0.0;
    for (const auto& a : atoms) s += a.weight * std::polar(1.0, -r * a.xi);
    if (has_density()) s += transform(r);
    return s;
  }

  void finalize() {
    if (!has_density()) return;
    auto dens = density;
    const double S = support > 0 ? support : 1e3;
    if (!abs_within)
      abs_within = [dens, S](double r) {
        double b = std::min(r, S);
        return integrate_real([&](double x) { return std::abs(dens(x)) + std::abs(dens(-x)); }, 0.0, b, 1e-12);
      };
    if (!abs_tail)
      abs_tail = [dens, S](double r) {
        if (r >= S) return 0.0;
        return integrate_real([&](double x) { return std::abs(dens(x)) + std::abs(dens(-x)); }, r, S, 1e-12);
      };
    if (density_total <= 0.0) density_total = abs_within(S) + abs_tail(S);
    if (!transform)
      transform = [dens, S](double r) {
        QuadStats st;
        return integrate_complex([&](double x) { return dens(x) * std::polar(1.0, -r * x); }, -S, S, 1e-11, st);
      };
  }
};

using MeasurePtr = std::shared_ptr<const SpectralMeasure>;

/// Phi(w, r) = eta_w-hat(r) for each admissible depth-m word.
struct GlobalObservable {
  WordSpacePtr space;
  std::vector<MeasurePtr> eta;
  std::string name;
  double M = 0.0;          // total-variation bound
  double tc_a = 1.0, tc_A = 1.0;  // stated tightness constants

  int depth() const { return space->depth(); }
  const SpectralMeasure& at(int w) const { return *eta[static_cast<std::size_t>(w)]; }
  cplx spatial(int w, double r) const { return at(w).spatial(r); }
};

inline GlobalObservable make_global(WordSpacePtr space, std::vector<MeasurePtr> eta, std::string name, double a,
                                    double A) {
  GlobalObservable Phi;
  Phi.space = std::move(space);
  Phi.eta = std::move(eta);
  Phi.name = std::move(name);
  if (static_cast<int>(Phi.eta.size()) != Phi.space->size())
    fail(ErrorKind::InvalidArgument, "one spectral measure per admissible word is required");
  for (const auto& e : Phi.eta) Phi.M = std::max(Phi.M, e->tv());
  Phi.tc_a = a;
  Phi.tc_A = A;
  return Phi;
}

inline GlobalObservable make_uniform_global(WordSpacePtr space, MeasurePtr eta, double a, double A) {
  std::vector<MeasurePtr> v(space->size(), eta);
  std::string name = eta->name;
  return make_global(std::move(space), std::move(v), name, a, A);
}

// ---- measure presets -------------------------------------------------------

namespace measures {

inline MeasurePtr dirac0() {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = "constant";
  m->atoms = {{0.0, 1.0}};
  return m;
}

/// eta = (delta_w + delta_{-w}) / 2, i.e. Phi(r) = cos(w r).
inline MeasurePtr cosine(double omega = 1.0) {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = "cosine";
  m->atoms = {{-omega, 0.5}, {omega, 0.5}};
  return m;
}

/// Standard normal density, Phi(r) = e^{-r^2/2}.
inline MeasurePtr gaussian() {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = "gaussian_bump";
  const double c = 1.0 / std::sqrt(2.0 * M_PI);
  m->density = [c](double x) { return cplx(c * std::exp(-0.5 * x * x), 0.0); };
  m->transform = [](double r) { return cplx(std::exp(-0.5 * r * r), 0.0); };
  m->abs_within = [](double r) { return std::erf(r / std::sqrt(2.0)); };
  m->abs_tail = [](double r) { return std::erfc(r / std::sqrt(2.0)); };
  m->density_total = 1.0;
  m->support = 9.5;
  return m;
}

/// Cauchy density 1/(pi(1+xi^2)), Phi(r) = e^{-|r|}; a heavy-tailed (TC) example.
inline MeasurePtr laplace() {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = "laplace";
  m->density = [](double x) { return cplx(1.0 / (M_PI * (1.0 + x * x)), 0.0); };
  m->transform = [](double r) { return cplx(std::exp(-std::abs(r)), 0.0); };
  m->abs_within = [](double r) { return 2.0 / M_PI * std::atan(r); };
  m->abs_tail = [](double r) { return r <= 0 ? 1.0 : 2.0 / M_PI * std::atan(1.0 / r); };
  m->density_total = 1.0;
  m->support = std::numeric_limits<double>::infinity();
  return m;
}

/// g(x) = int_0^inf e^{-x t} t/(1+t^2) dt, the auxiliary function of the sine/cosine integrals.
inline double aux_g(double x) {
  if (x > 25.0) {
    // asymptotic series sum (-1)^k (2k+1)! / x^{2k+2}
    double term = 1.0 / (x * x), s = 0.0;
    for (int k = 0; k < 40; ++k) {
      s += term;
      double next = -term * (2.0 * k + 2.0) * (2.0 * k + 3.0) / (x * x);
      if (std::abs(next) >= std::abs(term) || std::abs(next) < 1e-18 * std::abs(s)) break;
      term = next;
    }
    return s;
  }
  return -gsl_sf_Ci(x) * std::cos(x) - (gsl_sf_Si(x) - M_PI / 2.0) * std::sin(x);
}

/// The density rho with int rho(xi) e^{-i r xi} dxi = 1/(1+|r|):
/// rho(xi) = (1/pi) int_0^inf e^{-s} s/(s^2+xi^2) ds = g(|xi|)/pi. Log-singular at 0.
inline MeasurePtr inverse_abs() {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = "inverse_abs";
  m->density = [](double x) {
    double a = std::abs(x);
    if (a == 0.0) return cplx(std::numeric_limits<double>::infinity(), 0.0);
    return cplx(aux_g(a) / M_PI, 0.0);
  };
  m->transform = [](double r) { return cplx(1.0 / (1.0 + std::abs(r)), 0.0); };
  // |rho|((-r,r)) = (2/pi) int_0^inf e^{-s} atan(r/s) ds
  m->abs_within = [](double r) {
    if (r <= 0.0) return 0.0;
    auto fn = [r](double s) { return std::exp(-s) * std::atan2(r, s); };
    return 2.0 / M_PI * (integrate_real(fn, 0.0, r) + integrate_real(fn, r, std::numeric_limits<double>::infinity()));
  };
  m->abs_tail = [](double r) {
    if (r <= 0.0) return 1.0;
    auto fn = [r](double s) { return std::exp(-s) * std::atan2(s, r); };
    return 2.0 / M_PI * (integrate_real(fn, 0.0, r) + integrate_real(fn, r, std::numeric_limits<double>::infinity()));
  };
  m->density_total = 1.0;
  m->support = std::numeric_limits<double>::infinity();
  m->singular_at_zero = true;
  return m;
}

/// c * base, with atoms rotated as well; used by table ingestion.
inline MeasurePtr scaled(const MeasurePtr& base, cplx c, std::vector<Atom> extra_atoms = {}) {
  auto m = std::make_shared<SpectralMeasure>(*base);
  for (auto& a : m->atoms) a.weight *= c;
  for (auto& a : extra_atoms) m->atoms.push_back(a);
  if (base->has_density()) {
    auto d = base->density, t = base->transform;
    auto w = base->abs_within, tl = base->abs_tail;
    double ac = std::abs(c);
    m->density = [d, c](double x) { return c * d(x); };
    m->transform = [t, c](double r) { return c * t(r); };
    m->abs_within = [w, ac](double r) { return ac * w(r); };
    m->abs_tail = [tl, ac](double r) { return ac * tl(r); };
    m->density_total = ac * base->density_total;
  }
  return m;
}

inline MeasurePtr atoms_only(std::vector<Atom> atoms, std::string name = "atoms") {
  auto m = std::make_shared<SpectralMeasure>();
  m->name = std::move(name);
  m->atoms = std::move(atoms);
  return m;
}

}  // namespace measures

// ---- local presets ---------------------------------------------------------

inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

inline LocalObservable gaussian_bump(WordSpacePtr space, const FiberGrid& grid = {}) {
  return make_local(std::move(space), grid, [](const Word&, double r) { return std::exp(-0.5 * r * r); }, "gaussian_bump");
}

/// 1 on [-1/2, 1/2], C-infinity transition to 0 at |r| = 1.
inline LocalObservable mollified_indicator(WordSpacePtr space, const FiberGrid& grid = {}) {
  return make_local(std::move(space), grid, [](const Word&, double r) { return smoothstep(2.0 * (1.0 - std::abs(r))); },
                    "mollified_indicator");
}

// ---- functionals -----------------------------------------------------------

inline cplx nu_local(const LocalObservable& psi, const RpfData& rpf) {
  StateFunction h0 = fiber_fourier(psi, 0.0);
  cplx s = 0.0;
  for (int w = 0; w < psi.space->size(); ++w) s += rpf.cylinder_measure(psi.space->word(w)) * h0[w];
  return s;
}

inline cplx nu_av_global(const GlobalObservable& Phi, const RpfData& rpf) {
  cplx s = 0.0;
  for (int w = 0; w < Phi.space->size(); ++w) s += rpf.cylinder_measure(Phi.space->word(w)) * Phi.at(w).atom_at_zero();
  return s;
}

inline double low_freq_variation(const GlobalObservable& Phi, const RpfData& rpf, double r) {
  if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "LF radius must be positive");
  double s = 0.0;
  for (int w = 0; w < Phi.space->size(); ++w) s += rpf.cylinder_measure(Phi.space->word(w)) * Phi.at(w).low_freq(r);
  return s;
}

struct TightnessResult {
  bool pass = true;        // stated (a, A) holds at every word and radius
  double a = 0.0, A = 0.0;  // tightest fitted pair
  std::vector<double> tails;  // max over words, per radius
};

inline TightnessResult tightness_check(const GlobalObservable& Phi, const std::vector<double>& radii) {
  TightnessResult res;
  std::vector<double> lx, ly;
  for (double r : radii) {
    if (r < 1.0) fail(ErrorKind::InvalidArgument, "tightness radii must be >= 1");
    double t = 0.0;
    for (int w = 0; w < Phi.space->size(); ++w) {
      double tw = Phi.at(w).tail(r);
      t = std::max(t, tw);
      if (tw > Phi.tc_A * std::pow(r, -Phi.tc_a) * (1.0 + 1e-12)) res.pass = false;
    }
    res.tails.push_back(t);
    if (t > 0.0) {
      lx.push_back(std::log(r));
      ly.push_back(std::log(t));
    }
  }
  if (lx.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
    res.a = sxx > 0 ? -sxy / sxx : Phi.tc_a;
  } else {
    res.a = Phi.tc_a;
  }
  res.A = 0.0;
  for (std::size_t i = 0; i < radii.size(); ++i) res.A = std::max(res.A, res.tails[i] * std::pow(radii[i], res.a));
  return res;
}

struct LipschitzTailResult {
  bool pass = true;
  double L = 0.0;
  double worst_ratio = 0.0;  // max tail / (2L/r)
};

/// eta_w(R \ [-r, r]) <= 2L/r for positive eta_w, L the fiber Lipschitz constant of Phi(w, .).
inline LipschitzTailResult lipschitz_tail_check(const GlobalObservable& Phi, const std::vector<double>& radii,
                                                const FiberGrid& grid = {}) {
  LipschitzTailResult res;
  for (int w = 0; w < Phi.space->size(); ++w) {
    const auto& eta = Phi.at(w);
    for (const auto& a : eta.atoms)
      if (a.weight.real() < 0.0 || std::abs(a.weight.imag()) > 1e-14)
        fail(ErrorKind::NotPositive, "atom with negative or complex weight in '" + Phi.name + "'");
    if (eta.has_density())
      for (double x = -50.0; x <= 50.0; x += 0.03125) {
        cplx d = eta.density(x);
        if (d.real() < 0.0 || std::abs(d.imag()) > 1e-14)
          fail(ErrorKind::NotPositive, "density negative or complex in '" + Phi.name + "'");
      }
    double L = 0.0;
    cplx prev = eta.spatial(grid.r(0));
    for (int j = 1; j < grid.size(); ++j) {
      cplx cur = eta.spatial(grid.r(j));
      L = std::max(L, std::abs(cur - prev) / grid.dr);
      prev = cur;
    }
    res.L = std::max(res.L, L);
    for (double r : radii) {
      double ratio = eta.tail(r) / (2.0 * L / r);
      if (L == 0.0) ratio = eta.tail(r) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
      res.worst_ratio = std::max(res.worst_ratio, ratio);
      if (ratio > 1.0) res.pass = false;
    }
  }
  return res;
}

/// Representation of Phi o F at depth max(m+1, k): eta'_x = e^{-i xi f(x)} eta_{sigma x}.
inline GlobalObservable compose_with_skew(const GlobalObservable& Phi, const FiberCocycle& f) {
  const SftSpace& sft = Phi.space->sft();
  const int D = std::max(Phi.depth() + 1, f.depth());
  auto space = make_word_space(sft, D);
  std::vector<MeasurePtr> eta;
  for (int x = 0; x < space->size(); ++x) {
    const Word& w = space->word(x);
    const double fx = f.eval(w.data());
    const auto& base = Phi.at(Phi.space->index_of(w.data() + 1));
    auto m = std::make_shared<SpectralMeasure>(base);
    for (auto& a : m->atoms) a.weight *= std::polar(1.0, -a.xi * fx);
    if (base.has_density()) {
      auto d = base.density, t = base.transform;
      m->density = [d, fx](double x2) { return d(x2) * std::polar(1.0, -x2 * fx); };
      m->transform = [t, fx](double r) { return t(r + fx); };
    }
    eta.push_back(m);
  }
  return make_global(space, std::move(eta), Phi.name + "_o_F", Phi.tc_a, Phi.tc_A);
}

}  // namespace glmix
