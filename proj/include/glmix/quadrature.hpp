#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>

namespace glmix {

struct QuadStats {
  std::size_t evals = 0;
  int worst_depth = 0;
  bool converged = true;
};

namespace detail {

template <class F>
std::complex<double> gk_panel(F& f, double a, double b, double& err, QuadStats& st) {
  using K = boost::math::quadrature::gauss_kronrod<double, 15>;
  using G = boost::math::quadrature::gauss<double, 7>;
  const auto& kx = K::abscissa();
  const auto& kw = K::weights();
  const auto& gw = G::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  std::complex<double> fc = f(c);
  std::complex<double> k = kw[0] * fc, g = gw[0] * fc;
  for (std::size_t i = 1; i < kx.size(); ++i) {
    std::complex<double> s = f(c - h * kx[i]) + f(c + h * kx[i]);
    k += kw[i] * s;
    if (i % 2 == 0) g += gw[i / 2] * s;  // Gauss nodes sit at even Kronrod indices
  }
  st.evals += 2 * kx.size() - 1;
  err = std::abs(k - g) * h;
  return k * h;
}

template <class F>
std::complex<double> gk_adapt(F& f, double a, double b, double tol, double floor, int depth, int max_depth,
                              QuadStats& st) {
  double err = 0.0;
  std::complex<double> v = gk_panel(f, a, b, err, st);
  if (err <= tol || depth >= max_depth || b - a < 1e-15 * (1.0 + std::abs(a))) {
    if (err > tol) st.converged = false;
    st.worst_depth = std::max(st.worst_depth, depth);
    return v;
  }
  const double m = 0.5 * (a + b);
  // halve the budget per split, but never below the floor: deep panels near an integrable
  // singularity would otherwise never converge
  const double t = std::max(0.5 * tol, floor);
  return gk_adapt(f, a, m, t, floor, depth + 1, max_depth, st) + gk_adapt(f, m, b, t, floor, depth + 1, max_depth, st);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) for complex integrands on a finite interval.
template <class F>
std::complex<double> integrate_complex(F&& f, double a, double b, double abs_tol, QuadStats& st, int max_depth = 48) {
  if (b <= a) return 0.0;
  return detail::gk_adapt(f, a, b, abs_tol, abs_tol * 0x1.0p-12, 0, max_depth, st);
}

/// Real adaptive Gauss-Kronrod on [a, b] (b may be +inf). The depth cap bounds the work
/// when rounding makes the relative tolerance unreachable.
template <class F>
double integrate_real(F&& f, double a, double b, double tol = 1e-13, unsigned max_depth = 15) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, tol, &err);
}

}  // namespace glmix
