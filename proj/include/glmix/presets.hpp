#pragma once

#include <string>
#include <vector>

#include "glmix/observables.hpp"
#include "glmix/skewprod.hpp"

namespace glmix {

/// A base shift with potential and fiber cocycle, plus its RPF data.
struct System {
  std::string name;
  SftSpace sft;
  Potential u;
  FiberCocycle f;
  RpfData rpf;
};

inline System assemble_system(std::string name, const SftSpace& sft, Potential u, FiberCocycle f, bool center_f) {
  System s;
  s.name = std::move(name);
  s.sft = sft;
  s.u = std::move(u);
  s.rpf = rpf_eigendata(sft, s.u, rpf_depth(sft, s.u));
  s.f = center_f ? center(f, s.rpf) : std::move(f);
  return s;
}

namespace presets {

struct Entry {
  const char* name;
  const char* description;
};

inline const std::vector<Entry>& systems() {
  static const std::vector<Entry> v = {
      {"bernoulli_s1", "Bernoulli(1/2) full 2-shift, f = c[x0 x1] with (c00,c01,c10,c11) = (1,-1,sqrt2,-sqrt2); zero mean, non-lattice"},
      {"golden_mean", "golden-mean shift (11 forbidden), Parry measure (u = 0), centered cocycle c00 = 1, c01 = sqrt2, c10 = -1"},
      {"lattice_counterexample", "Bernoulli(1/2) full 2-shift, f = 1 - 2 x1 in {1,-1}; lattice-valued, NOT collapsed-accessible"},
  };
  return v;
}

inline const std::vector<Entry>& global_observables() {
  static const std::vector<Entry> v = {
      {"constant", "Phi = 1 (eta = delta_0); nu_av = 1"},
      {"cosine", "Phi = cos(omega r) (atoms at +-omega, default omega = 1); rapid-mixing regime"},
      {"gaussian_bump", "Phi = exp(-r^2/2) (standard normal spectral density)"},
      {"inverse_abs", "Phi = 1/(1+|r|), slowest-mixing example; log-singular density at 0"},
      {"laplace", "Phi = exp(-|r|) (Cauchy spectral density); heavy spectral tail"},
  };
  return v;
}

inline const std::vector<Entry>& local_observables() {
  static const std::vector<Entry> v = {
      {"gaussian_bump", "psi = exp(-r^2/2), truncated where it drops below 1e-18"},
      {"mollified_indicator", "psi = 1 on [-1/2, 1/2], smooth step to 0 at |r| = 1"},
  };
  return v;
}

inline System bernoulli_s1() {
  auto sft = build_sft(2, {{1, 1}, {1, 1}}, 0.5);
  const double c[4] = {1.0, -1.0, std::sqrt(2.0), -std::sqrt(2.0)};
  auto u = make_table(sft, 1, [](const Word&) { return -std::log(2.0); });
  FiberCocycle f(make_table(sft, 2, [&](const Word& w) { return c[2 * w[0] + w[1]]; }));
  return assemble_system("bernoulli_s1", sft, u, f, false);
}

inline System golden_mean() {
  auto sft = build_sft(2, {{1, 1}, {1, 0}}, 0.5);
  auto u = make_table(sft, 1, [](const Word&) { return 0.0; });
  FiberCocycle f(make_table(sft, 2, [](const Word& w) {
    if (w[0] == 0) return w[1] == 0 ? 1.0 : std::sqrt(2.0);
    return -1.0;
  }));
  return assemble_system("golden_mean", sft, u, f, true);
}

inline System lattice_counterexample() {
  auto sft = build_sft(2, {{1, 1}, {1, 1}}, 0.5);
  auto u = make_table(sft, 1, [](const Word&) { return -std::log(2.0); });
  FiberCocycle f(make_table(sft, 2, [](const Word& w) { return 1.0 - 2.0 * w[1]; }));
  return assemble_system("lattice_counterexample", sft, u, f, false);
}

inline System system(const std::string& name) {
  if (name == "bernoulli_s1") return bernoulli_s1();
  if (name == "golden_mean") return golden_mean();
  if (name == "lattice_counterexample") return lattice_counterexample();
  fail(ErrorKind::ConfigError, "unknown system preset '" + name + "'");
}

/// Spectral measure of a named global preset, with its stated tightness pair (a, A).
inline MeasurePtr global_measure(const std::string& name, double omega, double& a, double& A) {
  a = 1.0;
  A = 1.0;
  if (name == "constant") return measures::dirac0();
  if (name == "cosine") return measures::cosine(omega);
  if (name == "gaussian_bump") {
    a = 2.0;  // erfc(r/sqrt2) <= r^-2 for r >= 1
    return measures::gaussian();
  }
  if (name == "inverse_abs" || name == "laplace") {
    A = 2.0 / M_PI;  // both tails are <= 2/(pi r)
    return name == "laplace" ? measures::laplace() : measures::inverse_abs();
  }
  fail(ErrorKind::ConfigError, "unknown global observable '" + name + "'");
}

inline GlobalObservable global(const std::string& name, const SftSpace& sft, double omega = 1.0) {
  double a, A;
  auto m = global_measure(name, omega, a, A);
  return make_uniform_global(make_word_space(sft, 1), m, a, A);
}

inline double local_profile(const std::string& name, double r) {
  if (name == "gaussian_bump") return std::exp(-0.5 * r * r);
  if (name == "mollified_indicator") return smoothstep(2.0 * (1.0 - std::abs(r)));
  fail(ErrorKind::ConfigError, "unknown local observable '" + name + "'");
}

inline LocalObservable local(const std::string& name, const SftSpace& sft, const FiberGrid& grid = {}) {
  local_profile(name, 0.0);  // validates the name
  return make_local(make_word_space(sft, 1), grid, [name](const Word&, double r) { return local_profile(name, r); }, name);
}

}  // namespace presets
}  // namespace glmix
