#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "glmix/correlate.hpp"
#include "glmix/presets.hpp"
#include "glmix/skewprod.hpp"
#include "glmix/twisted.hpp"

namespace glmix::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

/// Every leaf the runner reads, with its default. Overrides address leaves by dotted path.
inline json default_config() {
  return json::parse(R"({
    "system": {
      "preset": "bernoulli_s1",
      "alphabet": null,
      "transitions": null,
      "theta": 0.5,
      "potential": null,
      "cocycle": null,
      "center_cocycle": true
    },
    "observables": {
      "global": {"preset": "cosine", "omega": 1.0, "table": null},
      "local": {"preset": "gaussian_bump", "table": null},
      "grid": {"r_max": 40.0, "dr": 0.015625}
    },
    "experiment": {
      "kind": "gibbs",
      "m": 0,
      "n": [0, 1, 2, 4, 8, 12],
      "alpha": 0.4,
      "xi": [],
      "decay_xi": [0.1, 1.0],
      "n_max": 200,
      "kappa": 0.3,
      "horizon": 8,
      "N": 4,
      "c": 2,
      "a_tol": 0.01,
      "draws": 100,
      "max_period": 6,
      "seed": 1,
      "samples": 100000,
      "budget": 2000000,
      "estimators": ["exact", "spectral"],
      "window": [0, 0],
      "levels": [1, 2, 3, 4],
      "k": 4,
      "eps": 0.1,
      "tolerance": 1e-6,
      "exponent_range": null,
      "expect_rapid": false,
      "check_symmetry": true
    },
    "output": {"dir": "glmix_out", "plots": false, "timings": true}
  })");
}

// ---- config access with field paths ----------------------------------------

inline const json& at_path(const json& cfg, const std::string& path) {
  const json* cur = &cfg;
  std::stringstream ss(path);
  std::string key;
  while (std::getline(ss, key, '.')) {
    if (!cur->is_object() || !cur->contains(key)) fail(ErrorKind::ConfigError, path + ": missing field");
    cur = &(*cur)[key];
  }
  return *cur;
}

template <class T>
T get(const json& cfg, const std::string& path) {
  const json& v = at_path(cfg, path);
  try {
    return v.get<T>();
  } catch (const std::exception&) {
    fail(ErrorKind::ConfigError, path + ": wrong type (" + std::string(v.type_name()) + ")");
  }
}

inline double get_num(const json& cfg, const std::string& path) {
  const json& v = at_path(cfg, path);
  if (!v.is_number()) fail(ErrorKind::ConfigError, path + ": expected a number");
  return v.get<double>();
}

inline void require(bool ok, const std::string& path, const std::string& why) {
  if (!ok) fail(ErrorKind::ConfigError, path + ": " + why);
}

/// Recursively overlays `src` onto `dst`; unknown keys are errors.
inline void overlay(json& dst, const json& src, const std::string& prefix) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!dst.contains(it.key())) fail(ErrorKind::ConfigError, path + ": unknown field");
    json& d = dst[it.key()];
    if (d.is_object() && it->is_object())
      overlay(d, *it, path);
    else
      d = *it;
  }
}

/// key=value with a dotted key; the value is parsed as JSON, falling back to a plain string.
inline void apply_override(json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::ConfigError, "--set expects key=value, got '" + kv + "'");
  const std::string path = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const std::exception&) {
    value = raw;
  }
  json* cur = &cfg;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!cur->is_object() || !cur->contains(keys[i])) fail(ErrorKind::ConfigError, path + ": unknown field");
    cur = &(*cur)[keys[i]];
  }
  *cur = value;
}

inline json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot open config '" + path + "'");
    json user;
    try {
      user = json::parse(in, nullptr, true, true);
    } catch (const std::exception& e) {
      fail(ErrorKind::ConfigError, "config parse error: " + std::string(e.what()));
    }
    overlay(cfg, user, "");
  }
  for (const auto& kv : overrides) apply_override(cfg, kv);
  return cfg;
}

// ---- building blocks from config -------------------------------------------

inline WordTable table_from(const json& cfg, const std::string& path, const SftSpace& sft) {
  const json& t = at_path(cfg, path);
  require(t.is_object(), path, "expected {depth, values}");
  int depth = get<int>(cfg, path + ".depth");
  require(depth >= 1, path + ".depth", "must be >= 1");
  auto values = get<std::vector<double>>(cfg, path + ".values");
  auto space = make_word_space(sft, depth);
  require(int(values.size()) == space->size(), path + ".values",
          "expected " + std::to_string(space->size()) + " values (admissible words in lexicographic order)");
  return WordTable(space, values);
}

inline System build_system(const json& cfg) {
  const json& preset = at_path(cfg, "system.preset");
  if (preset.is_string() && !preset.get<std::string>().empty()) {
    try {
      return presets::system(preset.get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, "system.preset: " + e.detail());
    }
  }
  int A = get<int>(cfg, "system.alphabet");
  auto T = get<std::vector<std::vector<int>>>(cfg, "system.transitions");
  double theta = get_num(cfg, "system.theta");
  SftSpace sft;
  try {
    sft = build_sft(A, T, theta);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, "system.transitions: " + e.detail());
  }
  Potential u = at_path(cfg, "system.potential").is_null() ? make_table(sft, 1, [](const Word&) { return 0.0; })
                                                           : table_from(cfg, "system.potential", sft);
  const json& cj = at_path(cfg, "system.cocycle");
  FiberCocycle f;
  if (cj.is_string()) {
    System ref = presets::system(cj.get<std::string>());
    require(ref.sft.transitions() == sft.transitions(), "system.cocycle", "preset cocycle lives on a different shift");
    f = FiberCocycle(WordTable(make_word_space(sft, ref.f.depth()), ref.f.table.values));
  } else {
    require(!cj.is_null(), "system.cocycle", "required when no preset is given");
    f = FiberCocycle(table_from(cfg, "system.cocycle", sft));
  }
  return assemble_system("custom", sft, u, f, get<bool>(cfg, "system.center_cocycle"));
}

inline FiberGrid build_grid(const json& cfg) {
  FiberGrid g;
  g.r_max = get_num(cfg, "observables.grid.r_max");
  g.dr = get_num(cfg, "observables.grid.dr");
  require(g.r_max > 0 && g.dr > 0 && g.dr < g.r_max, "observables.grid", "need 0 < dr < r_max");
  return g;
}

inline GlobalObservable build_global(const json& cfg, const System& sys) {
  const std::string base = "observables.global";
  const json& table = at_path(cfg, base + ".table");
  if (table.is_null()) {
    try {
      return presets::global(get<std::string>(cfg, base + ".preset"), sys.sft, get_num(cfg, base + ".omega"));
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, base + ".preset: " + e.detail());
    }
  }
  int depth = get<int>(cfg, base + ".table.depth");
  require(depth >= 1, base + ".table.depth", "must be >= 1");
  auto space = make_word_space(sys.sft, depth);
  std::vector<MeasurePtr> eta;
  double a = table.contains("a") ? get_num(cfg, base + ".table.a") : 1.0;
  double Acst = table.contains("A") ? get_num(cfg, base + ".table.A") : 1.0;
  for (const auto& w : space->words()) {
    const std::string p = base + ".table.words." + w.str();
    const json& e = at_path(cfg, p);
    std::vector<Atom> atoms;
    if (e.contains("atoms"))
      for (const auto& t : e["atoms"]) {
        require(t.is_array() && t.size() == 3, p + ".atoms", "entries are [xi, re, im]");
        atoms.push_back({t[0].get<double>(), cplx(t[1].get<double>(), t[2].get<double>())});
      }
    if (e.contains("density") && !e["density"].is_null()) {
      double da, dA;
      MeasurePtr d;
      try {
        d = presets::global_measure(e["density"].get<std::string>(), 1.0, da, dA);
      } catch (const Error& err) {
        fail(ErrorKind::ConfigError, p + ".density: " + err.detail());
      }
      require(d->has_density(), p + ".density", "names a purely atomic preset");
      cplx scale = 1.0;
      if (e.contains("scale")) {
        const json& s = e["scale"];
        scale = s.is_array() ? cplx(s[0].get<double>(), s[1].get<double>()) : cplx(s.get<double>(), 0.0);
      }
      eta.push_back(measures::scaled(d, scale, atoms));
    } else {
      eta.push_back(measures::atoms_only(atoms, "table"));
    }
  }
  return make_global(space, std::move(eta), "table", a, Acst);
}

inline LocalObservable build_local(const json& cfg, const System& sys) {
  const std::string base = "observables.local";
  const FiberGrid grid = build_grid(cfg);
  const json& table = at_path(cfg, base + ".table");
  if (table.is_null()) {
    try {
      return presets::local(get<std::string>(cfg, base + ".preset"), sys.sft, grid);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, base + ".preset: " + e.detail());
    }
  }
  int depth = get<int>(cfg, base + ".table.depth");
  require(depth >= 1, base + ".table.depth", "must be >= 1");
  auto space = make_word_space(sys.sft, depth);
  struct Prof {
    std::string name;
    double amp, shift;
  };
  std::vector<Prof> prof;
  for (const auto& w : space->words()) {
    const std::string p = base + ".table.words." + w.str();
    Prof q{get<std::string>(cfg, p + ".profile"), 1.0, 0.0};
    if (at_path(cfg, p).contains("amplitude")) q.amp = get_num(cfg, p + ".amplitude");
    if (at_path(cfg, p).contains("shift")) q.shift = get_num(cfg, p + ".shift");
    try {
      presets::local_profile(q.name, 0.0);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, p + ".profile: " + e.detail());
    }
    prof.push_back(q);
  }
  return make_local(
      space, grid,
      [&](const Word& w, double r) {
        const Prof& q = prof[static_cast<std::size_t>(space->index_of(w))];
        return q.amp * presets::local_profile(q.name, r - q.shift);
      },
      "table");
}

// ---- output helpers --------------------------------------------------------

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Short form for file names and verdict keys.
inline std::string tag(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

struct Writer {
  std::filesystem::path dir;
  json files = json::array();

  void text(const std::string& name, const std::string& kind, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    out << body;
    if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + (dir / name).string());
    files.push_back({{"path", name}, {"kind", kind}});
  }
};

struct Plot {
  std::string name;
  std::vector<double> x, y;
};

/// Minimal line-plot SVG; non-finite or (on log axes) nonpositive points are dropped.
inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<Plot>& lines, bool logx, bool logy) {
  const double W = 640, Hh = 420, L = 70, R = 20, T = 40, B = 50;
  auto tx = [&](double v) { return logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return logy ? std::log10(v) : v; };
  auto ok = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!logx || x > 0) && (!logy || y > 0);
  };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& l : lines)
    for (std::size_t i = 0; i < l.x.size(); ++i)
      if (ok(l.x[i], l.y[i])) {
        x0 = std::min(x0, tx(l.x[i]));
        x1 = std::max(x1, tx(l.x[i]));
        y0 = std::min(y0, ty(l.y[i]));
        y1 = std::max(y1, ty(l.y[i]));
      }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-300) x1 = x0 + 1;
  if (y1 - y0 < 1e-300) y1 = y0 + 1;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return Hh - B - (ty(v) - y0) / (y1 - y0) * (Hh - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << Hh - B << "\" x2=\"" << W - R << "\" y2=\"" << Hh - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << Hh - B << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel
    << (logx ? " (log10)" : "") << "</text>\n";
  s << "<text x=\"16\" y=\"" << Hh / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << Hh / 2 << ")\">" << ylabel
    << (logy ? " (log10)" : "") << "</text>\n";
  s << "<text x=\"" << L << "\" y=\"" << Hh - B + 16 << "\" font-size=\"10\">" << num(x0) << "</text>\n";
  s << "<text x=\"" << W - R << "\" y=\"" << Hh - B + 16 << "\" font-size=\"10\" text-anchor=\"end\">" << num(x1) << "</text>\n";
  s << "<text x=\"" << L - 4 << "\" y=\"" << Hh - B << "\" font-size=\"10\" text-anchor=\"end\">" << num(y0) << "</text>\n";
  s << "<text x=\"" << L - 4 << "\" y=\"" << T + 8 << "\" font-size=\"10\" text-anchor=\"end\">" << num(y1) << "</text>\n";
  for (std::size_t k = 0; k < lines.size(); ++k) {
    s << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < lines[k].x.size(); ++i)
      if (ok(lines[k].x[i], lines[k].y[i])) s << px(lines[k].x[i]) << "," << py(lines[k].y[i]) << " ";
    s << "\"/>\n";
    s << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" font-size=\"11\" text-anchor=\"end\" fill=\""
      << colors[k % 6] << "\">" << lines[k].name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// ---- experiments -----------------------------------------------------------

struct Context {
  json cfg;
  System sys;
  Writer out;
  bool plots = false;
  json results = json::object();
  json verdicts = json::object();
  json seeds = json::object();
  json timings = json::object();

  void verdict(const std::string& name, bool pass) { verdicts[name] = pass ? "pass" : "fail"; }
  void skipped(const std::string& name) { verdicts[name] = "skipped"; }
};

inline int twist_depth(const Context& c) {
  int m = get<int>(c.cfg, "experiment.m");
  int need = std::max(c.sys.u.depth(), c.sys.f.depth());
  if (m == 0) return need;
  require(m >= need, "experiment.m", "must be >= max(depth(u), depth(f)) = " + std::to_string(need));
  return m;
}

inline void run_gibbs(Context& c) {
  const RpfData& r = c.sys.rpf;
  std::ostringstream csv;
  csv << "word,h,nu,mu,g\n";
  for (int i = 0; i < r.size(); ++i)
    csv << r.space()->word(i).str() << "," << num(r.h[i]) << "," << num(r.nu[i]) << "," << num(r.mu[i]) << "," << num(r.g[i]) << "\n";
  c.out.text("gibbs.csv", "csv", csv.str());

  json sym = json::array();
  for (int a = 0; a < c.sys.sft.alphabet_size(); ++a) sym.push_back(r.cylinder_measure(&a, 1));
  c.results["lambda"] = r.lambda;
  c.results["gap_modulus"] = r.gap_modulus;
  c.results["symbol_measure"] = sym;

  double worst_row = 0.0, total = 0.0;
  std::vector<double> one(r.size(), 1.0);
  for (double v : r.transfer(one)) worst_row = std::max(worst_row, std::abs(v - 1.0));
  for (double v : r.mu) total += v;
  Eigen::RowVectorXd mu = Eigen::Map<const Eigen::RowVectorXd>(r.mu.data(), r.size());
  double stat = (mu * r.normalized_matrix() - mu).cwiseAbs().maxCoeff();
  c.verdict("normalized_transfer", worst_row < 1e-12);
  c.verdict("probability", std::abs(total - 1.0) < 1e-12);
  c.verdict("shift_invariance", stat < 1e-12);
}

inline void run_spectrum(Context& c) {
  const int m = twist_depth(c);
  auto xi = get<std::vector<double>>(c.cfg, "experiment.xi");
  const double kappa = get_num(c.cfg, "experiment.kappa");
  if (xi.empty())
    for (int i = -20; i <= 20; ++i) xi.push_back(0.01 * i);
  for (double x : xi) require(std::abs(x) < kappa, "experiment.xi", "grid must lie inside (-kappa, kappa)");
  auto curve = spectral_curve(c.sys.rpf, c.sys.f, xi, m, kappa);
  std::ostringstream csv;
  csv << "xi,re_lambda,im_lambda,abs_lambda\n";
  Plot p{"|lambda|", {}, {}};
  bool bounded = true, has0 = false, lam0 = true;
  for (std::size_t i = 0; i < curve.xi.size(); ++i) {
    csv << num(curve.xi[i]) << "," << num(curve.lambda[i].real()) << "," << num(curve.lambda[i].imag()) << ","
        << num(std::abs(curve.lambda[i])) << "\n";
    p.x.push_back(curve.xi[i]);
    p.y.push_back(std::abs(curve.lambda[i]));
    bounded = bounded && std::abs(curve.lambda[i]) <= 1.0 + 1e-12;
    if (curve.xi[i] == 0.0) has0 = true, lam0 = std::abs(curve.lambda[i] - 1.0) < 1e-12;
  }
  c.out.text("spectrum.csv", "csv", csv.str());
  if (c.plots) c.out.text("spectrum.svg", "svg", svg_plot("leading eigenvalue", "xi", "|lambda_xi|", {p}, false, false));
  c.results["curvature"] = curve.curvature;
  c.results["sigma2"] = curve.sigma2;
  c.results["two_A"] = curve.two_A;
  c.results["B"] = curve.B;
  c.results["crossing"] = curve.crossing;
  if (curve.crossing) c.results["crossing_xi"] = curve.crossing_xi;
  if (has0)
    c.verdict("lambda0_is_1", lam0);
  else
    c.skipped("lambda0_is_1");
  c.verdict("modulus_at_most_1", bounded);
  c.verdict("tracking_without_crossing", !curve.crossing);
  c.verdict("curvature_matches_variance", std::abs(curve.curvature + curve.sigma2) <= 0.02 * std::abs(curve.sigma2));

  // decay profiles
  RpfData r = lift(c.sys.rpf, m);
  auto fv = lift_values(c.sys.f, *r.space());
  double C0 = calibrate_c0(r, FiberCocycle(WordTable(r.space(), fv)), m, {0.25, 0.5, 1.0, 2.0, 4.0});
  c.results["C0"] = C0;
  const int n_max = get<int>(c.cfg, "experiment.n_max");
  json decay = json::array();
  std::vector<Plot> plots;
  for (double x : get<std::vector<double>>(c.cfg, "experiment.decay_xi")) {
    auto op = make_twisted(r, fv, x, C0);
    std::vector<cplx> probe(r.size());
    for (int i = 0; i < r.size(); ++i) probe[i] = 1.0 + 0.5 * std::polar(1.0, 0.7 * i);
    auto prof = norm_decay_profile(op, probe, n_max);
    std::ostringstream d;
    d << "n,w_n\n";
    Plot pl{"xi=" + tag(x), {}, {}};
    for (std::size_t n = 0; n < prof.w.size(); ++n) {
      d << n << "," << num(prof.w[n]) << "\n";
      pl.x.push_back(double(n));
      pl.y.push_back(prof.w[n]);
    }
    const std::string name = "decay_xi_" + tag(x) + ".csv";
    c.out.text(name, "csv", d.str());
    plots.push_back(pl);
    decay.push_back({{"xi", x}, {"H", op.H}, {"rate", prof.rate}, {"monotone", prof.monotone}, {"file", name}});
    c.verdict("decay_monotone_xi_" + tag(x), prof.monotone);
  }
  c.results["decay"] = decay;
  if (c.plots && !plots.empty()) c.out.text("decay.svg", "svg", svg_plot("H-norm decay", "n", "w_n", plots, false, true));
}

inline CorrelationSeries correlate_series(Context& c, const std::string& estimator, const std::vector<int>& ns,
                                          const GlobalObservable& Phi, const LocalObservable& psi,
                                          std::vector<bool>* warnings = nullptr) {
  CorrelationSeries s;
  s.estimator = estimator;
  const auto seed = get<std::uint64_t>(c.cfg, "experiment.seed");
  for (int n : ns) {
    CovEstimate e;
    if (estimator == "exact")
      e = cov_exact(c.sys.rpf, c.sys.f, Phi, psi, n, get<std::size_t>(c.cfg, "experiment.budget") * 8);
    else if (estimator == "spectral") {
      SpectralOptions o;
      o.alpha = get_num(c.cfg, "experiment.alpha");
      e = cov_spectral(c.sys.rpf, c.sys.f, Phi, psi, n, o);
      if (warnings) warnings->push_back(e.quadrature_warning);
    } else if (estimator == "direct") {
      std::uint64_t s2 = detail::splitmix(seed ^ (0x100000001b3ULL * std::uint64_t(n + 1)));
      c.seeds["direct_n" + std::to_string(n)] = s2;
      e = cov_direct(c.sys.rpf, c.sys.f, Phi, psi, n, get<int>(c.cfg, "experiment.samples"), s2);
    } else
      fail(ErrorKind::ConfigError, "experiment.estimators: unknown estimator '" + estimator + "'");
    s.push(e);
  }
  return s;
}

inline std::string series_csv(const std::vector<CorrelationSeries>& all) {
  std::ostringstream csv;
  csv << "n,re_cov,im_cov,err,band0,band_low,band_high,estimator\n";
  for (const auto& s : all)
    for (std::size_t i = 0; i < s.size(); ++i)
      csv << s.n[i] << "," << num(s.cov[i].real()) << "," << num(s.cov[i].imag()) << "," << num(s.err[i]) << ","
          << num(s.band0[i].real()) << "," << num(s.band_low[i].real()) << "," << num(s.band_high[i].real()) << ","
          << s.estimator << "\n";
  return csv.str();
}

inline std::vector<Plot> series_plots(const std::vector<CorrelationSeries>& all) {
  std::vector<Plot> out;
  for (const auto& s : all) {
    Plot p{s.estimator, {}, {}};
    for (std::size_t i = 0; i < s.size(); ++i) {
      p.x.push_back(double(s.n[i]));
      p.y.push_back(std::abs(s.cov[i]));
    }
    out.push_back(p);
  }
  return out;
}

inline bool is_constant_global(const GlobalObservable& Phi) {
  for (int w = 0; w < Phi.space->size(); ++w) {
    const auto& e = Phi.at(w);
    if (e.has_density() || e.atoms.size() != 1 || e.atoms[0].xi != 0.0 || e.atoms[0].weight != cplx(1.0)) return false;
  }
  return true;
}

inline void run_correlate(Context& c) {
  auto Phi = build_global(c.cfg, c.sys);
  auto psi = build_local(c.cfg, c.sys);
  auto ns = get<std::vector<int>>(c.cfg, "experiment.n");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    require(ns[i] >= 0, "experiment.n", "entries must be >= 0");
    if (i) require(ns[i] > ns[i - 1], "experiment.n", "must be strictly increasing");
  }
  const double tol = get_num(c.cfg, "experiment.tolerance");
  std::vector<CorrelationSeries> all;
  std::vector<bool> warn;
  for (const auto& est : get<std::vector<std::string>>(c.cfg, "experiment.estimators"))
    all.push_back(correlate_series(c, est, ns, Phi, psi, &warn));
  c.out.text("correlate.csv", "csv", series_csv(all));
  if (c.plots) c.out.text("correlate.svg", "svg", svg_plot("|cov(n)|", "n", "|cov|", series_plots(all), false, true));

  const CorrelationSeries *ex = nullptr, *sp = nullptr, *di = nullptr;
  for (const auto& s : all) (s.estimator == "exact" ? ex : s.estimator == "spectral" ? sp : di) = &s;
  if (ex && sp) {
    bool ok = true;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      double d = std::abs(ex->cov[i] - sp->cov[i]);
      ok = ok && (d <= tol * std::abs(ex->cov[i]) || d <= 1e-10);
    }
    c.verdict("exact_vs_spectral", ok);
  } else
    c.skipped("exact_vs_spectral");
  const CorrelationSeries* ref = ex ? ex : sp;
  if (di && ref) {
    bool ok = true;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      double d = std::abs(di->cov[i] - ref->cov[i]);
      ok = ok && d <= 3.0 * di->err[i] + 1e-10;
    }
    c.verdict("direct_within_3_stderr", ok);
  } else
    c.skipped("direct_within_3_stderr");
  if (sp) {
    bool ok = true, lemma = true;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      cplx sum = sp->band0[i] + sp->band_low[i] + sp->band_high[i];
      ok = ok && std::abs(sum - sp->cov[i]) <= 1e-12 * (1.0 + std::abs(sp->cov[i]));
      if (ns[i] > 0) {
        double lf = low_freq_variation(Phi, c.sys.rpf, std::pow(double(ns[i]), -get_num(c.cfg, "experiment.alpha")));
        lemma = lemma && std::abs(sp->band_low[i]) <= psi.Max[0] * lf + sp->err[i] + 1e-12;
      }
    }
    c.verdict("band_accounting", ok);
    c.verdict("low_band_bound", lemma);
    bool any = false;
    for (bool w : warn) any = any || w;
    c.results["quadrature_warning"] = any;
  } else {
    c.skipped("band_accounting");
    c.skipped("low_band_bound");
  }
  if (is_constant_global(Phi)) {
    bool ok = true;
    for (const auto& s : all)
      for (std::size_t i = 0; i < s.size(); ++i) ok = ok && std::abs(s.cov[i]) <= tol + 3.0 * s.err[i];
    c.verdict("constant_observable_gives_zero", ok);
  } else
    c.skipped("constant_observable_gives_zero");
  c.results["nu_av"] = {nu_av_global(Phi, c.sys.rpf).real(), nu_av_global(Phi, c.sys.rpf).imag()};
  c.results["nu_psi"] = {nu_local(psi, c.sys.rpf).real(), nu_local(psi, c.sys.rpf).imag()};
}

inline void run_rates(Context& c) {
  auto Phi = build_global(c.cfg, c.sys);
  auto psi = build_local(c.cfg, c.sys);
  auto ns = get<std::vector<int>>(c.cfg, "experiment.n");
  for (std::size_t i = 1; i < ns.size(); ++i) require(ns[i] > ns[i - 1], "experiment.n", "must be strictly increasing");
  auto ests = get<std::vector<std::string>>(c.cfg, "experiment.estimators");
  require(!ests.empty(), "experiment.estimators", "must not be empty");
  std::vector<bool> warn;
  auto s = correlate_series(c, ests.front(), ns, Phi, psi, &warn);
  c.out.text("rates.csv", "csv", series_csv({s}));
  if (c.plots) c.out.text("rates.svg", "svg", svg_plot("|cov(n)|", "n", "|cov|", series_plots({s}), true, true));

  auto window = get<std::vector<int>>(c.cfg, "experiment.window");
  require(window.size() == 2, "experiment.window", "expected [lo, hi]");
  int lo = window[0], hi = window[1];
  if (lo == 0 && hi == 0) lo = ns.front(), hi = ns.back();
  auto levels = get<std::vector<int>>(c.cfg, "experiment.levels");
  RateFit fit;
  try {
    fit = rate_fit(s, lo, hi, levels);
  } catch (const Error& e) {
    c.results["rate_fit_error"] = e.what();
    c.verdict("rate_fit", false);
    return;
  }
  json rf = {{"window", {lo, hi}}, {"points", fit.points}, {"exponent_valid", fit.exponent_valid}};
  if (fit.exponent_valid) rf["exponent"] = fit.exponent, rf["ci95"] = {fit.ci_lo, fit.ci_hi};
  json rapid = json::array();
  bool all_rapid = true;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    rapid.push_back({{"level", levels[i]}, {"pass", bool(fit.rapid_pass[i])}, {"ratio", fit.rapid_ratio[i]}});
    all_rapid = all_rapid && fit.rapid_pass[i];
  }
  rf["rapid_decay"] = rapid;
  c.results["rate_fit"] = rf;

  double inf_sqrt = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.n[i] >= lo && s.n[i] <= hi) inf_sqrt = std::min(inf_sqrt, s.cov[i].real() * std::sqrt(double(s.n[i])));
  c.results["inf_cov_sqrt_n"] = inf_sqrt;

  const json& range = at_path(c.cfg, "experiment.exponent_range");
  if (range.is_array() && range.size() == 2)
    c.verdict("exponent_in_range", fit.exponent_valid && fit.exponent >= range[0].get<double>() &&
                                       fit.exponent <= range[1].get<double>());
  else
    c.skipped("exponent_in_range");
  if (get<bool>(c.cfg, "experiment.expect_rapid"))
    c.verdict("rapid_decay", all_rapid);
  else
    c.skipped("rapid_decay");

  CorrelationSeries win;
  win.estimator = s.estimator;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.n[i] >= lo && s.n[i] <= hi)
      win.push({s.n[i], s.cov[i], s.err[i], s.band0[i], s.band_low[i], s.band_high[i], false, 0, s.estimator});
  auto lf = lf_bound_check(win, Phi, c.sys.rpf, get<int>(c.cfg, "experiment.k"), get_num(c.cfg, "experiment.eps"));
  c.results["lf_bound"] = {{"C", lf.C}, {"head_C", lf.head_C}, {"pass", lf.pass}};
  c.verdict("lf_bound", lf.pass);
}

inline void run_cancel(Context& c) {
  const int m = twist_depth(c);
  const int n = get<int>(c.cfg, "experiment.horizon"), N = get<int>(c.cfg, "experiment.N");
  require(n >= 1, "experiment.horizon", "must be >= 1");
  require(N >= 1, "experiment.N", "must be >= 1");
  auto xi = get<std::vector<double>>(c.cfg, "experiment.xi");
  if (xi.empty()) xi = {1.0};
  RpfData r = lift(c.sys.rpf, m);
  auto fv = lift_values(c.sys.f, *r.space());
  std::vector<double> grid;
  for (double x : xi) grid.push_back(x);
  for (double x : {0.25, 0.5, 1.0, 2.0, 4.0}) grid.push_back(x);
  double C0 = calibrate_c0(r, FiberCocycle(WordTable(r.space(), fv)), m, grid);
  c.results["C0"] = C0;
  UsCycleOptions opt;
  opt.c = get<int>(c.cfg, "experiment.c");
  opt.a_tol = get_num(c.cfg, "experiment.a_tol");
  const int draws = get<int>(c.cfg, "experiment.draws");
  const auto seed = get<std::uint64_t>(c.cfg, "experiment.seed");
  std::ostringstream csv;
  csv << "xi,pair,x,y,phase,stable_tol,stable_tol_paper,unstable_tol,junction_d\n";
  json cycles = json::array();
  for (double x : xi) {
    auto op = make_twisted(r, fv, x, C0);
    const std::string t = tag(x);
    try {
      auto cyc = find_us_cycle(op, n, N, get<std::size_t>(c.cfg, "experiment.budget"), opt);
      for (std::size_t k = 0; k < cyc.pairs.size(); ++k)
        csv << t << "," << k << "," << cyc.pairs[k].x.str() << "," << cyc.pairs[k].y.str() << "," << num(cyc.pairs[k].phase)
            << "," << num(cyc.stable_tol[k]) << "," << num(cyc.stable_tol_uncorrected[k]) << "," << num(cyc.unstable_tol[k]) << ","
            << num(cyc.junction_d[k]) << "\n";
      // the dichotomy on sampled nice observables
      auto space = make_word_space(c.sys.sft, n + m);
      int hit = 0;
      bool lemma = true;
      for (int d = 0; d < draws; ++d) {
        std::uint64_t s2 = detail::splitmix(seed + 7919ULL * std::uint64_t(d + 1));
        auto v = sample_nice(space, op.H, cyc.eps, s2);
        bool any = false;
        for (const auto& p : cyc.pairs) {
          auto chk = cancellation_pair_check(p, v, op, cyc.eps);
          any = any || chk.cancels;
          lemma = lemma && chk.lemma_holds;
        }
        hit += any;
      }
      cycles.push_back({{"xi", x}, {"pairs", cyc.pairs.size()}, {"phase", cyc.phase}, {"tolerance", cyc.tolerance},
                        {"tolerance_uncorrected", cyc.tolerance_uncorrected}, {"margin", cyc.margin}, {"eps", cyc.eps},
                        {"H", cyc.H}, {"work", cyc.work}, {"draws_with_cancellation", hit}, {"draws", draws}});
      c.verdict("witness_xi_" + t, cyc.margin > 0);
      c.verdict("dichotomy_xi_" + t, hit == draws);
      c.verdict("pair_lemma_xi_" + t, lemma);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotFound) throw;
      cycles.push_back({{"xi", x}, {"not_found", e.what()}});
      c.verdict("witness_xi_" + t, false);
      c.skipped("dichotomy_xi_" + t);
      c.skipped("pair_lemma_xi_" + t);
    }
  }
  c.seeds["nice_draws"] = seed;
  c.results["cycles"] = cycles;
  c.out.text("cancel.csv", "csv", csv.str());
}

inline void run_access(Context& c) {
  const int n = get<int>(c.cfg, "experiment.horizon"), N = get<int>(c.cfg, "experiment.N");
  const int cc = get<int>(c.cfg, "experiment.c");
  const auto budget = get<std::size_t>(c.cfg, "experiment.budget");
  require(n >= 2 * N, "experiment.horizon", "must be >= 2N");
  auto rep = collapsed_access_coverage(c.sys.rpf, c.sys.f, n, N, budget, cc);
  std::ostringstream a;
  a << "t,cycle_length,n\n";
  for (std::size_t i = 0; i < rep.achieved.size(); ++i)
    a << num(rep.achieved[i]) << "," << rep.cycle_length[i] << "," << n << "\n";
  c.out.text("access.csv", "csv", a.str());
  std::ostringstream rr;
  rr << "pairs,covering_radius\n";
  for (std::size_t j = 0; j < rep.radius_by_length.size(); ++j) rr << j + 1 << "," << num(rep.radius_by_length[j]) << "\n";
  c.out.text("access_radius.csv", "csv", rr.str());
  c.results["access"] = {{"n", n}, {"N", N}, {"c", cc}, {"C", rep.C}, {"base", rep.base.str()},
                         {"achieved", rep.achieved.size()}, {"covering_radius", rep.covering_radius},
                         {"budget_exceeded", rep.budget_exceeded}, {"work", rep.work}};

  auto probe = non_arithmeticity_probe(c.sys.sft, c.sys.f, get<int>(c.cfg, "experiment.max_period"));
  std::ostringstream o;
  o << "period,word,sum\n";
  for (const auto& p : probe.orbits) o << p.word.depth() << "," << p.word.str() << "," << num(p.sum) << "\n";
  c.out.text("orbits.csv", "csv", o.str());
  c.results["arithmeticity"] = {{"max_period", probe.max_period},
                                {"orbits", probe.orbits.size()},
                                {"cohomologous_to_constant", probe.cohomologous_to_constant},
                                {"lattice_candidate", probe.lattice_candidate},
                                {"lattice_r", probe.lattice_r}};
  c.results["accessible_at_resolution"] = rep.covering_radius < 0.05 && !probe.lattice_candidate;

  c.verdict("budget_respected", !rep.budget_exceeded);
  if (get<bool>(c.cfg, "experiment.check_symmetry") && 2 * (N + 1) <= n) {
    auto rep2 = collapsed_access_coverage(c.sys.rpf, c.sys.f, n, N + 1, budget, cc, rep.base);
    bool ok = !rep2.budget_exceeded;
    for (double t : rep.symmetric_window) {
      bool found = false;
      for (double u : rep2.symmetric_window) found = found || std::abs(u + t) <= 1e-8;
      ok = ok && found;
    }
    c.verdict("reversal_symmetry", ok);
  } else
    c.skipped("reversal_symmetry");
}

/// Builds everything the config references without running the experiment.
inline void validate(const json& cfg) {
  System sys = build_system(cfg);
  const std::string kind = get<std::string>(cfg, "experiment.kind");
  static const std::vector<std::string> kinds = {"gibbs", "spectrum", "correlate", "cancel", "access", "rates"};
  require(std::find(kinds.begin(), kinds.end(), kind) != kinds.end(), "experiment.kind",
          "unknown kind '" + kind + "' (gibbs|spectrum|correlate|cancel|access|rates)");
  if (kind == "correlate" || kind == "rates") {
    build_global(cfg, sys);
    build_local(cfg, sys);
    double alpha = get_num(cfg, "experiment.alpha");
    require(alpha > 0 && alpha < 0.5, "experiment.alpha", "must lie in (0, 1/2)");
    for (const auto& e : get<std::vector<std::string>>(cfg, "experiment.estimators"))
      require(e == "exact" || e == "spectral" || e == "direct", "experiment.estimators", "unknown estimator '" + e + "'");
  }
  require(get<int>(cfg, "experiment.samples") >= 2, "experiment.samples", "must be >= 2");
  require(get<std::int64_t>(cfg, "experiment.budget") >= 1, "experiment.budget", "must be positive");
  require(get_num(cfg, "experiment.kappa") > 0, "experiment.kappa", "must be positive");
  require(get<int>(cfg, "experiment.n_max") >= 1, "experiment.n_max", "must be >= 1");
  get<std::string>(cfg, "output.dir");
  get<bool>(cfg, "output.plots");
}

struct RunResult {
  json manifest;
  int exit_code = 0;
};

inline RunResult run(const json& cfg) {
  validate(cfg);
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  Context c;
  c.cfg = cfg;
  c.sys = build_system(cfg);
  c.timings["build_system_s"] = std::chrono::duration<double>(clock::now() - t0).count();
  c.plots = get<bool>(cfg, "output.plots");
  c.out.dir = get<std::string>(cfg, "output.dir");
  std::filesystem::create_directories(c.out.dir);
  c.seeds["base"] = get<std::uint64_t>(cfg, "experiment.seed");

  const std::string kind = get<std::string>(cfg, "experiment.kind");
  auto t1 = clock::now();
  if (kind == "gibbs") run_gibbs(c);
  else if (kind == "spectrum") run_spectrum(c);
  else if (kind == "correlate") run_correlate(c);
  else if (kind == "rates") run_rates(c);
  else if (kind == "cancel") run_cancel(c);
  else if (kind == "access") run_access(c);
  c.timings["experiment_s"] = std::chrono::duration<double>(clock::now() - t1).count();

  RunResult res;
  json& m = res.manifest;
  m["software"] = {{"name", "glmix"}, {"version", kVersion}};
  m["config"] = cfg;
  m["system"] = c.sys.name;
  m["seeds"] = c.seeds;
  m["results"] = c.results;
  m["verdicts"] = c.verdicts;
  json files = c.out.files;
  files.push_back({{"path", "manifest.json"}, {"kind", "manifest"}});
  m["files"] = files;
  if (get<bool>(cfg, "output.timings")) m["timings"] = c.timings;
  for (auto it = c.verdicts.begin(); it != c.verdicts.end(); ++it)
    if (*it == "fail") res.exit_code = 1;
  std::ofstream(c.out.dir / "manifest.json", std::ios::binary) << m.dump(2) << "\n";
  return res;
}

inline std::string list_presets() {
  std::ostringstream s;
  s << "systems:\n";
  for (const auto& e : presets::systems()) s << "  " << e.name << " - " << e.description << "\n";
  s << "global observables:\n";
  for (const auto& e : presets::global_observables()) s << "  " << e.name << " - " << e.description << "\n";
  s << "local observables:\n";
  for (const auto& e : presets::local_observables()) s << "  " << e.name << " - " << e.description << "\n";
  return s.str();
}

}  // namespace glmix::cli
