#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "glmix/symbolic.hpp"

namespace glmix {

/// Real value per admissible depth-k word; the shape shared by potentials and cocycles.
struct WordTable {
  WordSpacePtr space;
  std::vector<double> values;

  WordTable() = default;
  WordTable(WordSpacePtr s, std::vector<double> v) : space(std::move(s)), values(std::move(v)) {
    if (static_cast<int>(values.size()) != space->size())
      fail(ErrorKind::InvalidArgument, "table size does not match the number of admissible words");
  }

  int depth() const { return space->depth(); }
  /// Value at the depth-k window starting at s (s must be admissible).
  double eval(const int* s) const { return values[static_cast<std::size_t>(space->index_of(s))]; }
  double operator()(const Word& w) const {
    if (w.depth() < depth()) fail(ErrorKind::WordTooShort, "'" + w.str() + "'");
    int i = space->index_of(w.data());
    if (i < 0) fail(ErrorKind::InadmissibleWord, "'" + w.str() + "'");
    return values[static_cast<std::size_t>(i)];
  }
};

inline WordTable make_table(const SftSpace& sft, int depth, const std::function<double(const Word&)>& fn) {
  auto space = make_word_space(sft, depth);
  std::vector<double> v;
  v.reserve(space->size());
  for (const auto& w : space->words()) v.push_back(fn(w));
  return WordTable(space, std::move(v));
}

using Potential = WordTable;

struct RuelleMatrix {
  WordSpacePtr space;
  Potential u;
  Eigen::MatrixXd M;
};

inline bool is_full_shift(const SftSpace& sft) {
  for (int a = 0; a < sft.alphabet_size(); ++a)
    for (int b = 0; b < sft.alphabet_size(); ++b)
      if (!sft.allowed(a, b)) return false;
  return true;
}

/// Smallest depth at which the normalized operator is well defined for u.
inline int rpf_depth(const SftSpace& sft, const Potential& u) { return std::max(u.depth(), is_full_shift(sft) ? 1 : 2); }

/// M[x][y] = e^{u(y)} for each one-step preimage y of x.
inline RuelleMatrix ruelle_matrix(const SftSpace& sft, const Potential& u, int m) {
  if (m < u.depth()) fail(ErrorKind::DepthTooSmall, "depth " + std::to_string(m) + " < potential depth " + std::to_string(u.depth()));
  if (m == 1 && !is_full_shift(sft))
    fail(ErrorKind::DepthTooSmall, "depth 1 cannot carry the transition weights of a non-full shift; use depth >= 2");
  auto space = make_word_space(sft, m);
  const int N = space->size();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
  for (int x = 0; x < N; ++x)
    for (int y : space->preimage_indices(x)) M(x, y) = std::exp(u.eval(space->word(y).data()));
  return {space, u, M};
}

/// Leading eigendata of the Ruelle matrix, normalized so that L1 = 1.
class RpfData {
 public:
  double lambda = 1.0;
  std::vector<double> h, nu, g, mu;
  double gap_modulus = 0.0;  // second-largest eigenvalue modulus of the normalized matrix
  int iterations = 0;

  RpfData() = default;
  RpfData(WordSpacePtr space) : space_(std::move(space)) {}

  const WordSpacePtr& space() const { return space_; }
  const SftSpace& sft() const { return space_->sft(); }
  int depth() const { return space_->depth(); }
  int size() const { return space_->size(); }
  double theta() const { return sft().theta(); }

  /// mu of the cylinder spelled by s[0..len-1]; zero when inadmissible.
  double cylinder_measure(const int* s, int len) const {
    if (!sft().admissible(s, len)) return 0.0;
    const int m = depth();
    if (len < m) {
      double acc = 0.0;
      for (int i = 0; i < size(); ++i)
        if (common_prefix(space_->word(i).data(), s, len) == len) acc += mu[i];
      return acc;
    }
    double p = 1.0;
    for (int j = 0; j + m <= len; ++j) p *= g[space_->index_of(s + j)];
    return p * marginal(s + len - m + 1);
  }
  double cylinder_measure(const Word& w) const { return cylinder_measure(w.data(), w.depth()); }

  /// mu of the depth-(m-1) cylinder starting at s (1 for m = 1).
  double marginal(const int* s) const {
    if (depth() == 1) return 1.0;
    return marg_[static_cast<std::size_t>(marg_space_->index_of(s))];
  }

  /// (L v)(x) = sum over preimages y of g(y) v(y).
  template <class V>
  std::vector<V> transfer(const std::vector<V>& v) const {
    std::vector<V> out(v.size(), V(0));
    for (int x = 0; x < size(); ++x) {
      V acc(0);
      for (int y : space_->preimage_indices(x)) acc += g[y] * v[y];
      out[x] = acc;
    }
    return out;
  }

  template <class V>
  V integral(const std::vector<V>& v) const {
    V acc(0);
    for (int i = 0; i < size(); ++i) acc += mu[i] * v[i];
    return acc;
  }

  Eigen::MatrixXd normalized_matrix() const {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(size(), size());
    for (int x = 0; x < size(); ++x)
      for (int y : space_->preimage_indices(x)) P(x, y) = g[y];
    return P;
  }

  void finalize_marginals() {
    if (depth() == 1) return;
    marg_space_ = make_word_space(sft(), depth() - 1);
    marg_.assign(marg_space_->size(), 0.0);
    for (int i = 0; i < size(); ++i) marg_[marg_space_->index_of(space_->word(i).data())] += mu[i];
  }

 private:
  WordSpacePtr space_;
  WordSpacePtr marg_space_;
  std::vector<double> marg_;
};

namespace detail {

inline double collatz_spread(const Eigen::MatrixXd& M, const Eigen::VectorXd& v, double& lam) {
  Eigen::VectorXd w = M * v;
  double lo = 1e300, hi = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    double r = w[i] / v[i];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  lam = 0.5 * (lo + hi);
  return (hi - lo) / lam;
}

// Perron vector of a primitive nonnegative matrix; dense solve below 64 states, power
// iteration otherwise. Both finish with Collatz-Wielandt polishing.
inline Eigen::VectorXd perron_vector(const Eigen::MatrixXd& M, double tol, int max_iters, double& lam,
                                     int& iters) {
  const int N = static_cast<int>(M.rows());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(N);
  if (N < 64) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    int best = 0;
    for (int i = 1; i < N; ++i)
      if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
    v = es.eigenvectors().col(best).real().cwiseAbs();
    if (v.minCoeff() <= 0.0) v = Eigen::VectorXd::Ones(N);
  }
  v /= v.sum();
  iters = 0;
  double spread = collatz_spread(M, v, lam);
  double prev = spread;
  int stall = 0;
  while (spread > tol) {
    if (iters >= max_iters)
      fail(ErrorKind::NoConvergence, "power iteration: spread " + std::to_string(spread) + " > tol " + std::to_string(tol) +
                                         " after " + std::to_string(max_iters) + " iterations");
    v = M * v;
    v /= v.sum();
    ++iters;
    spread = collatz_spread(M, v, lam);
    // rounding floor: stop once the spread no longer improves and is already tiny
    if (spread >= prev && spread < 1e3 * tol) {
      if (++stall > 20) break;
    } else {
      stall = 0;
    }
    prev = std::min(prev, spread);
  }
  return v;
}

}  // namespace detail

inline RpfData rpf_eigendata(const RuelleMatrix& R, double tol = 1e-13, int max_iters = 200000) {
  const auto& space = R.space;
  const int N = space->size();
  RpfData d(space);
  double lam = 0.0, lam_t = 0.0;
  int it1 = 0, it2 = 0;
  Eigen::VectorXd h = detail::perron_vector(R.M, tol, max_iters, lam, it1);
  Eigen::VectorXd nu = detail::perron_vector(R.M.transpose(), tol, max_iters, lam_t, it2);
  d.lambda = lam;
  d.iterations = it1 + it2;

  nu /= nu.sum();
  h /= nu.dot(h);
  d.h.assign(h.data(), h.data() + N);
  d.nu.assign(nu.data(), nu.data() + N);

  // g(y) = e^{u(y)} h(y) / (lambda h(x)) for any x with y among its preimages
  d.g.assign(N, 0.0);
  std::vector<double> row(N, 0.0);
  for (int x = 0; x < N; ++x)
    for (int y : space->preimage_indices(x)) d.g[y] = R.M(x, y) * h[y] / (lam * h[x]);
  for (int x = 0; x < N; ++x)
    for (int y : space->preimage_indices(x)) row[x] += d.g[y];
  // rows of x sharing x[0..m-2] coincide; strip the residual rounding
  for (int x = 0; x < N; ++x)
    for (int y : space->preimage_indices(x)) d.g[y] = R.M(x, y) * h[y] / (lam * h[x]) / row[x];

  d.mu.assign(N, 0.0);
  double s = 0.0;
  for (int i = 0; i < N; ++i) s += (d.mu[i] = h[i] * nu[i]);
  for (auto& v : d.mu) v /= s;

  // polish mu as the stationary law of the normalized (stochastic) matrix
  Eigen::MatrixXd P = d.normalized_matrix();
  Eigen::RowVectorXd m = Eigen::Map<Eigen::RowVectorXd>(d.mu.data(), N);
  for (int k = 0; k < 50; ++k) {
    Eigen::RowVectorXd next = m * P;
    next /= next.sum();
    double diff = (next - m).cwiseAbs().maxCoeff();
    m = next;
    if (diff < 1e-17) break;
  }
  d.mu.assign(m.data(), m.data() + N);
  d.finalize_marginals();

  if (N == 1) {
    d.gap_modulus = 0.0;
  } else if (N <= 256) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(P, false);
    std::vector<double> mods;
    for (int i = 0; i < N; ++i) mods.push_back(std::abs(es.eigenvalues()[i]));
    std::sort(mods.rbegin(), mods.rend());
    d.gap_modulus = mods[1] < 1e-12 ? 0.0 : mods[1];
  } else {
    // deflated power iteration on P - 1 mu
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(N, -1.0, 1.0);
    double rate = 0.0;
    for (int k = 0; k < 500; ++k) {
      v -= Eigen::VectorXd::Constant(N, m.dot(v));
      double nv = v.cwiseAbs().maxCoeff();
      if (nv == 0.0) break;
      v /= nv;
      Eigen::VectorXd w = P * v;
      w -= Eigen::VectorXd::Constant(N, m.dot(w));
      rate = w.cwiseAbs().maxCoeff();
      v = w;
    }
    d.gap_modulus = rate;
  }
  return d;
}

inline RpfData rpf_eigendata(const SftSpace& sft, const Potential& u, int m, double tol = 1e-13) {
  return rpf_eigendata(ruelle_matrix(sft, u, m), tol);
}

/// Forward Markov chain realizing mu on depth-m windows.
struct GibbsChain {
  WordSpacePtr space;
  std::vector<double> initial_cdf;
  std::vector<std::vector<double>> cdf;   // per state, over next symbol
  std::vector<std::vector<int>> next;     // state after appending symbol b (-1 if forbidden)

  explicit GibbsChain(const RpfData& rpf) : space(rpf.space()) {
    const int N = space->size(), A = space->sft().alphabet_size(), m = space->depth();
    initial_cdf.resize(N);
    std::partial_sum(rpf.mu.begin(), rpf.mu.end(), initial_cdf.begin());
    for (auto& c : initial_cdf) c /= initial_cdf.back();
    cdf.assign(N, std::vector<double>(A, 0.0));
    next.assign(N, std::vector<int>(A, -1));
    std::vector<int> buf(m);
    for (int s = 0; s < N; ++s) {
      const Word& w = space->word(s);
      for (int k = 1; k < m; ++k) buf[k - 1] = w[k];
      double acc = 0.0;
      for (int b = 0; b < A; ++b) {
        if (space->sft().allowed(w[m - 1], b)) {
          buf[m - 1] = b;
          int t = space->index_of(buf.data());
          next[s][b] = t;
          acc += rpf.g[s] * rpf.mu[t] / rpf.mu[s];
        }
        cdf[s][b] = acc;
      }
      for (auto& c : cdf[s]) c /= acc;
    }
  }

  static int draw(const std::vector<double>& cdf, double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int i = static_cast<int>(it - cdf.begin());
    return std::min(i, static_cast<int>(cdf.size()) - 1);
  }

  /// Append `count` further symbols to a sequence whose last m symbols form `state`.
  template <class Rng>
  int extend(std::vector<int>& out, int state, int count, Rng& rng) const {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int k = 0; k < count; ++k) {
      int b = draw(cdf[state], U(rng));
      while (next[state][b] < 0) b = draw(cdf[state], U(rng));
      out.push_back(b);
      state = next[state][b];
    }
    return state;
  }

  template <class Rng>
  std::vector<int> sample(int length, Rng& rng) const {
    const int m = space->depth();
    if (length < m) fail(ErrorKind::InvalidArgument, "orbit length shorter than chain depth");
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int s = draw(initial_cdf, U(rng));
    std::vector<int> out(space->word(s).symbols);
    out.reserve(length);
    extend(out, s, length - m, rng);
    return out;
  }
};

inline std::vector<int> sample_orbit(const GibbsChain& chain, int length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return chain.sample(length, rng);
}

struct GibbsBallFit {
  double C_u = 0.0;
  double d = 0.0;
  int centers = 0;
};

/// Fits mu(B(x, theta^j)) >= C_u r^d over all depth-J centers, J the largest exponent.
inline GibbsBallFit gibbs_ball_fit(const RpfData& rpf, const std::vector<double>& radii) {
  const double theta = rpf.theta();
  std::vector<int> js;
  for (double r : radii) {
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::InvalidArgument, "radius outside (0,1]");
    double jf = std::log(r) / std::log(theta);
    int j = static_cast<int>(std::lround(jf));
    if (std::abs(std::pow(theta, j) - r) > 1e-9 * r) fail(ErrorKind::InvalidArgument, "radius is not a power of theta");
    js.push_back(j);
  }
  std::sort(js.begin(), js.end());
  js.erase(std::unique(js.begin(), js.end()), js.end());
  if (js.size() < 2) fail(ErrorKind::InsufficientData, "need at least two distinct radii");
  const int J = std::max(js.back(), 1);
  WordSpace centers(rpf.sft(), J);

  std::vector<double> lx, ly;
  for (int j : js) {
    double lo = 1.0;
    for (const auto& w : centers.words()) lo = std::min(lo, j == 0 ? 1.0 : rpf.cylinder_measure(w.data(), j));
    lx.push_back(j * std::log(theta));
    ly.push_back(std::log(lo));
  }
  const double n = double(lx.size());
  double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n, my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  GibbsBallFit fit;
  fit.d = sxy / sxx;
  fit.C_u = 1e300;
  for (std::size_t i = 0; i < lx.size(); ++i) fit.C_u = std::min(fit.C_u, std::exp(ly[i] - fit.d * lx[i]));
  fit.centers = centers.size();
  return fit;
}

struct GapFit {
  double C = 0.0;
  double delta = 0.0;
  std::vector<double> errors;  // max over trials of ||L^n v - int v|| / ||v||_theta
};

/// Fits ||L^n v - int v dmu||_inf <= C delta^n ||v||_theta over random real v.
inline GapFit fit_spectral_gap(const RpfData& rpf, int trials, int n_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  GapFit fit;
  fit.errors.assign(n_max + 1, 0.0);
  for (int t = 0; t < trials; ++t) {
    std::vector<double> v(rpf.size());
    for (auto& x : v) x = U(rng);
    double norm = *std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    norm = std::abs(norm) + lipschitz_seminorm(*rpf.space(), v, rpf.theta());
    double mean = rpf.integral(v);
    for (int n = 0; n <= n_max; ++n) {
      double e = 0.0;
      for (double x : v) e = std::max(e, std::abs(x - mean));
      fit.errors[n] = std::max(fit.errors[n], e / norm);
      v = rpf.transfer(v);
    }
  }
  // slope of the log error above the rounding floor
  std::vector<double> xs, ys;
  for (int n = 1; n <= n_max; ++n)
    if (fit.errors[n] > 1e-13) {
      xs.push_back(n);
      ys.push_back(std::log(fit.errors[n]));
    }
  if (xs.size() >= 2) {
    double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    fit.delta = std::min(std::exp(sxy / sxx), 1.0);
  } else {
    fit.delta = 0.0;
  }
  fit.C = fit.errors[0];
  for (int n = 1; n <= n_max; ++n)
    if (fit.errors[n] > 0.0) fit.C = std::max(fit.C, fit.delta > 0 ? fit.errors[n] / std::pow(fit.delta, n) : 1e300);
  return fit;
}

}  // namespace glmix
