#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "glmix/error.hpp"

namespace glmix {

using cplx = std::complex<double>;

/// A finite word over the alphabet {0, ..., A-1}; its depth is its length.
struct Word {
  std::vector<int> symbols;

  Word() = default;
  explicit Word(std::vector<int> s) : symbols(std::move(s)) {}

  int depth() const { return static_cast<int>(symbols.size()); }
  int operator[](int i) const { return symbols[static_cast<std::size_t>(i)]; }
  const int* data() const { return symbols.data(); }

  Word prefix(int len) const { return Word({symbols.begin(), symbols.begin() + len}); }
  Word suffix(int len) const { return Word({symbols.end() - len, symbols.end()}); }
  Word sub(int from, int len) const {
    return Word({symbols.begin() + from, symbols.begin() + from + len});
  }

  /// Single-character symbols only ("0101").
  static Word parse(const std::string& s) {
    Word w;
    for (char c : s) w.symbols.push_back(c - '0');
    return w;
  }
  std::string str() const {
    std::string s;
    for (int c : symbols) s += (c < 10) ? char('0' + c) : '?';
    return s;
  }

  friend bool operator==(const Word& a, const Word& b) { return a.symbols == b.symbols; }
  friend bool operator<(const Word& a, const Word& b) { return a.symbols < b.symbols; }
};

inline Word concat(const Word& a, const Word& b) {
  Word w = a;
  w.symbols.insert(w.symbols.end(), b.symbols.begin(), b.symbols.end());
  return w;
}

/// One-sided subshift of finite type with metric parameter theta.
class SftSpace {
 public:
  SftSpace() = default;
  SftSpace(int alphabet, std::vector<std::vector<char>> t, double theta, int primitive_at)
      : alphabet_(alphabet), t_(std::move(t)), theta_(theta), primitive_at_(primitive_at) {}

  int alphabet_size() const { return alphabet_; }
  double theta() const { return theta_; }
  /// Minimal k with transitions^k entrywise positive.
  int primitivity_power() const { return primitive_at_; }
  bool allowed(int a, int b) const { return t_[a][b] != 0; }
  const std::vector<std::vector<char>>& transitions() const { return t_; }

  bool admissible(const int* s, int len) const {
    for (int i = 0; i < len; ++i)
      if (s[i] < 0 || s[i] >= alphabet_) return false;
    for (int i = 0; i + 1 < len; ++i)
      if (!allowed(s[i], s[i + 1])) return false;
    return true;
  }
  bool admissible(const Word& w) const { return admissible(w.data(), w.depth()); }

 private:
  int alphabet_ = 0;
  std::vector<std::vector<char>> t_;
  double theta_ = 0.5;
  int primitive_at_ = 1;
};

inline SftSpace build_sft(int alphabet_size, const std::vector<std::vector<int>>& transitions,
                          double theta) {
  const int A = alphabet_size;
  if (A <= 0) fail(ErrorKind::InvalidArgument, "alphabet_size must be positive");
  if (static_cast<int>(transitions.size()) != A)
    fail(ErrorKind::InvalidArgument, "transition matrix must be square");
  for (const auto& row : transitions)
    if (static_cast<int>(row.size()) != A)
      fail(ErrorKind::InvalidArgument, "transition matrix must be square");
  if (!(theta > 0.0 && theta < 1.0)) fail(ErrorKind::InvalidArgument, "theta must lie in (0,1)");

  std::vector<std::vector<char>> t(A, std::vector<char>(A, 0));
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < A; ++b) t[a][b] = transitions[a][b] != 0;
  for (int a = 0; a < A; ++a) {
    bool row = false, col = false;
    for (int b = 0; b < A; ++b) {
      row = row || t[a][b];
      col = col || t[b][a];
    }
    if (!row || !col) fail(ErrorKind::DeadSymbol, "symbol " + std::to_string(a) + " has an empty row or column");
  }

  // boolean powers up to A^2 (Wielandt's bound is (A-1)^2+1)
  auto p = t;
  for (int k = 1; k <= A * A; ++k) {
    bool pos = true;
    for (int a = 0; a < A && pos; ++a)
      for (int b = 0; b < A && pos; ++b) pos = p[a][b] != 0;
    if (pos) return SftSpace(A, t, theta, k);
    std::vector<std::vector<char>> q(A, std::vector<char>(A, 0));
    for (int a = 0; a < A; ++a)
      for (int c = 0; c < A; ++c)
        if (p[a][c])
          for (int b = 0; b < A; ++b)
            if (t[c][b]) q[a][b] = 1;
    p = std::move(q);
  }
  fail(ErrorKind::NotMixing, "no power of the transition matrix up to alphabet_size^2 is positive");
}

inline int common_prefix(const int* a, const int* b, int len) {
  int j = 0;
  while (j < len && a[j] == b[j]) ++j;
  return j;
}

/// theta^j with j the common prefix length; identical words give the cylinder bound theta^m.
inline double word_metric(const Word& w1, const Word& w2, double theta) {
  if (w1.depth() != w2.depth()) fail(ErrorKind::DepthMismatch, "word_metric on words of different depth");
  return std::pow(theta, common_prefix(w1.data(), w2.data(), w1.depth()));
}

/// One-step preimages a·w[0..m-2], ascending in a.
inline std::vector<Word> preimages(const SftSpace& sft, const Word& w) {
  if (!sft.admissible(w) || w.depth() == 0) fail(ErrorKind::InadmissibleWord, "'" + w.str() + "'");
  std::vector<Word> out;
  for (int a = 0; a < sft.alphabet_size(); ++a) {
    if (!sft.allowed(a, w[0])) continue;
    Word y;
    y.symbols.reserve(w.symbols.size());
    y.symbols.push_back(a);
    y.symbols.insert(y.symbols.end(), w.symbols.begin(), w.symbols.end() - 1);
    out.push_back(std::move(y));
  }
  return out;
}

/// Enumeration of the admissible depth-m words in lexicographic order, with index lookup
/// and the one-step preimage structure used by every transfer matrix.
class WordSpace {
 public:
  WordSpace(const SftSpace& sft, int depth) : sft_(sft), depth_(depth) {
    if (depth < 1) fail(ErrorKind::InvalidArgument, "word depth must be >= 1");
    const int A = sft.alphabet_size();
    double total = std::pow(double(A), depth);
    if (total > 4.0e18) fail(ErrorKind::BudgetExceeded, "word space too large to index");
    dense_ = total <= double(1 << 22);
    if (dense_) dense_index_.assign(static_cast<std::size_t>(total), -1);

    std::vector<int> cur(depth, 0);
    // depth-first lexicographic enumeration
    auto rec = [&](auto&& self, int pos) -> void {
      if (pos == depth) {
        add(cur);
        return;
      }
      for (int a = 0; a < A; ++a) {
        if (pos > 0 && !sft.allowed(cur[pos - 1], a)) continue;
        cur[pos] = a;
        self(self, pos + 1);
      }
    };
    rec(rec, 0);

    pre_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      const Word& x = words_[i];
      std::vector<int> y(depth);
      for (int k = 1; k < depth; ++k) y[k] = x[k - 1];
      for (int a = 0; a < A; ++a) {
        if (!sft.allowed(a, x[0])) continue;
        y[0] = a;
        pre_[i].push_back(index_of(y.data()));
      }
    }
    lcp_next_.resize(words_.size(), 0);
    for (std::size_t i = 0; i + 1 < words_.size(); ++i)
      lcp_next_[i] = common_prefix(words_[i].data(), words_[i + 1].data(), depth);
  }

  const SftSpace& sft() const { return sft_; }
  int depth() const { return depth_; }
  int size() const { return static_cast<int>(words_.size()); }
  const Word& word(int i) const { return words_[static_cast<std::size_t>(i)]; }
  const std::vector<Word>& words() const { return words_; }

  std::uint64_t code(const int* s) const {
    std::uint64_t c = 0;
    for (int k = 0; k < depth_; ++k) c = c * std::uint64_t(sft_.alphabet_size()) + std::uint64_t(s[k]);
    return c;
  }
  /// Index of the depth-m word starting at s, or -1 when inadmissible.
  int index_of(const int* s) const {
    for (int k = 0; k < depth_; ++k)
      if (s[k] < 0 || s[k] >= sft_.alphabet_size()) return -1;
    std::uint64_t c = code(s);
    if (dense_) return dense_index_[c];
    auto it = sparse_index_.find(c);
    return it == sparse_index_.end() ? -1 : it->second;
  }
  int index_of(const Word& w) const {
    if (w.depth() != depth_) fail(ErrorKind::DepthMismatch, "word '" + w.str() + "' vs depth " + std::to_string(depth_));
    return index_of(w.data());
  }
  int require_index(const Word& w) const {
    int i = index_of(w);
    if (i < 0) fail(ErrorKind::InadmissibleWord, "'" + w.str() + "'");
    return i;
  }

  /// Indices of the one-step preimages of word i (ascending first symbol).
  const std::vector<int>& preimage_indices(int i) const { return pre_[static_cast<std::size_t>(i)]; }
  /// Common prefix length of consecutive words i, i+1 (lexicographic order).
  int lcp_next(int i) const { return lcp_next_[static_cast<std::size_t>(i)]; }

 private:
  void add(const std::vector<int>& s) {
    int idx = static_cast<int>(words_.size());
    words_.emplace_back(s);
    std::uint64_t c = code(s.data());
    if (dense_)
      dense_index_[c] = idx;
    else
      sparse_index_[c] = idx;
  }

  SftSpace sft_;
  int depth_;
  std::vector<Word> words_;
  bool dense_ = true;
  std::vector<int> dense_index_;
  std::unordered_map<std::uint64_t, int> sparse_index_;
  std::vector<std::vector<int>> pre_;
  std::vector<int> lcp_next_;
};

using WordSpacePtr = std::shared_ptr<const WordSpace>;

inline WordSpacePtr make_word_space(const SftSpace& sft, int depth) {
  return std::make_shared<const WordSpace>(sft, depth);
}

/// Complex value per admissible depth-m word.
struct StateFunction {
  WordSpacePtr space;
  std::vector<cplx> values;

  StateFunction() = default;
  StateFunction(WordSpacePtr s, cplx fill = 0.0) : space(std::move(s)), values(space->size(), fill) {}
  StateFunction(WordSpacePtr s, std::vector<cplx> v) : space(std::move(s)), values(std::move(v)) {}

  int depth() const { return space->depth(); }
  int size() const { return static_cast<int>(values.size()); }
  cplx& operator[](int i) { return values[static_cast<std::size_t>(i)]; }
  cplx operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  cplx at(const Word& w) const { return values[static_cast<std::size_t>(space->require_index(w))]; }

  double sup_norm() const {
    double s = 0.0;
    for (auto v : values) s = std::max(s, std::abs(v));
    return s;
  }
};

/// Exact theta-seminorm of a locally constant function: maximum over word pairs.
/// Consecutive-lcp minima give each pair's common prefix in O(1).
template <class V>
double lipschitz_seminorm(const WordSpace& space, const std::vector<V>& v, double theta) {
  const int N = space.size();
  std::vector<double> inv_pow(space.depth() + 1);
  for (int j = 0; j <= space.depth(); ++j) inv_pow[j] = std::pow(theta, -j);
  double best = 0.0;
  for (int i = 0; i < N; ++i) {
    int lcp = space.depth();
    for (int j = i + 1; j < N; ++j) {
      lcp = std::min(lcp, space.lcp_next(j - 1));
      double d = std::abs(v[i] - v[j]);
      if (d > 0.0) best = std::max(best, d * inv_pow[lcp]);
    }
  }
  return best;
}

inline double lipschitz_seminorm(const StateFunction& v, double theta) {
  return lipschitz_seminorm(*v.space, v.values, theta);
}

}  // namespace glmix
