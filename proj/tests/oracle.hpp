#pragma once

// Brute-force reference implementations of the aggregation schemes, written
// straight from the definitions: row-order accumulation in long double,
// quadratic frequency counting for entropy. Test-only; shares no code with
// the library's aggregation path.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "attviz/matrix.hpp"

namespace attviz::oracle {

using Column = std::vector<double>;

inline double mean(const Column& c) {
  long double s = 0.0L;
  for (double x : c) s += x;
  return static_cast<double>(s / static_cast<long double>(c.size()));
}

inline double stddev(const Column& c) {
  if (c.size() < 2) return 0.0;
  long double s = 0.0L;
  for (double x : c) s += x;
  const long double mu = s / static_cast<long double>(c.size());
  long double sq = 0.0L;
  for (double x : c) sq += (x - mu) * (x - mu);
  return static_cast<double>(std::sqrt(sq / static_cast<long double>(c.size() - 1)));
}

inline double max(const Column& c) {
  double m = c[0];
  for (double x : c) m = x > m ? x : m;
  return m;
}

inline double min(const Column& c) {
  double m = c[0];
  for (double x : c) m = x < m ? x : m;
  return m;
}

/// Number of distinct values, by pairwise comparison.
inline std::size_t distinct_count(const Column& c) {
  std::size_t m = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    bool seen = false;
    for (std::size_t k = 0; k < i; ++k) seen = seen || c[k] == c[i];
    if (!seen) ++m;
  }
  return m;
}

/// -(1/m) * sum over every row i of P_i ln P_i, P_i = freq(c[i]) / h.
inline double entropy(const Column& c) {
  const long double h = static_cast<long double>(c.size());
  long double total = 0.0L;
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t count = 0;
    for (double y : c) count += (y == c[i]) ? 1 : 0;
    const long double p = static_cast<long double>(count) / h;
    total += p * std::log(p);
  }
  return static_cast<double>(-total / static_cast<long double>(distinct_count(c)));
}

inline std::vector<double> column(const AttentionMatrix& a, std::size_t j) {
  std::vector<double> c;
  for (std::size_t i = 0; i < a.heads(); ++i) c.push_back(a.at(i, j));
  return c;
}

/// |got - want| <= tol * max(|got|, |want|); exact match required at zero.
inline bool rel_close(double got, double want, double tol = 1e-12) {
  if (got == want) return true;
  const double scale = std::fmax(std::fabs(got), std::fabs(want));
  return std::fabs(got - want) <= tol * scale;
}

/// Random h x t matrix with entries in [0, 1]. Roughly a third of the
/// matrices draw from a small value pool so that repeated values (and
/// constant columns) show up.
inline AttentionMatrix random_matrix(std::mt19937_64& rng, std::size_t max_heads = 8,
                                     std::size_t max_tokens = 16) {
  std::uniform_int_distribution<std::size_t> hd(1, max_heads), td(1, max_tokens);
  const std::size_t h = hd(rng), t = td(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool pooled = std::uniform_int_distribution<int>(0, 2)(rng) == 0;
  const double pool[] = {0.0, 0.1, 0.25, 0.5, 1.0};
  std::uniform_int_distribution<int> pick(0, 4);
  std::vector<double> v(h * t);
  for (auto& x : v) x = pooled ? pool[pick(rng)] : unit(rng);
  return AttentionMatrix(h, t, std::move(v));
}

}  // namespace attviz::oracle
