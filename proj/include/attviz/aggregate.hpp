#pragma once

// Per-token aggregation of self-attention. Every scheme reduces one column of
// the h x t attention matrix (the h head values of token j) to a scalar:
//
//   mean  (1/h) sum_i A_ij
//   ent   -(1/m_j) sum_i P_ij ln P_ij
//   std   sqrt((1/(h-1)) sum_i (A_ij - mean_j)^2), 0 when h == 1
//   max   max_i A_ij
//   min   min_i A_ij
//
// For ent, P_ij is the relative frequency of the value A_ij within column j
// and m_j the number of distinct values there. Values are compared by exact
// equality. The sum runs over rows, so a value that occurs c times
// contributes c identical terms.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "attviz/matrix.hpp"

namespace attviz {

enum class Scheme : std::uint8_t { kMean = 0, kEnt, kStd, kMax, kMin };

inline constexpr std::array<Scheme, 5> kAllSchemes = {Scheme::kMean, Scheme::kEnt, Scheme::kStd,
                                                      Scheme::kMax, Scheme::kMin};

std::string_view scheme_name(Scheme s);
std::optional<Scheme> scheme_from_name(std::string_view name);

class UnknownScheme : public std::invalid_argument {
 public:
  explicit UnknownScheme(std::string name)
      : std::invalid_argument("unknown aggregation scheme \"" + name + "\""), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class EmptySchemeSet : public std::invalid_argument {
 public:
  EmptySchemeSet() : std::invalid_argument("no aggregation scheme requested") {}
};

class IndexOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Small bitset over Scheme. Iteration always follows kAllSchemes order.
class SchemeSet {
 public:
  constexpr SchemeSet() = default;
  constexpr SchemeSet(std::initializer_list<Scheme> schemes) {
    for (Scheme s : schemes) insert(s);
  }
  static constexpr SchemeSet all() { return {Scheme::kMean, Scheme::kEnt, Scheme::kStd, Scheme::kMax, Scheme::kMin}; }

  /// "mean,max" -> {mean, max}. Whitespace around names is ignored; empty
  /// input yields an empty set. Throws UnknownScheme.
  static SchemeSet parse(std::string_view csv);

  constexpr void insert(Scheme s) { bits_ |= bit(s); }
  constexpr bool contains(Scheme s) const { return (bits_ & bit(s)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  std::vector<Scheme> members() const;
  std::string to_string() const;  // comma list in table order

  constexpr bool operator==(const SchemeSet&) const = default;

 private:
  static constexpr std::uint8_t bit(Scheme s) { return std::uint8_t(1U << static_cast<unsigned>(s)); }
  std::uint8_t bits_ = 0;
};

/// Entropy of one column of head values.
double column_entropy(std::span<const double> column);

/// One scheme applied to one column.
double reduce_column(std::span<const double> column, Scheme scheme);

/// Scheme applied to every column of `attention`; element j belongs to token j.
std::vector<double> aggregate(const AttentionMatrix& attention, Scheme scheme);

struct TokenSummary {
  std::size_t token_index = 0;
  std::array<std::optional<double>, kAllSchemes.size()> values;  // indexed by Scheme
  std::vector<double> head_values;                               // column j, head order

  std::optional<double> get(Scheme s) const { return values[static_cast<std::size_t>(s)]; }
  bool operator==(const TokenSummary&) const = default;
};

/// All five schemes plus the raw column for token j. Throws IndexOutOfRange.
TokenSummary token_summary(const AttentionMatrix& attention, std::size_t token);

/// token summaries in token order, restricted to `schemes`. Throws
/// EmptySchemeSet.
std::vector<TokenSummary> series(const AttentionMatrix& attention, SchemeSet schemes);

enum class DisplayNormalization { kGlobal, kPerHead };

/// Rescales into [0, 1] by the global or per-row maximum. All-zero inputs
/// (or rows, per head) stay zero.
AttentionMatrix normalize_for_display(const AttentionMatrix& attention, DisplayNormalization mode);

}  // namespace attviz
