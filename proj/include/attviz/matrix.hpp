#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace attviz {

/// Self-attention values of one document: one row per attention head, one
/// column per token. Row i holds the diagonal of head i's token-token
/// attention matrix.
///
/// Construction enforces the matrix invariants (at least one row and one
/// column, rectangular, every entry finite and non-negative), so every
/// AttentionMatrix in existence is a valid aggregation input.
class AttentionMatrix {
 public:
  /// Throws std::invalid_argument when the rows violate an invariant.
  explicit AttentionMatrix(const std::vector<std::vector<double>>& rows);
  AttentionMatrix(std::size_t heads, std::size_t tokens, std::vector<double> row_major);

  std::size_t heads() const noexcept { return heads_; }
  std::size_t tokens() const noexcept { return tokens_; }

  double at(std::size_t head, std::size_t token) const { return values_[head * tokens_ + token]; }
  std::span<const double> row(std::size_t head) const {
    return {values_.data() + head * tokens_, tokens_};
  }
  /// Copy of column `token` (the h head values for that token).
  std::vector<double> column(std::size_t token) const;

  std::span<const double> values() const noexcept { return values_; }
  std::vector<std::vector<double>> to_rows() const;

  bool operator==(const AttentionMatrix&) const = default;

 private:
  void check() const;

  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  std::vector<double> values_;
};

}  // namespace attviz
