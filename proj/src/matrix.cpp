#include "attviz/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace attviz {

AttentionMatrix::AttentionMatrix(const std::vector<std::vector<double>>& rows)
    : heads_(rows.size()), tokens_(rows.empty() ? 0 : rows.front().size()) {
  values_.reserve(heads_ * tokens_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != tokens_) {
      throw std::invalid_argument("attention row " + std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " entries, expected " +
                                  std::to_string(tokens_));
    }
    values_.insert(values_.end(), rows[i].begin(), rows[i].end());
  }
  check();
}

AttentionMatrix::AttentionMatrix(std::size_t heads, std::size_t tokens,
                                 std::vector<double> row_major)
    : heads_(heads), tokens_(tokens), values_(std::move(row_major)) {
  if (values_.size() != heads_ * tokens_) {
    throw std::invalid_argument("attention buffer size does not match heads x tokens");
  }
  check();
}

void AttentionMatrix::check() const {
  if (heads_ == 0) throw std::invalid_argument("attention matrix has no heads");
  if (tokens_ == 0) throw std::invalid_argument("attention matrix has no tokens");
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("attention value is not finite");
    if (v < 0.0) throw std::invalid_argument("attention value is negative");
  }
}

std::vector<double> AttentionMatrix::column(std::size_t token) const {
  if (token >= tokens_) throw std::out_of_range("token index out of range");
  std::vector<double> out(heads_);
  for (std::size_t i = 0; i < heads_; ++i) out[i] = values_[i * tokens_ + token];
  return out;
}

std::vector<std::vector<double>> AttentionMatrix::to_rows() const {
  std::vector<std::vector<double>> rows(heads_);
  for (std::size_t i = 0; i < heads_; ++i) {
    auto r = row(i);
    rows[i].assign(r.begin(), r.end());
  }
  return rows;
}

}  // namespace attviz
