#include "attviz/aggregate.hpp"

#include <algorithm>
#include <cmath>

namespace attviz {

namespace {

constexpr std::string_view kSchemeNames[] = {"mean", "ent", "std", "max", "min"};

// Plain left-to-right below this many terms, pairwise above.
constexpr std::size_t kPairwiseThreshold = 1024;

double accurate_sum(std::span<const double> xs) {
  if (xs.size() <= kPairwiseThreshold) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return accurate_sum(xs.first(half)) + accurate_sum(xs.subspan(half));
}

// Columns are reduced in sorted order so that every scheme is a function of
// the multiset of head values alone: permuting heads cannot change a bit.
std::vector<double> sorted_copy(std::span<const double> column) {
  std::vector<double> v(column.begin(), column.end());
  std::sort(v.begin(), v.end());
  return v;
}

double sorted_mean(const std::vector<double>& v) {
  const double lo = v.front();
  const double hi = v.back();
  if (lo == hi) return lo;
  const double mean = accurate_sum(v) / static_cast<double>(v.size());
  // rounding may step outside the true bounds
  return std::clamp(mean, lo, hi);
}

double sorted_std(const std::vector<double>& v) {
  if (v.size() < 2 || v.front() == v.back()) return 0.0;
  const double mean = sorted_mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean;
    sq[i] = d * d;
  }
  return std::sqrt(accurate_sum(sq) / static_cast<double>(v.size() - 1));
}

double sorted_entropy(const std::vector<double>& v) {
  const double h = static_cast<double>(v.size());
  std::vector<double> terms;
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const double count = static_cast<double>(j - i);
    const double p = count / h;
    // `count` rows share this value, each contributing p ln p
    terms.push_back(count * (p * std::log(p)));
    ++distinct;
    i = j;
  }
  if (distinct == 1) return 0.0;
  return -accurate_sum(terms) / static_cast<double>(distinct);
}

double reduce_sorted(const std::vector<double>& v, Scheme scheme) {
  switch (scheme) {
    case Scheme::kMean:
      return sorted_mean(v);
    case Scheme::kEnt:
      return sorted_entropy(v);
    case Scheme::kStd:
      return sorted_std(v);
    case Scheme::kMax:
      return v.back();
    case Scheme::kMin:
      return v.front();
  }
  return 0.0;
}

}  // namespace

std::string_view scheme_name(Scheme s) { return kSchemeNames[static_cast<std::size_t>(s)]; }

std::optional<Scheme> scheme_from_name(std::string_view name) {
  for (Scheme s : kAllSchemes) {
    if (scheme_name(s) == name) return s;
  }
  return std::nullopt;
}

SchemeSet SchemeSet::parse(std::string_view csv) {
  SchemeSet out;
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  };
  while (!csv.empty()) {
    const auto comma = csv.find(',');
    const auto item = trim(csv.substr(0, comma));
    if (!item.empty()) {
      auto s = scheme_from_name(item);
      if (!s) throw UnknownScheme(std::string(item));
      out.insert(*s);
    }
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<Scheme> SchemeSet::members() const {
  std::vector<Scheme> out;
  for (Scheme s : kAllSchemes) {
    if (contains(s)) out.push_back(s);
  }
  return out;
}

std::string SchemeSet::to_string() const {
  std::string out;
  for (Scheme s : members()) {
    if (!out.empty()) out += ',';
    out += scheme_name(s);
  }
  return out;
}

double column_entropy(std::span<const double> column) {
  if (column.empty()) return 0.0;
  return sorted_entropy(sorted_copy(column));
}

double reduce_column(std::span<const double> column, Scheme scheme) {
  if (column.empty()) throw std::invalid_argument("empty attention column");
  return reduce_sorted(sorted_copy(column), scheme);
}

std::vector<double> aggregate(const AttentionMatrix& attention, Scheme scheme) {
  std::vector<double> out(attention.tokens());
  for (std::size_t j = 0; j < attention.tokens(); ++j) {
    out[j] = reduce_sorted(sorted_copy(attention.column(j)), scheme);
  }
  return out;
}

TokenSummary token_summary(const AttentionMatrix& attention, std::size_t token) {
  if (token >= attention.tokens()) {
    throw IndexOutOfRange("token index " + std::to_string(token) + " out of range for " +
                          std::to_string(attention.tokens()) + " tokens");
  }
  TokenSummary out;
  out.token_index = token;
  out.head_values = attention.column(token);
  const auto sorted = sorted_copy(out.head_values);
  for (Scheme s : kAllSchemes) out.values[static_cast<std::size_t>(s)] = reduce_sorted(sorted, s);
  return out;
}

std::vector<TokenSummary> series(const AttentionMatrix& attention, SchemeSet schemes) {
  if (schemes.empty()) throw EmptySchemeSet();
  std::vector<TokenSummary> out;
  out.reserve(attention.tokens());
  for (std::size_t j = 0; j < attention.tokens(); ++j) {
    TokenSummary s;
    s.token_index = j;
    s.head_values = attention.column(j);
    const auto sorted = sorted_copy(s.head_values);
    for (Scheme sc : schemes.members()) {
      s.values[static_cast<std::size_t>(sc)] = reduce_sorted(sorted, sc);
    }
    out.push_back(std::move(s));
  }
  return out;
}

AttentionMatrix normalize_for_display(const AttentionMatrix& attention, DisplayNormalization mode) {
  const std::size_t h = attention.heads();
  const std::size_t t = attention.tokens();
  std::vector<double> out(attention.values().begin(), attention.values().end());

  auto scale_range = [&](std::size_t begin, std::size_t end) {
    const double peak = *std::max_element(out.begin() + begin, out.begin() + end);
    if (peak == 0.0) {
      std::fill(out.begin() + begin, out.begin() + end, 0.0);
      return;
    }
    for (std::size_t k = begin; k < end; ++k) out[k] /= peak;
  };

  if (mode == DisplayNormalization::kGlobal) {
    scale_range(0, h * t);
  } else {
    for (std::size_t i = 0; i < h; ++i) scale_range(i * t, (i + 1) * t);
  }
  return AttentionMatrix(h, t, std::move(out));
}

}  // namespace attviz
