#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "attviz/schema.hpp"

namespace attviz {

namespace {

constexpr const char* kSyllables[] = {"an", "ber", "cor", "da",  "el", "fin", "gra", "ho",
                                      "in", "jo",  "ka",  "lu",  "me", "nor", "os",  "pre",
                                      "qu", "ri",  "sta", "tri", "un", "ver", "wo",  "zen"};
constexpr std::size_t kSyllableCount = std::size(kSyllables);

std::string synthetic_token(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kSyllableCount - 1);
  std::uniform_int_distribution<int> length(1, 3);
  std::string token;
  for (int n = length(rng); n > 0; --n) token += kSyllables[pick(rng)];
  return token;
}

}  // namespace

Dataset generate_sample(const SampleParams& params) {
  if (params.tokens < 1) throw InvalidDimension("token count must be at least 1");
  if (params.heads < 1) throw InvalidDimension("head count must be at least 1");
  if (params.documents < 1) throw InvalidDimension("document count must be at least 1");
  if (params.labels.size() < 2) throw InvalidDimension("at least two labels are required");

  const auto t = static_cast<std::size_t>(params.tokens);
  const auto h = static_cast<std::size_t>(params.heads);
  const std::size_t c = params.labels.size();

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> logit(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> label_pick(0, c - 1);

  Dataset ds;
  ds.labels = params.labels;
  for (std::int64_t d = 0; d < params.documents; ++d) {
    std::vector<std::string> tokens(t);
    for (auto& tok : tokens) tok = synthetic_token(rng);

    // A couple of heads per document "activate" strongly; the rest stay low.
    std::vector<double> values(h * t);
    for (std::size_t i = 0; i < h; ++i) {
      const double scale = unit(rng) < 0.3 ? 1.0 : 0.25;
      for (std::size_t j = 0; j < t; ++j) values[i * t + j] = scale * unit(rng);
    }

    std::vector<double> probs(c);
    double peak = -INFINITY;
    for (auto& z : probs) {
      z = logit(rng);
      peak = std::max(peak, z);
    }
    double total = 0.0;
    for (auto& z : probs) {
      z = std::exp(z - peak);
      total += z;
    }
    for (auto& z : probs) z /= total;
    renormalize_probabilities(probs);

    char id[32];
    std::snprintf(id, sizeof id, "doc-%04lld", static_cast<long long>(d));

    ds.documents.push_back(DocumentRecord{
        .id = id,
        .tokens = std::move(tokens),
        .attention = AttentionMatrix(h, t, std::move(values)),
        .head_names = default_head_names(h),
        .class_probabilities = probs,
        .predicted_label_index = argmax_index(probs),
        .true_label_index = label_pick(rng),
        .meta = Json{{"source", "synthetic"}, {"seed", params.seed}},
        .extra = Json::object(),
    });
  }
  return ds;
}

}  // namespace attviz
