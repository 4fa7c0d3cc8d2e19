#pragma once

// Attention export files: the JSON interchange format that carries tokens,
// per-head self-attention and class probabilities from a model runtime to
// the viewer.
//
//   {
//     "version": "1.0",
//     "labels": ["business", "politics"],
//     "documents": [{
//       "id": "doc-0000",
//       "tokens": ["the", "uk", ...],                t entries
//       "attention": [[0.1, ...], ...],              h rows of t entries
//       "head_names": ["head_0", ...],               optional, h entries
//       "class_probabilities": [0.7, 0.3],           one per label
//       "predicted_label_index": 0,                  optional, argmax
//       "true_label_index": 1 | null,                optional
//       "meta": {...}                                optional
//     }]
//   }
//
// Fields not listed above are kept verbatim and written back on
// serialization.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attviz/matrix.hpp"

namespace attviz {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kFormatVersion = "1.0";
inline constexpr double kProbabilityTolerance = 1e-3;

enum class ErrorCode {
  kMalformedSyntax,
  kSchemaViolation,
  kRaggedMatrix,
  kNonFiniteValue,
  kNegativeAttention,
  kProbabilityMass,
  kDuplicateId,
  kUnsupportedVersion,
};

inline constexpr ErrorCode kAllErrorCodes[] = {
    ErrorCode::kMalformedSyntax,   ErrorCode::kSchemaViolation, ErrorCode::kRaggedMatrix,
    ErrorCode::kNonFiniteValue,    ErrorCode::kNegativeAttention,
    ErrorCode::kProbabilityMass,   ErrorCode::kDuplicateId,
    ErrorCode::kUnsupportedVersion,
};

/// "MalformedSyntax", "RaggedMatrix", ...
std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> error_code_from_string(std::string_view name);

struct Violation {
  ErrorCode code;
  std::optional<std::string> document_id;
  std::string path;  // JSON pointer into the file, e.g. "/documents/3/attention/1"
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool is_valid() const noexcept { return violations.empty(); }
  Json to_json() const;
  /// One line per violation, for terminals.
  std::string to_text() const;
};

/// Raised by parse_export; carries the first violation found.
class ExportError : public std::runtime_error {
 public:
  explicit ExportError(Violation v);
  ErrorCode code() const noexcept { return violation_.code; }
  const Violation& violation() const noexcept { return violation_; }

 private:
  Violation violation_;
};

class InvalidDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DocumentRecord {
  std::string id;
  std::vector<std::string> tokens;
  AttentionMatrix attention;
  std::vector<std::string> head_names;
  std::vector<double> class_probabilities;
  std::size_t predicted_label_index = 0;
  std::optional<std::size_t> true_label_index;
  std::optional<Json> meta;
  Json extra = Json::object();  // unrecognized per-document fields

  bool operator==(const DocumentRecord&) const = default;
};

struct Dataset {
  std::string version{kFormatVersion};
  std::vector<std::string> labels;
  std::vector<DocumentRecord> documents;
  Json extra = Json::object();  // unrecognized top-level fields

  bool operator==(const Dataset&) const = default;
};

/// Parses and validates an export file. Either every invariant holds on the
/// returned Dataset or ExportError is thrown; probabilities come back
/// renormalized.
Dataset parse_export(std::string_view raw);

/// Canonical JSON rendering; parse_export(serialize_dataset(ds)) == ds.
std::string serialize_dataset(const Dataset& ds);

/// Lists every violation in an already-parsed but untrusted JSON value.
ValidationReport validate_dataset(const Json& candidate);

/// validate_dataset on raw bytes; syntax errors become a MalformedSyntax
/// violation.
ValidationReport validate_export(std::string_view raw);

Json document_to_json(const DocumentRecord& doc);

/// Index of the largest probability; the first one wins ties.
std::size_t argmax_index(const std::vector<double>& probabilities);

/// Scales probabilities to sum to 1 (exactly, when reachable). Leaves a
/// distribution whose sum is already within 1e-12 of 1 untouched, so the
/// operation is idempotent.
void renormalize_probabilities(std::vector<double>& probabilities);

/// Default head names "head_0" ... "head_{h-1}".
std::vector<std::string> default_head_names(std::size_t heads);

struct SampleParams {
  std::int64_t tokens = 16;
  std::int64_t heads = 4;
  std::vector<std::string> labels{"business", "entertainment", "politics", "sport", "tech"};
  std::int64_t documents = 4;
  std::uint64_t seed = 0;
};

/// Synthetic dataset for demos and tests. Deterministic for a given seed.
/// Throws InvalidDimension on non-positive sizes or fewer than two labels.
Dataset generate_sample(const SampleParams& params);

}  // namespace attviz
