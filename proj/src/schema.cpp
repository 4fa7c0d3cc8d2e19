#include "attviz/schema.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace attviz {

namespace {

constexpr std::string_view kCodeNames[] = {
    "MalformedSyntax", "SchemaViolation", "RaggedMatrix",    "NonFiniteValue",
    "NegativeAttention", "ProbabilityMass", "DuplicateId", "UnsupportedVersion",
};

const std::set<std::string, std::less<>> kTopLevelFields = {"version", "labels", "documents"};
const std::set<std::string, std::less<>> kDocumentFields = {
    "id",    "tokens",           "attention", "head_names", "class_probabilities",
    "predicted_label_index", "true_label_index", "meta"};

// Probabilities whose fixed-order sum is this close to 1 are stored as given,
// which keeps renormalization idempotent across parse/serialize cycles.
constexpr double kRenormalizeSkip = 1e-12;

std::string pointer(std::string_view base, std::string_view key) {
  std::string out(base);
  out += '/';
  // RFC 6901 escaping
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

std::string pointer(std::string_view base, std::size_t index) {
  return std::string(base) + '/' + std::to_string(index);
}

double ordered_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

// Divides by the sum, then nudges the largest entry so the fixed-order sum
// lands on exactly 1 whenever that is reachable without changing the argmax.
void renormalize_probabilities(std::vector<double>& p) {
  const double s = ordered_sum(p);
  if (!(s > 0.0) || std::abs(s - 1.0) <= kRenormalizeSkip) return;
  for (double& x : p) x /= s;

  const std::size_t top = argmax_index(p);
  for (int attempt = 0; attempt < 8; ++attempt) {
    const double current = ordered_sum(p);
    if (current == 1.0) break;
    const double saved = p[top];
    double candidate = attempt == 0 ? saved + (1.0 - current)
                                    : std::nextafter(saved, current < 1.0 ? 2.0 : 0.0);
    candidate = std::clamp(candidate, 0.0, 1.0);
    p[top] = candidate;
    if (argmax_index(p) != top) {
      p[top] = saved;
      break;
    }
  }
}

namespace {

class Validator {
 public:
  ValidationReport run(const Json& root) {
    if (!root.is_object()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "", "top level must be a JSON object");
      return std::move(report_);
    }
    check_version(root);
    check_labels(root);

    auto docs = root.find("documents");
    if (docs == root.end()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/documents", "missing field");
    } else if (!docs->is_array()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/documents", "must be an array");
    } else {
      std::unordered_set<std::string> ids;
      for (std::size_t i = 0; i < docs->size(); ++i) {
        check_document((*docs)[i], pointer("/documents", i), ids);
      }
    }
    return std::move(report_);
  }

 private:
  void add(ErrorCode code, const std::optional<std::string>& doc, std::string path,
           std::string message) {
    report_.violations.push_back({code, doc, std::move(path), std::move(message)});
  }

  void check_version(const Json& root) {
    auto it = root.find("version");
    if (it == root.end()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/version", "missing field");
    } else if (!it->is_string()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/version", "must be a string");
    } else if (it->get_ref<const std::string&>() != kFormatVersion) {
      add(ErrorCode::kUnsupportedVersion, std::nullopt, "/version",
          "unsupported format version \"" + it->get<std::string>() + "\"");
    }
  }

  void check_labels(const Json& root) {
    auto it = root.find("labels");
    if (it == root.end()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/labels", "missing field");
      return;
    }
    if (!it->is_array()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/labels", "must be an array");
      return;
    }
    label_count_ = it->size();
    if (it->size() < 2) {
      add(ErrorCode::kSchemaViolation, std::nullopt, "/labels", "at least two labels required");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& label = (*it)[i];
      const auto path = pointer("/labels", i);
      if (!label.is_string()) {
        add(ErrorCode::kSchemaViolation, std::nullopt, path, "label must be a string");
      } else if (label.get_ref<const std::string&>().empty()) {
        add(ErrorCode::kSchemaViolation, std::nullopt, path, "label must be non-empty");
      } else if (!seen.insert(label.get<std::string>()).second) {
        add(ErrorCode::kSchemaViolation, std::nullopt, path,
            "duplicate label \"" + label.get<std::string>() + "\"");
      }
    }
  }

  void check_document(const Json& doc, const std::string& base,
                      std::unordered_set<std::string>& ids) {
    if (!doc.is_object()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, base, "document must be an object");
      return;
    }

    std::optional<std::string> id;
    auto id_it = doc.find("id");
    if (id_it == doc.end()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, base + "/id", "missing field");
    } else if (!id_it->is_string()) {
      add(ErrorCode::kSchemaViolation, std::nullopt, base + "/id", "must be a string");
    } else {
      id = id_it->get<std::string>();
      if (!ids.insert(*id).second) {
        add(ErrorCode::kDuplicateId, id, base + "/id", "duplicate document id \"" + *id + "\"");
      }
    }

    std::optional<std::size_t> token_count;
    auto tokens = doc.find("tokens");
    if (tokens == doc.end()) {
      add(ErrorCode::kSchemaViolation, id, base + "/tokens", "missing field");
    } else if (!tokens->is_array()) {
      add(ErrorCode::kSchemaViolation, id, base + "/tokens", "must be an array");
    } else if (tokens->empty()) {
      add(ErrorCode::kSchemaViolation, id, base + "/tokens", "document has no tokens");
    } else {
      bool ok = true;
      for (std::size_t j = 0; j < tokens->size(); ++j) {
        if (!(*tokens)[j].is_string()) {
          add(ErrorCode::kSchemaViolation, id, pointer(base + "/tokens", j),
              "token must be a string");
          ok = false;
        }
      }
      if (ok) token_count = tokens->size();
    }

    const auto head_count = check_attention(doc, base, id, token_count);
    check_head_names(doc, base, id, head_count);
    const auto probabilities = check_probabilities(doc, base, id);
    check_label_indices(doc, base, id, probabilities);

    auto meta = doc.find("meta");
    if (meta != doc.end() && !meta->is_null() && !meta->is_object()) {
      add(ErrorCode::kSchemaViolation, id, base + "/meta", "must be an object");
    }
  }

  std::optional<std::size_t> check_attention(const Json& doc, const std::string& base,
                                             const std::optional<std::string>& id,
                                             std::optional<std::size_t> token_count) {
    const auto path = base + "/attention";
    auto att = doc.find("attention");
    if (att == doc.end()) {
      add(ErrorCode::kSchemaViolation, id, path, "missing field");
      return std::nullopt;
    }
    if (!att->is_array()) {
      add(ErrorCode::kSchemaViolation, id, path, "must be an array of rows");
      return std::nullopt;
    }
    if (att->empty()) {
      add(ErrorCode::kSchemaViolation, id, path, "attention has no heads");
      return std::nullopt;
    }
    std::optional<std::size_t> width = token_count;
    for (std::size_t i = 0; i < att->size(); ++i) {
      const Json& row = (*att)[i];
      const auto row_path = pointer(path, i);
      if (!row.is_array()) {
        add(ErrorCode::kSchemaViolation, id, row_path, "attention row must be an array");
        continue;
      }
      if (!width) width = row.size();
      if (row.size() != *width) {
        add(ErrorCode::kRaggedMatrix, id, row_path,
            "document \"" + id.value_or("?") + "\" attention row " + std::to_string(i) +
                " has " + std::to_string(row.size()) + " entries, expected " +
                std::to_string(*width));
      }
      for (std::size_t j = 0; j < row.size(); ++j) {
        const Json& v = row[j];
        if (!v.is_number()) {
          add(ErrorCode::kSchemaViolation, id, pointer(row_path, j),
              "attention value must be a number");
          continue;
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
          add(ErrorCode::kNonFiniteValue, id, pointer(row_path, j), "attention value is not finite");
        } else if (x < 0.0) {
          add(ErrorCode::kNegativeAttention, id, pointer(row_path, j),
              "attention value is negative");
        }
      }
    }
    return att->size();
  }

  void check_head_names(const Json& doc, const std::string& base,
                        const std::optional<std::string>& id,
                        std::optional<std::size_t> head_count) {
    const auto path = base + "/head_names";
    auto names = doc.find("head_names");
    if (names == doc.end()) return;
    if (!names->is_array()) {
      add(ErrorCode::kSchemaViolation, id, path, "must be an array");
      return;
    }
    if (head_count && names->size() != *head_count) {
      add(ErrorCode::kSchemaViolation, id, path,
          "expected " + std::to_string(*head_count) + " head names, got " +
              std::to_string(names->size()));
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < names->size(); ++i) {
      const Json& n = (*names)[i];
      if (!n.is_string()) {
        add(ErrorCode::kSchemaViolation, id, pointer(path, i), "head name must be a string");
      } else if (!seen.insert(n.get<std::string>()).second) {
        add(ErrorCode::kSchemaViolation, id, pointer(path, i),
            "duplicate head name \"" + n.get<std::string>() + "\"");
      }
    }
  }

  // Returns the probabilities when they are all finite numbers.
  std::optional<std::vector<double>> check_probabilities(const Json& doc, const std::string& base,
                                                         const std::optional<std::string>& id) {
    const auto path = base + "/class_probabilities";
    auto probs = doc.find("class_probabilities");
    if (probs == doc.end()) {
      add(ErrorCode::kSchemaViolation, id, path, "missing field");
      return std::nullopt;
    }
    if (!probs->is_array()) {
      add(ErrorCode::kSchemaViolation, id, path, "must be an array");
      return std::nullopt;
    }
    bool usable = true;
    if (label_count_ && probs->size() != *label_count_) {
      add(ErrorCode::kSchemaViolation, id, path,
          "expected " + std::to_string(*label_count_) + " probabilities, got " +
              std::to_string(probs->size()));
      usable = false;
    }
    std::vector<double> values;
    values.reserve(probs->size());
    bool in_range = true;
    for (std::size_t k = 0; k < probs->size(); ++k) {
      const Json& v = (*probs)[k];
      if (!v.is_number()) {
        add(ErrorCode::kSchemaViolation, id, pointer(path, k), "probability must be a number");
        usable = false;
        continue;
      }
      const double p = v.get<double>();
      if (!std::isfinite(p)) {
        add(ErrorCode::kNonFiniteValue, id, pointer(path, k), "probability is not finite");
        usable = false;
      } else if (p < 0.0 || p > 1.0) {
        add(ErrorCode::kProbabilityMass, id, pointer(path, k), "probability outside [0, 1]");
        in_range = false;
      }
      values.push_back(p);
    }
    if (!usable || values.empty()) return std::nullopt;
    const double sum = ordered_sum(values);
    if (in_range && !(std::abs(sum - 1.0) <= kProbabilityTolerance)) {
      std::ostringstream msg;
      msg << "probabilities sum to " << sum << ", expected 1 within " << kProbabilityTolerance;
      add(ErrorCode::kProbabilityMass, id, path, msg.str());
    }
    if (!in_range) return std::nullopt;
    return values;
  }

  void check_label_indices(const Json& doc, const std::string& base,
                           const std::optional<std::string>& id,
                           const std::optional<std::vector<double>>& probabilities) {
    auto check_index = [&](const char* field, bool nullable) -> std::optional<std::size_t> {
      const auto path = base + "/" + field;
      auto it = doc.find(field);
      if (it == doc.end()) return std::nullopt;
      if (nullable && it->is_null()) return std::nullopt;
      if (!it->is_number_integer()) {
        add(ErrorCode::kSchemaViolation, id, path, "must be an integer");
        return std::nullopt;
      }
      const bool negative = it->is_number_integer() && !it->is_number_unsigned() &&
                            it->get<std::int64_t>() < 0;
      if (negative || (label_count_ && it->get<std::uint64_t>() >= *label_count_)) {
        add(ErrorCode::kSchemaViolation, id, path, "label index out of range");
        return std::nullopt;
      }
      return static_cast<std::size_t>(it->get<std::uint64_t>());
    };

    const auto predicted = check_index("predicted_label_index", false);
    check_index("true_label_index", true);
    if (predicted && probabilities && *predicted != argmax_index(*probabilities)) {
      add(ErrorCode::kSchemaViolation, id, base + "/predicted_label_index",
          "predicted_label_index is not the argmax of class_probabilities");
    }
  }

  ValidationReport report_;
  std::optional<std::size_t> label_count_;
};

std::vector<std::string> string_list(const Json& arr) {
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(v.get<std::string>());
  return out;
}

DocumentRecord build_document(const Json& doc) {
  auto tokens = string_list(doc.at("tokens"));
  const auto& att = doc.at("attention");
  std::vector<double> values;
  values.reserve(att.size() * tokens.size());
  for (const auto& row : att) {
    for (const auto& v : row) values.push_back(v.get<double>());
  }
  AttentionMatrix matrix(att.size(), tokens.size(), std::move(values));

  std::vector<std::string> head_names;
  if (auto it = doc.find("head_names"); it != doc.end()) {
    head_names = string_list(*it);
  } else {
    head_names = default_head_names(matrix.heads());
  }

  std::vector<double> probabilities;
  for (const auto& v : doc.at("class_probabilities")) probabilities.push_back(v.get<double>());
  renormalize_probabilities(probabilities);
  const std::size_t predicted = argmax_index(probabilities);

  std::optional<std::size_t> truth;
  if (auto it = doc.find("true_label_index"); it != doc.end() && !it->is_null()) {
    truth = it->get<std::size_t>();
  }
  std::optional<Json> meta;
  if (auto it = doc.find("meta"); it != doc.end() && !it->is_null()) meta = *it;

  Json extra = Json::object();
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kDocumentFields.contains(it.key())) extra[it.key()] = it.value();
  }

  return DocumentRecord{
      .id = doc.at("id").get<std::string>(),
      .tokens = std::move(tokens),
      .attention = std::move(matrix),
      .head_names = std::move(head_names),
      .class_probabilities = std::move(probabilities),
      .predicted_label_index = predicted,
      .true_label_index = truth,
      .meta = std::move(meta),
      .extra = std::move(extra),
  };
}

}  // namespace

std::string_view to_string(ErrorCode code) { return kCodeNames[static_cast<std::size_t>(code)]; }

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
  for (ErrorCode c : kAllErrorCodes) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

Json ValidationReport::to_json() const {
  Json list = Json::array();
  for (const auto& v : violations) {
    Json item;
    item["code"] = std::string(to_string(v.code));
    item["document_id"] = v.document_id ? Json(*v.document_id) : Json(nullptr);
    item["path"] = v.path;
    item["message"] = v.message;
    list.push_back(std::move(item));
  }
  Json out;
  out["is_valid"] = is_valid();
  out["violations"] = std::move(list);
  return out;
}

std::string ValidationReport::to_text() const {
  if (is_valid()) return "valid: no violations\n";
  std::ostringstream os;
  os << violations.size() << " violation(s)\n";
  for (const auto& v : violations) {
    os << "  " << to_string(v.code);
    if (v.document_id) os << " [" << *v.document_id << "]";
    os << " at " << (v.path.empty() ? "/" : v.path) << ": " << v.message << '\n';
  }
  return os.str();
}

ExportError::ExportError(Violation v)
    : std::runtime_error(std::string(to_string(v.code)) + " at " +
                         (v.path.empty() ? "/" : v.path) + ": " + v.message),
      violation_(std::move(v)) {}

std::size_t argmax_index(const std::vector<double>& probabilities) {
  return static_cast<std::size_t>(
      std::distance(probabilities.begin(), std::max_element(probabilities.begin(), probabilities.end())));
}

std::vector<std::string> default_head_names(std::size_t heads) {
  std::vector<std::string> names;
  names.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) names.push_back("head_" + std::to_string(i));
  return names;
}

ValidationReport validate_dataset(const Json& candidate) { return Validator{}.run(candidate); }

namespace {

// Syntax errors are reported as a single violation. nlohmann refuses number
// literals that overflow a double (error 406); those are infinities in the
// file and are reported as NonFiniteValue.
std::optional<Violation> parse_json(std::string_view raw, Json& out) {
  try {
    out = Json::parse(raw.begin(), raw.end());
    return std::nullopt;
  } catch (const Json::out_of_range& e) {
    if (e.id == 406) return Violation{ErrorCode::kNonFiniteValue, std::nullopt, "", e.what()};
    return Violation{ErrorCode::kMalformedSyntax, std::nullopt, "", e.what()};
  } catch (const Json::exception& e) {
    return Violation{ErrorCode::kMalformedSyntax, std::nullopt, "", e.what()};
  }
}

}  // namespace

ValidationReport validate_export(std::string_view raw) {
  Json root;
  if (auto err = parse_json(raw, root)) return ValidationReport{{*err}};
  return validate_dataset(root);
}

Dataset parse_export(std::string_view raw) {
  Json root;
  if (auto err = parse_json(raw, root)) throw ExportError(*err);
  auto report = validate_dataset(root);
  if (!report.is_valid()) throw ExportError(report.violations.front());

  Dataset ds;
  ds.version = root.at("version").get<std::string>();
  ds.labels = string_list(root.at("labels"));
  const auto& docs = root.at("documents");
  ds.documents.reserve(docs.size());
  for (const auto& d : docs) ds.documents.push_back(build_document(d));
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (!kTopLevelFields.contains(it.key())) ds.extra[it.key()] = it.value();
  }
  return ds;
}

Json document_to_json(const DocumentRecord& doc) {
  Json out;
  out["id"] = doc.id;
  out["tokens"] = doc.tokens;
  out["attention"] = doc.attention.to_rows();
  out["head_names"] = doc.head_names;
  out["class_probabilities"] = doc.class_probabilities;
  out["predicted_label_index"] = doc.predicted_label_index;
  if (doc.true_label_index) out["true_label_index"] = *doc.true_label_index;
  if (doc.meta) out["meta"] = *doc.meta;
  for (auto it = doc.extra.begin(); it != doc.extra.end(); ++it) {
    if (!kDocumentFields.contains(it.key())) out[it.key()] = it.value();
  }
  return out;
}

std::string serialize_dataset(const Dataset& ds) {
  Json out;
  out["version"] = ds.version;
  out["labels"] = ds.labels;
  Json docs = Json::array();
  for (const auto& d : ds.documents) docs.push_back(document_to_json(d));
  out["documents"] = std::move(docs);
  for (auto it = ds.extra.begin(); it != ds.extra.end(); ++it) {
    if (!kTopLevelFields.contains(it.key())) out[it.key()] = it.value();
  }
  return out.dump();
}

}  // namespace attviz
