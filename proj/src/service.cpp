#include "attviz/service.hpp"

#include <atomic>
#include <charconv>
#include <thread>
#include <ctime>

#include <httplib.h>

#include "attviz/aggregate.hpp"

namespace attviz {

namespace {

constexpr std::size_t kMaxPageLimit = 500;
constexpr std::size_t kDefaultPageLimit = 50;

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>attviz</title></head>
<body>
<h1>attviz data service</h1>
<p>No UI bundle is mounted. Start the server with <code>--static-dir</code> pointing at the
built viewer, or use the JSON API under <code>/api/</code>.</p>
</body></html>
)";

ApiResponse ok(const Json& body) { return ApiResponse{200, body.dump(), "application/json"}; }

ApiResponse no_dataset() {
  return make_error(503, api_error::kNoDataset, "no dataset loaded; POST an export file to /api/datasets");
}

std::string iso8601(std::chrono::system_clock::time_point tp) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(tp);
  std::tm utc{};
  gmtime_r(&secs, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::optional<std::size_t> parse_count(const std::string& s) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

Json summary_json(const TokenSummary& s, const std::string& token, SchemeSet schemes) {
  Json out;
  out["token_index"] = s.token_index;
  out["token"] = token;
  for (Scheme sc : schemes.members()) out[std::string(scheme_name(sc))] = *s.get(sc);
  out["head_values"] = s.head_values;
  return out;
}

}  // namespace

ApiResponse make_error(int status, std::string_view code, std::string_view message) {
  Json body;
  body["error"] = std::string(code);
  body["message"] = std::string(message);
  return ApiResponse{status, body.dump(), "application/json"};
}

DatasetSnapshot::DatasetSnapshot(Dataset ds, std::string source)
    : dataset(std::move(ds)),
      loaded_at(std::chrono::system_clock::now()),
      source_name(std::move(source)) {
  by_id.reserve(dataset.documents.size());
  for (std::size_t i = 0; i < dataset.documents.size(); ++i) by_id.emplace(dataset.documents[i].id, i);
}

std::shared_ptr<const DatasetSnapshot> SnapshotStore::current() const {
  std::lock_guard lock(mu_);
  return current_;
}

void SnapshotStore::publish(std::shared_ptr<const DatasetSnapshot> next) {
  std::shared_ptr<const DatasetSnapshot> previous;
  {
    std::lock_guard lock(mu_);
    previous = std::exchange(current_, std::move(next));
  }
  // previous is released outside the lock
}

VizDataService::VizDataService(ServiceConfig config) : config_(std::move(config)) {}

void VizDataService::load(Dataset ds, std::string source_name) {
  store_.publish(std::make_shared<const DatasetSnapshot>(std::move(ds), std::move(source_name)));
}

ApiResponse VizDataService::health() const {
  return ok(Json{{"status", "ok"}, {"snapshot_loaded", store_.current() != nullptr}});
}

ApiResponse VizDataService::meta() const {
  const auto snap = store_.current();
  if (!snap) return no_dataset();
  Json out;
  out["version"] = snap->dataset.version;
  out["labels"] = snap->dataset.labels;
  out["document_count"] = snap->dataset.documents.size();
  out["source_name"] = snap->source_name;
  out["loaded_at"] = iso8601(snap->loaded_at);
  return ok(out);
}

ApiResponse VizDataService::list_documents(const std::optional<std::string>& offset_param,
                                           const std::optional<std::string>& limit_param) const {
  const auto snap = store_.current();
  if (!snap) return no_dataset();

  std::size_t offset = 0;
  std::size_t limit = kDefaultPageLimit;
  if (offset_param) {
    auto v = parse_count(*offset_param);
    if (!v) return make_error(400, api_error::kInvalidPage, "offset must be a non-negative integer");
    offset = *v;
  }
  if (limit_param) {
    auto v = parse_count(*limit_param);
    if (!v || *v < 1 || *v > kMaxPageLimit) {
      return make_error(400, api_error::kInvalidPage, "limit must be an integer in [1, 500]");
    }
    limit = *v;
  }

  const auto& docs = snap->dataset.documents;
  Json page = Json::array();
  for (std::size_t i = offset; i < docs.size() && i - offset < limit; ++i) {
    const auto& d = docs[i];
    Json item;
    item["id"] = d.id;
    item["token_count"] = d.tokens.size();
    item["head_count"] = d.attention.heads();
    item["predicted_label"] = snap->dataset.labels[d.predicted_label_index];
    item["predicted_probability"] = d.class_probabilities[d.predicted_label_index];
    page.push_back(std::move(item));
  }
  Json out;
  out["offset"] = offset;
  out["limit"] = limit;
  out["total"] = docs.size();
  out["documents"] = std::move(page);
  return ok(out);
}

ApiResponse VizDataService::document(std::string_view id) const {
  const auto snap = store_.current();
  if (!snap) return no_dataset();
  auto it = snap->by_id.find(std::string(id));
  if (it == snap->by_id.end()) {
    return make_error(404, api_error::kNotFound, "no document with id \"" + std::string(id) + "\"");
  }
  return ok(document_to_json(snap->dataset.documents[it->second]));
}

ApiResponse VizDataService::aggregates(std::string_view id,
                                       const std::optional<std::string>& schemes_param,
                                       const std::optional<std::string>& normalize_param) const {
  const auto snap = store_.current();
  if (!snap) return no_dataset();

  SchemeSet schemes = SchemeSet::all();
  if (schemes_param) {
    try {
      schemes = SchemeSet::parse(*schemes_param);
    } catch (const UnknownScheme& e) {
      return make_error(400, api_error::kUnknownScheme, e.what());
    }
    if (schemes.empty()) {
      return make_error(400, api_error::kUnknownScheme, "schemes must name at least one scheme");
    }
  }

  std::optional<DisplayNormalization> mode;
  const std::string normalize = normalize_param.value_or("none");
  if (normalize == "global") {
    mode = DisplayNormalization::kGlobal;
  } else if (normalize == "per_head") {
    mode = DisplayNormalization::kPerHead;
  } else if (normalize != "none") {
    return make_error(400, api_error::kInvalidParameter,
                      "normalize must be one of global, per_head, none");
  }

  auto it = snap->by_id.find(std::string(id));
  if (it == snap->by_id.end()) {
    return make_error(404, api_error::kNotFound, "no document with id \"" + std::string(id) + "\"");
  }
  const auto& doc = snap->dataset.documents[it->second];
  const auto rows = series(mode ? normalize_for_display(doc.attention, *mode) : doc.attention, schemes);

  Json list = Json::array();
  for (const auto& s : rows) list.push_back(summary_json(s, doc.tokens[s.token_index], schemes));
  Json out;
  out["id"] = doc.id;
  out["schemes"] = Json::array();
  for (Scheme sc : schemes.members()) out["schemes"].push_back(std::string(scheme_name(sc)));
  out["normalize"] = normalize;
  out["head_names"] = doc.head_names;
  out["series"] = std::move(list);
  return ok(out);
}

ApiResponse VizDataService::upload(std::string_view body, const std::optional<std::string>& name) {
  if (body.size() > config_.max_upload_bytes) {
    return make_error(413, api_error::kPayloadTooLarge,
                      "upload exceeds " + std::to_string(config_.max_upload_bytes) + " bytes");
  }
  // Parsing happens before anything is published; a failure leaves the
  // active snapshot untouched.
  std::optional<Dataset> parsed;
  try {
    parsed = parse_export(body);
  } catch (const ExportError&) {
    const auto report = validate_export(body);
    Json out = report.to_json();
    out["error"] = std::string(api_error::kValidationFailed);
    out["message"] = std::to_string(report.violations.size()) + " violation(s) in uploaded file";
    return ApiResponse{422, out.dump(), "application/json"};
  }
  Dataset ds = std::move(*parsed);
  const std::size_t count = ds.documents.size();

  std::string source;
  if (name && !name->empty()) {
    source = *name;
  } else {
    std::lock_guard lock(upload_counter_mu_);
    source = "upload-" + std::to_string(++upload_counter_);
  }
  load(std::move(ds), source);
  return ok(Json{{"document_count", count}, {"source_name", source}});
}

struct HttpFrontend::Impl {
  explicit Impl(VizDataService& svc) : service(svc) {
    // httplib defaults to SO_REUSEPORT, which lets a second server share a
    // port that is already serving. Plain SO_REUSEADDR refuses that.
    server.set_socket_options([](int sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
  }

  VizDataService& service;
  httplib::Server server;
  bool bound = false;
  std::atomic<bool> ran{false};
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

}  // namespace

HttpFrontend::HttpFrontend(VizDataService& service)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  auto& svc = impl_->service;
  const auto workers = svc.config().worker_threads;

  svr.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  svr.set_payload_max_length(svc.config().max_upload_bytes);

  svr.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
    reply(res, svc.health());
  });
  svr.Get("/api/meta", [&svc](const httplib::Request&, httplib::Response& res) {
    reply(res, svc.meta());
  });
  svr.Get("/api/documents", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.list_documents(query(req, "offset"), query(req, "limit")));
  });
  svr.Get(R"(/api/documents/([^/]+)/aggregates)",
          [&svc](const httplib::Request& req, httplib::Response& res) {
            reply(res, svc.aggregates(req.matches[1].str(), query(req, "schemes"),
                                      query(req, "normalize")));
          });
  svr.Get(R"(/api/documents/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.document(req.matches[1].str()));
  });
  svr.Post("/api/datasets", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.upload(req.body, query(req, "name")));
  });

  if (svc.config().static_dir) {
    svr.set_mount_point("/", svc.config().static_dir->string());
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kFallbackPage, "text/html; charset=utf-8");
    });
  }

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unexpected server error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, make_error(500, api_error::kInternal, what));
  });

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    ApiResponse r;
    switch (res.status) {
      case 404:
        r = make_error(404, api_error::kNotFound, "no route for " + req.path);
        break;
      case 405:
        r = make_error(405, api_error::kMethodNotAllowed, req.method + " not allowed");
        break;
      case 413:
        r = make_error(413, api_error::kPayloadTooLarge, "request body too large");
        break;
      default:
        r = make_error(res.status, res.status >= 500 ? api_error::kInternal : api_error::kInvalidParameter,
                       httplib::status_message(res.status));
    }
    reply(res, r);
    return httplib::Server::HandlerResponse::Handled;
  });
}

HttpFrontend::~HttpFrontend() {
  if (impl_->bound && !impl_->ran) {
    // httplib only releases a bound socket through a listen/stop cycle
    std::thread listener([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    impl_->server.stop();
    listener.join();
    return;
  }
  stop();
}

int HttpFrontend::bind(const std::string& host, int port) {
  int bound_port = port;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
    if (bound_port < 0) throw PortInUse("could not bind any port on " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw PortInUse("could not bind " + host + ":" + std::to_string(port) + " (address in use?)");
  }
  impl_->bound = true;
  return bound_port;
}

void HttpFrontend::run() {
  if (!impl_->bound) throw std::logic_error("HttpFrontend::run before bind");
  impl_->ran = true;
  impl_->server.listen_after_bind();
}

void HttpFrontend::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpFrontend::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace attviz
