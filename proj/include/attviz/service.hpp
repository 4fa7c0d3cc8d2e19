#pragma once

// HTTP data service: holds one immutable dataset snapshot and answers the
// viewer's JSON API.
//
//   GET  /api/health
//   GET  /api/meta
//   GET  /api/documents?offset=<n>&limit=<n>
//   GET  /api/documents/{id}
//   GET  /api/documents/{id}/aggregates?schemes=<csv>&normalize=<global|per_head|none>
//   POST /api/datasets                       body: export file, optional ?name=
//   GET  /<other>                            static UI assets
//
// Non-2xx responses carry {"error": "<code>", "message": "<text>"}.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "attviz/schema.hpp"

namespace attviz {

struct DatasetSnapshot {
  Dataset dataset;
  std::chrono::system_clock::time_point loaded_at;
  std::string source_name;
  std::unordered_map<std::string, std::size_t> by_id;

  DatasetSnapshot(Dataset ds, std::string source);
};

/// Single-writer, many-reader holder of the active snapshot. Readers keep the
/// shared_ptr they got for the whole request.
class SnapshotStore {
 public:
  std::shared_ptr<const DatasetSnapshot> current() const;
  void publish(std::shared_ptr<const DatasetSnapshot> next);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const DatasetSnapshot> current_;
};

namespace api_error {
inline constexpr std::string_view kNoDataset = "NoDataset";            // 503
inline constexpr std::string_view kInvalidPage = "InvalidPage";        // 400
inline constexpr std::string_view kInvalidParameter = "InvalidParameter";  // 400
inline constexpr std::string_view kNotFound = "NotFound";              // 404
inline constexpr std::string_view kUnknownScheme = "UnknownScheme";    // 400
inline constexpr std::string_view kPayloadTooLarge = "PayloadTooLarge";    // 413
inline constexpr std::string_view kValidationFailed = "ValidationFailed";  // 422
inline constexpr std::string_view kMethodNotAllowed = "MethodNotAllowed";  // 405
inline constexpr std::string_view kInternal = "InternalError";         // 500
}  // namespace api_error

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

ApiResponse make_error(int status, std::string_view code, std::string_view message);

struct ServiceConfig {
  std::size_t max_upload_bytes = std::size_t{256} << 20;
  std::optional<std::filesystem::path> static_dir;
  std::size_t worker_threads = 64;
};

class VizDataService {
 public:
  explicit VizDataService(ServiceConfig config = {});

  const ServiceConfig& config() const noexcept { return config_; }

  void load(Dataset ds, std::string source_name);
  std::shared_ptr<const DatasetSnapshot> snapshot() const { return store_.current(); }

  ApiResponse health() const;
  ApiResponse meta() const;
  ApiResponse list_documents(const std::optional<std::string>& offset,
                             const std::optional<std::string>& limit) const;
  ApiResponse document(std::string_view id) const;
  ApiResponse aggregates(std::string_view id, const std::optional<std::string>& schemes,
                         const std::optional<std::string>& normalize) const;
  ApiResponse upload(std::string_view body, const std::optional<std::string>& name);

 private:
  ServiceConfig config_;
  SnapshotStore store_;
  mutable std::mutex upload_counter_mu_;
  std::size_t upload_counter_ = 0;
};

class PortInUse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// cpp-httplib front end routing HTTP requests to a VizDataService.
class HttpFrontend {
 public:
  explicit HttpFrontend(VizDataService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port. Throws PortInUse.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a successful bind().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace attviz
