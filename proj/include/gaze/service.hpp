#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "gaze/datasets.hpp"
#include "gaze/track.hpp"
#include "gaze/workflow.hpp"

namespace gaze {

struct ServiceConfig {
  std::filesystem::path manifest;      // empty: no manifest, any image_id accepted
  std::filesystem::path healthy_dir;   // grade-0 tracks used for calibration
  std::filesystem::path sessions_dir = "sessions";
  ProcessingConfig processing;
  std::optional<double> gamma_th;      // fixed threshold, skips calibration
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// Relative paths are resolved against `base` (normally the config file's directory).
ServiceConfig service_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});

/// Reads the config file named by GAZE_STUDIO_CONFIG if set, else `path`.
/// With neither, returns defaults.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& path);

/// Transport-independent request and response.
struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class Service {
 public:
  /// Loads the manifest and calibrates from `healthy_dir` when configured.
  explicit Service(ServiceConfig cfg);
  ~Service();

  Response handle(const Request& request);

  std::optional<double> gamma_th() const;
  /// Recalibrates from `healthy_dir`; returns the new threshold.
  double calibrate();

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;

  Response create_session(const Request& request);
  Response append_samples(const std::string& id, const Request& request);
  Response decide(const std::string& id, const Request& request);
  Response attention(const std::string& id, const Request& request, bool json_only);
  Response image(const std::string& image_id);
  Response manifest() const;
  Response recalibrate();

  ServiceConfig cfg_;
  std::optional<Manifest> manifest_;
  std::map<std::string, const ManifestEntry*> entries_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;

  mutable std::mutex threshold_mutex_;
  std::optional<double> gamma_th_;
};

/// HTTP binding for a Service. bind() then listen() blocks until stop().
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port, or -1 on failure.
  int bind(const std::string& host, int port);
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving `service` over HTTP until the process is stopped.
/// Returns false if the address could not be bound.
bool serve_http(Service& service, const std::string& host, int port);

}  // namespace gaze
