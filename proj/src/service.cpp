#include "gaze/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gaze/error.hpp"
#include "gaze/image_io.hpp"

namespace gaze {

using nlohmann::json;
namespace fs = std::filesystem;

struct Service::Session {
  std::mutex mutex;
  std::string id;
  std::string reader_id;
  std::string image_id;
  std::string created_at;
  int frame_width = 0;
  int frame_height = 0;
  std::vector<GazeSample> samples;
  std::optional<KLGrade> decision;
  std::optional<std::int64_t> last_seq;
};

namespace {

fs::path resolve(const fs::path& base, const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const fs::path p = j[key].get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

Response json_response(int status, const json& body) {
  Response r;
  r.status = status;
  r.body = body.dump();
  return r;
}

Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    const std::size_t next = std::min(path.find('/', pos), path.size());
    if (next > pos) parts.push_back(path.substr(pos, next - pos));
    pos = next + 1;
  }
  return parts;
}

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

GazeTrack session_track(const std::string& image_id, const std::string& reader_id, KLGrade decision,
                        int width, int height, const std::vector<GazeSample>& samples) {
  GazeTrack track;
  track.meta.image_id = image_id;
  track.meta.reader_id = reader_id;
  track.meta.decision = decision;
  track.meta.image_width = width;
  track.meta.image_height = height;
  track.samples = samples;
  return track;
}

}  // namespace

ServiceConfig service_config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw Error(ErrorCode::BadFormat, "service config must be a JSON object");
  ServiceConfig cfg;
  try {
    cfg.manifest = resolve(base, j, "manifest");
    cfg.healthy_dir = resolve(base, j, "healthy_dir");
    if (j.contains("sessions_dir")) cfg.sessions_dir = resolve(base, j, "sessions_dir");
    else if (!base.empty()) cfg.sessions_dir = base / cfg.sessions_dir;
    if (j.contains("processing")) cfg.processing = processing_from_json(j["processing"]);
    if (j.contains("gamma_th") && !j["gamma_th"].is_null()) cfg.gamma_th = j["gamma_th"].get<double>();
    cfg.host = j.value("host", cfg.host);
    cfg.port = j.value("port", cfg.port);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
  if (cfg.port < 0 || cfg.port > 65535) throw Error(ErrorCode::BadFormat, "port out of range");
  return cfg;
}

ServiceConfig load_service_config(const std::optional<fs::path>& path) {
  std::optional<fs::path> chosen = path;
  if (const char* env = std::getenv("GAZE_STUDIO_CONFIG"); env && *env) chosen = fs::path(env);
  if (!chosen) return {};
  const json j = json::parse(read_file(*chosen), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::BadFormat, "config " + chosen->string() + " is not JSON");
  return service_config_from_json(j, chosen->parent_path());
}

Service::Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.manifest.empty()) {
    manifest_ = load_manifest(cfg_.manifest);
    for (const auto& e : manifest_->entries) entries_[e.image_id] = &e;
  }
  if (cfg_.gamma_th) gamma_th_ = cfg_.gamma_th;
  else if (!cfg_.healthy_dir.empty()) calibrate();
}

Service::~Service() = default;

std::optional<double> Service::gamma_th() const {
  std::lock_guard lock(threshold_mutex_);
  return gamma_th_;
}

double Service::calibrate() {
  if (cfg_.healthy_dir.empty()) throw Error(ErrorCode::MissingFile, "no healthy track directory configured");
  const auto healthy = load_track_dir(cfg_.healthy_dir);
  const double th = calibrate_from_tracks(healthy, cfg_.processing);
  std::lock_guard lock(threshold_mutex_);
  gamma_th_ = th;
  return th;
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Response Service::handle(const Request& request) {
  const auto parts = split_path(request.path);
  const auto& m = request.method;
  try {
    if (parts.size() == 1 && parts[0] == "sessions" && m == "POST") return create_session(request);
    if (parts.size() == 3 && parts[0] == "sessions") {
      if (parts[2] == "samples" && m == "POST") return append_samples(parts[1], request);
      if (parts[2] == "decision" && m == "POST") return decide(parts[1], request);
      if (parts[2] == "attention" && m == "GET") return attention(parts[1], request, false);
      if (parts[2] == "attention.json" && m == "GET") return attention(parts[1], request, true);
    }
    if (parts.size() == 2 && parts[0] == "images" && m == "GET") return image(parts[1]);
    if (parts.size() == 1 && parts[0] == "manifest" && m == "GET") return manifest();
    if (parts.size() == 1 && parts[0] == "calibrate" && m == "POST") return recalibrate();
    return error_response(404, "no route for " + m + " " + request.path);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::MissingFile: return error_response(404, e.what());
      case ErrorCode::IoError: return error_response(500, e.what());
      default: return error_response(422, e.what());
    }
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Response Service::create_session(const Request& request) {
  const json body = json::parse(request.body, nullptr, false);
  if (!body.is_object() || !body.contains("reader_id") || !body["reader_id"].is_string() ||
      !body.contains("image_id") || !body["image_id"].is_string()) {
    return error_response(422, "expected {reader_id, image_id} strings");
  }
  const std::string image_id = body["image_id"];
  if (manifest_ && !entries_.contains(image_id)) return error_response(404, "unknown image " + image_id);

  auto session = std::make_shared<Session>();
  session->reader_id = body["reader_id"];
  session->image_id = image_id;
  session->created_at = now_iso8601();
  session->frame_width = manifest_ ? manifest_->capture_width : TrackMeta{}.image_width;
  session->frame_height = manifest_ ? manifest_->capture_height : TrackMeta{}.image_height;
  {
    std::unique_lock lock(sessions_mutex_);
    std::ostringstream id;
    id << "s" << std::hex << next_id_++;
    session->id = id.str();
    sessions_[session->id] = session;
  }
  return json_response(201, {{"session_id", session->id},
                             {"image_url", "/images/" + image_id},
                             {"image_width", session->frame_width},
                             {"image_height", session->frame_height},
                             {"created_at", session->created_at}});
}

Response Service::append_samples(const std::string& id, const Request& request) {
  const auto session = find(id);
  if (!session) return error_response(404, "unknown session " + id);
  const json body = json::parse(request.body, nullptr, false);

  // Either a bare array or {seq, samples}; seq makes retried batches idempotent.
  const json* batch = &body;
  std::optional<std::int64_t> seq;
  if (body.is_object()) {
    if (!body.contains("samples")) return error_response(422, "missing samples");
    batch = &body["samples"];
    if (body.contains("seq")) {
      if (!body["seq"].is_number_integer()) return error_response(422, "seq must be an integer");
      seq = body["seq"].get<std::int64_t>();
    }
  }
  if (!batch->is_array()) return error_response(422, "samples must be a JSON array");

  std::lock_guard lock(session->mutex);
  if (session->decision) return error_response(409, "session " + id + " is closed");
  if (seq && session->last_seq && *seq <= *session->last_seq) {
    return json_response(200, {{"session_id", id},
                               {"appended", 0},
                               {"duplicate", true},
                               {"n_samples", session->samples.size()}});
  }

  std::vector<GazeSample> parsed;
  parsed.reserve(batch->size());
  double last_t = session->samples.empty() ? -1.0 : session->samples.back().t_ms;
  for (std::size_t i = 0; i < batch->size(); ++i) {
    const json& s = (*batch)[i];
    if (!s.is_object() || !s.contains("t_ms") || !s.contains("x") || !s.contains("y") ||
        !finite_number(s["t_ms"]) || !finite_number(s["x"]) || !finite_number(s["y"])) {
      return error_response(422, "sample " + std::to_string(i) + " is not {t_ms, x, y}");
    }
    const double t = s["t_ms"];
    if (t < 0.0 || !(t > last_t)) {
      return error_response(422, "sample " + std::to_string(i) + " breaks time order");
    }
    last_t = t;
    parsed.push_back({t, std::clamp(s["x"].get<double>(), 0.0, static_cast<double>(session->frame_width)),
                      std::clamp(s["y"].get<double>(), 0.0, static_cast<double>(session->frame_height))});
  }
  session->samples.insert(session->samples.end(), parsed.begin(), parsed.end());
  if (seq) session->last_seq = seq;
  return json_response(200, {{"session_id", id},
                             {"appended", parsed.size()},
                             {"n_samples", session->samples.size()}});
}

Response Service::decide(const std::string& id, const Request& request) {
  const auto session = find(id);
  if (!session) return error_response(404, "unknown session " + id);
  const json body = json::parse(request.body, nullptr, false);
  if (!body.is_object() || !body.contains("grade") || !body["grade"].is_number_integer()) {
    return error_response(422, "expected {grade: 0-4}");
  }
  const int grade = body["grade"];
  if (grade < 0 || grade > KLGrade::kMax) return error_response(422, "grade outside 0..4");

  std::lock_guard lock(session->mutex);
  if (session->decision) return error_response(409, "session " + id + " already decided");
  if (session->samples.empty()) return error_response(409, "session " + id + " has no samples");

  const GazeTrack track = session_track(session->image_id, session->reader_id, KLGrade(grade),
                                        session->frame_width, session->frame_height, session->samples);
  const fs::path stem = cfg_.sessions_dir / id;
  std::error_code ec;
  fs::create_directories(cfg_.sessions_dir, ec);
  save_track(track, stem);
  session->decision = KLGrade(grade);
  return json_response(200, {{"session_id", id},
                             {"grade", grade},
                             {"n_samples", session->samples.size()},
                             {"gaze_path", gaze_path(stem).string()},
                             {"meta_path", meta_path(stem).string()}});
}

Response Service::attention(const std::string& id, const Request& request, bool json_only) {
  const auto session = find(id);
  if (!session) return error_response(404, "unknown session " + id);

  bool processed = true;
  if (const auto it = request.query.find("processed"); it != request.query.end()) {
    if (it->second == "true" || it->second == "1") processed = true;
    else if (it->second == "false" || it->second == "0") processed = false;
    else return error_response(422, "processed must be true or false");
  }

  // Closed sessions are immutable, so a copy taken under the lock is safe to process.
  GazeTrack track;
  {
    std::lock_guard lock(session->mutex);
    if (!session->decision) return error_response(409, "session " + id + " is still open");
    track = session_track(session->image_id, session->reader_id, *session->decision,
                          session->frame_width, session->frame_height, session->samples);
  }

  const auto th = gamma_th();
  json info{{"session_id", id}, {"processed", processed}, {"gamma_th", th ? json(*th) : json(nullptr)}};
  AttentionMap map;
  if (processed) {
    if (!th) return error_response(409, "no calibrated threshold; POST /calibrate first");
    ProcessedTrack result;
    try {
      result = process_track(track, *th, cfg_.processing);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TrackTooShort || e.code() == ErrorCode::NoValidWindows) {
        return error_response(409, std::string("track cannot be segmented: ") + e.what());
      }
      throw;
    }
    info["kept_fraction"] = result.filtered.kept_fraction();
    map = render_gaze_map(track_points(result.filtered.track), track.meta.image_width,
                          track.meta.image_height, cfg_.processing.kernel);
  } else {
    info["kept_fraction"] = 1.0;
    map = render_gaze_map(track_points(track), track.meta.image_width, track.meta.image_height,
                          cfg_.processing.kernel);
  }
  info["width"] = map.width();
  info["height"] = map.height();

  if (json_only) return json_response(200, info);
  Response r;
  r.content_type = "application/octet-stream";
  r.body = encode_gamap(map);
  r.headers["X-Attention-Info"] = info.dump();
  return r;
}

Response Service::image(const std::string& image_id) {
  if (!manifest_) return error_response(404, "no manifest configured");
  const auto it = entries_.find(image_id);
  if (it == entries_.end()) return error_response(404, "unknown image " + image_id);
  Response r;
  r.content_type = "image/png";
  r.body = read_file(resolve_path(cfg_.manifest, it->second->image_path));
  return r;
}

Response Service::manifest() const {
  if (!manifest_) return error_response(404, "no manifest configured");
  Response r;
  r.body = encode_manifest(*manifest_);
  return r;
}

Response Service::recalibrate() {
  if (cfg_.healthy_dir.empty()) return error_response(409, "no healthy track directory configured");
  const auto healthy = load_track_dir(cfg_.healthy_dir);
  const double th = calibrate();
  return json_response(200, {{"gamma_th", th}, {"n_tracks", healthy.size()}});
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    Request request;
    request.method = req.method;
    request.path = req.path;
    request.body = req.body;
    for (const auto& [k, v] : req.params) request.query[k] = v;
    const Response response = service.handle(request);
    res.status = response.status;
    for (const auto& [k, v] : response.headers) res.set_header(k, v);
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Expose-Headers", "X-Attention-Info");
    res.set_content(response.body, response.content_type);
  };
  auto& server = impl_->server;
  server.Get(R"(/.*)", bridge);
  server.Post(R"(/.*)", bridge);
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

bool serve_http(Service& service, const std::string& host, int port) {
  HttpServer server(service);
  if (server.bind(host, port) < 0) return false;
  return server.listen();
}

}  // namespace gaze
