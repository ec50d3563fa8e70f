#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gaze/attention_map.hpp"
#include "gaze/image_io.hpp"
#include "gaze/service.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals.
#include <httplib.h>

using namespace gaze;
using nlohmann::json;

namespace {

// One corpus for the whole suite: generation and calibration are the slow parts.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new gaze::testing::TempDir;
    SynthConfig cfg;
    cfg.n_train = 6;
    cfg.n_val = 0;
    cfg.n_test = 2;
    cfg.n_gaze = 6;
    cfg.n_healthy = 6;
    cfg.seed = 11;
    corpus_ = new SynthCorpus(generate_corpus(cfg));
    write_corpus(*corpus_, dir_->path());
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete dir_;
  }

  static ServiceConfig config() {
    ServiceConfig cfg;
    cfg.manifest = *dir_ / "manifest.json";
    cfg.healthy_dir = *dir_ / "healthy";
    cfg.sessions_dir = *dir_ / "sessions";
    return cfg;
  }

  // A reading with a lesion, so it has fixations worth filtering.
  static const SynthItem& lesion_item() {
    for (const auto& item : corpus_->items) {
      if (item.reading && item.box) return item;
    }
    throw std::runtime_error("corpus has no lesion reading");
  }

  static Response call(Service& s, std::string method, std::string path, json body = nullptr,
                       std::map<std::string, std::string> query = {}) {
    return s.handle({std::move(method), std::move(path), std::move(query), body.is_null() ? "" : body.dump()});
  }

  static json samples_json(const GazeTrack& track, std::size_t from, std::size_t to) {
    json arr = json::array();
    for (std::size_t i = from; i < to; ++i) {
      const auto& s = track.samples[i];
      arr.push_back({{"t_ms", s.t_ms}, {"x", s.x}, {"y", s.y}});
    }
    return arr;
  }

  // Creates a session and streams the whole track in batches of 100.
  static std::string stream(Service& s, const GazeTrack& track, const std::string& image_id) {
    const auto created = call(s, "POST", "/sessions", {{"reader_id", "r1"}, {"image_id", image_id}});
    EXPECT_EQ(created.status, 201) << created.body;
    const std::string id = json::parse(created.body)["session_id"];
    for (std::size_t i = 0, seq = 0; i < track.samples.size(); i += 100, ++seq) {
      const auto r = call(s, "POST", "/sessions/" + id + "/samples",
                          {{"seq", seq}, {"samples", samples_json(track, i, std::min(i + 100, track.samples.size()))}});
      EXPECT_EQ(r.status, 200) << r.body;
    }
    return id;
  }

  static inline gaze::testing::TempDir* dir_ = nullptr;
  static inline SynthCorpus* corpus_ = nullptr;
};

}  // namespace

TEST_F(ServiceTest, CreateSessionValidation) {
  Service s(config());
  const auto ok = call(s, "POST", "/sessions", {{"reader_id", "r1"}, {"image_id", "train_0000"}});
  ASSERT_EQ(ok.status, 201);
  const auto body = json::parse(ok.body);
  EXPECT_EQ(body["image_url"], "/images/train_0000");
  EXPECT_EQ(body["image_width"], 800);
  EXPECT_EQ(body["image_height"], 800);
  EXPECT_EQ(body["session_id"].get<std::string>().front(), 's');
  EXPECT_TRUE(body.contains("created_at"));
  EXPECT_EQ(call(s, "POST", "/sessions", {{"reader_id", "r1"}, {"image_id", "nope"}}).status, 404);
  EXPECT_EQ(call(s, "POST", "/sessions", {{"reader_id", 3}, {"image_id", "train_0000"}}).status, 422);
  EXPECT_EQ(s.handle({"POST", "/sessions", {}, "{{{"}).status, 422);
  EXPECT_EQ(call(s, "GET", "/nowhere").status, 404);
  EXPECT_EQ(call(s, "POST", "/sessions/zzz/samples", json::array()).status, 404);
}

TEST_F(ServiceTest, SampleBatches) {
  Service s(config());
  const auto created = call(s, "POST", "/sessions", {{"reader_id", "r"}, {"image_id", "train_0001"}});
  const std::string id = json::parse(created.body)["session_id"];
  const std::string path = "/sessions/" + id + "/samples";

  auto r = call(s, "POST", path, {{"seq", 0}, {"samples", {{{"t_ms", 0}, {"x", -10}, {"y", 900}}}}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["appended"], 1);
  r = call(s, "POST", path, {{"seq", 0}, {"samples", {{{"t_ms", 5}, {"x", 1}, {"y", 1}}}}});
  EXPECT_EQ(r.status, 200);
  EXPECT_TRUE(json::parse(r.body)["duplicate"].get<bool>());
  EXPECT_EQ(json::parse(r.body)["n_samples"], 1);

  // Bare arrays are accepted.
  r = call(s, "POST", path, {{{"t_ms", 10}, {"x", 1}, {"y", 1}}, {{"t_ms", 20}, {"x", 2}, {"y", 2}}});
  EXPECT_EQ(json::parse(r.body)["n_samples"], 3);
  EXPECT_EQ(call(s, "POST", path, {{{"t_ms", 15}, {"x", 1}, {"y", 1}}}).status, 422);
  EXPECT_EQ(call(s, "POST", path, {{{"t_ms", "abc"}, {"x", 1}, {"y", 1}}}).status, 422);
  EXPECT_EQ(call(s, "POST", path, {{"seq", 1.5}, {"samples", json::array()}}).status, 422);

  ASSERT_EQ(call(s, "POST", "/sessions/" + id + "/decision", {{"grade", 1}}).status, 200);
  const auto saved = load_track(*dir_ / "sessions" / (id + ".gaze.jsonl"));
  ASSERT_EQ(saved.samples.size(), 3u);
  EXPECT_EQ(saved.samples[0].x, 0.0);
  EXPECT_EQ(saved.samples[0].y, 800.0);
  EXPECT_EQ(saved.meta.reader_id, "r");
  EXPECT_EQ(saved.meta.image_id, "train_0001");
  EXPECT_EQ(saved.meta.decision.value(), 1);
  EXPECT_EQ(call(s, "POST", path, {{{"t_ms", 30}, {"x", 1}, {"y", 1}}}).status, 409);
}

TEST_F(ServiceTest, DecisionRules) {
  Service s(config());
  const auto created = call(s, "POST", "/sessions", {{"reader_id", "r"}, {"image_id", "train_0002"}});
  const std::string id = json::parse(created.body)["session_id"];
  const std::string path = "/sessions/" + id + "/decision";
  EXPECT_EQ(call(s, "POST", path, {{"grade", 2}}).status, 409);  // no samples yet
  call(s, "POST", "/sessions/" + id + "/samples", {{{"t_ms", 0}, {"x", 1}, {"y", 1}}});
  EXPECT_EQ(call(s, "POST", path, {{"grade", 5}}).status, 422);
  EXPECT_EQ(call(s, "POST", path, {{"grade", "2"}}).status, 422);
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention").status, 409);  // still open
  EXPECT_EQ(call(s, "POST", path, {{"grade", 2}}).status, 200);
  EXPECT_EQ(call(s, "POST", path, {{"grade", 3}}).status, 409);
  // A single sample cannot be segmented.
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention").status, 409);
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention", nullptr, {{"processed", "false"}}).status, 200);
}

TEST_F(ServiceTest, AttentionMapsMatchLibrary) {
  Service s(config());
  const auto& item = lesion_item();
  const auto& track = item.reading->track;
  const std::string id = stream(s, track, item.image_id);
  ASSERT_EQ(call(s, "POST", "/sessions/" + id + "/decision", {{"grade", item.grade.value()}}).status, 200);

  const auto th = s.gamma_th();
  ASSERT_TRUE(th.has_value());
  EXPECT_DOUBLE_EQ(*th, calibrate_from_tracks(load_track_dir(*dir_ / "healthy"), ProcessingConfig{}));

  const auto processed = call(s, "GET", "/sessions/" + id + "/attention");
  ASSERT_EQ(processed.status, 200);
  EXPECT_EQ(processed.content_type, "application/octet-stream");
  EXPECT_EQ(processed.body.size(), 14u + 4u * 800u * 800u);
  const auto map = decode_gamap(processed.body);
  const auto expected = gaze_map(track, ProcessingConfig{}, *th);
  EXPECT_TRUE((map.values.array() == expected.values.cast<float>().cast<double>().array()).all());
  const auto info = json::parse(processed.headers.at("X-Attention-Info"));
  EXPECT_EQ(info["session_id"], id);
  EXPECT_TRUE(info["processed"].get<bool>());
  EXPECT_GT(info["kept_fraction"].get<double>(), 0.0);
  EXPECT_LT(info["kept_fraction"].get<double>(), 1.0);
  EXPECT_EQ(info["width"], 800);

  const auto raw = call(s, "GET", "/sessions/" + id + "/attention", nullptr, {{"processed", "false"}});
  const auto raw_map = decode_gamap(raw.body);
  const auto raw_expected = gaze_map(track, ProcessingConfig{});
  EXPECT_TRUE((raw_map.values.array() == raw_expected.values.cast<float>().cast<double>().array()).all());
  EXPECT_EQ(json::parse(raw.headers.at("X-Attention-Info"))["kept_fraction"], 1.0);

  const auto summary = call(s, "GET", "/sessions/" + id + "/attention.json");
  EXPECT_EQ(json::parse(summary.body), info);
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention", nullptr, {{"processed", "maybe"}}).status, 422);
}

TEST_F(ServiceTest, ImagesManifestAndCalibrate) {
  Service s(config());
  const auto png = call(s, "GET", "/images/train_0000");
  ASSERT_EQ(png.status, 200);
  EXPECT_EQ(png.content_type, "image/png");
  EXPECT_EQ(decode_png(png.body).rows(), 128);
  EXPECT_EQ(call(s, "GET", "/images/unknown").status, 404);
  EXPECT_EQ(decode_manifest(call(s, "GET", "/manifest").body), load_manifest(*dir_ / "manifest.json"));
  const auto cal = call(s, "POST", "/calibrate");
  ASSERT_EQ(cal.status, 200);
  EXPECT_EQ(json::parse(cal.body)["n_tracks"], 6);
  EXPECT_EQ(json::parse(cal.body)["gamma_th"].get<double>(), *s.gamma_th());
}

TEST_F(ServiceTest, WithoutManifestOrThreshold) {
  ServiceConfig cfg;
  cfg.sessions_dir = *dir_ / "bare";
  Service s(cfg);
  EXPECT_FALSE(s.gamma_th().has_value());
  const auto& track = lesion_item().reading->track;
  const std::string id = stream(s, track, "anything");
  call(s, "POST", "/sessions/" + id + "/decision", {{"grade", 0}});
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention").status, 409);
  EXPECT_EQ(call(s, "GET", "/sessions/" + id + "/attention", nullptr, {{"processed", "false"}}).status, 200);
  EXPECT_EQ(call(s, "GET", "/images/anything").status, 404);
  EXPECT_EQ(call(s, "GET", "/manifest").status, 404);
  EXPECT_EQ(call(s, "POST", "/calibrate").status, 409);
}

TEST_F(ServiceTest, FixedThresholdSkipsCalibration) {
  auto cfg = config();
  cfg.healthy_dir = *dir_ / "does-not-exist";
  cfg.gamma_th = 1.5;
  Service s(cfg);
  EXPECT_EQ(*s.gamma_th(), 1.5);
}

TEST_F(ServiceTest, ConcurrentSessions) {
  Service s(config());
  const auto& track = lesion_item().reading->track;
  std::vector<std::string> ids(8);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    threads.emplace_back([&, k] { ids[k] = stream(s, track, "train_0000"); });
  }
  for (auto& t : threads) t.join();
  std::set<std::string> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), ids.size());
  for (const auto& id : ids) {
    const auto r = call(s, "POST", "/sessions/" + id + "/decision", {{"grade", 1}});
    EXPECT_EQ(json::parse(r.body)["n_samples"], track.samples.size());
  }
}

TEST(ServiceConfig, JsonAndEnvironment) {
  const auto cfg = service_config_from_json(
      {{"manifest", "data/manifest.json"}, {"healthy_dir", "/abs/healthy"}, {"gamma_th", 2.0}, {"port", 9000},
       {"processing", {{"window", 40}}}},
      "/etc/gaze");
  EXPECT_EQ(cfg.manifest, std::filesystem::path("/etc/gaze/data/manifest.json"));
  EXPECT_EQ(cfg.healthy_dir, std::filesystem::path("/abs/healthy"));
  EXPECT_EQ(cfg.sessions_dir, std::filesystem::path("/etc/gaze/sessions"));
  EXPECT_EQ(cfg.gamma_th, 2.0);
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.processing.window, 40u);
  EXPECT_THROW(service_config_from_json({{"port", 70000}}), Error);
  EXPECT_THROW(service_config_from_json(json::array()), Error);

  gaze::testing::TempDir dir;
  write_file(dir / "svc.json", R"({"port": 1234})");
  ::setenv("GAZE_STUDIO_CONFIG", (dir / "svc.json").c_str(), 1);
  EXPECT_EQ(load_service_config(std::nullopt).port, 1234);
  EXPECT_EQ(load_service_config(dir / "other.json").port, 1234);
  ::unsetenv("GAZE_STUDIO_CONFIG");
  EXPECT_EQ(load_service_config(std::nullopt).port, 8080);
}

TEST_F(ServiceTest, OverHttp) {
  Service s(config());
  HttpServer server(s);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", json{{"reader_id", "h"}, {"image_id", "train_0000"}}.dump(),
                             "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const std::string id = json::parse(created->body)["session_id"];

  const auto& track = lesion_item().reading->track;
  auto appended = client.Post("/sessions/" + id + "/samples", samples_json(track, 0, track.samples.size()).dump(),
                              "application/json");
  ASSERT_TRUE(appended);
  EXPECT_EQ(appended->status, 200);
  ASSERT_EQ(client.Post("/sessions/" + id + "/decision", R"({"grade": 2})", "application/json")->status, 200);

  auto map = client.Get("/sessions/" + id + "/attention?processed=false");
  ASSERT_TRUE(map);
  EXPECT_EQ(map->status, 200);
  EXPECT_EQ(decode_gamap(map->body).width(), 800);
  EXPECT_EQ(map->get_header_value("Access-Control-Expose-Headers"), "X-Attention-Info");
  EXPECT_FALSE(map->get_header_value("X-Attention-Info").empty());

  auto preflight = client.Options("/sessions");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
  EXPECT_EQ(client.Get("/images/nope")->status, 404);

  server.stop();
  loop.join();
}
