// gaze_studio: command-line front end for corpus generation, gaze processing,
// training, evaluation and the HTTP service.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gaze/attention_map.hpp"
#include "gaze/checkpoint.hpp"
#include "gaze/datasets.hpp"
#include "gaze/error.hpp"
#include "gaze/image_io.hpp"
#include "gaze/service.hpp"
#include "gaze/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;

json read_json(const fs::path& path) {
  json j = json::parse(gaze::read_file(path), nullptr, false);
  if (j.is_discarded()) throw gaze::Error(gaze::ErrorCode::BadFormat, path.string() + " is not JSON");
  return j;
}

fs::path relative_to(const fs::path& base, const std::string& p) {
  const fs::path path = p;
  return path.is_absolute() ? path : base / path;
}

gaze::GazeTrack read_track(const fs::path& track, const std::optional<fs::path>& meta) {
  return meta ? gaze::load_track(track, *meta) : gaze::load_track(gaze::track_stem(track));
}

std::optional<double> threshold(const std::optional<double>& fixed, const std::optional<fs::path>& healthy,
                                const gaze::ProcessingConfig& cfg) {
  if (fixed) return fixed;
  if (healthy) return gaze::calibrate_from_tracks(gaze::load_track_dir(*healthy), cfg);
  return std::nullopt;
}

struct Options {
  std::uint64_t seed = 7;
  std::string out;
  std::string track;
  std::optional<std::string> meta;
  std::optional<std::string> healthy;
  std::optional<double> gamma_th;
  std::optional<std::string> processing;
  std::optional<std::string> png;
  std::optional<std::string> labels;
  std::optional<std::string> report;
  std::optional<std::size_t> window;
  std::optional<std::size_t> stride;
  bool processed = false;
  std::string config;
  std::optional<std::string> checkpoint;
  std::optional<std::string> history;
  std::string manifest;
  std::string split = "test";
  double iou_level = 0.5;
  std::optional<std::string> host;
  std::optional<int> port;
  gaze::SynthConfig synth;
};

gaze::ProcessingConfig processing(const Options& o) {
  auto cfg = o.processing ? gaze::processing_from_json(read_json(*o.processing)) : gaze::ProcessingConfig{};
  if (o.window) cfg.window = *o.window;
  if (o.stride) cfg.stride = *o.stride;
  return cfg;
}

int run_generate(const Options& o) {
  gaze::SynthConfig cfg = o.synth;
  cfg.seed = o.seed;
  const auto manifest = gaze::generate(cfg, o.out);
  std::cout << "wrote " << manifest.entries.size() << " images to " << o.out << "\n";
  return 0;
}

int run_segment(const Options& o) {
  const auto cfg = processing(o);
  const auto track = read_track(o.track, o.meta ? std::optional<fs::path>(*o.meta) : std::nullopt);
  const auto th = threshold(o.gamma_th, o.healthy ? std::optional<fs::path>(*o.healthy) : std::nullopt, cfg);
  if (!th) throw gaze::Error(gaze::ErrorCode::InsufficientData, "segment needs --gamma-th or --healthy-dir");
  const auto result = gaze::process_track(track, *th, cfg);
  if (!o.out.empty()) gaze::save_track(result.filtered.track, o.out);
  if (o.labels) gaze::write_file(*o.labels, gaze::encode_labels(result.filtered.mask));

  json series = json::array();
  for (const auto& w : result.levels.gammas) series.push_back({w.center_index, w.gamma});
  const json report{{"gamma_th", *th},
                    {"kept_fraction", result.filtered.kept_fraction()},
                    {"n_samples", track.samples.size()},
                    {"window", cfg.window},
                    {"stride", cfg.stride},
                    {"gamma_series", series}};
  if (o.report) gaze::write_file(*o.report, report.dump(2) + "\n");
  std::cout << std::fixed << std::setprecision(4) << "gamma_th=" << *th << " samples=" << track.samples.size()
            << " kept=" << result.filtered.track.samples.size()
            << " kept_fraction=" << result.filtered.kept_fraction() << "\n";
  return 0;
}

int run_render(const Options& o) {
  const auto cfg = processing(o);
  const auto track = read_track(o.track, o.meta ? std::optional<fs::path>(*o.meta) : std::nullopt);
  std::optional<double> th;
  if (o.processed) {
    th = threshold(o.gamma_th, o.healthy ? std::optional<fs::path>(*o.healthy) : std::nullopt, cfg);
    if (!th) throw gaze::Error(gaze::ErrorCode::InsufficientData, "--processed needs --gamma-th or --healthy");
  }
  const auto map = gaze::gaze_map(track, cfg, th);
  gaze::write_gamap(o.out, map);
  if (o.png) gaze::write_png(*o.png, gaze::to_gray8(map));
  std::cout << "wrote " << map.width() << "x" << map.height() << " map to " << o.out << "\n";
  return 0;
}

int run_train(const Options& o, const CLI::App& cmd) {
  const fs::path config_path = o.config;
  const fs::path base = config_path.parent_path();
  const json j = read_json(config_path);
  if (!j.contains("manifest")) throw gaze::Error(gaze::ErrorCode::BadFormat, "train config needs `manifest`");

  const fs::path manifest_path = relative_to(base, j["manifest"].get<std::string>());
  const auto cfg = gaze::processing_from_json(j.value("processing", json::object()));
  gaze::TrainConfig tc = gaze::train_config_from_json(j.value("train", json::object()));
  if (cmd.count("--seed") > 0) tc.seed = o.seed;

  std::optional<double> th;
  if (j.contains("gamma_th")) th = j["gamma_th"].get<double>();
  else if (j.contains("healthy_dir")) {
    th = gaze::calibrate_from_tracks(gaze::load_track_dir(relative_to(base, j["healthy_dir"])), cfg);
  }

  const auto bank_cfg = j.value("filter_bank", json::object());
  const int channels = bank_cfg.value("channels", 64);
  const std::uint64_t bank_seed = bank_cfg.value("seed", std::uint64_t{1234});
  const auto bank = gaze::FilterBank::make(channels, bank_seed);

  const auto manifest = gaze::load_manifest(manifest_path);
  const std::size_t max_gaze = j.value("max_gaze", static_cast<std::size_t>(-1));
  const auto sets = gaze::examples_from_manifest(manifest, manifest_path, bank, cfg, th, max_gaze);
  const auto result = gaze::train(sets.train, sets.val, tc);

  const fs::path ckpt_path = o.checkpoint ? fs::path(*o.checkpoint)
                                          : relative_to(base, j.value("checkpoint", "checkpoint.json"));
  const fs::path hist_path = o.history ? fs::path(*o.history)
                                       : relative_to(base, j.value("history", "history.csv"));
  gaze::save_checkpoint(ckpt_path, {result.params, channels, bank_seed, tc});
  gaze::write_file(hist_path, gaze::history_csv(result.history));

  const auto& last = result.history.back();
  std::cout << std::fixed << std::setprecision(3) << "trained " << tc.epochs << " epochs on "
            << sets.train.size() << " images; final " << last.split << " ACC=" << last.acc
            << " u=" << result.params.u << "\n"
            << "checkpoint " << ckpt_path.string() << "\nhistory " << hist_path.string() << "\n";
  return 0;
}

int run_evaluate(const Options& o) {
  if (!o.checkpoint) throw gaze::Error(gaze::ErrorCode::MissingFile, "--checkpoint is required");
  const auto ckpt = gaze::load_checkpoint(*o.checkpoint);
  const auto bank = gaze::FilterBank::make(ckpt.filter_channels, ckpt.filter_seed);
  const fs::path manifest_path = o.manifest;
  const auto manifest = gaze::load_manifest(manifest_path);
  const auto sets = gaze::examples_from_manifest(manifest, manifest_path, bank, {}, std::nullopt, 0);
  const auto& chosen = o.split == "train" ? sets.train : o.split == "val" ? sets.val : sets.test;
  if (o.split != "train" && o.split != "val" && o.split != "test") {
    throw gaze::Error(gaze::ErrorCode::BadFormat, "--split must be train, val or test");
  }
  const auto report = gaze::evaluate(ckpt.params, chosen, o.iou_level);
  std::cout << std::fixed << std::setprecision(3) << "ACC=" << report.acc << " MAE=" << report.mae;
  if (report.mean_iou) std::cout << " IoU=" << *report.mean_iou;
  std::cout << " N=" << chosen.size() << "\n";
  return 0;
}

int run_serve(const Options& o) {
  auto cfg = gaze::load_service_config(o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config));
  if (o.host) cfg.host = *o.host;
  if (o.port) cfg.port = *o.port;
  gaze::Service service(cfg);
  const auto th = service.gamma_th();
  std::cerr << "serving on " << cfg.host << ":" << cfg.port;
  if (th) std::cerr << " gamma_th=" << *th;
  std::cerr << std::endl;
  if (!gaze::serve_http(service, cfg.host, cfg.port)) {
    std::cerr << "error: cannot listen on " << cfg.host << ":" << cfg.port << "\n";
    return kExitInternal;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-supervised lesion grading toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* generate = app.add_subcommand("generate", "Write a synthetic benchmark corpus");
  generate->add_option("--out", o.out, "Output directory")->required();
  generate->add_option("--seed", o.seed, "Random seed");
  generate->add_option("--image-size", o.synth.image_size, "Image side in pixels (multiple of 16)");
  generate->add_option("--n-train", o.synth.n_train);
  generate->add_option("--n-val", o.synth.n_val);
  generate->add_option("--n-test", o.synth.n_test);
  generate->add_option("--n-gaze", o.synth.n_gaze, "Training images with a reading track");
  generate->add_option("--n-healthy", o.synth.n_healthy, "Extra grade-0 tracks for calibration");

  auto* segment = app.add_subcommand("segment", "Label fixation samples of a track");
  segment->add_option("--track", o.track, "Track .gaze.jsonl (or its stem)")->required();
  segment->add_option("--meta", o.meta, "Track metadata; defaults to the sibling .meta.json");
  segment->add_option("--healthy-dir,--healthy", o.healthy, "Directory of grade-0 tracks to calibrate from");
  segment->add_option("--gamma-th", o.gamma_th, "Fixed threshold instead of calibration");
  segment->add_option("--window", o.window, "Window width in samples (default 60)");
  segment->add_option("--stride", o.stride, "Window stride in samples (default 1)");
  segment->add_option("--processing", o.processing, "Processing config JSON");
  segment->add_option("--out", o.out, "Stem for the filtered track");
  segment->add_option("--report", o.report, "JSON report {gamma_series, gamma_th, kept_fraction}");
  segment->add_option("--labels", o.labels, "Per-sample fixation labels (JSONL)");

  auto* render = app.add_subcommand("render", "Render a gaze attention map");
  render->add_option("--track", o.track, "Track .gaze.jsonl (or its stem)")->required();
  render->add_option("--meta", o.meta, "Track metadata; defaults to the sibling .meta.json");
  render->add_option("--out", o.out, "GAMAP1 output")->required();
  render->add_option("--png", o.png, "Also write an 8-bit PNG");
  render->add_flag("--processed", o.processed, "Keep fixation samples only");
  render->add_option("--gamma-th", o.gamma_th, "Fixation threshold");
  render->add_option("--healthy-dir,--healthy", o.healthy, "Directory of grade-0 tracks to calibrate from");
  render->add_option("--window", o.window);
  render->add_option("--stride", o.stride);
  render->add_option("--processing", o.processing, "Processing config JSON");

  auto* train = app.add_subcommand("train", "Train the grading head");
  train->add_option("--config", o.config, "Training config JSON")->required();
  train->add_option("--seed", o.seed, "Overrides train.seed");
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint output");
  train->add_option("--history", o.history, "History CSV output");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a manifest split");
  evaluate->add_option("--checkpoint", o.checkpoint)->required();
  evaluate->add_option("--manifest", o.manifest)->required();
  evaluate->add_option("--split", o.split, "train, val or test");
  evaluate->add_option("--iou-level", o.iou_level);

  auto* serve = app.add_subcommand("serve", "Run the reading-session HTTP service");
  serve->add_option("--config", o.config, "Service config JSON (GAZE_STUDIO_CONFIG overrides)");
  serve->add_option("--host", o.host);
  serve->add_option("--port", o.port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*generate) return run_generate(o);
    if (*segment) return run_segment(o);
    if (*render) return run_render(o);
    if (*train) return run_train(o, *train);
    if (*evaluate) return run_evaluate(o);
    if (*serve) return run_serve(o);
  } catch (const gaze::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == gaze::ErrorCode::IoError ? kExitInternal : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
