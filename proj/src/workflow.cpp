#include "gaze/workflow.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "gaze/error.hpp"
#include "gaze/image_io.hpp"

namespace gaze {

using nlohmann::json;
namespace fs = std::filesystem;

ProcessingConfig processing_from_json(const json& j) {
  ProcessingConfig cfg;
  if (!j.is_object()) return cfg;
  try {
    if (j.contains("fit")) {
      const auto& f = j["fit"];
      cfg.fit.s_min = f.value("s_min", cfg.fit.s_min);
      cfg.fit.s_max = f.value("s_max", cfg.fit.s_max);
      cfg.fit.n_bins = f.value("n_bins", cfg.fit.n_bins);
    }
    cfg.window = j.value("window", cfg.window);
    cfg.stride = j.value("stride", cfg.stride);
    if (j.contains("kernel")) {
      cfg.kernel.radius = j["kernel"].value("radius", cfg.kernel.radius);
      cfg.kernel.sigma = j["kernel"].value("sigma", cfg.kernel.sigma);
    }
    cfg.iou_level = j.value("iou_level", cfg.iou_level);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
  cfg.fit.validate();
  cfg.kernel.validate();
  return cfg;
}

json processing_to_json(const ProcessingConfig& cfg) {
  return {{"fit", {{"s_min", cfg.fit.s_min}, {"s_max", cfg.fit.s_max}, {"n_bins", cfg.fit.n_bins}}},
          {"window", cfg.window},
          {"stride", cfg.stride},
          {"kernel", {{"radius", cfg.kernel.radius}, {"sigma", cfg.kernel.sigma}}},
          {"iou_level", cfg.iou_level}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (!j.is_object()) return cfg;
  try {
    cfg.lambda_ac = j.value("lambda_ac", cfg.lambda_ac);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_epsilon = j.value("adam_epsilon", cfg.adam_epsilon);
    cfg.init_scale = j.value("init_scale", cfg.init_scale);
    const std::string target = j.value("cam_target", std::string("predicted"));
    if (target != "predicted" && target != "true_class") {
      throw Error(ErrorCode::BadFormat, "cam_target must be `predicted` or `true_class`");
    }
    cfg.cam_target = target == "true_class" ? CamTarget::TrueClass : CamTarget::Predicted;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
  return cfg;
}

std::vector<GazeTrack> load_track_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "track directory " + dir.string());
  std::vector<fs::path> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 11 && name.ends_with(".gaze.jsonl")) {
      stems.push_back(track_stem(entry.path()));
    }
  }
  std::sort(stems.begin(), stems.end());
  std::vector<GazeTrack> tracks;
  tracks.reserve(stems.size());
  for (const auto& stem : stems) tracks.push_back(load_track(stem));
  return tracks;
}

double calibrate_from_tracks(std::span<const GazeTrack> healthy, const ProcessingConfig& cfg) {
  return calibrate_threshold(healthy, cfg.fit, cfg.window, cfg.stride);
}

ProcessedTrack process_track(const GazeTrack& track, double gamma_th, const ProcessingConfig& cfg) {
  ProcessedTrack out;
  out.levels = attention_levels(track, cfg.fit, cfg.window, cfg.stride);
  out.levels.threshold = gamma_th;
  out.filtered = filter_fixations(track, out.levels, gamma_th);
  return out;
}

AttentionMap gaze_map(const GazeTrack& track, const ProcessingConfig& cfg, std::optional<double> gamma_th) {
  const int w = track.meta.image_width;
  const int h = track.meta.image_height;
  if (!gamma_th) return render_gaze_map(track_points(track), w, h, cfg.kernel);
  const ProcessedTrack processed = process_track(track, *gamma_th, cfg);
  return render_gaze_map(track_points(processed.filtered.track), w, h, cfg.kernel);
}

AttentionMap supervision_map(std::span<const GazeTrack> tracks, const ProcessingConfig& cfg,
                             std::optional<double> gamma_th) {
  if (tracks.empty()) throw Error(ErrorCode::EmptyTrack, "no gaze tracks for the supervision map");
  std::vector<Point> points;
  for (const auto& track : tracks) {
    const GazeTrack kept = gamma_th ? process_track(track, *gamma_th, cfg).filtered.track : track;
    const auto p = track_points(kept);
    points.insert(points.end(), p.begin(), p.end());
  }
  const auto& meta = tracks.front().meta;
  return downsample(render_gaze_map(points, meta.image_width, meta.image_height, cfg.kernel),
                    kFeatureGrid, kFeatureGrid);
}

Example make_example(const Grid& image, int grade, std::vector<BBox> boxes, const FilterBank& bank,
                     const std::optional<AttentionMap>& supervision) {
  Example ex;
  ex.features = extract_features(image, bank);
  ex.label = KLGrade(grade).value();
  ex.boxes = std::move(boxes);
  ex.image_width = static_cast<int>(image.cols());
  ex.image_height = static_cast<int>(image.rows());
  if (supervision) {
    if (supervision->width() != ex.features.grid_w || supervision->height() != ex.features.grid_h) {
      throw Error(ErrorCode::ShapeMismatch, "supervision map must match the feature grid");
    }
    ex.gaze = flatten(*supervision);
  }
  return ex;
}

namespace {

std::vector<Example>& pick(ExampleSets& sets, const std::string& split) {
  if (split == "train") return sets.train;
  if (split == "val") return sets.val;
  return sets.test;
}

}  // namespace

ExampleSets examples_from_manifest(const Manifest& manifest, const fs::path& manifest_path,
                                   const FilterBank& bank, const ProcessingConfig& cfg,
                                   std::optional<double> gamma_th, std::size_t max_gaze) {
  ExampleSets sets;
  std::size_t with_gaze = 0;
  for (const auto& entry : manifest.entries) {
    const Grid image = to_unit(read_png(resolve_path(manifest_path, entry.image_path)));
    std::optional<AttentionMap> supervision;
    if (entry.split == "train" && !entry.gaze_track_paths.empty() && with_gaze < max_gaze) {
      std::vector<GazeTrack> tracks;
      for (const auto& p : entry.gaze_track_paths) tracks.push_back(load_track(resolve_path(manifest_path, p)));
      supervision = supervision_map(tracks, cfg, gamma_th);
      ++with_gaze;
    }
    pick(sets, entry.split).push_back(make_example(image, entry.grade.value(), entry.boxes, bank, supervision));
  }
  return sets;
}

ExampleSets examples_from_corpus(const SynthCorpus& corpus, const FilterBank& bank,
                                 const ProcessingConfig& cfg, std::optional<double> gamma_th,
                                 bool attach_gaze) {
  ExampleSets sets;
  for (const auto& item : corpus.items) {
    std::optional<AttentionMap> supervision;
    if (attach_gaze && item.reading) {
      supervision = supervision_map(std::span<const GazeTrack>(&item.reading->track, 1), cfg, gamma_th);
    }
    std::vector<BBox> boxes;
    if (item.box) boxes.push_back(*item.box);
    pick(sets, item.split).push_back(make_example(item.image, item.grade.value(), boxes, bank, supervision));
  }
  return sets;
}

}  // namespace gaze
