#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gaze/attention_map.hpp"
#include "gaze/attention_net.hpp"
#include "gaze/datasets.hpp"
#include "gaze/segmentation.hpp"

namespace gaze {

/// Parameters shared by every gaze-processing entry point.
struct ProcessingConfig {
  PowerLawFitConfig fit;
  std::size_t window = 60;
  std::size_t stride = 1;
  KernelConfig kernel;
  double iou_level = 0.5;
};

ProcessingConfig processing_from_json(const nlohmann::json& j);
nlohmann::json processing_to_json(const ProcessingConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Every `<stem>.gaze.jsonl` + `<stem>.meta.json` pair directly inside `dir`, sorted by name.
std::vector<GazeTrack> load_track_dir(const std::filesystem::path& dir);

double calibrate_from_tracks(std::span<const GazeTrack> healthy, const ProcessingConfig& cfg);

struct ProcessedTrack {
  AttentionLevelSeries levels;
  FilterResult filtered;
};

ProcessedTrack process_track(const GazeTrack& track, double gamma_th, const ProcessingConfig& cfg);

/// Gaze map over the track's own frame. With a threshold the track is first
/// reduced to its fixation samples; a track with nothing kept renders as zero.
AttentionMap gaze_map(const GazeTrack& track, const ProcessingConfig& cfg,
                      std::optional<double> gamma_th = std::nullopt);

/// Fixed-grid supervision map: gaze maps of all tracks summed, then pooled to 16x16.
AttentionMap supervision_map(std::span<const GazeTrack> tracks, const ProcessingConfig& cfg,
                             std::optional<double> gamma_th);

Example make_example(const Grid& image, int grade, std::vector<BBox> boxes, const FilterBank& bank,
                     const std::optional<AttentionMap>& supervision = std::nullopt);

struct ExampleSets {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

/// Entries without a split land in `test`. Gaze maps are attached to entries
/// of the training split only, and only up to `max_gaze` of them.
ExampleSets examples_from_manifest(const Manifest& manifest, const std::filesystem::path& manifest_path,
                                   const FilterBank& bank, const ProcessingConfig& cfg,
                                   std::optional<double> gamma_th,
                                   std::size_t max_gaze = static_cast<std::size_t>(-1));

ExampleSets examples_from_corpus(const SynthCorpus& corpus, const FilterBank& bank,
                                 const ProcessingConfig& cfg, std::optional<double> gamma_th,
                                 bool attach_gaze = true);

}  // namespace gaze
