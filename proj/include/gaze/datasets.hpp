#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gaze/attention_map.hpp"
#include "gaze/track.hpp"

namespace gaze {

struct ManifestEntry {
  std::string image_id;
  std::string image_path;  // relative to the manifest's directory unless absolute
  KLGrade grade;
  std::vector<BBox> boxes;                     // native image pixels
  std::vector<std::string> gaze_track_paths;  // `.gaze.jsonl` files; metadata sits alongside
  std::string split;                           // "train" | "val" | "test" | ""

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // Frame in which gaze tracks are recorded (the image as displayed for reading).
  int capture_width = 800;
  int capture_height = 800;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::string encode_manifest(const Manifest& manifest);
/// Parses and validates grades; file existence is checked by load_manifest.
Manifest decode_manifest(std::string_view json_text);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
std::filesystem::path resolve_path(const std::filesystem::path& manifest_path, const std::string& entry_path);

/// Synthetic lesion benchmark. Lengths in `lesion_*`, `image_size` are native
/// pixels; gaze quantities are in the capture frame.
struct SynthConfig {
  int image_size = 128;
  int capture_size = 800;
  int n_classes = 5;
  int n_train = 200;
  int n_val = 100;
  int n_test = 200;
  int n_gaze = 100;     // training images that receive a reading track
  int n_healthy = 50;   // extra grade-0 tracks for threshold calibration
  std::array<double, 5> class_weights{0.2, 0.2, 0.2, 0.2, 0.2};

  std::array<double, 5> lesion_sigma{0.0, 3.5, 4.5, 5.5, 6.5};
  std::array<double, 5> lesion_contrast{0.0, 0.3, 0.4, 0.5, 0.6};
  double lesion_variation = 0.15;  // relative spread of sigma and contrast
  double box_half_extent = 0.75;    // box half-width in units of the lesion sigma
  double background_level = 0.4;
  double background_amplitude = 0.05;
  double pixel_noise = 0.01;

  int track_samples = 900;
  double rate_hz = 90.0;
  int fixation_clusters = 3;           // fixation runs per track
  int healthy_fixation_clusters = 3;   // fixation runs on grade-0 readings
  int fixation_run_min = 100;
  int fixation_run_max = 160;
  double fixation_jitter = 2.0;        // Gaussian sd, truncated at 3 sd
  double saccade_step_min = 12.0;
  double saccade_step_max = 160.0;
  double gaussian_saccade_fraction = 0.3;
  double gaussian_step_sd = 60.0;
  double saccade_attraction = 0.9;     // probability a step heads back towards the region of interest

  std::uint64_t seed = 7;

  void validate() const;
};

struct LabeledTrack {
  GazeTrack track;
  std::vector<bool> fixation;  // ground truth per sample
};

struct SynthItem {
  std::string image_id;
  std::string split;
  KLGrade grade;
  Grid image;                   // native pixels, values on the 8-bit lattice in [0, 1]
  std::optional<BBox> box;      // native pixels, absent for grade 0
  std::optional<LabeledTrack> reading;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthItem> items;
  std::vector<LabeledTrack> healthy;
};

SynthCorpus generate_corpus(const SynthConfig& cfg);

/// Writes images/, tracks/, healthy/ and manifest.json under `dir`.
Manifest write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);
Manifest generate(const SynthConfig& cfg, const std::filesystem::path& dir);

std::string encode_labels(const std::vector<bool>& labels);
std::vector<bool> decode_labels(std::string_view jsonl);
std::filesystem::path labels_path(const std::filesystem::path& stem);

Grid to_unit(const Gray8& pixels);
Gray8 to_gray8(const Grid& unit);

}  // namespace gaze
