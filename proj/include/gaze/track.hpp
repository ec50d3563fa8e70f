#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gaze {

/// One gaze sample in image-space pixels. `t_ms` is measured from session start.
struct GazeSample {
  double t_ms = 0.0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

/// Kellgren-Lawrence grade, 0 (normal) to 4.
class KLGrade {
 public:
  static constexpr int kMax = 4;

  KLGrade() = default;
  explicit KLGrade(int value);

  int value() const noexcept { return value_; }
  friend bool operator==(KLGrade, KLGrade) = default;

 private:
  int value_ = 0;
};

struct TrackMeta {
  std::string image_id;
  std::string reader_id;
  KLGrade decision;
  int image_width = 800;
  int image_height = 800;
  double nominal_rate_hz = 90.0;

  friend bool operator==(const TrackMeta&, const TrackMeta&) = default;
};

struct GazeTrack {
  TrackMeta meta;
  std::vector<GazeSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  friend bool operator==(const GazeTrack&, const GazeTrack&) = default;
};

/// steps[i] is the distance between samples i and i+1.
using StepSeries = Eigen::VectorXd;

struct ParseOptions {
  // When false, file order is authoritative and any regression in t_ms is an error.
  bool sort_by_time = true;
};

GazeTrack parse_track(std::string_view jsonl, const TrackMeta& meta,
                      const ParseOptions& options = {});
std::string serialize_track(const GazeTrack& track);

TrackMeta parse_meta(std::string_view json_text);
std::string serialize_meta(const TrackMeta& meta);

StepSeries step_lengths(const GazeTrack& track);

/// Copy of `track` keeping only the samples whose mask entry is true.
GazeTrack subset(const GazeTrack& track, const std::vector<bool>& keep);

// On-disk pair `<stem>.gaze.jsonl` + `<stem>.meta.json`.
std::filesystem::path gaze_path(const std::filesystem::path& stem);
std::filesystem::path meta_path(const std::filesystem::path& stem);
/// Accepts either the stem or the `.gaze.jsonl` path and returns the stem.
std::filesystem::path track_stem(const std::filesystem::path& path);

GazeTrack load_track(const std::filesystem::path& gaze_file,
                     const std::filesystem::path& meta_file);
GazeTrack load_track(const std::filesystem::path& stem);
void save_track(const GazeTrack& track, const std::filesystem::path& stem);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gaze
