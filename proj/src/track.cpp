#include "gaze/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gaze/error.hpp"

namespace gaze {

using nlohmann::json;

KLGrade::KLGrade(int value) : value_(value) {
  if (value < 0 || value > kMax) {
    throw Error(ErrorCode::BadGrade, "grade " + std::to_string(value) + " outside 0..4");
  }
}

namespace {

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

double clamp_coord(double v, int extent) { return std::clamp(v, 0.0, static_cast<double>(extent)); }

}  // namespace

GazeTrack parse_track(std::string_view jsonl, const TrackMeta& meta, const ParseOptions& options) {
  if (meta.image_width <= 0 || meta.image_height <= 0) {
    throw Error(ErrorCode::BadGeometry, "image dimensions must be positive");
  }
  GazeTrack track;
  track.meta = meta;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const std::size_t end = std::min(jsonl.find('\n', pos), jsonl.size());
    std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    const json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!obj.is_object() || !obj.contains("t_ms") || !obj.contains("x") || !obj.contains("y") ||
        !finite_number(obj["t_ms"]) || !finite_number(obj["x"]) || !finite_number(obj["y"]) ||
        obj["t_ms"].get<double>() < 0.0) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no), line_no);
    }
    track.samples.push_back({obj["t_ms"].get<double>(),
                             clamp_coord(obj["x"].get<double>(), meta.image_width),
                             clamp_coord(obj["y"].get<double>(), meta.image_height)});
    if (end == jsonl.size()) break;
  }

  if (track.samples.empty()) throw Error(ErrorCode::EmptyTrack, "no samples");
  if (options.sort_by_time) {
    std::stable_sort(track.samples.begin(), track.samples.end(),
                     [](const GazeSample& a, const GazeSample& b) { return a.t_ms < b.t_ms; });
  }
  for (std::size_t i = 1; i < track.samples.size(); ++i) {
    if (!(track.samples[i].t_ms > track.samples[i - 1].t_ms)) {
      throw Error(ErrorCode::NonMonotonicTime, "sample " + std::to_string(i));
    }
  }
  return track;
}

std::string serialize_track(const GazeTrack& track) {
  std::string out;
  for (const auto& s : track.samples) {
    out += json{{"t_ms", s.t_ms}, {"x", s.x}, {"y", s.y}}.dump();
    out += '\n';
  }
  return out;
}

TrackMeta parse_meta(std::string_view json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (!j.is_object()) throw Error(ErrorCode::BadFormat, "track metadata is not a JSON object");
  try {
    TrackMeta meta;
    meta.image_id = j.at("image_id").get<std::string>();
    meta.reader_id = j.value("reader_id", std::string{});
    meta.decision = KLGrade(j.at("decision").get<int>());
    meta.image_width = j.at("image_width").get<int>();
    meta.image_height = j.at("image_height").get<int>();
    meta.nominal_rate_hz = j.value("nominal_rate_hz", 90.0);
    if (meta.image_width <= 0 || meta.image_height <= 0) {
      throw Error(ErrorCode::BadGeometry, "image dimensions must be positive");
    }
    return meta;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
}

std::string serialize_meta(const TrackMeta& meta) {
  const json j{{"image_id", meta.image_id},
               {"reader_id", meta.reader_id},
               {"decision", meta.decision.value()},
               {"image_width", meta.image_width},
               {"image_height", meta.image_height},
               {"nominal_rate_hz", meta.nominal_rate_hz}};
  return j.dump(2) + "\n";
}

StepSeries step_lengths(const GazeTrack& track) {
  const auto n = track.samples.size();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "step lengths need at least 2 samples");
  StepSeries steps(static_cast<Eigen::Index>(n - 1));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = track.samples[i];
    const auto& b = track.samples[i + 1];
    steps[static_cast<Eigen::Index>(i)] = std::hypot(b.x - a.x, b.y - a.y);
  }
  return steps;
}

GazeTrack subset(const GazeTrack& track, const std::vector<bool>& keep) {
  if (keep.size() != track.samples.size()) {
    throw Error(ErrorCode::MismatchedSeries, "mask length differs from track length");
  }
  GazeTrack out;
  out.meta = track.meta;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.samples.push_back(track.samples[i]);
  }
  return out;
}

std::filesystem::path gaze_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".gaze.jsonl");
}

std::filesystem::path meta_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".meta.json");
}

std::filesystem::path track_stem(const std::filesystem::path& path) {
  static constexpr std::string_view kSuffixes[] = {".gaze.jsonl", ".meta.json"};
  const std::string s = path.string();
  for (auto suffix : kSuffixes) {
    if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      return std::filesystem::path(s.substr(0, s.size() - suffix.size()));
    }
  }
  return path;
}

std::string read_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

GazeTrack load_track(const std::filesystem::path& gaze_file, const std::filesystem::path& meta_file) {
  return parse_track(read_file(gaze_file), parse_meta(read_file(meta_file)));
}

GazeTrack load_track(const std::filesystem::path& stem) {
  const auto s = track_stem(stem);
  return load_track(gaze_path(s), meta_path(s));
}

void save_track(const GazeTrack& track, const std::filesystem::path& stem) {
  write_file(gaze_path(stem), serialize_track(track));
  write_file(meta_path(stem), serialize_meta(track.meta));
}

}  // namespace gaze
