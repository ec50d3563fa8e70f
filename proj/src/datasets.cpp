#include "gaze/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "gaze/error.hpp"
#include "gaze/image_io.hpp"

namespace gaze {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- manifest

std::string encode_manifest(const Manifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json boxes = json::array();
    for (const auto& b : e.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    json entry{{"image_id", e.image_id},
               {"image_path", e.image_path},
               {"grade", e.grade.value()},
               {"boxes", boxes},
               {"gaze_track_paths", e.gaze_track_paths}};
    if (!e.split.empty()) entry["split"] = e.split;
    entries.push_back(std::move(entry));
  }
  const json j{{"capture_width", manifest.capture_width},
               {"capture_height", manifest.capture_height},
               {"entries", entries}};
  return j.dump(2) + "\n";
}

Manifest decode_manifest(std::string_view json_text) {
  const json j = json::parse(json_text, nullptr, false);
  if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
    throw Error(ErrorCode::BadFormat, "manifest needs an `entries` array");
  }
  Manifest m;
  try {
    m.capture_width = j.value("capture_width", 800);
    m.capture_height = j.value("capture_height", 800);
    for (const auto& item : j["entries"]) {
      ManifestEntry e;
      e.image_id = item.at("image_id").get<std::string>();
      e.image_path = item.at("image_path").get<std::string>();
      const int grade = item.at("grade").get<int>();
      if (grade < 0 || grade > KLGrade::kMax) {
        throw Error(ErrorCode::BadGrade, "entry " + e.image_id + " has grade " + std::to_string(grade));
      }
      e.grade = KLGrade(grade);
      for (const auto& b : item.value("boxes", json::array())) {
        e.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                           b.at(3).get<double>()});
      }
      e.gaze_track_paths = item.value("gaze_track_paths", std::vector<std::string>{});
      e.split = item.value("split", std::string{});
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadFormat, e.what());
  }
  return m;
}

fs::path resolve_path(const fs::path& manifest_path, const std::string& entry_path) {
  const fs::path p(entry_path);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

Manifest load_manifest(const fs::path& path) {
  Manifest m = decode_manifest(read_file(path));
  for (const auto& e : m.entries) {
    if (!fs::exists(resolve_path(path, e.image_path))) {
      throw Error(ErrorCode::MissingFile, "entry " + e.image_id + ": image " + e.image_path);
    }
    for (const auto& track : e.gaze_track_paths) {
      const fs::path gaze_file = resolve_path(path, track);
      if (!fs::exists(gaze_file) || !fs::exists(meta_path(track_stem(gaze_file)))) {
        throw Error(ErrorCode::MissingFile, "entry " + e.image_id + ": gaze track " + track);
      }
    }
  }
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  write_file(path, encode_manifest(manifest));
}

// ---------------------------------------------------------------- labels / pixels

std::string encode_labels(const std::vector<bool>& labels) {
  std::string out;
  for (bool b : labels) out += b ? "true\n" : "false\n";
  return out;
}

std::vector<bool> decode_labels(std::string_view jsonl) {
  std::vector<bool> labels;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    const std::size_t end = std::min(jsonl.find('\n', pos), jsonl.size());
    const std::string_view line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const json v = json::parse(line, nullptr, false);
    if (!v.is_boolean()) throw Error(ErrorCode::MalformedLine, "label line", line_no);
    labels.push_back(v.get<bool>());
  }
  return labels;
}

fs::path labels_path(const fs::path& stem) { return fs::path(stem.string() + ".labels.jsonl"); }

Grid to_unit(const Gray8& pixels) { return pixels.cast<double>() / 255.0; }

Gray8 to_gray8(const Grid& unit) {
  return (unit * 255.0 + 0.5).floor().max(0.0).min(255.0).cast<std::uint8_t>();
}

// ---------------------------------------------------------------- synthesis

void SynthConfig::validate() const {
  if (image_size <= 0 || image_size % 16 != 0 || capture_size <= 0 || n_classes != 5 || n_train < 0 ||
      n_val < 0 || n_test < 0 || n_gaze < 0 || n_gaze > n_train || n_healthy < 0 || track_samples < 2 ||
      !(rate_hz > 0.0) || fixation_clusters < 0 || healthy_fixation_clusters < 0 || fixation_run_min <= 0 ||
      fixation_run_max < fixation_run_min || !(fixation_jitter > 0.0) || !(saccade_step_min > 0.0) ||
      !(saccade_step_max > saccade_step_min) || !(box_half_extent > 0.0)) {
    throw Error(ErrorCode::BadGeometry, "invalid synthetic corpus configuration");
  }
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double gaussian(Rng& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Inverse CDF of p(s) ~ s^-2 on [lo, hi].
double power_law_step(Rng& rng, double lo, double hi) {
  const double u = uniform(rng, 0.0, 1.0);
  return 1.0 / (1.0 / lo - u * (1.0 / lo - 1.0 / hi));
}

double reflect(double v, double extent) {
  if (v < 0.0) v = -v;
  if (v > extent) v = 2.0 * extent - v;
  return std::clamp(v, 0.0, extent);
}

std::vector<int> split_grades(int n, const std::array<double, 5>& weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::array<int, 5> counts{};
  std::array<double, 5> remainder{};
  int assigned = 0;
  for (int c = 0; c < 5; ++c) {
    const double exact = n * weights[static_cast<std::size_t>(c)] / total;
    counts[static_cast<std::size_t>(c)] = static_cast<int>(std::floor(exact));
    remainder[static_cast<std::size_t>(c)] = exact - std::floor(exact);
    assigned += counts[static_cast<std::size_t>(c)];
  }
  std::array<int, 5> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
  });
  for (int i = 0; assigned < n; ++i, ++assigned) counts[static_cast<std::size_t>(order[static_cast<std::size_t>(i % 5)])] += 1;

  std::vector<int> grades;
  for (int c = 0; c < 5; ++c) grades.insert(grades.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(c)]), c);
  std::shuffle(grades.begin(), grades.end(), rng);
  return grades;
}

struct Lesion {
  Eigen::Vector2d center;  // native pixels
  double sigma = 0.0;
  double contrast = 0.0;
};

Grid render_image(const SynthConfig& cfg, const std::optional<Lesion>& lesion, Rng& rng) {
  const int n = cfg.image_size;
  Grid image = Grid::Constant(n, n, cfg.background_level);
  constexpr int kWaves = 6;
  for (int w = 0; w < kWaves; ++w) {
    const double fx = uniform_int(rng, 0, 2);
    const double fy = uniform_int(rng, 0, 2);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double amp = gaussian(rng, cfg.background_amplitude / std::sqrt(double{kWaves}));
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        image(r, c) += amp * std::cos(2.0 * std::numbers::pi * (fx * c + fy * r) / n + phase);
      }
    }
  }
  if (lesion) {
    const double inv = 1.0 / (2.0 * lesion->sigma * lesion->sigma);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double d2 = (c - lesion->center.x()) * (c - lesion->center.x()) +
                          (r - lesion->center.y()) * (r - lesion->center.y());
        image(r, c) += lesion->contrast * std::exp(-d2 * inv);
      }
    }
  }
  for (int i = 0; i < image.size(); ++i) image.data()[i] += gaussian(rng, cfg.pixel_noise);
  return to_unit(to_gray8(image));
}

// Alternating saccade / fixation runs, beginning and ending with a saccade run.
LabeledTrack make_track(const SynthConfig& cfg, const TrackMeta& meta,
                        const std::optional<Eigen::Vector2d>& roi, Rng& rng) {
  const double extent = cfg.capture_size;
  const int clusters = meta.decision.value() == 0 ? cfg.healthy_fixation_clusters : cfg.fixation_clusters;
  std::vector<int> fixation_runs(static_cast<std::size_t>(clusters));
  for (auto& len : fixation_runs) len = uniform_int(rng, cfg.fixation_run_min, cfg.fixation_run_max);
  int fixation_total = std::accumulate(fixation_runs.begin(), fixation_runs.end(), 0);
  const int min_saccade = 2;
  while (fixation_total > cfg.track_samples - min_saccade * (clusters + 1) && fixation_total > 0) {
    for (auto& len : fixation_runs) len = std::max(1, len * 3 / 4);
    fixation_total = std::accumulate(fixation_runs.begin(), fixation_runs.end(), 0);
  }
  const int saccade_total = cfg.track_samples - fixation_total;
  std::vector<double> shares(static_cast<std::size_t>(clusters + 1));
  for (auto& s : shares) s = uniform(rng, 0.6, 1.4);
  const double share_sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<int> saccade_runs(shares.size());
  int used = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    saccade_runs[i] = i + 1 == shares.size() ? saccade_total - used
                                             : static_cast<int>(std::floor(saccade_total * shares[i] / share_sum));
    used += saccade_runs[i];
  }

  std::vector<Eigen::Vector2d> centers;
  for (int k = 0; k < clusters; ++k) {
    const double margin = 3.0 * cfg.fixation_jitter;
    centers.push_back(roi ? *roi
                          : Eigen::Vector2d(uniform(rng, margin, extent - margin),
                                            uniform(rng, margin, extent - margin)));
  }

  LabeledTrack out;
  out.track.meta = meta;
  Eigen::Vector2d pos(uniform(rng, 0.0, extent), uniform(rng, 0.0, extent));
  const double dt = 1000.0 / cfg.rate_hz;
  auto emit = [&](const Eigen::Vector2d& p, bool fixation) {
    const double t = static_cast<double>(out.track.samples.size()) * dt;
    out.track.samples.push_back({t, p.x(), p.y()});
    out.fixation.push_back(fixation);
  };

  for (std::size_t run = 0; run < saccade_runs.size(); ++run) {
    const Eigen::Vector2d target = run < centers.size() ? centers[run] : (roi ? *roi : centers.empty() ? pos : centers.back());
    const bool gaussian_steps = uniform(rng, 0.0, 1.0) < cfg.gaussian_saccade_fraction;
    for (int i = 0; i < saccade_runs[run]; ++i) {
      const double step = gaussian_steps
                              ? cfg.saccade_step_min + std::abs(gaussian(rng, cfg.gaussian_step_sd))
                              : power_law_step(rng, cfg.saccade_step_min, cfg.saccade_step_max);
      double angle = uniform(rng, -std::numbers::pi, std::numbers::pi);
      if (uniform(rng, 0.0, 1.0) < cfg.saccade_attraction) {
        const Eigen::Vector2d to = target - pos;
        angle = std::atan2(to.y(), to.x()) + gaussian(rng, 0.5);
      }
      pos = Eigen::Vector2d(reflect(pos.x() + step * std::cos(angle), extent),
                            reflect(pos.y() + step * std::sin(angle), extent));
      emit(pos, false);
    }
    if (run < centers.size()) {
      const double limit = 3.0 * cfg.fixation_jitter;
      for (int i = 0; i < fixation_runs[run]; ++i) {
        Eigen::Vector2d offset;
        do {
          offset = Eigen::Vector2d(gaussian(rng, cfg.fixation_jitter), gaussian(rng, cfg.fixation_jitter));
        } while (offset.norm() > limit);
        pos = centers[run] + offset;
        pos = Eigen::Vector2d(std::clamp(pos.x(), 0.0, extent), std::clamp(pos.y(), 0.0, extent));
        emit(pos, true);
      }
    }
  }
  return out;
}

std::string item_id(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d", split.c_str(), index);
  return buf;
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCorpus corpus;
  corpus.config = cfg;
  const double scale = static_cast<double>(cfg.capture_size) / cfg.image_size;

  auto make_meta = [&](const std::string& id, int grade) {
    TrackMeta meta;
    meta.image_id = id;
    meta.reader_id = "synthetic";
    meta.decision = KLGrade(grade);
    meta.image_width = cfg.capture_size;
    meta.image_height = cfg.capture_size;
    meta.nominal_rate_hz = cfg.rate_hz;
    return meta;
  };

  const std::pair<const char*, int> splits[] = {{"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  for (const auto& [split, count] : splits) {
    const std::vector<int> grades = split_grades(count, cfg.class_weights, rng);
    for (int i = 0; i < count; ++i) {
      SynthItem item;
      item.image_id = item_id(split, i);
      item.split = split;
      const int grade = grades[static_cast<std::size_t>(i)];
      item.grade = KLGrade(grade);

      std::optional<Lesion> lesion;
      if (grade > 0) {
        const auto g = static_cast<std::size_t>(grade);
        Lesion l;
        l.sigma = cfg.lesion_sigma[g] * uniform(rng, 1.0 - cfg.lesion_variation, 1.0 + cfg.lesion_variation);
        l.contrast = cfg.lesion_contrast[g] * uniform(rng, 1.0 - cfg.lesion_variation, 1.0 + cfg.lesion_variation);
        const double margin = 2.0 * l.sigma + 2.0;
        l.center = Eigen::Vector2d(uniform(rng, margin, cfg.image_size - 1 - margin),
                                   uniform(rng, margin, cfg.image_size - 1 - margin));
        lesion = l;
        const double half = cfg.box_half_extent * l.sigma;
        item.box = BBox{l.center.x() - half, l.center.y() - half, 2.0 * half, 2.0 * half};
      }
      item.image = render_image(cfg, lesion, rng);
      if (std::string(split) == "train" && i < cfg.n_gaze) {
        std::optional<Eigen::Vector2d> roi;
        if (lesion) roi = lesion->center * scale;
        item.reading = make_track(cfg, make_meta(item.image_id, grade), roi, rng);
      }
      corpus.items.push_back(std::move(item));
    }
  }
  for (int i = 0; i < cfg.n_healthy; ++i) {
    corpus.healthy.push_back(make_track(cfg, make_meta(item_id("healthy", i), 0), std::nullopt, rng));
  }
  return corpus;
}

Manifest write_corpus(const SynthCorpus& corpus, const fs::path& dir) {
  Manifest manifest;
  manifest.capture_width = corpus.config.capture_size;
  manifest.capture_height = corpus.config.capture_size;
  for (const auto& item : corpus.items) {
    ManifestEntry entry;
    entry.image_id = item.image_id;
    entry.image_path = "images/" + item.image_id + ".png";
    entry.grade = item.grade;
    entry.split = item.split;
    if (item.box) entry.boxes.push_back(*item.box);
    write_png(dir / entry.image_path, to_gray8(item.image));
    if (item.reading) {
      const fs::path stem = dir / "tracks" / item.image_id;
      save_track(item.reading->track, stem);
      write_file(labels_path(stem), encode_labels(item.reading->fixation));
      entry.gaze_track_paths.push_back("tracks/" + item.image_id + ".gaze.jsonl");
    }
    manifest.entries.push_back(std::move(entry));
  }
  for (const auto& h : corpus.healthy) {
    const fs::path stem = dir / "healthy" / h.track.meta.image_id;
    save_track(h.track, stem);
    write_file(labels_path(stem), encode_labels(h.fixation));
  }
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

Manifest generate(const SynthConfig& cfg, const fs::path& dir) {
  return write_corpus(generate_corpus(cfg), dir);
}

}  // namespace gaze
