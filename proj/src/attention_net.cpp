#include "gaze/attention_net.hpp"

#include <numeric>
#include <random>
#include <span>
#include <sstream>

namespace gaze {

namespace {

constexpr int kTap = 5;
constexpr double kFilterGain = 2000.0;
constexpr double kFilterThreshold = 100.0;
constexpr double kLowPassGain = 100.0;

void check_shapes(const FeatureStack& features, const ClassifierParams& params) {
  if (params.W.cols() != features.channels() || params.W.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "classifier expects " + std::to_string(params.W.cols()) +
                                              " channels, features have " +
                                              std::to_string(features.channels()));
  }
}

int cam_class(const Example& example, const Eigen::VectorXd& probs, CamTarget target) {
  if (target == CamTarget::TrueClass) return example.label;
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

double grade_error(int a, int b) { return std::abs(static_cast<double>(a - b)); }

}  // namespace

FilterBank FilterBank::make(int channels, std::uint64_t seed) {
  if (channels <= 0) throw Error(ErrorCode::BadGeometry, "filter bank needs at least one channel");
  FilterBank bank;
  bank.channels = channels;
  bank.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  bank.filters.resize(static_cast<std::size_t>(channels));
  // Channel 0 is a box low-pass filter; it carries overall brightness and
  // acts as the per-class offset of the linear head.
  bank.filters[0].setConstant(kLowPassGain / (kTap * kTap));
  for (auto& f : std::span(bank.filters).subspan(1)) {
    for (int i = 0; i < f.size(); ++i) f.data()[i] = normal(rng);
    // Zero mean so flat regions stay silent; fixed norm so channels are comparable.
    f.array() -= f.mean();
    f *= kFilterGain / f.norm();
  }
  return bank;
}

FeatureStack extract_features(const Grid& image, const FilterBank& bank) {
  if (image.rows() == 0 || image.cols() == 0 || image.rows() % kFeatureGrid != 0 ||
      image.cols() % kFeatureGrid != 0) {
    throw Error(ErrorCode::BadGeometry, "image dimensions must be positive multiples of 16");
  }
  const Grid pooled = area_resample(image, kFeatureGrid * kTap, kFeatureGrid * kTap);
  FeatureStack stack;
  stack.values.resize(bank.channels, kFeatureGrid * kFeatureGrid);
  for (int gy = 0; gy < kFeatureGrid; ++gy) {
    for (int gx = 0; gx < kFeatureGrid; ++gx) {
      const Eigen::Matrix<double, kTap, kTap> patch = pooled.block<kTap, kTap>(gy * kTap, gx * kTap).matrix();
      for (int k = 0; k < bank.channels; ++k) {
        const double response = bank.filters[static_cast<std::size_t>(k)].cwiseProduct(patch).sum();
        const double threshold = k == 0 ? 0.0 : kFilterThreshold;
        stack.values(k, gy * kFeatureGrid + gx) = std::max(response - threshold, 0.0);
      }
    }
  }
  return stack;
}

int CamOutput::predicted() const {
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<int>(best);
}

ScoreOutput class_scores(const FeatureStack& features, const ClassifierParams& params) {
  check_shapes(features, params);
  ScoreOutput out;
  out.scores = params.W * global_average_pool(features.values);
  out.probs = softmax(out.scores);
  return out;
}

Eigen::RowVectorXd cam(const FeatureStack& features, const ClassifierParams& params, int cls) {
  check_shapes(features, params);
  if (cls < 0 || cls >= params.W.rows()) throw Error(ErrorCode::BadClass, std::to_string(cls));
  return params.W.row(cls) * features.values;
}

CamOutput forward(const FeatureStack& features, const ClassifierParams& params) {
  const ScoreOutput s = class_scores(features, params);
  return {s.scores, s.probs, class_activation_maps(params.W, features.values)};
}

Eigen::RowVectorXd flatten(const AttentionMap& map) {
  return Eigen::Map<const Eigen::RowVectorXd>(map.values.data(), map.values.size());
}

AttentionMap unflatten(const Eigen::RowVectorXd& cells, int width, int height) {
  if (cells.size() != static_cast<Eigen::Index>(width) * height) {
    throw Error(ErrorCode::ShapeMismatch, "cell count does not match the requested grid");
  }
  return AttentionMap(Grid(Eigen::Map<const Grid>(cells.data(), height, width)));
}

LossTerms loss_terms(Batch batch, const ClassifierParams& params, const TrainConfig& cfg) {
  LossTerms terms;
  if (batch.empty()) return terms;
  double ac_sum = 0.0;
  for (const Example* ex : batch) {
    const ScoreOutput s = class_scores(ex->features, params);
    if (ex->label < 0 || ex->label >= s.probs.size()) throw Error(ErrorCode::BadClass, "label");
    terms.cross_entropy -= std::log(s.probs[ex->label]);
    if (ex->gaze) {
      const int c = cam_class(*ex, s.probs, cfg.cam_target);
      const Eigen::RowVectorXd attention = normalize_attention(cam(ex->features, params, c));
      ac_sum += ac_loss(attention, *ex->gaze, params.u);
      ++terms.gaze_samples;
    }
  }
  terms.cross_entropy /= static_cast<double>(batch.size());
  if (terms.gaze_samples > 0) terms.consistency = ac_sum / static_cast<double>(terms.gaze_samples);
  terms.total = terms.cross_entropy + cfg.lambda_ac * terms.consistency;
  return terms;
}

double total_loss(Batch batch, const ClassifierParams& params, const TrainConfig& cfg) {
  return loss_terms(batch, params, cfg).total;
}

Gradients gradients(Batch batch, const ClassifierParams& params, const TrainConfig& cfg) {
  Gradients grad{Eigen::MatrixXd::Zero(params.W.rows(), params.W.cols()), 0.0};
  if (batch.empty()) return grad;

  const auto gaze_count = std::count_if(batch.begin(), batch.end(),
                                        [](const Example* ex) { return ex->gaze.has_value(); });
  const double ce_scale = 1.0 / static_cast<double>(batch.size());
  const double ac_scale = gaze_count > 0 ? cfg.lambda_ac / static_cast<double>(gaze_count) : 0.0;
  const double inv_var = std::exp(-params.u);

  for (const Example* ex : batch) {
    const Eigen::VectorXd pooled = global_average_pool(ex->features.values);
    const Eigen::VectorXd probs = softmax(params.W * pooled);

    Eigen::VectorXd dscores = probs;
    dscores[ex->label] -= 1.0;
    grad.dW.noalias() += ce_scale * dscores * pooled.transpose();

    if (!ex->gaze || ac_scale == 0.0) continue;
    const int c = cam_class(*ex, probs, cfg.cam_target);
    const Eigen::RowVectorXd raw = params.W.row(c) * ex->features.values;
    const Eigen::RowVectorXd rectified = raw.cwiseMax(0.0);
    Eigen::Index peak_at = 0;
    const double peak = rectified.maxCoeff(&peak_at);
    const double denom = peak + kNormEpsilon;
    const Eigen::RowVectorXd attention = rectified / denom;
    const Eigen::RowVectorXd residual = attention - *ex->gaze;
    const auto cells = static_cast<double>(residual.size());
    const double mse = residual.squaredNorm() / cells;

    // d ac / d attention, then through r / (max r + eps) with the max as a selection.
    const Eigen::RowVectorXd d_attention = inv_var * residual / cells;
    Eigen::RowVectorXd d_rectified = d_attention / denom;
    d_rectified[peak_at] -= d_attention.dot(rectified) / (denom * denom);
    const Eigen::RowVectorXd d_raw = (raw.array() > 0.0).select(d_rectified, 0.0);

    grad.dW.row(c).noalias() += ac_scale * (d_raw * ex->features.values.transpose());
    grad.du += ac_scale * (0.5 - 0.5 * inv_var * mse);
  }
  return grad;
}

namespace {

struct AdamState {
  Eigen::MatrixXd m_w;
  Eigen::MatrixXd v_w;
  double m_u = 0.0;
  double v_u = 0.0;
  long step = 0;
};

void adam_step(ClassifierParams& params, const Gradients& grad, AdamState& state,
               const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  state.m_w = cfg.beta1 * state.m_w + (1.0 - cfg.beta1) * grad.dW;
  state.v_w = cfg.beta2 * state.v_w + (1.0 - cfg.beta2) * grad.dW.cwiseAbs2();
  params.W.array() -= cfg.learning_rate * (state.m_w.array() / bc1) /
                      ((state.v_w.array() / bc2).sqrt() + cfg.adam_epsilon);
  state.m_u = cfg.beta1 * state.m_u + (1.0 - cfg.beta1) * grad.du;
  state.v_u = cfg.beta2 * state.v_u + (1.0 - cfg.beta2) * grad.du * grad.du;
  params.u -= cfg.learning_rate * (state.m_u / bc1) / (std::sqrt(state.v_u / bc2) + cfg.adam_epsilon);
  params.clamp_uncertainty();
}

std::vector<const Example*> pointers(std::span<const Example> set) {
  std::vector<const Example*> out;
  out.reserve(set.size());
  for (const auto& ex : set) out.push_back(&ex);
  return out;
}

HistoryRow summarize(int epoch, const char* split, std::span<const Example> set,
                     const ClassifierParams& params, const TrainConfig& cfg) {
  const auto all = pointers(set);
  const LossTerms terms = loss_terms(all, params, cfg);
  const EvalReport report = evaluate(params, set);
  return {epoch, split, report.acc, report.mae, terms.cross_entropy, terms.consistency};
}

}  // namespace

TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "no training examples");
  if (cfg.batch_size <= 0 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0) || cfg.lambda_ac < 0.0) {
    throw Error(ErrorCode::BadGeometry, "invalid training configuration");
  }
  const auto channels = train_set.front().features.channels();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.init_scale);
  TrainResult result;
  result.params.W.resize(kNumGrades, channels);
  for (Eigen::Index i = 0; i < result.params.W.size(); ++i) result.params.W.data()[i] = normal(rng);
  result.params.u = 0.0;

  AdamState state{Eigen::MatrixXd::Zero(kNumGrades, channels),
                  Eigen::MatrixXd::Zero(kNumGrades, channels)};
  const auto all = pointers(train_set);
  std::vector<std::size_t> order(train_set.size());
  std::vector<const Example*> batch;

  result.history.push_back(summarize(0, "train", train_set, result.params, cfg));
  if (!val_set.empty()) result.history.push_back(summarize(0, "val", val_set, result.params, cfg));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(all[order[i]]);
      adam_step(result.params, gradients(batch, result.params, cfg), state, cfg);
    }
    result.history.push_back(summarize(epoch, "train", train_set, result.params, cfg));
    if (!val_set.empty()) {
      result.history.push_back(summarize(epoch, "val", val_set, result.params, cfg));
    }
  }
  return result;
}

EvalReport evaluate(const ClassifierParams& params, std::span<const Example> test_set,
                    double iou_level) {
  EvalReport report;
  if (test_set.empty()) throw Error(ErrorCode::EmptyDataset, "no evaluation examples");
  long correct = 0;
  double iou_sum = 0.0;
  for (const auto& ex : test_set) {
    const ScoreOutput s = class_scores(ex.features, params);
    Eigen::Index predicted = 0;
    s.probs.maxCoeff(&predicted);
    const int pred = static_cast<int>(predicted);
    report.predictions.push_back(pred);
    report.abs_errors.push_back(grade_error(pred, ex.label));
    if (pred == ex.label) ++correct;
    if (ex.label >= 0 && ex.label < kNumGrades && pred < kNumGrades) report.confusion(ex.label, pred) += 1;

    if (!ex.boxes.empty() && ex.image_width > 0 && ex.image_height > 0) {
      const Eigen::RowVectorXd attention = normalize_attention(cam(ex.features, params, pred));
      const AttentionMap grid = unflatten(attention, ex.features.grid_w, ex.features.grid_h);
      const double value = iou(upsample_nearest(grid, ex.image_width, ex.image_height), ex.boxes, iou_level);
      report.ious.push_back(value);
      iou_sum += value;
    }
  }
  report.acc = static_cast<double>(correct) / static_cast<double>(test_set.size());
  report.mae = std::accumulate(report.abs_errors.begin(), report.abs_errors.end(), 0.0) /
               static_cast<double>(test_set.size());
  if (!report.ious.empty()) report.mean_iou = iou_sum / static_cast<double>(report.ious.size());
  return report;
}

std::string history_csv(std::span<const HistoryRow> history) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,split,acc,mae,ce,ac\n";
  for (const auto& row : history) {
    out << row.epoch << ',' << row.split << ',' << row.acc << ',' << row.mae << ',' << row.ce << ','
        << row.ac << '\n';
  }
  return out.str();
}

}  // namespace gaze
