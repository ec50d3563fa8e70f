#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gaze/attention_map.hpp"
#include "gaze/error.hpp"

namespace gaze {

inline constexpr int kFeatureGrid = 16;
inline constexpr int kNumGrades = 5;
inline constexpr double kUncertaintyClamp = 6.0;
inline constexpr double kNormEpsilon = 1e-8;

/// Fixed random 5x5 filters; the stand-in backbone. Never trained.
struct FilterBank {
  int channels = 64;
  std::uint64_t seed = 0;
  std::vector<Eigen::Matrix<double, 5, 5>> filters;

  static FilterBank make(int channels, std::uint64_t seed);
};

/// K x (X*Y) activations; column index is y * X + x.
struct FeatureStack {
  Eigen::MatrixXd values;
  int grid_w = kFeatureGrid;
  int grid_h = kFeatureGrid;

  Eigen::Index channels() const noexcept { return values.rows(); }
  Eigen::Index positions() const noexcept { return values.cols(); }
};

/// Area-pools the image to 5 cells per grid cell, applies each filter at stride 5
/// and rectifies. Image dimensions must be multiples of 16.
FeatureStack extract_features(const Grid& image, const FilterBank& bank);

struct ClassifierParams {
  Eigen::MatrixXd W;  // C x K
  double u = 0.0;     // log sigma^2

  void clamp_uncertainty() { u = std::clamp(u, -kUncertaintyClamp, kUncertaintyClamp); }
};

// Expression-level building blocks. All maps are flattened row vectors of X*Y cells.

template <typename DerivedF>
Eigen::VectorXd global_average_pool(const Eigen::MatrixBase<DerivedF>& features) {
  return features.rowwise().mean();
}

/// Numerically stable softmax (shifted by the maximum score).
template <typename DerivedS>
Eigen::VectorXd softmax(const Eigen::MatrixBase<DerivedS>& scores) {
  const Eigen::VectorXd shifted = (scores.array() - scores.maxCoeff()).exp().matrix();
  return shifted / shifted.sum();
}

/// Weighted channel sum for every class: row c is A^c.
template <typename DerivedW, typename DerivedF>
Eigen::MatrixXd class_activation_maps(const Eigen::MatrixBase<DerivedW>& weights,
                                      const Eigen::MatrixBase<DerivedF>& features) {
  return weights * features;
}

template <typename DerivedA>
Eigen::RowVectorXd normalize_attention(const Eigen::MatrixBase<DerivedA>& map) {
  const Eigen::RowVectorXd rectified = map.cwiseMax(0.0);
  const double peak = rectified.size() ? rectified.maxCoeff() : 0.0;
  return rectified / (peak + kNormEpsilon);
}

template <typename DerivedA, typename DerivedG>
double mse_consistency(const Eigen::MatrixBase<DerivedA>& attention,
                       const Eigen::MatrixBase<DerivedG>& gaze) {
  if (attention.rows() != gaze.rows() || attention.cols() != gaze.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "attention and gaze maps differ in shape");
  }
  return (attention - gaze).squaredNorm() / static_cast<double>(attention.size());
}

/// 1/2 e^{-u} mse + u/2, i.e. the uncertainty-weighted consistency with sigma^2 = e^u.
template <typename DerivedA, typename DerivedG>
double ac_loss(const Eigen::MatrixBase<DerivedA>& attention, const Eigen::MatrixBase<DerivedG>& gaze,
               double u) {
  return 0.5 * std::exp(-u) * mse_consistency(attention, gaze) + 0.5 * u;
}

struct ScoreOutput {
  Eigen::VectorXd scores;
  Eigen::VectorXd probs;
};

struct CamOutput {
  Eigen::VectorXd scores;
  Eigen::VectorXd probs;
  Eigen::MatrixXd cams;  // C x (X*Y)

  int predicted() const;
};

ScoreOutput class_scores(const FeatureStack& features, const ClassifierParams& params);
Eigen::RowVectorXd cam(const FeatureStack& features, const ClassifierParams& params, int cls);
CamOutput forward(const FeatureStack& features, const ClassifierParams& params);

/// Flattened row-major 16x16 map, as consumed by the consistency losses.
Eigen::RowVectorXd flatten(const AttentionMap& map);
AttentionMap unflatten(const Eigen::RowVectorXd& cells, int width, int height);

struct Example {
  FeatureStack features;
  int label = 0;
  std::optional<Eigen::RowVectorXd> gaze;  // G16, flattened
  std::vector<BBox> boxes;                  // native image pixels
  int image_width = 0;
  int image_height = 0;
};

using Batch = std::span<const Example* const>;

enum class CamTarget { Predicted, TrueClass };

struct TrainConfig {
  double lambda_ac = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double init_scale = 0.01;
  CamTarget cam_target = CamTarget::Predicted;
};

struct LossTerms {
  double cross_entropy = 0.0;  // batch mean
  double consistency = 0.0;    // mean ac_loss over gaze-bearing samples, 0 when none
  std::size_t gaze_samples = 0;
  double total = 0.0;
};

LossTerms loss_terms(Batch batch, const ClassifierParams& params, const TrainConfig& cfg);
double total_loss(Batch batch, const ClassifierParams& params, const TrainConfig& cfg);

struct Gradients {
  Eigen::MatrixXd dW;
  double du = 0.0;
};

/// Closed-form dL/dW and dL/du. The CAM class is selected by the forward pass
/// and treated as constant, as is the argmax inside the normalisation.
Gradients gradients(Batch batch, const ClassifierParams& params, const TrainConfig& cfg);

struct HistoryRow {
  int epoch = 0;
  std::string split;
  double acc = 0.0;
  double mae = 0.0;
  double ce = 0.0;
  double ac = 0.0;
};

struct TrainResult {
  ClassifierParams params;
  std::vector<HistoryRow> history;
};

TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg);

struct EvalReport {
  double acc = 0.0;
  double mae = 0.0;
  Eigen::Matrix<long, kNumGrades, kNumGrades> confusion =
      Eigen::Matrix<long, kNumGrades, kNumGrades>::Zero();  // rows: truth, cols: predicted
  std::optional<double> mean_iou;                          // over examples carrying boxes
  std::vector<double> abs_errors;
  std::vector<double> ious;
  std::vector<int> predictions;
};

EvalReport evaluate(const ClassifierParams& params, std::span<const Example> test_set,
                    double iou_level = 0.5);

std::string history_csv(std::span<const HistoryRow> history);

}  // namespace gaze
