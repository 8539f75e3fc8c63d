#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "surconfort/data.hpp"
#include "surconfort/random.hpp"

namespace surconfort::nn {

/// Rows are samples.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kLayers = 4;
inline constexpr int kNormLayers = 3;  // before layers 2, 3 and 4
inline constexpr std::array<int, 3> kDefaultHidden{128, 256, 128};
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kProbabilityFloor = 1e-12;

struct BatchNorm {
  Vector scale;
  Vector shift;
  Vector running_mean;
  Vector running_var;
};

/// Four affine layers with widths hidden[0], hidden[1], hidden[2], classes.
/// Batch normalisation precedes layers 2-4; ReLU follows layers 1-3 and a
/// softmax follows layer 4. The layer-3 activations are the descriptors.
class MlpModel {
 public:
  MlpModel() = default;
  /// He-style uniform initialisation, U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
  /// zero biases, unit scale, zero shift, running statistics (0, 1).
  MlpModel(int input_dim, std::array<int, 3> hidden, std::uint64_t seed, int classes = data::kNumClasses);
  /// Every trainable parameter zero; running statistics (0, 1).
  static MlpModel zeros(int input_dim, std::array<int, 3> hidden = kDefaultHidden, int classes = data::kNumClasses);

  int input_dim() const { return static_cast<int>(weight[0].rows()); }
  int descriptor_dim() const { return static_cast<int>(weight[2].cols()); }
  int classes() const { return static_cast<int>(weight[3].cols()); }
  std::array<int, 3> hidden() const {
    return {static_cast<int>(weight[0].cols()), static_cast<int>(weight[1].cols()), static_cast<int>(weight[2].cols())};
  }

  std::array<Matrix, kLayers> weight;  // fan_in x fan_out
  std::array<Vector, kLayers> bias;
  std::array<BatchNorm, kNormLayers> norm;

  /// Station and slot counts the input encoding was built for (0 when the
  /// model is not tied to a dataset).
  int stations = 0;
  int slots = 0;
};

/// Gradient of a scalar loss with respect to every trainable parameter.
struct Gradients {
  std::array<Matrix, kLayers> weight;
  std::array<Vector, kLayers> bias;
  std::array<Vector, kNormLayers> scale;
  std::array<Vector, kNormLayers> shift;
  /// d loss / d input rows; filled only on request.
  Matrix input;

  static Gradients zeros_like(const MlpModel& model);
  Gradients& operator+=(const Gradients& other);
};

/// Trainable tensors in canonical order; running statistics excluded.
std::vector<std::span<double>> parameter_spans(MlpModel& model);
std::vector<std::span<const double>> parameter_spans(const MlpModel& model);
std::vector<std::span<double>> gradient_spans(Gradients& grads);
std::vector<std::span<const double>> gradient_spans(const Gradients& grads);

enum class Mode { kTrain, kInfer };

struct ForwardCache {
  Mode mode = Mode::kInfer;
  Matrix input;
  std::array<Matrix, kLayers> pre;          // affine outputs
  std::array<Matrix, kNormLayers> normed;   // x-hat per norm layer
  std::array<Vector, kNormLayers> inv_std;
  std::array<Vector, kNormLayers> batch_mean;
  std::array<Vector, kNormLayers> batch_var;
  std::array<Matrix, 3> activation;          // post-ReLU of layers 1-3
};

struct ForwardResult {
  Matrix probabilities;
  Matrix descriptors;
  ForwardCache cache;
};

/// Pure forward pass. Train mode normalises with batch statistics (batch of
/// at least two rows required) and records them in the cache; infer mode
/// uses running statistics.
ForwardResult forward(const MlpModel& model, const Matrix& inputs, Mode mode);

/// Folds the batch statistics of a train-mode cache into the running
/// statistics: running = momentum * running + (1 - momentum) * batch.
void update_running_statistics(MlpModel& model, const ForwardCache& cache);

/// -log(max(p_label, 1e-12)).
double cross_entropy(std::span<const double> probabilities, int label);

/// Reverse pass. `grad_logits` is d loss / d logits; `grad_descriptors`
/// (optional, same shape as the descriptors) enters at the layer-3
/// activations.
Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& grad_logits,
                   const Matrix* grad_descriptors = nullptr, bool want_input_gradient = false);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  Gradients first_moment;
  Gradients second_moment;

  AdamState() = default;
  AdamState(const MlpModel& model, AdamConfig cfg);
};

/// Bias-corrected Adam update of every trainable parameter.
void adam_step(AdamState& state, MlpModel& model, const Gradients& grads);

/// Row-wise argmax, ties to the lowest class.
std::vector<int> argmax_rows(const Matrix& scores);
std::vector<int> predict(const MlpModel& model, const Matrix& inputs);
double accuracy(std::span<const int> predicted, std::span<const int> labels);

/// Supervised mini-batch objective: (1/B) * sum_i w_i * CE_i.
struct LossAndGradients {
  double loss = 0.0;
  double supervised = 0.0;
  double regularizer = 0.0;
  Gradients grads;
  ForwardCache cache;
};
LossAndGradients supervised_loss(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                                 std::span<const double> weights = {});

/// Samples with labels (and optional per-sample weights) as a feature matrix.
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  std::vector<double> weights;  // empty means all ones
  /// Identifier per row, free for callers (e.g. index into a sample list).
  std::vector<std::size_t> ids;

  std::size_t size() const { return labels.size(); }
  LabeledSet subset(std::span<const std::size_t> rows) const;
};

LabeledSet encode_labeled(const data::SplitDataset& split, std::span<const data::Sample> samples);
Matrix encode_features(const data::SplitDataset& split, std::span<const data::Sample> samples);

struct TrainConfig {
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 10;
  double validation_fraction = 0.10;
  AdamConfig adam;
  std::array<int, 3> hidden = kDefaultHidden;
  std::uint64_t seed = 0;
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> validation_accuracy;
  int best_epoch = -1;
  std::string stop_reason;

  double best_validation_accuracy() const;
};

struct TrainResult {
  MlpModel model;
  TrainLog log;
};

/// Computes the training objective of one mini-batch given its rows in the
/// training set.
using StepObjective = std::function<LossAndGradients(const MlpModel&, const LabeledSet& batch)>;

/// Mini-batch Adam with early stopping on validation accuracy. Returns the
/// parameters of the best validation epoch. An empty validation set falls
/// back to training accuracy. `objective` defaults to supervised_loss.
TrainResult fit(MlpModel model, const LabeledSet& train, const LabeledSet& validation, const TrainConfig& cfg,
                const StepObjective& objective = {});

/// Splits n labeled rows into (train, validation) with floor(fraction * n)
/// validation rows, seeded.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double fraction,
                                                                            std::uint64_t seed);

/// The SNN baseline: trains on split.labeled only.
TrainResult train_supervised(const data::SplitDataset& split, const TrainConfig& cfg);

// Checkpoint I/O: plain text, bit-exact round trip.
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const MlpModel& model);
MlpModel checkpoint_from_string(const std::string& text);

}  // namespace surconfort::nn
