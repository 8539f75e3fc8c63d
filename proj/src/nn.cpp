#include "surconfort/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "surconfort/errors.hpp"
#include "surconfort/io.hpp"

namespace surconfort::nn {

namespace {

using RowVector = Eigen::RowVectorXd;

void check_hidden(const std::array<int, 3>& hidden, int input_dim, int classes) {
  if (input_dim < 1 || classes < 2) throw ArgumentError("invalid network shape");
  for (int h : hidden) {
    if (h < 1) throw ArgumentError("hidden widths must be positive");
  }
}

std::array<int, kLayers + 1> widths(int input_dim, const std::array<int, 3>& hidden, int classes) {
  return {input_dim, hidden[0], hidden[1], hidden[2], classes};
}

template <typename M>
std::span<double> span_of(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename M>
std::span<const double> span_of(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

void softmax_rows(Matrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace

MlpModel::MlpModel(int input_dim, std::array<int, 3> hidden, std::uint64_t seed, int classes) {
  check_hidden(hidden, input_dim, classes);
  const auto w = widths(input_dim, hidden, classes);
  auto rng = make_rng(seed, "init");
  for (int l = 0; l < kLayers; ++l) {
    const double limit = std::sqrt(6.0 / w[l]);
    weight[l].resize(w[l], w[l + 1]);
    for (Eigen::Index k = 0; k < weight[l].size(); ++k) weight[l].data()[k] = limit * (2.0 * uniform_unit(rng) - 1.0);
    bias[l] = Vector::Zero(w[l + 1]);
  }
  for (int k = 0; k < kNormLayers; ++k) {
    const int width = w[k + 1];
    norm[k] = {Vector::Ones(width), Vector::Zero(width), Vector::Zero(width), Vector::Ones(width)};
  }
}

MlpModel MlpModel::zeros(int input_dim, std::array<int, 3> hidden, int classes) {
  MlpModel m(input_dim, hidden, 0, classes);
  for (auto& w : m.weight) w.setZero();
  for (auto& n : m.norm) {
    n.scale.setZero();
    n.shift.setZero();
  }
  return m;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (int l = 0; l < kLayers; ++l) {
    g.weight[l] = Matrix::Zero(model.weight[l].rows(), model.weight[l].cols());
    g.bias[l] = Vector::Zero(model.bias[l].size());
  }
  for (int k = 0; k < kNormLayers; ++k) {
    g.scale[k] = Vector::Zero(model.norm[k].scale.size());
    g.shift[k] = Vector::Zero(model.norm[k].shift.size());
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (int l = 0; l < kLayers; ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  for (int k = 0; k < kNormLayers; ++k) {
    scale[k] += other.scale[k];
    shift[k] += other.shift[k];
  }
  return *this;
}

std::vector<std::span<double>> parameter_spans(MlpModel& model) {
  std::vector<std::span<double>> out;
  for (int l = 0; l < kLayers; ++l) {
    out.push_back(span_of(model.weight[l]));
    out.push_back(span_of(model.bias[l]));
  }
  for (auto& n : model.norm) {
    out.push_back(span_of(n.scale));
    out.push_back(span_of(n.shift));
  }
  return out;
}

std::vector<std::span<const double>> parameter_spans(const MlpModel& model) {
  std::vector<std::span<const double>> out;
  for (int l = 0; l < kLayers; ++l) {
    out.push_back(span_of(model.weight[l]));
    out.push_back(span_of(model.bias[l]));
  }
  for (const auto& n : model.norm) {
    out.push_back(span_of(n.scale));
    out.push_back(span_of(n.shift));
  }
  return out;
}

std::vector<std::span<double>> gradient_spans(Gradients& g) {
  std::vector<std::span<double>> out;
  for (int l = 0; l < kLayers; ++l) {
    out.push_back(span_of(g.weight[l]));
    out.push_back(span_of(g.bias[l]));
  }
  for (int k = 0; k < kNormLayers; ++k) {
    out.push_back(span_of(g.scale[k]));
    out.push_back(span_of(g.shift[k]));
  }
  return out;
}

std::vector<std::span<const double>> gradient_spans(const Gradients& g) {
  std::vector<std::span<const double>> out;
  for (int l = 0; l < kLayers; ++l) {
    out.push_back(span_of(g.weight[l]));
    out.push_back(span_of(g.bias[l]));
  }
  for (int k = 0; k < kNormLayers; ++k) {
    out.push_back(span_of(g.scale[k]));
    out.push_back(span_of(g.shift[k]));
  }
  return out;
}

ForwardResult forward(const MlpModel& model, const Matrix& inputs, Mode mode) {
  if (inputs.rows() == 0) throw ArgumentError("forward pass needs a nonempty batch");
  if (inputs.cols() != model.input_dim()) {
    throw ArgumentError("input width " + std::to_string(inputs.cols()) + " does not match model input width " +
                        std::to_string(model.input_dim()));
  }
  if (mode == Mode::kTrain && inputs.rows() < 2) {
    throw ArgumentError("train-mode batch normalisation needs at least 2 rows");
  }
  ForwardResult res;
  auto& c = res.cache;
  c.mode = mode;
  c.input = inputs;
  const auto rows = static_cast<double>(inputs.rows());

  Matrix h;
  for (int l = 0; l < kLayers; ++l) {
    const Matrix* layer_in = &inputs;
    Matrix y;
    if (l > 0) {
      const int k = l - 1;
      const auto& bn = model.norm[k];
      RowVector mean;
      RowVector var;
      if (mode == Mode::kTrain) {
        mean = h.colwise().sum() / rows;
        var = (h.rowwise() - mean).array().square().colwise().sum() / rows;
      } else {
        mean = bn.running_mean.transpose();
        var = bn.running_var.transpose();
      }
      const RowVector inv = (var.array() + kBatchNormEpsilon).rsqrt();
      c.normed[k] = (h.rowwise() - mean).array().rowwise() * inv.array();
      y = (c.normed[k].array().rowwise() * bn.scale.transpose().array()).rowwise() + bn.shift.transpose().array();
      c.inv_std[k] = inv.transpose();
      c.batch_mean[k] = mean.transpose();
      c.batch_var[k] = var.transpose();
      layer_in = &y;
    }
    c.pre[l].noalias() = (*layer_in) * model.weight[l];
    c.pre[l].rowwise() += model.bias[l].transpose();
    if (l < kLayers - 1) {
      c.activation[l] = c.pre[l].cwiseMax(0.0);
      h = c.activation[l];
    }
  }
  res.probabilities = c.pre[kLayers - 1];
  softmax_rows(res.probabilities);
  res.descriptors = c.activation[2];
  return res;
}

void update_running_statistics(MlpModel& model, const ForwardCache& cache) {
  if (cache.mode != Mode::kTrain) return;
  for (int k = 0; k < kNormLayers; ++k) {
    auto& bn = model.norm[k];
    bn.running_mean = kBatchNormMomentum * bn.running_mean + (1.0 - kBatchNormMomentum) * cache.batch_mean[k];
    bn.running_var = kBatchNormMomentum * bn.running_var + (1.0 - kBatchNormMomentum) * cache.batch_var[k];
  }
}

double cross_entropy(std::span<const double> probabilities, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) throw ArgumentError("label out of range");
  return -std::log(std::max(probabilities[static_cast<std::size_t>(label)], kProbabilityFloor));
}

Gradients backward(const MlpModel& model, const ForwardCache& c, const Matrix& grad_logits,
                   const Matrix* grad_descriptors, bool want_input_gradient) {
  const Eigen::Index rows = c.input.rows();
  if (grad_logits.rows() != rows || grad_logits.cols() != model.classes()) {
    throw ArgumentError("logit gradient shape does not match the cached batch");
  }
  if (grad_descriptors != nullptr &&
      (grad_descriptors->rows() != rows || grad_descriptors->cols() != model.descriptor_dim())) {
    throw ArgumentError("descriptor gradient shape does not match the cached batch");
  }
  Gradients g;
  Matrix delta = grad_logits;  // d loss / d pre[l]
  for (int l = kLayers - 1; l >= 0; --l) {
    // Input of the affine layer l.
    Matrix layer_in;
    if (l == 0) {
      g.weight[0].noalias() = c.input.transpose() * delta;
    } else {
      const int k = l - 1;
      const auto& bn = model.norm[k];
      layer_in = (c.normed[k].array().rowwise() * bn.scale.transpose().array()).rowwise() +
                 bn.shift.transpose().array();
      g.weight[l].noalias() = layer_in.transpose() * delta;
    }
    g.bias[l] = delta.colwise().sum().transpose();
    if (l == 0) {
      if (want_input_gradient) g.input.noalias() = delta * model.weight[0].transpose();
      break;
    }
    const int k = l - 1;
    const auto& bn = model.norm[k];
    Matrix dy;
    dy.noalias() = delta * model.weight[l].transpose();
    g.scale[k] = (dy.array() * c.normed[k].array()).colwise().sum().transpose();
    g.shift[k] = dy.colwise().sum().transpose();
    const Matrix dxhat = dy.array().rowwise() * bn.scale.transpose().array();
    Matrix dh;
    if (c.mode == Mode::kTrain) {
      const double n = static_cast<double>(rows);
      const RowVector sum_dxhat = dxhat.colwise().sum();
      const RowVector sum_dxhat_xhat = (dxhat.array() * c.normed[k].array()).colwise().sum();
      dh = ((dxhat * n).rowwise() - sum_dxhat).array() - c.normed[k].array().rowwise() * sum_dxhat_xhat.array();
      dh = dh.array().rowwise() * (c.inv_std[k].transpose().array() / n);
    } else {
      dh = dxhat.array().rowwise() * c.inv_std[k].transpose().array();
    }
    // dh is d loss / d activation[l-1]; descriptors are activation[2].
    if (l - 1 == 2 && grad_descriptors != nullptr) dh += *grad_descriptors;
    delta = (c.pre[l - 1].array() > 0.0).select(dh.array(), 0.0).matrix();
  }
  return g;
}

AdamState::AdamState(const MlpModel& model, AdamConfig cfg)
    : config(cfg), first_moment(Gradients::zeros_like(model)), second_moment(Gradients::zeros_like(model)) {}

void adam_step(AdamState& state, MlpModel& model, const Gradients& grads) {
  auto params = parameter_spans(model);
  const auto g = gradient_spans(grads);
  auto m = gradient_spans(state.first_moment);
  auto v = gradient_spans(state.second_moment);
  if (g.size() != params.size() || m.size() != params.size()) throw ArgumentError("Adam: tensor count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (g[t].size() != params[t].size() || m[t].size() != params[t].size()) {
      throw ArgumentError("Adam: tensor shape mismatch");
    }
  }
  ++state.step;
  const auto& cfg = state.config;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[t][i];
      m[t][i] = cfg.beta1 * m[t][i] + (1.0 - cfg.beta1) * gi;
      v[t][i] = cfg.beta2 * v[t][i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[t][i] / c1;
      const double vhat = v[t][i] / c2;
      p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

std::vector<int> predict(const MlpModel& model, const Matrix& inputs) {
  return argmax_rows(forward(model, inputs, Mode::kInfer).probabilities);
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ArgumentError("prediction and label counts differ");
  if (labels.empty()) throw ArgumentError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

LossAndGradients supervised_loss(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                                 std::span<const double> weights) {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) throw ArgumentError("label count differs from batch");
  if (!weights.empty() && weights.size() != labels.size()) throw ArgumentError("weight count differs from batch");
  auto fwd = forward(model, inputs, Mode::kTrain);
  const double inv_batch = 1.0 / static_cast<double>(labels.size());
  Matrix grad_logits = fwd.probabilities;
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto r = static_cast<Eigen::Index>(i);
    loss += w * cross_entropy({fwd.probabilities.row(r).data(), static_cast<std::size_t>(fwd.probabilities.cols())},
                              labels[i]);
    grad_logits(r, labels[i]) -= 1.0;
    grad_logits.row(r) *= w * inv_batch;
  }
  LossAndGradients out;
  out.supervised = loss * inv_batch;
  out.loss = out.supervised;
  out.grads = backward(model, fwd.cache, grad_logits);
  out.cache = std::move(fwd.cache);
  return out;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    if (!weights.empty()) out.weights.push_back(weights[rows[i]]);
    if (!ids.empty()) out.ids.push_back(ids[rows[i]]);
  }
  return out;
}

Matrix encode_features(const data::SplitDataset& split, std::span<const data::Sample> samples) {
  const auto enc = split.encoder();
  Matrix x(static_cast<Eigen::Index>(samples.size()), enc.width());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    enc.encode_into(s.station_id, s.context, s.time_slot,
                    {x.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(enc.width())});
  }
  return x;
}

LabeledSet encode_labeled(const data::SplitDataset& split, std::span<const data::Sample> samples) {
  LabeledSet out;
  out.features = encode_features(split, samples);
  out.labels.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].label) throw ArgumentError("encode_labeled: sample without a label");
    out.labels.push_back(*samples[i].label);
    out.ids.push_back(i);
  }
  return out;
}

double TrainLog::best_validation_accuracy() const {
  if (best_epoch < 0) return 0.0;
  return validation_accuracy[static_cast<std::size_t>(best_epoch)];
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::size_t n, double fraction,
                                                                            std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ArgumentError("validation fraction must lie in [0, 1)");
  auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n < 2 + n_val) n_val = n > 2 ? n - 2 : 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, "holdout");
  for (std::size_t i = 0; i < n_val && i + 1 < n; ++i) {
    std::swap(order[i], order[i + static_cast<std::size_t>(uniform_index(rng, n - i))]);
  }
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

TrainResult fit(MlpModel model, const LabeledSet& train, const LabeledSet& validation, const TrainConfig& cfg,
                const StepObjective& objective) {
  if (train.size() < 2) throw ArgumentError("training needs at least 2 labeled samples (batch normalisation)");
  if (cfg.batch_size < 2) throw ArgumentError("batch size must be at least 2");
  if (cfg.max_epochs < 1) throw ArgumentError("max_epochs must be positive");
  AdamState adam(model, cfg.adam);
  auto rng = make_rng(cfg.seed, "shuffle");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const LabeledSet& monitor = validation.size() > 0 ? validation : train;

  TrainResult best{model, {}};
  auto& log = best.log;
  double best_acc = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_index(rng, i))]);
    }
    double loss_sum = 0.0;
    int steps = 0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      std::size_t end = std::min(order.size(), begin + bs);
      // A trailing single row cannot be batch-normalised; fold it in.
      if (order.size() - end == 1) end = order.size();
      const auto batch = train.subset(std::span<const std::size_t>(order).subspan(begin, end - begin));
      auto step = objective ? objective(model, batch) : supervised_loss(model, batch.features, batch.labels, batch.weights);
      if (!std::isfinite(step.loss)) throw NumericError("training loss became non-finite");
      adam_step(adam, model, step.grads);
      update_running_statistics(model, step.cache);
      loss_sum += step.loss;
      ++steps;
      if (end == order.size()) break;
    }
    log.train_loss.push_back(loss_sum / std::max(steps, 1));
    const double acc = accuracy(predict(model, monitor.features), monitor.labels);
    log.validation_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best.model = model;
      log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      log.stop_reason = "patience";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "max_epochs";
  return best;
}

TrainResult train_supervised(const data::SplitDataset& split, const TrainConfig& cfg) {
  if (split.l() == 0) throw ArgumentError("supervised training needs at least one labeled sample");
  const auto all = encode_labeled(split, split.labeled);
  const auto [train_rows, val_rows] = holdout_split(all.size(), cfg.validation_fraction, cfg.seed);
  MlpModel model(split.encoder().width(), cfg.hidden, cfg.seed);
  model.stations = split.stations;
  model.slots = split.slots;
  return fit(std::move(model), all.subset(train_rows), all.subset(val_rows), cfg);
}

std::string checkpoint_to_string(const MlpModel& model) {
  if (model.stations < 1 || model.slots < 1 ||
      model.input_dim() != model.stations + data::kContextWidth + model.slots) {
    throw ArgumentError("checkpoint needs a model tied to a dataset (input width S+9+T)");
  }
  std::string out;
  char buf[64];
  const auto h = model.hidden();
  std::snprintf(buf, sizeof buf, "mlp-v1 S=%d T=%d dims=%d,%d,%d,%d\n", model.stations, model.slots, h[0], h[1], h[2],
                model.classes());
  out += buf;
  auto put_tensor = [&](const std::string& name, const double* data, Eigen::Index rows, Eigen::Index cols, bool matrix) {
    out += name;
    out += matrix ? " " + std::to_string(rows) + " " + std::to_string(cols) + "\n" : " " + std::to_string(rows) + "\n";
    for (Eigen::Index r = 0; r < (matrix ? rows : 1); ++r) {
      const Eigen::Index n = matrix ? cols : rows;
      for (Eigen::Index c = 0; c < n; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", data[r * n + c]);
        if (c > 0) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  };
  for (int l = 0; l < kLayers; ++l) {
    if (l > 0) {
      const auto& bn = model.norm[l - 1];
      const std::string p = "bn" + std::to_string(l + 1) + ".";
      put_tensor(p + "scale", bn.scale.data(), bn.scale.size(), 1, false);
      put_tensor(p + "shift", bn.shift.data(), bn.shift.size(), 1, false);
      put_tensor(p + "running_mean", bn.running_mean.data(), bn.running_mean.size(), 1, false);
      put_tensor(p + "running_var", bn.running_var.data(), bn.running_var.size(), 1, false);
    }
    const std::string p = "fc" + std::to_string(l + 1) + ".";
    put_tensor(p + "weight", model.weight[l].data(), model.weight[l].rows(), model.weight[l].cols(), true);
    put_tensor(p + "bias", model.bias[l].data(), model.bias[l].size(), 1, false);
  }
  return out;
}

MlpModel checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty checkpoint");
  int stations = 0;
  int slots = 0;
  std::array<int, 4> dims{};
  if (std::sscanf(header.c_str(), "mlp-v1 S=%d T=%d dims=%d,%d,%d,%d", &stations, &slots, &dims[0], &dims[1], &dims[2],
                  &dims[3]) != 6) {
    throw DataError("bad checkpoint header: '" + header + "'");
  }
  if (stations < 1 || slots < 1) throw DataError("checkpoint header has non-positive S or T");
  MlpModel model = MlpModel::zeros(stations + data::kContextWidth + slots, {dims[0], dims[1], dims[2]}, dims[3]);
  model.stations = stations;
  model.slots = slots;

  auto read_tensor = [&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols, bool matrix) {
    std::string got;
    in >> got;
    if (got != name) throw DataError("checkpoint: expected tensor '" + name + "', found '" + got + "'");
    Eigen::Index r = 0;
    Eigen::Index c = 1;
    in >> r;
    if (matrix) in >> c;
    if (!in || r != rows || c != cols) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + std::to_string(r) + "x" + std::to_string(c) +
                      ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::string token;
    for (Eigen::Index k = 0; k < rows * cols; ++k) {
      if (!(in >> token)) throw DataError("checkpoint: truncated tensor '" + name + "'");
      data[k] = io::parse_double(token, name);
    }
  };
  for (int l = 0; l < kLayers; ++l) {
    if (l > 0) {
      auto& bn = model.norm[l - 1];
      const std::string p = "bn" + std::to_string(l + 1) + ".";
      read_tensor(p + "scale", bn.scale.data(), bn.scale.size(), 1, false);
      read_tensor(p + "shift", bn.shift.data(), bn.shift.size(), 1, false);
      read_tensor(p + "running_mean", bn.running_mean.data(), bn.running_mean.size(), 1, false);
      read_tensor(p + "running_var", bn.running_var.data(), bn.running_var.size(), 1, false);
      if ((bn.running_var.array() <= 0.0).any()) throw DataError("checkpoint: running variance must be positive");
    }
    const std::string p = "fc" + std::to_string(l + 1) + ".";
    read_tensor(p + "weight", model.weight[l].data(), model.weight[l].rows(), model.weight[l].cols(), true);
    read_tensor(p + "bias", model.bias[l].data(), model.bias[l].size(), 1, false);
  }
  return model;
}

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, checkpoint_to_string(model));
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace surconfort::nn
