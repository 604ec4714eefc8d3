#pragma once

#include "ppgfusion/signal.hpp"
#include "ppgfusion/unet.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ppgfusion {

struct TrainingMetadata {
  int best_epoch = 0;
  int epochs_run = 0;
  double best_val_l1 = std::numeric_limits<double>::infinity();
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> train_subjects;
  std::vector<std::string> val_subjects;
};

/// Network configuration, weights and training-state metadata.
template <typename Scalar>
struct FusionModel {
  UNetConfig config;
  Vector<Scalar> params;
  TrainingMetadata meta;
};

template <typename Scalar>
FusionModel<Scalar> init_model(const UNetConfig& cfg, std::uint64_t seed) {
  FusionModel<Scalar> m;
  m.config = cfg;
  m.params = UNet<Scalar>(cfg).initialize(seed);
  m.meta.seed = seed;
  return m;
}

template <typename Scalar>
Tensor<Scalar> forward(const FusionModel<Scalar>& model, const Tensor<Scalar>& input) {
  return UNet<Scalar>(model.config).forward(model.params, input);
}

/// One (in_channels x L) input window with its (1 x L) target.
template <typename Scalar>
struct WindowExample {
  Tensor<Scalar> input;
  Tensor<Scalar> target;
};

struct TrainingHyperparams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 80;
  double lr_init = 0.001;
  int plateau_patience = 50;
  double lr_factor = 0.5;
  int stop_patience = 75;
  /// Hard cap on epochs; 0 means the early-stopping rule alone ends training.
  int max_epochs = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_l1 = 0.0;
  double val_l1 = 0.0;
  double learning_rate = 0.0;  // rate used during this epoch
  bool improved = false;
  bool lr_reduced = false;  // rate is reduced after this epoch
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_l1 = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

/// Non-finite loss during training. Carries the history up to the failure.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainingHistory history)
      : Error(what), history_(std::move(history)) {}
  const TrainingHistory& history() const { return history_; }

 private:
  TrainingHistory history_;
};

/// Validation-driven learning-rate halving and early stopping. Any strict
/// decrease of the best validation loss resets both patience counters.
class PlateauSchedule {
 public:
  struct Decision {
    bool improved = false;
    bool lr_reduced = false;
    bool stop = false;
  };

  PlateauSchedule(double lr_init, int plateau_patience, double lr_factor, int stop_patience)
      : lr_(lr_init),
        plateau_patience_(plateau_patience),
        lr_factor_(lr_factor),
        stop_patience_(stop_patience) {}

  explicit PlateauSchedule(const TrainingHyperparams& h)
      : PlateauSchedule(h.lr_init, h.plateau_patience, h.lr_factor, h.stop_patience) {}

  Decision observe(double val_loss);

  double learning_rate() const { return lr_; }
  double best() const { return best_; }
  int epochs_without_improvement() const { return since_best_; }

 private:
  double lr_;
  int plateau_patience_;
  double lr_factor_;
  int stop_patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_best_ = 0;
  int since_reduce_ = 0;
};

/// Adam without weight decay or clipping.
template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index n, double beta1, double beta2, double epsilon)
      : m_(Vector<Scalar>::Zero(n)),
        v_(Vector<Scalar>::Zero(n)),
        beta1_(beta1),
        beta2_(beta2),
        epsilon_(epsilon) {}

  void step(Vector<Scalar>& params, const Vector<Scalar>& grad, double lr) {
    ++t_;
    const auto b1 = static_cast<Scalar>(beta1_);
    const auto b2 = static_cast<Scalar>(beta2_);
    m_ = b1 * m_ + (Scalar(1) - b1) * grad;
    v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseAbs2();
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(beta1_, t_));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(beta2_, t_));
    const auto rate = static_cast<Scalar>(lr);
    const auto eps = static_cast<Scalar>(epsilon_);
    params.array() -= rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

  long steps() const { return t_; }

 private:
  Vector<Scalar> m_;
  Vector<Scalar> v_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long t_ = 0;
};

/// Mean absolute error of one window; also writes d(loss)/d(output) scaled by
/// `grad_scale` into `grad` when non-null.
template <typename Scalar>
double l1_loss(const Tensor<Scalar>& output, const Tensor<Scalar>& target,
               Tensor<Scalar>* grad = nullptr, Scalar grad_scale = Scalar(1)) {
  const auto diff = (output - target).array();
  const double n = static_cast<double>(output.size());
  if (grad != nullptr) *grad = (diff.sign() * (grad_scale / static_cast<Scalar>(n))).matrix();
  return static_cast<double>(diff.abs().template cast<double>().sum()) / n;
}

/// Mean window L1 over a dataset.
template <typename Scalar>
double mean_l1(const UNet<Scalar>& net, const Vector<Scalar>& params,
               std::span<const WindowExample<Scalar>> data) {
  ForwardCache<Scalar> cache;
  double sum = 0.0;
  for (const auto& ex : data) sum += l1_loss<Scalar>(net.forward(params, ex.input, cache), ex.target);
  return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

template <typename Scalar>
struct TrainResult {
  FusionModel<Scalar> model;  // parameters with the lowest validation L1
  TrainingHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the L1 loss with plateau halving, early stopping and
/// best-on-validation model selection. Deterministic given `seed`.
template <typename Scalar>
TrainResult<Scalar> train(std::span<const WindowExample<Scalar>> train_set,
                          std::span<const WindowExample<Scalar>> val_set, const UNetConfig& cfg,
                          const TrainingHyperparams& hyper, std::uint64_t seed,
                          const EpochCallback& on_epoch = {}) {
  if (train_set.empty() || val_set.empty()) throw InvalidInput("train: empty training or validation set");
  hyper.validate();
  const UNet<Scalar> net(cfg);

  TrainResult<Scalar> result;
  result.model = init_model<Scalar>(cfg, seed);
  Vector<Scalar> params = result.model.params;
  Vector<Scalar> grad(params.size());
  Adam<Scalar> adam(params.size(), hyper.beta1, hyper.beta2, hyper.epsilon);
  PlateauSchedule schedule(hyper);
  std::mt19937_64 shuffle_rng(seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ForwardCache<Scalar> cache;
  Tensor<Scalar> d_out;
  TrainingHistory& history = result.history;

  for (int epoch = 1; hyper.max_epochs <= 0 || epoch <= hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = schedule.learning_rate();
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(stop - start));
      grad.setZero();
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = train_set[order[i]];
        train_sum += l1_loss<Scalar>(net.forward(params, ex.input, cache), ex.target, &d_out, scale);
        net.backward(params, cache, d_out, grad);
      }
      adam.step(params, grad, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_l1 = train_sum / static_cast<double>(order.size());
    rec.val_l1 = mean_l1<Scalar>(net, params, val_set);
    rec.learning_rate = lr;
    if (!std::isfinite(rec.train_l1) || !std::isfinite(rec.val_l1) || !params.allFinite()) {
      history.epochs.push_back(rec);
      throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch), history);
    }
    const PlateauSchedule::Decision d = schedule.observe(rec.val_l1);
    rec.improved = d.improved;
    rec.lr_reduced = d.lr_reduced;
    history.epochs.push_back(rec);
    if (d.improved) {
      history.best_epoch = epoch;
      history.best_val_l1 = rec.val_l1;
      result.model.params = params;
    }
    if (on_epoch) on_epoch(rec);
    if (d.stop) {
      history.early_stopped = true;
      break;
    }
  }

  TrainingMetadata& meta = result.model.meta;
  meta.best_epoch = history.best_epoch;
  meta.epochs_run = static_cast<int>(history.epochs.size());
  meta.best_val_l1 = history.best_val_l1;
  meta.learning_rate = schedule.learning_rate();
  meta.seed = seed;
  return result;
}

}  // namespace ppgfusion
