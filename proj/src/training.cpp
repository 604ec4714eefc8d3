#include "ppgfusion/training.hpp"

namespace ppgfusion {

void TrainingHyperparams::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw InvalidConfig("Adam betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw InvalidConfig("Adam epsilon must be positive");
  if (batch_size < 1) throw InvalidConfig("batch size must be positive");
  if (!(lr_init > 0.0)) throw InvalidConfig("initial learning rate must be positive");
  if (plateau_patience < 1 || stop_patience < 1) throw InvalidConfig("patience must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw InvalidConfig("lr factor must lie in (0, 1)");
  if (max_epochs < 0) throw InvalidConfig("max_epochs must be >= 0");
}

PlateauSchedule::Decision PlateauSchedule::observe(double val_loss) {
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    since_best_ = 0;
    since_reduce_ = 0;
    d.improved = true;
    return d;
  }
  ++since_best_;
  ++since_reduce_;
  if (since_reduce_ >= plateau_patience_) {
    lr_ *= lr_factor_;
    since_reduce_ = 0;
    d.lr_reduced = true;
  }
  d.stop = since_best_ >= stop_patience_;
  return d;
}

}  // namespace ppgfusion
