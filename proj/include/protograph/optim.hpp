#pragma once

// SGD with momentum and decoupled-from-nothing classic weight decay
// (decay folded into the gradient before the velocity update), plus the
// step learning-rate schedule.

#include <cmath>
#include <cstdint>
#include <string>

#include "protograph/errors.hpp"
#include "protograph/loss.hpp"
#include "protograph/types.hpp"

namespace protograph {

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  Index batch_size = 256;
  Index epochs = 90;
  double lr_decay_factor = 30;
  Index lr_decay_interval = 30;
  double sgm_weight = 1.0;   // lambda on the stage-1 SGM term
  double proto_reg = 0.001;  // eta on the stage-2 prototype-norm term
  SgmForm sgm_form = SgmForm::Squared;
  bool ensemble_in_loss = true;
  bool freeze_hinit = false;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr0 > 0)) throw ConfigError("train: lr0 must be > 0");
  if (!(c.momentum >= 0 && c.momentum < 1)) throw ConfigError("train: momentum must lie in [0,1)");
  if (c.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (c.batch_size < 2 || c.batch_size % 2 != 0) {
    throw ConfigError("train: batch_size must be even and >= 2 (balanced batching)");
  }
  if (c.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(c.lr_decay_factor >= 1)) throw ConfigError("train: lr_decay_factor must be >= 1");
  if (c.lr_decay_interval < 1) throw ConfigError("train: lr_decay_interval must be >= 1");
  if (c.sgm_weight < 0) throw ConfigError("train: sgm_weight must be >= 0");
  if (c.proto_reg < 0) throw ConfigError("train: proto_reg must be >= 0");
}

/// Step schedule: lr0 / factor^floor(epoch / interval).
inline double lr_at(Index epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw InputError("lr_at: negative epoch");
  const auto drops = static_cast<double>(epoch / cfg.lr_decay_interval);
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, drops);
}

/// In-place momentum update: g' = grad + wd * param; v <- mu * v + g';
/// param <- param - lr * v.
template <typename Scalar>
void sgd_step(Matrix<Scalar>& param, const Matrix<Scalar>& grad, Matrix<Scalar>& velocity,
              Scalar lr, Scalar momentum, Scalar weight_decay) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw InputError("sgd_step: gradient shape mismatch");
  }
  if (velocity.rows() != param.rows() || velocity.cols() != param.cols()) {
    throw InputError("sgd_step: velocity shape mismatch");
  }
  velocity = momentum * velocity + (grad + weight_decay * param);
  param -= lr * velocity;
}

/// One update over every tensor of one propagation module. `freeze_hinit`
/// skips the initial-state tensor (kept at its random init).
template <typename Scalar>
void sgd_step(KgtmParams<Scalar>& params, const KgtmGrads<Scalar>& grads,
              KgtmParams<Scalar>& velocity, Scalar lr, Scalar momentum, Scalar weight_decay,
              bool freeze_hinit = false) {
  visit_tensors(params, [&](const char* name, Matrix<Scalar>& p) {
    if (freeze_hinit && std::string(name) == "hinit") return;
    const Matrix<Scalar>* g = nullptr;
    visit_tensors(grads, [&](const char* gname, const Matrix<Scalar>& gt) {
      if (std::string(gname) == name) g = &gt;
    });
    Matrix<Scalar>* v = nullptr;
    visit_tensors(velocity, [&](const char* vname, Matrix<Scalar>& vt) {
      if (std::string(vname) == name) v = &vt;
    });
    sgd_step<Scalar>(p, *g, *v, lr, momentum, weight_decay);
  });
}

}  // namespace protograph
