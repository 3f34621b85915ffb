#include <cmath>
#include <stdexcept>

#include "neurallog/trainer.hpp"

namespace neurallog::model {

template <typename T>
void adamw_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state,
                const TrainConfig& config, std::size_t step_index) {
  if (step_index == 0) throw std::invalid_argument("adamw step index counts from 1");
  auto& p = params.values();
  const auto& g = grads.values();
  if (g.size() != p.size() || state.m.size() != p.size() || state.v.size() != p.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T lr = static_cast<T>(config.lr);
  const T eps = static_cast<T>(config.epsilon);
  const T wd = static_cast<T>(config.weight_decay);
  const auto t = static_cast<double>(step_index);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));

  state.m = b1 * state.m + (T(1) - b1) * g;
  state.v = b2 * state.v + (T(1) - b2) * g.cwiseAbs2();
  const Vector<T> update =
      (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
  p = p - lr * update - lr * wd * p;
}

template void adamw_step<float>(ParamSet<float>&, const ParamSet<float>&, AdamState<float>&,
                                const TrainConfig&, std::size_t);
template void adamw_step<double>(ParamSet<double>&, const ParamSet<double>&, AdamState<double>&,
                                 const TrainConfig&, std::size_t);

}  // namespace neurallog::model
