#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurallog/transformer.hpp"

namespace neurallog::model {

template <typename T>
struct AdamState {
  Vector<T> m;
  Vector<T> v;

  static AdamState zeros(Eigen::Index size) {
    return AdamState{Vector<T>::Zero(size), Vector<T>::Zero(size)};
  }
};

/// One AdamW update. `step_index` counts from 1 and drives bias correction:
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p.
template <typename T>
void adamw_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state,
                const TrainConfig& config, std::size_t step_index);

/// Stops once the score has failed to strictly improve for `patience`
/// consecutive updates.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `score` is a new best.
  bool update(double score);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  std::size_t bad_epochs() const { return bad_epochs_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  double best_ = 0;
  bool seen_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  /// Validation set had no anomalies; early stopping watched validation loss.
  bool loss_fallback = false;
  std::string stop_reason;
};

template <typename T>
struct TrainResult {
  ParamSet<T> params;
  TrainHistory history;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::string_view)> warn;
};

/// Mean cross-entropy of `windows` under `params`, computed from logits.
template <typename T>
double mean_loss(const TransformerClassifier<T>& model, std::span<const Window> windows,
                 const InputBank& bank, const ParamSet<T>& params, std::size_t threads = 1);

/// Mini-batch training with a seeded shuffle each epoch and early stopping on
/// validation F1 (threshold 0.5). Returns the parameters of the best epoch.
/// Throws std::invalid_argument if either set is empty.
template <typename T>
TrainResult<T> train(const TransformerClassifier<T>& model, std::span<const Window> train_set,
                     std::span<const Window> val_set, const InputBank& bank,
                     const TrainConfig& config, std::size_t threads = 1,
                     const TrainHooks& hooks = {});

}  // namespace neurallog::model
