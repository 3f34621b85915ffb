#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "neurallog/eval.hpp"
#include "neurallog/hash.hpp"
#include "neurallog/random.hpp"
#include "neurallog/trainer.hpp"

namespace neurallog::model {

bool EarlyStopping::update(double score) {
  if (!seen_ || score > best_) {
    seen_ = true;
    best_ = score;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

template <typename T>
double mean_loss(const TransformerClassifier<T>& model, std::span<const Window> windows,
                 const InputBank& bank, const ParamSet<T>& params, std::size_t threads) {
  if (windows.empty()) return 0;
  const auto preds = model.predict(windows, bank, params, threads);
  double total = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double a = static_cast<double>(preds[i].logits[0]);
    const double b = static_cast<double>(preds[i].logits[1]);
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    total += lse - (windows[i].label == Label::Anomalous ? b : a);
  }
  return total / static_cast<double>(windows.size());
}

template <typename T>
TrainResult<T> train(const TransformerClassifier<T>& model, std::span<const Window> train_set,
                     std::span<const Window> val_set, const InputBank& bank,
                     const TrainConfig& config, std::size_t threads, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (val_set.empty()) throw std::invalid_argument("empty validation set");

  TrainResult<T> result{model.init_params(config.seed), {}};
  ParamSet<T> params = result.params;
  ParamSet<T> grads(model.layout());
  auto state = AdamState<T>::zeros(params.values().size());

  std::vector<Label> val_truth;
  for (const auto& w : val_set) val_truth.push_back(w.label);
  const bool fallback =
      std::none_of(val_truth.begin(), val_truth.end(), [](Label l) { return l == Label::Anomalous; });
  result.history.loss_fallback = fallback;
  if (fallback && hooks.warn) {
    hooks.warn("validation set has no anomalies; F1 is degenerate, early stopping uses validation loss");
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Window> batch;
  EarlyStopping stopper(config.patience);
  std::size_t step = 0;
  result.history.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x100 + epoch));
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    for (std::size_t first = 0, b = 0; first < order.size(); first += config.batch_size, ++b) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      batch.clear();
      for (std::size_t i = first; i < last; ++i) batch.push_back(train_set[order[i]]);
      GradOptions opts;
      opts.dropout_seed = mix_seed(mix_seed(config.seed, 0x200 + epoch), b);
      opts.threads = threads;
      const T loss = model.loss_and_gradients(batch, bank, params, grads, opts);
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      adamw_step(params, grads, state, config, ++step);
    }
    if (!params.all_finite()) throw NumericalError("numerical overflow");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = mean_loss(model, val_set, bank, params, threads);
    const auto predicted = detect(model, val_set, bank, params, 0.5, threads);
    rec.val_f1 = eval::precision_recall_f1(eval::confusion(predicted, val_truth)).f1;
    rec.improved = stopper.update(fallback ? -rec.val_loss : rec.val_f1);
    if (rec.improved) {
      result.params = params;
      result.history.best_epoch = epoch;
    }
    result.history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.should_stop()) {
      result.history.stop_reason = "early_stopping";
      break;
    }
  }
  return result;
}

template double mean_loss<float>(const TransformerClassifier<float>&, std::span<const Window>,
                                 const InputBank&, const ParamSet<float>&, std::size_t);
template double mean_loss<double>(const TransformerClassifier<double>&, std::span<const Window>,
                                  const InputBank&, const ParamSet<double>&, std::size_t);
template TrainResult<float> train<float>(const TransformerClassifier<float>&, std::span<const Window>,
                                         std::span<const Window>, const InputBank&,
                                         const TrainConfig&, std::size_t, const TrainHooks&);
template TrainResult<double> train<double>(const TransformerClassifier<double>&,
                                           std::span<const Window>, std::span<const Window>,
                                           const InputBank&, const TrainConfig&, std::size_t,
                                           const TrainHooks&);

}  // namespace neurallog::model
