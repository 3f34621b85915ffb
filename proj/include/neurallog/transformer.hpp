#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neurallog/core.hpp"
#include "neurallog/wordpiece.hpp"

namespace neurallog::model {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct ModelConfig {
  std::size_t dim = 768;
  std::size_t heads = 12;
  std::size_t ffn_size = 2048;
  std::size_t layers = 1;
  double dropout = 0.1;
  std::size_t seq_len = 20;
  std::size_t classes = 2;
  bool positional_encoding = true;

  void validate() const;
};

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---- parameters ---------------------------------------------------------

enum class TensorKind { Weight, Bias, Gain, Embedding };

struct TensorInfo {
  std::string name;
  TensorKind kind = TensorKind::Weight;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const { return rows * cols; }
};

/// Names, shapes and offsets of every trainable tensor in one flat buffer.
class ParamLayout {
 public:
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln1_gain, ln1_bias;
    std::size_t ffn1_w, ffn1_b, ffn2_w, ffn2_b;
    std::size_t ln2_gain, ln2_bias;
  };

  /// `embedding_rows` > 0 adds a trainable subword embedding matrix.
  static std::shared_ptr<const ParamLayout> build(const ModelConfig& config,
                                                  std::size_t embedding_rows = 0);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t classifier_w() const { return classifier_w_; }
  std::size_t classifier_b() const { return classifier_b_; }
  std::optional<std::size_t> embedding() const { return embedding_; }
  Eigen::Index total_size() const { return total_; }
  std::optional<std::size_t> find(std::string_view name) const;

 private:
  std::size_t add(std::string name, TensorKind kind, Eigen::Index rows, Eigen::Index cols);

  std::vector<TensorInfo> tensors_;
  std::vector<Layer> layers_;
  std::size_t classifier_w_ = 0;
  std::size_t classifier_b_ = 0;
  std::optional<std::size_t> embedding_;
  Eigen::Index total_ = 0;
};

/// Flat parameter (or gradient) buffer with named row-major tensor views.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), values_(Vector<T>::Zero(layout_->total_size())) {}

  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }

  Vector<T>& values() { return values_; }
  const Vector<T>& values() const { return values_; }

  Eigen::Map<Matrix<T>> tensor(std::size_t i) {
    const auto& t = layout_->tensors()[i];
    return Eigen::Map<Matrix<T>>(values_.data() + t.offset, t.rows, t.cols);
  }
  Eigen::Map<const Matrix<T>> tensor(std::size_t i) const {
    const auto& t = layout_->tensors()[i];
    return Eigen::Map<const Matrix<T>>(values_.data() + t.offset, t.rows, t.cols);
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(layout_);
    out.values() = values_.template cast<U>();
    return out;
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vector<T> values_;
};

// ---- inputs -------------------------------------------------------------

/// One distinct message: either a fixed vector or the subword pieces whose
/// trainable rows are averaged.
struct MessageInput {
  std::vector<double> fixed;
  std::vector<wordpiece::PieceId> pieces;
  bool trainable = false;
};

class InputBank {
 public:
  explicit InputBank(std::size_t dim = 0) : dim_(dim) {}

  std::uint32_t add_fixed(std::vector<double> values);
  std::uint32_t add_pieces(std::vector<wordpiece::PieceId> pieces);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const MessageInput& at(std::uint32_t id) const { return entries_.at(id); }
  bool any_trainable() const;

 private:
  std::size_t dim_;
  std::vector<MessageInput> entries_;
};

/// A log sequence as message ids into an InputBank.
struct Window {
  std::vector<std::uint32_t> messages;
  Label label = Label::Normal;
  std::size_t origin = 0;
};

// ---- free operations ----------------------------------------------------

/// (pos, 2i) = sin(pos / 10000^(2i/dim)), (pos, 2i+1) = cos(same).
/// Throws std::invalid_argument for odd dim.
Matrix<double> positional_encoding(std::size_t seq_len, std::size_t dim);

/// Per head softmax(Q_h K_h^T / sqrt(dim/heads)) V_h, heads concatenated and
/// projected by `wo` plus `bo`. Q, K, V are n x dim.
template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                               std::size_t heads, const Matrix<T>& wo, const RowVector<T>& bo);

/// Row-wise attention weights of one head, for inspection.
template <typename T>
Matrix<T> attention_weights(const Matrix<T>& q_head, const Matrix<T>& k_head);

template <typename T>
T gelu(T x);

// ---- classifier ---------------------------------------------------------

template <typename T>
struct Prediction {
  T p_normal = 0;
  T p_anomalous = 0;
  std::array<T, 2> logits{};
};

struct GradOptions {
  /// Enables dropout; each window's mask derives from this seed and the
  /// window's position in the batch.
  std::optional<std::uint64_t> dropout_seed;
  std::size_t threads = 1;
};

/// Sinusoidal position encoding, post-norm encoder layers (GELU feed-forward),
/// masked mean pooling, dropout, linear head and softmax over two classes.
template <typename T>
class TransformerClassifier {
 public:
  /// Windows are processed in fixed groups of this many, so gradient
  /// reduction order does not depend on the thread count.
  static constexpr std::size_t kChunkWindows = 16;

  explicit TransformerClassifier(ModelConfig config, std::size_t embedding_rows = 0);

  const ModelConfig& config() const { return config_; }
  std::shared_ptr<const ParamLayout> layout() const { return layout_; }

  /// Glorot-uniform weights, zero biases, unit layer-norm gains; the
  /// embedding matrix (if any) uniform in [-0.05, 0.05].
  ParamSet<T> init_params(std::uint64_t seed) const;

  /// Forward pass over one window of message embeddings (rows). Windows
  /// shorter than seq_len behave as zero-padded and masked.
  Prediction<T> forward(const Matrix<T>& window, const ParamSet<T>& params, bool train_mode = false,
                        std::uint64_t dropout_seed = 0) const;

  std::vector<Prediction<T>> predict(std::span<const Window> windows, const InputBank& bank,
                                     const ParamSet<T>& params, std::size_t threads = 1) const;

  /// Mean cross-entropy over the batch; `grads` is overwritten.
  T loss_and_gradients(std::span<const Window> batch, const InputBank& bank,
                       const ParamSet<T>& params, ParamSet<T>& grads,
                       const GradOptions& options = {}) const;

  /// Same over explicit embedding matrices.
  T loss_and_gradients(std::span<const Matrix<T>> windows, std::span<const Label> labels,
                       const ParamSet<T>& params, ParamSet<T>& grads,
                       const GradOptions& options = {}) const;

  /// Builds a window's input rows from the bank (trainable rows averaged
  /// from the embedding tensor in `params`).
  Matrix<T> gather(const Window& window, const InputBank& bank, const ParamSet<T>& params) const;

  /// Trainable subword rows enter the encoder multiplied by sqrt(dim).
  T embedding_scale() const { return std::sqrt(static_cast<T>(config_.dim)); }

  struct Stack;
  struct Cache;

 private:
  void forward_stack(const Stack& stack, const ParamSet<T>& params, Cache& cache) const;
  void backward_stack(const Stack& stack, const Cache& cache, const ParamSet<T>& params,
                      ParamSet<T>& grads) const;
  T chunk_loss_and_gradients(const Stack& stack, const ParamSet<T>& params,
                             ParamSet<T>& grads) const;
  Stack stack_windows(std::span<const Window> windows, const InputBank& bank,
                      const ParamSet<T>& params, std::size_t first_index,
                      const GradOptions& options) const;

  ModelConfig config_;
  std::shared_ptr<const ParamLayout> layout_;
  Matrix<T> pe_;
};

/// Anomalous iff p_anomalous >= threshold.
Label decide(double p_anomalous, double threshold = 0.5);

template <typename T>
std::vector<Label> detect(const TransformerClassifier<T>& model, std::span<const Window> windows,
                          const InputBank& bank, const ParamSet<T>& params,
                          double threshold = 0.5, std::size_t threads = 1);

}  // namespace neurallog::model
