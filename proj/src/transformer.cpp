#include "neurallog/transformer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "neurallog/embed.hpp"
#include "neurallog/hash.hpp"
#include "neurallog/parallel.hpp"
#include "neurallog/random.hpp"

namespace neurallog::model {

using Index = Eigen::Index;

namespace {

constexpr double kLayerNormEps = 1e-6;

}  // namespace

void ModelConfig::validate() const {
  if (dim == 0 || heads == 0 || ffn_size == 0 || layers == 0 || seq_len == 0) {
    throw std::invalid_argument("model sizes must be positive");
  }
  if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");
  if (dim % 2 != 0) throw std::invalid_argument("dim must be even for positional encoding");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
  if (classes != 2) throw std::invalid_argument("only two classes are supported");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience > max_epochs) throw std::invalid_argument("patience must not exceed max_epochs");
  if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be non-negative");
}

// ---- layout -------------------------------------------------------------

std::size_t ParamLayout::add(std::string name, TensorKind kind, Index rows, Index cols) {
  tensors_.push_back(TensorInfo{std::move(name), kind, rows, cols, total_});
  total_ += rows * cols;
  return tensors_.size() - 1;
}

std::shared_ptr<const ParamLayout> ParamLayout::build(const ModelConfig& config,
                                                      std::size_t embedding_rows) {
  config.validate();
  auto layout = std::make_shared<ParamLayout>();
  const auto d = static_cast<Index>(config.dim);
  const auto f = static_cast<Index>(config.ffn_size);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.wq = layout->add(p + "attn.wq", TensorKind::Weight, d, d);
    L.bq = layout->add(p + "attn.bq", TensorKind::Bias, 1, d);
    L.wk = layout->add(p + "attn.wk", TensorKind::Weight, d, d);
    L.bk = layout->add(p + "attn.bk", TensorKind::Bias, 1, d);
    L.wv = layout->add(p + "attn.wv", TensorKind::Weight, d, d);
    L.bv = layout->add(p + "attn.bv", TensorKind::Bias, 1, d);
    L.wo = layout->add(p + "attn.wo", TensorKind::Weight, d, d);
    L.bo = layout->add(p + "attn.bo", TensorKind::Bias, 1, d);
    L.ln1_gain = layout->add(p + "ln1.gain", TensorKind::Gain, 1, d);
    L.ln1_bias = layout->add(p + "ln1.bias", TensorKind::Bias, 1, d);
    L.ffn1_w = layout->add(p + "ffn1.w", TensorKind::Weight, d, f);
    L.ffn1_b = layout->add(p + "ffn1.b", TensorKind::Bias, 1, f);
    L.ffn2_w = layout->add(p + "ffn2.w", TensorKind::Weight, f, d);
    L.ffn2_b = layout->add(p + "ffn2.b", TensorKind::Bias, 1, d);
    L.ln2_gain = layout->add(p + "ln2.gain", TensorKind::Gain, 1, d);
    L.ln2_bias = layout->add(p + "ln2.bias", TensorKind::Bias, 1, d);
    layout->layers_.push_back(L);
  }
  layout->classifier_w_ =
      layout->add("classifier.w", TensorKind::Weight, d, static_cast<Index>(config.classes));
  layout->classifier_b_ =
      layout->add("classifier.b", TensorKind::Bias, 1, static_cast<Index>(config.classes));
  if (embedding_rows > 0) {
    layout->embedding_ = layout->add("subword_embedding", TensorKind::Embedding,
                                     static_cast<Index>(embedding_rows), d);
  }
  return layout;
}

std::optional<std::size_t> ParamLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return std::nullopt;
}

// ---- inputs -------------------------------------------------------------

std::uint32_t InputBank::add_fixed(std::vector<double> values) {
  if (values.size() != dim_) {
    throw std::invalid_argument("input vector of length " + std::to_string(values.size()) +
                                " for model dim " + std::to_string(dim_));
  }
  MessageInput m;
  m.fixed = std::move(values);
  entries_.push_back(std::move(m));
  return static_cast<std::uint32_t>(entries_.size() - 1);
}

std::uint32_t InputBank::add_pieces(std::vector<wordpiece::PieceId> pieces) {
  MessageInput m;
  m.pieces = std::move(pieces);
  m.trainable = true;
  entries_.push_back(std::move(m));
  return static_cast<std::uint32_t>(entries_.size() - 1);
}

bool InputBank::any_trainable() const {
  for (const auto& e : entries_) {
    if (e.trainable) return true;
  }
  return false;
}

// ---- free operations ----------------------------------------------------

Matrix<double> positional_encoding(std::size_t seq_len, std::size_t dim) {
  if (dim % 2 != 0) throw std::invalid_argument("positional encoding needs an even dim");
  Matrix<double> pe(static_cast<Index>(seq_len), static_cast<Index>(dim));
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe(static_cast<Index>(pos), static_cast<Index>(2 * i)) = std::sin(angle);
      pe(static_cast<Index>(pos), static_cast<Index>(2 * i + 1)) = std::cos(angle);
    }
  }
  return pe;
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

namespace {

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

template <typename T>
void softmax_rows(Matrix<T>& s) {
  for (Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  Vector<T> inv_std;
};

template <typename T, typename Gain, typename Bias>
Matrix<T> layer_norm(const Matrix<T>& x, const Gain& gain, const Bias& bias, LayerNormCache<T>& cache) {
  const Vector<T> mean = x.rowwise().mean();
  Matrix<T> centered = x.colwise() - mean;
  const Vector<T> var = centered.array().square().rowwise().mean();
  cache.inv_std = (var.array() + T(kLayerNormEps)).rsqrt();
  cache.xhat = cache.inv_std.asDiagonal() * centered;
  Matrix<T> out = cache.xhat * gain.row(0).asDiagonal();
  out.rowwise() += bias.row(0);
  return out;
}

template <typename T, typename Gain, typename GradGain, typename GradBias>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& cache, const Gain& gain,
                              GradGain&& dgain, GradBias&& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Matrix<T> dxhat = dy * gain.row(0).asDiagonal();
  const Vector<T> mean_dxhat = dxhat.rowwise().mean();
  const Vector<T> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().mean();
  Matrix<T> dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx -= mean_dxhat_xhat.asDiagonal() * cache.xhat;
  return cache.inv_std.asDiagonal() * dx;
}

}  // namespace

template <typename T>
Matrix<T> attention_weights(const Matrix<T>& q_head, const Matrix<T>& k_head) {
  const T scale = T(1) / std::sqrt(static_cast<T>(q_head.cols()));
  Matrix<T> s = (q_head * k_head.transpose()) * scale;
  softmax_rows(s);
  return s;
}

template <typename T>
Matrix<T> multi_head_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                               std::size_t heads, const Matrix<T>& wo, const RowVector<T>& bo) {
  if (q.cols() != k.cols() || q.cols() != v.cols() || k.rows() != v.rows() ||
      heads == 0 || q.cols() % static_cast<Index>(heads) != 0 || wo.rows() != q.cols() ||
      bo.cols() != wo.cols()) {
    throw std::invalid_argument("attention shape mismatch");
  }
  const Index dh = q.cols() / static_cast<Index>(heads);
  Matrix<T> concat(q.rows(), q.cols());
  for (Index h = 0; h < static_cast<Index>(heads); ++h) {
    const Matrix<T> qh = q.middleCols(h * dh, dh);
    const Matrix<T> kh = k.middleCols(h * dh, dh);
    concat.middleCols(h * dh, dh) = attention_weights<T>(qh, kh) * v.middleCols(h * dh, dh);
  }
  Matrix<T> out = concat * wo;
  out.rowwise() += bo;
  return out;
}

// ---- classifier ---------------------------------------------------------

template <typename T>
struct TransformerClassifier<T>::Stack {
  Matrix<T> x;  // all windows' rows, position encoding added
  std::vector<Index> offsets;
  std::vector<Index> lengths;
  std::vector<int> labels;           // class per window, -1 if unlabeled
  Matrix<T> dropout_mask;            // windows x dim, empty when dropout is off
  std::vector<std::uint32_t> row_message;  // bank id per row when scatter is needed
  const InputBank* bank = nullptr;

  std::size_t windows() const { return offsets.size(); }
};

template <typename T>
struct TransformerClassifier<T>::Cache {
  struct Layer {
    Matrix<T> input, q, k, v, concat, h1, z, g;
    LayerNormCache<T> ln1, ln2;
    std::vector<Matrix<T>> attn;  // window-major, then head
  };
  std::vector<Layer> layers;
  Matrix<T> top;      // output of the last layer
  Matrix<T> pooled;   // windows x dim
  Matrix<T> dropped;  // pooled after dropout
  Matrix<T> logits;   // windows x 2
  Matrix<T> probs;
};

template <typename T>
TransformerClassifier<T>::TransformerClassifier(ModelConfig config, std::size_t embedding_rows)
    : config_(config),
      layout_(ParamLayout::build(config, embedding_rows)),
      pe_(positional_encoding(config.seq_len, config.dim).template cast<T>()) {}

template <typename T>
ParamSet<T> TransformerClassifier<T>::init_params(std::uint64_t seed) const {
  ParamSet<T> params(layout_);
  Rng rng(mix_seed(seed, 0));
  for (std::size_t i = 0; i < layout_->tensors().size(); ++i) {
    const auto& info = layout_->tensors()[i];
    auto t = params.tensor(i);
    switch (info.kind) {
      case TensorKind::Weight: {
        const double limit = std::sqrt(6.0 / static_cast<double>(info.rows + info.cols));
        for (Index j = 0; j < t.size(); ++j) t.data()[j] = static_cast<T>(rng.uniform(-limit, limit));
        break;
      }
      case TensorKind::Bias:
        t.setZero();
        break;
      case TensorKind::Gain:
        t.setOnes();
        break;
      case TensorKind::Embedding:
        t = embed::init_subword_matrix(static_cast<std::size_t>(info.rows),
                                       static_cast<std::size_t>(info.cols), mix_seed(seed, 1))
                .template cast<T>();
        break;
    }
  }
  return params;
}

template <typename T>
Matrix<T> TransformerClassifier<T>::gather(const Window& window, const InputBank& bank,
                                           const ParamSet<T>& params) const {
  const auto n = static_cast<Index>(window.messages.size());
  const auto d = static_cast<Index>(config_.dim);
  if (bank.dim() != config_.dim) throw std::invalid_argument("input bank dim differs from model dim");
  Matrix<T> x(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto& msg = bank.at(window.messages[static_cast<std::size_t>(i)]);
    if (msg.trainable) {
      const auto emb = layout_->embedding();
      if (!emb) throw std::invalid_argument("trainable input but the model has no embedding matrix");
      x.row(i) = embedding_scale() * embed::embed_message_avg<T>(msg.pieces, params.tensor(*emb));
    } else {
      for (Index j = 0; j < d; ++j) x(i, j) = static_cast<T>(msg.fixed[static_cast<std::size_t>(j)]);
    }
  }
  return x;
}

namespace {

template <typename T>
Matrix<T> dropout_mask_row(std::uint64_t seed, Index dim, double rate) {
  Matrix<T> mask(1, dim);
  Rng rng(seed);
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  for (Index j = 0; j < dim; ++j) mask(0, j) = rng.uniform() < rate ? T(0) : keep_scale;
  return mask;
}

}  // namespace

template <typename T>
typename TransformerClassifier<T>::Stack TransformerClassifier<T>::stack_windows(
    std::span<const Window> windows, const InputBank& bank, const ParamSet<T>& params,
    std::size_t first_index, const GradOptions& options) const {
  Stack s;
  s.bank = &bank;
  Index total = 0;
  for (const auto& w : windows) {
    if (w.messages.empty()) throw std::invalid_argument("empty window");
    if (w.messages.size() > config_.seq_len) {
      throw std::invalid_argument("window longer than seq_len");
    }
    s.offsets.push_back(total);
    s.lengths.push_back(static_cast<Index>(w.messages.size()));
    s.labels.push_back(w.label == Label::Anomalous ? 1 : 0);
    total += static_cast<Index>(w.messages.size());
  }
  const auto d = static_cast<Index>(config_.dim);
  s.x.resize(total, d);
  const bool scatter = layout_->embedding().has_value();
  for (std::size_t b = 0; b < windows.size(); ++b) {
    s.x.middleRows(s.offsets[b], s.lengths[b]) = gather(windows[b], bank, params);
    if (scatter) {
      for (auto m : windows[b].messages) s.row_message.push_back(m);
    }
  }
  if (config_.positional_encoding) {
    for (std::size_t b = 0; b < windows.size(); ++b) {
      s.x.middleRows(s.offsets[b], s.lengths[b]) += pe_.topRows(s.lengths[b]);
    }
  }
  if (options.dropout_seed && config_.dropout > 0.0) {
    s.dropout_mask.resize(static_cast<Index>(windows.size()), d);
    for (std::size_t b = 0; b < windows.size(); ++b) {
      s.dropout_mask.row(static_cast<Index>(b)) =
          dropout_mask_row<T>(mix_seed(*options.dropout_seed, first_index + b), d, config_.dropout);
    }
  }
  return s;
}

template <typename T>
void TransformerClassifier<T>::forward_stack(const Stack& s, const ParamSet<T>& params,
                                             Cache& cache) const {
  const auto d = static_cast<Index>(config_.dim);
  const auto heads = static_cast<Index>(config_.heads);
  const Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t nwin = s.windows();

  cache.layers.resize(layout_->layers().size());
  const Matrix<T>* input = &s.x;
  for (std::size_t l = 0; l < layout_->layers().size(); ++l) {
    const auto& L = layout_->layers()[l];
    auto& c = cache.layers[l];
    c.input = *input;
    c.q = c.input * params.tensor(L.wq);
    c.q.rowwise() += params.tensor(L.bq).row(0);
    c.k = c.input * params.tensor(L.wk);
    c.k.rowwise() += params.tensor(L.bk).row(0);
    c.v = c.input * params.tensor(L.wv);
    c.v.rowwise() += params.tensor(L.bv).row(0);

    c.concat.resize(c.input.rows(), d);
    c.attn.resize(nwin * static_cast<std::size_t>(heads));
    for (std::size_t b = 0; b < nwin; ++b) {
      const Index o = s.offsets[b];
      const Index n = s.lengths[b];
      for (Index h = 0; h < heads; ++h) {
        Matrix<T>& a = c.attn[b * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        a.noalias() = c.q.block(o, h * dh, n, dh) * c.k.block(o, h * dh, n, dh).transpose();
        a *= scale;
        softmax_rows(a);
        c.concat.block(o, h * dh, n, dh).noalias() = a * c.v.block(o, h * dh, n, dh);
      }
    }
    Matrix<T> r1 = c.input;
    r1.noalias() += c.concat * params.tensor(L.wo);
    r1.rowwise() += params.tensor(L.bo).row(0);
    c.h1 = layer_norm(r1, params.tensor(L.ln1_gain), params.tensor(L.ln1_bias), c.ln1);

    c.z = c.h1 * params.tensor(L.ffn1_w);
    c.z.rowwise() += params.tensor(L.ffn1_b).row(0);
    c.g = c.z.unaryExpr([](T x) { return gelu(x); });
    Matrix<T> r2 = c.h1;
    r2.noalias() += c.g * params.tensor(L.ffn2_w);
    r2.rowwise() += params.tensor(L.ffn2_b).row(0);
    Matrix<T> out = layer_norm(r2, params.tensor(L.ln2_gain), params.tensor(L.ln2_bias), c.ln2);
    if (l + 1 < layout_->layers().size()) {
      cache.layers[l + 1].input = std::move(out);
      input = &cache.layers[l + 1].input;
    } else {
      cache.top = std::move(out);
    }
  }

  cache.pooled.resize(static_cast<Index>(nwin), d);
  for (std::size_t b = 0; b < nwin; ++b) {
    cache.pooled.row(static_cast<Index>(b)) =
        cache.top.middleRows(s.offsets[b], s.lengths[b]).colwise().mean();
  }
  cache.dropped = s.dropout_mask.size() > 0
                      ? Matrix<T>(cache.pooled.cwiseProduct(s.dropout_mask))
                      : cache.pooled;
  cache.logits = cache.dropped * params.tensor(layout_->classifier_w());
  cache.logits.rowwise() += params.tensor(layout_->classifier_b()).row(0);
  if (!cache.logits.allFinite()) throw NumericalError("numerical overflow");
  cache.probs = cache.logits;
  softmax_rows(cache.probs);
}

template <typename T>
void TransformerClassifier<T>::backward_stack(const Stack& s, const Cache& cache,
                                              const ParamSet<T>& params, ParamSet<T>& grads) const {
  const auto d = static_cast<Index>(config_.dim);
  const auto heads = static_cast<Index>(config_.heads);
  const Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t nwin = s.windows();

  Matrix<T> dlogits = cache.probs;
  for (std::size_t b = 0; b < nwin; ++b) dlogits(static_cast<Index>(b), s.labels[b]) -= T(1);

  grads.tensor(layout_->classifier_w()).noalias() += cache.dropped.transpose() * dlogits;
  grads.tensor(layout_->classifier_b()).row(0) += dlogits.colwise().sum();
  Matrix<T> dpooled = dlogits * params.tensor(layout_->classifier_w()).transpose();
  if (s.dropout_mask.size() > 0) dpooled = dpooled.cwiseProduct(s.dropout_mask);

  Matrix<T> dout(cache.top.rows(), d);
  for (std::size_t b = 0; b < nwin; ++b) {
    const RowVector<T> share = dpooled.row(static_cast<Index>(b)) / static_cast<T>(s.lengths[b]);
    dout.middleRows(s.offsets[b], s.lengths[b]).rowwise() = share;
  }

  for (std::size_t li = layout_->layers().size(); li-- > 0;) {
    const auto& L = layout_->layers()[li];
    const auto& c = cache.layers[li];

    // ln2(h1 + ffn(h1))
    const Matrix<T> dr2 = layer_norm_backward(dout, c.ln2, params.tensor(L.ln2_gain),
                                              grads.tensor(L.ln2_gain), grads.tensor(L.ln2_bias));
    grads.tensor(L.ffn2_w).noalias() += c.g.transpose() * dr2;
    grads.tensor(L.ffn2_b).row(0) += dr2.colwise().sum();
    Matrix<T> dz = dr2 * params.tensor(L.ffn2_w).transpose();
    dz.array() *= c.z.unaryExpr([](T x) { return gelu_grad(x); }).array();
    grads.tensor(L.ffn1_w).noalias() += c.h1.transpose() * dz;
    grads.tensor(L.ffn1_b).row(0) += dz.colwise().sum();
    Matrix<T> dh1 = dr2;
    dh1.noalias() += dz * params.tensor(L.ffn1_w).transpose();

    // ln1(input + attention(input))
    const Matrix<T> dr1 = layer_norm_backward(dh1, c.ln1, params.tensor(L.ln1_gain),
                                              grads.tensor(L.ln1_gain), grads.tensor(L.ln1_bias));
    grads.tensor(L.wo).noalias() += c.concat.transpose() * dr1;
    grads.tensor(L.bo).row(0) += dr1.colwise().sum();
    const Matrix<T> dconcat = dr1 * params.tensor(L.wo).transpose();

    Matrix<T> dq(c.q.rows(), d);
    Matrix<T> dk(c.k.rows(), d);
    Matrix<T> dv(c.v.rows(), d);
    for (std::size_t b = 0; b < nwin; ++b) {
      const Index o = s.offsets[b];
      const Index n = s.lengths[b];
      for (Index h = 0; h < heads; ++h) {
        const Matrix<T>& a = c.attn[b * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        const auto dO = dconcat.block(o, h * dh, n, dh);
        dv.block(o, h * dh, n, dh).noalias() = a.transpose() * dO;
        Matrix<T> da = dO * c.v.block(o, h * dh, n, dh).transpose();
        const Vector<T> rowdot = (da.array() * a.array()).rowwise().sum();
        Matrix<T> ds = a.cwiseProduct(Matrix<T>(da.colwise() - rowdot));
        ds *= scale;
        dq.block(o, h * dh, n, dh).noalias() = ds * c.k.block(o, h * dh, n, dh);
        dk.block(o, h * dh, n, dh).noalias() = ds.transpose() * c.q.block(o, h * dh, n, dh);
      }
    }
    grads.tensor(L.wq).noalias() += c.input.transpose() * dq;
    grads.tensor(L.bq).row(0) += dq.colwise().sum();
    grads.tensor(L.wk).noalias() += c.input.transpose() * dk;
    grads.tensor(L.bk).row(0) += dk.colwise().sum();
    grads.tensor(L.wv).noalias() += c.input.transpose() * dv;
    grads.tensor(L.bv).row(0) += dv.colwise().sum();

    Matrix<T> din = dr1;
    din.noalias() += dq * params.tensor(L.wq).transpose();
    din.noalias() += dk * params.tensor(L.wk).transpose();
    din.noalias() += dv * params.tensor(L.wv).transpose();
    dout = std::move(din);
  }

  if (const auto emb = layout_->embedding(); emb && !s.row_message.empty()) {
    auto gemb = grads.tensor(*emb);
    for (Index r = 0; r < dout.rows(); ++r) {
      const auto& msg = s.bank->at(s.row_message[static_cast<std::size_t>(r)]);
      if (!msg.trainable || msg.pieces.empty()) continue;
      const RowVector<T> share = dout.row(r) * (embedding_scale() / static_cast<T>(msg.pieces.size()));
      for (auto p : msg.pieces) gemb.row(static_cast<Index>(p)) += share;
    }
  }
}

template <typename T>
T TransformerClassifier<T>::chunk_loss_and_gradients(const Stack& s, const ParamSet<T>& params,
                                                     ParamSet<T>& grads) const {
  Cache cache;
  forward_stack(s, params, cache);
  T loss = 0;
  for (std::size_t b = 0; b < s.windows(); ++b) {
    const auto row = cache.logits.row(static_cast<Index>(b));
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    loss += lse - row(s.labels[b]);
  }
  backward_stack(s, cache, params, grads);
  return loss;
}

template <typename T>
T TransformerClassifier<T>::loss_and_gradients(std::span<const Window> batch, const InputBank& bank,
                                               const ParamSet<T>& params, ParamSet<T>& grads,
                                               const GradOptions& options) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t chunks = (batch.size() + kChunkWindows - 1) / kChunkWindows;
  std::vector<ParamSet<T>> chunk_grads(chunks);
  std::vector<T> chunk_loss(chunks, T(0));
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    const std::size_t first = c * kChunkWindows;
    const std::size_t count = std::min(kChunkWindows, batch.size() - first);
    const Stack s = stack_windows(batch.subspan(first, count), bank, params, first, options);
    chunk_grads[c] = ParamSet<T>(layout_);
    chunk_loss[c] = chunk_loss_and_gradients(s, params, chunk_grads[c]);
  });
  grads = std::move(chunk_grads[0]);
  T loss = chunk_loss[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    grads.values() += chunk_grads[c].values();
    loss += chunk_loss[c];
  }
  const T inv = T(1) / static_cast<T>(batch.size());
  grads.values() *= inv;
  loss *= inv;
  if (!std::isfinite(loss) || !grads.all_finite()) throw NumericalError("numerical overflow");
  return loss;
}

template <typename T>
T TransformerClassifier<T>::loss_and_gradients(std::span<const Matrix<T>> windows,
                                               std::span<const Label> labels,
                                               const ParamSet<T>& params, ParamSet<T>& grads,
                                               const GradOptions& options) const {
  if (windows.size() != labels.size()) throw std::invalid_argument("windows/labels length mismatch");
  InputBank bank(config_.dim);
  std::vector<Window> batch;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    Window w;
    w.label = labels[i];
    for (Index r = 0; r < windows[i].rows(); ++r) {
      std::vector<double> row(config_.dim);
      for (Index j = 0; j < windows[i].cols(); ++j) row[static_cast<std::size_t>(j)] = static_cast<double>(windows[i](r, j));
      w.messages.push_back(bank.add_fixed(std::move(row)));
    }
    batch.push_back(std::move(w));
  }
  return loss_and_gradients(batch, bank, params, grads, options);
}

template <typename T>
Prediction<T> TransformerClassifier<T>::forward(const Matrix<T>& window, const ParamSet<T>& params,
                                                bool train_mode, std::uint64_t dropout_seed) const {
  if (window.rows() == 0) throw std::invalid_argument("empty window");
  if (window.rows() > static_cast<Index>(config_.seq_len)) {
    throw std::invalid_argument("window longer than seq_len");
  }
  if (window.cols() != static_cast<Index>(config_.dim)) {
    throw std::invalid_argument("window width differs from model dim");
  }
  Stack s;
  s.offsets = {0};
  s.lengths = {window.rows()};
  s.labels = {-1};
  s.x = window;
  if (config_.positional_encoding) s.x += pe_.topRows(window.rows());
  if (train_mode && config_.dropout > 0.0) {
    s.dropout_mask = dropout_mask_row<T>(mix_seed(dropout_seed, 0), window.cols(), config_.dropout);
  }
  Cache cache;
  forward_stack(s, params, cache);
  Prediction<T> p;
  p.logits = {cache.logits(0, 0), cache.logits(0, 1)};
  p.p_normal = cache.probs(0, 0);
  p.p_anomalous = cache.probs(0, 1);
  return p;
}

template <typename T>
std::vector<Prediction<T>> TransformerClassifier<T>::predict(std::span<const Window> windows,
                                                             const InputBank& bank,
                                                             const ParamSet<T>& params,
                                                             std::size_t threads) const {
  std::vector<Prediction<T>> out(windows.size());
  const std::size_t chunks = (windows.size() + kChunkWindows - 1) / kChunkWindows;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t first = c * kChunkWindows;
    const std::size_t count = std::min(kChunkWindows, windows.size() - first);
    const Stack s = stack_windows(windows.subspan(first, count), bank, params, first, GradOptions{});
    Cache cache;
    forward_stack(s, params, cache);
    for (std::size_t b = 0; b < count; ++b) {
      auto& p = out[first + b];
      const auto r = static_cast<Index>(b);
      p.logits = {cache.logits(r, 0), cache.logits(r, 1)};
      p.p_normal = cache.probs(r, 0);
      p.p_anomalous = cache.probs(r, 1);
    }
  });
  return out;
}

Label decide(double p_anomalous, double threshold) {
  return p_anomalous >= threshold ? Label::Anomalous : Label::Normal;
}

template <typename T>
std::vector<Label> detect(const TransformerClassifier<T>& model, std::span<const Window> windows,
                          const InputBank& bank, const ParamSet<T>& params, double threshold,
                          std::size_t threads) {
  std::vector<Label> out;
  out.reserve(windows.size());
  for (const auto& p : model.predict(windows, bank, params, threads)) {
    out.push_back(decide(static_cast<double>(p.p_anomalous), threshold));
  }
  return out;
}

template float gelu<float>(float);
template double gelu<double>(double);
template Matrix<float> attention_weights<float>(const Matrix<float>&, const Matrix<float>&);
template Matrix<double> attention_weights<double>(const Matrix<double>&, const Matrix<double>&);
template Matrix<float> multi_head_attention<float>(const Matrix<float>&, const Matrix<float>&,
                                                   const Matrix<float>&, std::size_t,
                                                   const Matrix<float>&, const RowVector<float>&);
template Matrix<double> multi_head_attention<double>(const Matrix<double>&, const Matrix<double>&,
                                                     const Matrix<double>&, std::size_t,
                                                     const Matrix<double>&, const RowVector<double>&);
template class TransformerClassifier<float>;
template class TransformerClassifier<double>;
template std::vector<Label> detect<float>(const TransformerClassifier<float>&, std::span<const Window>,
                                          const InputBank&, const ParamSet<float>&, double,
                                          std::size_t);
template std::vector<Label> detect<double>(const TransformerClassifier<double>&,
                                           std::span<const Window>, const InputBank&,
                                           const ParamSet<double>&, double, std::size_t);

}  // namespace neurallog::model
