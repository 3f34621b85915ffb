#include "neurallog/eval.hpp"

#include <cmath>
#include <iomanip>
#include <stdexcept>

namespace neurallog::eval {

ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("prediction count " + std::to_string(predictions.size()) +
                                " differs from truth count " + std::to_string(truths.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == Label::Anomalous;
    const bool t = truths[i] == Label::Anomalous;
    if (p && t) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Metrics precision_recall_f1(const ConfusionCounts& c) {
  auto ratio = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
  Metrics m;
  m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LrModel lr_train(std::span<const std::vector<double>> vectors, std::span<const Label> labels,
                 const LrConfig& config) {
  if (vectors.empty()) throw std::invalid_argument("no training vectors");
  if (vectors.size() != labels.size()) throw std::invalid_argument("vector/label count mismatch");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw std::invalid_argument("count vectors differ in dimension");
  }
  LrModel model;
  model.weights.assign(dim, 0.0);
  const double n = static_cast<double>(vectors.size());
  std::vector<double> grad(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const double err = lr_probability(model, vectors[i]) - (labels[i] == Label::Anomalous ? 1.0 : 0.0);
      for (std::size_t j = 0; j < dim; ++j) grad[j] += err * vectors[i][j];
      grad_b += err;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      model.weights[j] -= config.learning_rate * (grad[j] / n + config.l2 * model.weights[j]);
    }
    model.bias -= config.learning_rate * grad_b / n;
  }
  return model;
}

double lr_probability(const LrModel& model, std::span<const double> vector) {
  if (vector.size() != model.weights.size()) {
    throw std::invalid_argument("count vector of dimension " + std::to_string(vector.size()) +
                                " for a model of dimension " + std::to_string(model.weights.size()));
  }
  double z = model.bias;
  for (std::size_t j = 0; j < vector.size(); ++j) z += model.weights[j] * vector[j];
  return sigmoid(z);
}

Label lr_predict(const LrModel& model, std::span<const double> vector) {
  return lr_probability(model, vector) >= 0.5 ? Label::Anomalous : Label::Normal;
}

void write_report_tsv(std::ostream& out, std::span<const ReportRow> rows) {
  out << "dataset\tmode\tprecision\trecall\tf1\ttp\tfp\tfn\ttn\n";
  for (const auto& row : rows) {
    const auto m = precision_recall_f1(row.counts);
    out << row.dataset << '\t' << row.mode << '\t' << std::fixed << std::setprecision(6)
        << m.precision << '\t' << m.recall << '\t' << m.f1 << '\t' << row.counts.tp << '\t'
        << row.counts.fp << '\t' << row.counts.fn << '\t' << row.counts.tn << '\n';
  }
}

}  // namespace neurallog::eval
