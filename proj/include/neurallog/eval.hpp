#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "neurallog/core.hpp"

namespace neurallog::eval {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Throws std::invalid_argument on a length mismatch.
ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> truths);

struct Metrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Any 0/0 is defined as 0.
Metrics precision_recall_f1(const ConfusionCounts& c);

// Logistic regression over log count vectors.

struct LrConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 1000;
  double l2 = 1e-4;  // not applied to the bias
};

struct LrModel {
  std::vector<double> weights;
  double bias = 0;
};

/// Full-batch gradient descent on the mean log loss. Throws
/// std::invalid_argument on empty input or mismatched dimensions.
LrModel lr_train(std::span<const std::vector<double>> vectors, std::span<const Label> labels,
                 const LrConfig& config = {});
double lr_probability(const LrModel& model, std::span<const double> vector);
/// Anomalous iff sigmoid(w.x + b) >= 0.5.
Label lr_predict(const LrModel& model, std::span<const double> vector);

struct ReportRow {
  std::string dataset;
  std::string mode;
  ConfusionCounts counts;
};

/// `dataset mode precision recall f1 tp fp fn tn`, tab separated, with header.
void write_report_tsv(std::ostream& out, std::span<const ReportRow> rows);

}  // namespace neurallog::eval
