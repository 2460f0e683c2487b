#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tss {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Predictions and labels are 0/1; lengths must match and be non-zero.
Confusion confusion(std::span<const int> predictions, std::span<const int> labels);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Normal-approximation half-width z * sqrt(p (1 - p) / n).
double wald_ci_halfwidth(double p_hat, std::size_t n, double z = 1.96);

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs in which
/// the positive scores higher, ties counting one half. Needs both classes.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// 2 tp / (2 tp + fp + fn), and 0 when that denominator is 0.
double f1_score(std::span<const int> predictions, std::span<const int> labels);
double f1_from_confusion(const Confusion& c);

/// 1 where score >= threshold.
std::vector<int> binarize(std::span<const double> scores, double threshold = 0.5);

struct MetricsReport {
  std::string experiment_id;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double ci_halfwidth = 0.0;
  double auc = 0.0;
  double f1 = 0.0;
  Confusion confusion;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// All metrics for one model from its test-set scores.
MetricsReport make_report(std::string experiment_id, std::span<const double> scores,
                          std::span<const int> labels, double threshold = 0.5);

/// Round to `decimals` places, ties to even.
double round_half_even(double value, int decimals);

enum class TableFormat { text, csv };
TableFormat parse_table_format(std::string_view text);

/// One row per report, input order, values at 4 decimals.
///  text: "experiment | accuracy | auc | f1", rows "id | 0.8621 +/- 0.0474 | 0.8609 | 0.8704"
///  csv:  experiment_id,n_test,accuracy,ci_halfwidth,auc,f1,tp,fp,tn,fn
std::string render_results_table(std::span<const MetricsReport> reports, TableFormat format);

/// Parses the csv schema above (any float precision).
std::vector<MetricsReport> parse_results_csv(std::string_view text);

/// Per-experiment report file: the csv schema with one row at full precision.
void write_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace tss
