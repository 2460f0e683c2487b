#include "tss/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tss/errors.hpp"

namespace tss {

namespace {

constexpr std::string_view kCsvHeader = "experiment_id,n_test,accuracy,ci_halfwidth,auc,f1,tp,fp,tn,fn";

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw InputError("predictions and labels differ in length");
  if (a == 0) throw InputError("metrics need at least one sample");
}

void check_binary(int v) {
  if (v != 0 && v != 1) throw InputError("binary value expected, got " + std::to_string(v));
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", round_half_even(v, 4));
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw InputError("invalid number in results csv: '" + std::string(text) + "'");
  }
  return v;
}

std::string csv_row(const MetricsReport& r, bool full_precision) {
  if (r.experiment_id.find_first_of(",\n\"") != std::string::npos) {
    throw InputError("experiment id must not contain commas, quotes or newlines: " + r.experiment_id);
  }
  auto num = [&](double v) { return full_precision ? shortest(v) : fixed4(v); };
  std::ostringstream out;
  out << r.experiment_id << "," << r.n_test << "," << num(r.accuracy) << "," << num(r.ci_halfwidth)
      << "," << num(r.auc) << "," << num(r.f1) << "," << r.confusion.tp << "," << r.confusion.fp
      << "," << r.confusion.tn << "," << r.confusion.fn;
  return out.str();
}

}  // namespace

Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_binary(predictions[i]);
    check_binary(labels[i]);
    if (predictions[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp) += 1;
    } else {
      (labels[i] == 0 ? c.tn : c.fn) += 1;
    }
  }
  return c;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  const Confusion c = confusion(predictions, labels);
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double wald_ci_halfwidth(double p_hat, std::size_t n, double z) {
  if (n == 0) throw InputError("wald_ci_halfwidth needs n >= 1");
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw InputError("p_hat must lie in [0, 1]");
  return z * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n));
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    check_binary(labels[i]);
    if (!std::isfinite(scores[i])) throw InputError("auc_roc: non-finite score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk groups of equal score upward; a positive beats every negative below
  // its group and ties with the negatives inside it.
  double wins = 0.0;
  std::size_t negatives_below = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    wins += static_cast<double>(pos * negatives_below) + 0.5 * static_cast<double>(pos * neg);
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  if (positives == 0 || negatives_below == 0) {
    throw InputError("auc_roc is undefined unless both classes are present");
  }
  return wins / (static_cast<double>(positives) * static_cast<double>(negatives_below));
}

double f1_from_confusion(const Confusion& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f1_score(std::span<const int> predictions, std::span<const int> labels) {
  return f1_from_confusion(confusion(predictions, labels));
}

std::vector<int> binarize(std::span<const double> scores, double threshold) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= threshold ? 1 : 0);
  return out;
}

MetricsReport make_report(std::string experiment_id, std::span<const double> scores,
                          std::span<const int> labels, double threshold) {
  const auto predictions = binarize(scores, threshold);
  MetricsReport r;
  r.experiment_id = std::move(experiment_id);
  r.confusion = confusion(predictions, labels);
  r.n_test = r.confusion.total();
  r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.n_test);
  r.ci_halfwidth = wald_ci_halfwidth(r.accuracy, r.n_test);
  r.auc = auc_roc(scores, labels);
  r.f1 = f1_from_confusion(r.confusion);
  return r;
}

double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // nearbyint honours the default rounding mode, which is ties-to-even.
  return std::nearbyint(value * scale) / scale;
}

TableFormat parse_table_format(std::string_view text) {
  if (text == "text") return TableFormat::text;
  if (text == "csv") return TableFormat::csv;
  throw InputError("unknown table format: '" + std::string(text) + "' (text or csv)");
}

std::string render_results_table(std::span<const MetricsReport> reports, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << kCsvHeader << "\n";
    for (const auto& r : reports) out << csv_row(r, false) << "\n";
    return out.str();
  }
  out << "experiment | accuracy | auc | f1\n";
  for (const auto& r : reports) {
    out << r.experiment_id << " | " << fixed4(r.accuracy) << " +/- " << fixed4(r.ci_halfwidth)
        << " | " << fixed4(r.auc) << " | " << fixed4(r.f1) << "\n";
  }
  return out.str();
}

std::vector<MetricsReport> parse_results_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw InputError("results csv: bad header");
  std::vector<MetricsReport> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw InputError("results csv: expected 10 columns in '" + line + "'");
    MetricsReport r;
    r.experiment_id = f[0];
    r.n_test = parse_number<std::size_t>(f[1]);
    r.accuracy = parse_number<double>(f[2]);
    r.ci_halfwidth = parse_number<double>(f[3]);
    r.auc = parse_number<double>(f[4]);
    r.f1 = parse_number<double>(f[5]);
    r.confusion = {parse_number<std::size_t>(f[6]), parse_number<std::size_t>(f[7]),
                   parse_number<std::size_t>(f[8]), parse_number<std::size_t>(f[9])};
    if (r.confusion.total() != r.n_test) {
      throw InputError("results csv: confusion counts do not sum to n_test for " + r.experiment_id);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write report: " + path.string());
  out << kCsvHeader << "\n" << csv_row(report, true) << "\n";
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read report: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  auto rows = parse_results_csv(buf.str());
  if (rows.size() != 1) throw InputError("report file must hold exactly one row: " + path.string());
  return rows.front();
}

}  // namespace tss
