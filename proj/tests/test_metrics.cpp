#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "tss/errors.hpp"
#include "tss/metrics.hpp"

using namespace tss;

namespace {

// Brute-force pair count; independent of the sort-based implementation.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Accuracy, PaperBaselineCount) {
  std::vector<int> labels(203, 1), preds(203, 1);
  for (int i = 0; i < 43; ++i) preds[i] = 0;
  EXPECT_NEAR(accuracy(preds, labels), 160.0 / 203.0, 1e-15);
  EXPECT_NEAR(round_half_even(accuracy(preds, labels), 4), 0.7882, 1e-12);
}

TEST(Accuracy, AllCorrectAndComplement) {
  std::vector<int> y = {0, 1, 1, 0, 1};
  std::vector<int> flipped;
  for (int v : y) flipped.push_back(1 - v);
  EXPECT_DOUBLE_EQ(accuracy(y, y), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(flipped, y), 0.0);
}

TEST(Accuracy, RejectsBadLengths) {
  std::vector<int> a = {1, 0}, b = {1};
  EXPECT_THROW(accuracy(a, b), InputError);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), InputError);
  EXPECT_THROW(f1_score(a, b), InputError);
}

TEST(WaldInterval, ReproducesPrintedHalfwidths) {
  EXPECT_NEAR(wald_ci_halfwidth(0.8621, 203), 0.0474, 5e-5);
  EXPECT_NEAR(wald_ci_halfwidth(0.7882, 203), 0.0562, 5e-5);
  EXPECT_DOUBLE_EQ(wald_ci_halfwidth(1.0, 50), 0.0);
  EXPECT_DOUBLE_EQ(wald_ci_halfwidth(0.0, 50), 0.0);
  EXPECT_NEAR(wald_ci_halfwidth(0.5, 100), 0.098, 1e-12);
}

TEST(WaldInterval, MaximisedAtOneHalf) {
  const double peak = wald_ci_halfwidth(0.5, 203);
  for (int k = 0; k <= 100; ++k) {
    EXPECT_LE(wald_ci_halfwidth(k / 100.0, 203), peak + 1e-15);
  }
  EXPECT_THROW(wald_ci_halfwidth(0.5, 0), InputError);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), InputError);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 0}), InputError);
}

TEST(Auc, MatchesBruteForceOracleExactly) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(2, 50);
  std::uniform_int_distribution<int> level(0, 9);  // coarse scores force ties
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 9.0;
      y[i] = static_cast<int>(rng() & 1);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(auc_roc(s, y), auc_oracle(s, y));
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(30), t(30);
    std::vector<int> y(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = std::round(u(rng) * 20.0) / 20.0;
      t[i] = std::exp(3.0 * s[i]) - 7.0;
      y[i] = i % 3 == 0 ? 1 : 0;
    }
    EXPECT_EQ(auc_roc(s, y), auc_roc(t, y));
  }
}

TEST(F1, Examples) {
  std::vector<int> y = {1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(f1_score(y, y), 1.0);
  // tp=2, fp=1, fn=1
  std::vector<int> p2 = {1, 1, 1, 0};
  std::vector<int> y2 = {1, 0, 1, 1};
  EXPECT_NEAR(f1_score(p2, y2), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(f1_score(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(f1_score(std::vector<int>{0, 0}, std::vector<int>{0, 0}), 0.0);
}

TEST(F1, EqualsHarmonicMeanOfPrecisionAndRecall) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 50);
    std::vector<int> p(n), y(n);
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng() & 1);
      y[i] = static_cast<int>(rng() & 1);
    }
    const Confusion c = confusion(p, y);
    EXPECT_EQ(c.total(), static_cast<std::size_t>(n));
    const double f1 = f1_score(p, y);
    EXPECT_GE(f1, 0.0);
    EXPECT_LE(f1, 1.0);
    if (c.tp + c.fp > 0 && c.tp + c.fn > 0 && c.tp > 0) {
      const double prec = static_cast<double>(c.tp) / (c.tp + c.fp);
      const double rec = static_cast<double>(c.tp) / (c.tp + c.fn);
      EXPECT_NEAR(f1, 2 * prec * rec / (prec + rec), 1e-12);
    }
  }
}

TEST(Binarize, ThresholdBoundaryIsInclusive) {
  EXPECT_EQ(binarize(std::vector<double>{0.49, 0.5, 0.51}), (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(binarize(std::vector<double>{0.0, 0.3, 1.0}, 0.0), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(binarize(std::vector<double>{1.0, 0.999}, 1.0), (std::vector<int>{1, 0}));
}

TEST(Report, InvariantsHold) {
  std::vector<double> s = {0.9, 0.2, 0.6, 0.4, 0.7, 0.1};
  std::vector<int> y = {1, 0, 0, 1, 1, 0};
  const MetricsReport r = make_report("x", s, y);
  EXPECT_EQ(r.n_test, 6u);
  EXPECT_EQ(r.confusion.total(), r.n_test);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(r.confusion.tp + r.confusion.tn) / 6.0);
  EXPECT_EQ(r.confusion, (Confusion{2, 1, 2, 1}));
}

TEST(RenderTable, PaperRowFormat) {
  MetricsReport r;
  r.experiment_id = "exp10";
  r.n_test = 203;
  r.accuracy = 0.8621;
  r.ci_halfwidth = 0.0474;
  r.auc = 0.8609;
  r.f1 = 0.8704;
  r.confusion = {100, 10, 75, 18};
  const std::string text = render_results_table(std::span(&r, 1), TableFormat::text);
  EXPECT_NE(text.find("exp10 | 0.8621 +/- 0.0474 | 0.8609 | 0.8704\n"), std::string::npos);
}

TEST(RenderTable, EmptyInputIsHeaderOnly) {
  EXPECT_EQ(render_results_table({}, TableFormat::text), "experiment | accuracy | auc | f1\n");
  EXPECT_EQ(render_results_table({}, TableFormat::csv),
            "experiment_id,n_test,accuracy,ci_halfwidth,auc,f1,tp,fp,tn,fn\n");
}

TEST(RenderTable, RoundsHalfToEven) {
  EXPECT_DOUBLE_EQ(round_half_even(0.12345, 4), 0.1234);  // scales to an exact tie
  EXPECT_DOUBLE_EQ(round_half_even(0.5, 0), 0.0);
  EXPECT_DOUBLE_EQ(round_half_even(1.5, 0), 2.0);
  EXPECT_DOUBLE_EQ(round_half_even(0.04948, 4), 0.0495);
}

TEST(RenderTable, CsvRoundTripPreservesRenderedValues) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricsReport> reports;
  for (int i = 0; i < 5; ++i) {
    MetricsReport r;
    r.experiment_id = "e" + std::to_string(i);
    r.confusion = {static_cast<std::size_t>(i), 2, 3, 4};
    r.n_test = r.confusion.total();
    r.accuracy = u(rng);
    r.ci_halfwidth = u(rng) / 10;
    r.auc = u(rng);
    r.f1 = u(rng);
    reports.push_back(r);
  }
  const auto parsed = parse_results_csv(render_results_table(reports, TableFormat::csv));
  ASSERT_EQ(parsed.size(), reports.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    EXPECT_EQ(parsed[i].experiment_id, reports[i].experiment_id);
    EXPECT_EQ(parsed[i].confusion, reports[i].confusion);
    EXPECT_DOUBLE_EQ(parsed[i].accuracy, round_half_even(reports[i].accuracy, 4));
    EXPECT_DOUBLE_EQ(parsed[i].auc, round_half_even(reports[i].auc, 4));
    EXPECT_DOUBLE_EQ(parsed[i].f1, round_half_even(reports[i].f1, 4));
  }
}

TEST(ReportFile, FullPrecisionRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "tss-report-test";
  MetricsReport r;
  r.experiment_id = "exp03";
  r.confusion = {90, 12, 85, 16};
  r.n_test = 203;
  r.accuracy = 175.0 / 203.0;
  r.ci_halfwidth = wald_ci_halfwidth(r.accuracy, 203);
  r.auc = 0.861234567891;
  r.f1 = 0.86543210987;
  write_report(r, dir / "report.csv");
  EXPECT_EQ(read_report(dir / "report.csv"), r);
  std::filesystem::remove_all(dir);
}
