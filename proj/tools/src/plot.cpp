#include "plot.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>

#include "tss/errors.hpp"

namespace tss::cli {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                               {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};

std::string fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

void write_accuracy_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path) {
  double lo = 1.0, hi = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      lo = std::min(lo, p.accuracy);
      hi = std::max(hi, p.accuracy);
    }
  }
  if (lo > hi) {
    lo = 0.0;
    hi = 1.0;
  }
  lo = std::max(0.0, std::floor((lo - 0.02) * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil((hi + 0.02) * 20.0) / 20.0);
  if (hi - lo < 0.05) hi = std::min(1.0, lo + 0.05);

  cv::Mat canvas(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;
  auto to_px = [&](double f, double acc) {
    return cv::Point(kLeft + static_cast<int>(std::lround(f * plot_w)),
                     kTop + static_cast<int>(std::lround((hi - acc) / (hi - lo) * plot_h)));
  };
  const auto axis = cv::Scalar(60, 60, 60);
  const auto grid = cv::Scalar(225, 225, 225);
  const int font = cv::FONT_HERSHEY_SIMPLEX;

  for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto top = to_px(f, hi), bottom = to_px(f, lo);
    cv::line(canvas, top, bottom, grid, 1);
    cv::putText(canvas, fixed(f, 2), {bottom.x - 16, bottom.y + 22}, font, 0.45, axis, 1, cv::LINE_AA);
  }
  const int ticks = static_cast<int>(std::lround((hi - lo) / 0.05));
  for (int i = 0; i <= ticks; ++i) {
    const double acc = lo + i * (hi - lo) / std::max(1, ticks);
    const auto left = to_px(0.0, acc), right = to_px(1.0, acc);
    cv::line(canvas, left, right, grid, 1);
    cv::putText(canvas, fixed(acc, 2), {left.x - 45, left.y + 5}, font, 0.45, axis, 1, cv::LINE_AA);
  }
  cv::rectangle(canvas, to_px(0.0, hi), to_px(1.0, lo), axis, 1);
  cv::putText(canvas, "self-supervision fraction", {kLeft + plot_w / 2 - 100, kHeight - 15}, font, 0.5,
              axis, 1, cv::LINE_AA);
  cv::putText(canvas, "test accuracy", {10, kTop - 15}, font, 0.5, axis, 1, cv::LINE_AA);

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto colour = kPalette[i % std::size(kPalette)];
    // line through the per-fraction mean; individual runs as hollow markers
    std::map<double, std::pair<double, int>> by_fraction;
    for (const auto& p : series[i].points) {
      auto& [sum, n] = by_fraction[p.fraction];
      sum += p.accuracy;
      ++n;
      cv::circle(canvas, to_px(p.fraction, p.accuracy), 4, colour, 1, cv::LINE_AA);
    }
    std::optional<cv::Point> prev;
    for (const auto& [f, agg] : by_fraction) {
      const auto p = to_px(f, agg.first / agg.second);
      if (prev) cv::line(canvas, *prev, p, colour, 2, cv::LINE_AA);
      cv::circle(canvas, p, 3, colour, cv::FILLED, cv::LINE_AA);
      prev = p;
    }
    const cv::Point key(kWidth - kRight + 20, kTop + 20 + static_cast<int>(i) * 22);
    cv::line(canvas, key, {key.x + 24, key.y}, colour, 2, cv::LINE_AA);
    cv::putText(canvas, series[i].name, {key.x + 30, key.y + 5}, font, 0.45, axis, 1, cv::LINE_AA);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw RuntimeFailure("cannot write plot " + path.string());
}

}  // namespace tss::cli
