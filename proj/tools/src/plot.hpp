#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tss::cli {

struct PlotPoint {
  double fraction = 0.0;
  double accuracy = 0.0;
};

struct PlotSeries {
  std::string name;
  std::vector<PlotPoint> points;  // any order; repeats per fraction allowed
};

/// Static PNG: test accuracy against self-supervision fraction, one line
/// per series through the mean of the runs at each fraction.
void write_accuracy_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path);

}  // namespace tss::cli
