#include "tss/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tss/errors.hpp"

namespace fs = std::filesystem;

namespace tss {

Image make_toy_image(ClassLabel label, int side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> low(20.0, 60.0);
  std::uniform_real_distribution<double> span(120.0, 180.0);
  std::normal_distribution<double> noise(0.0, 8.0);
  const double base = low(rng);
  const double rise = span(rng);

  std::vector<double> gray(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      gray[static_cast<std::size_t>(y) * side + x] =
          base + rise * static_cast<double>(x) / std::max(1, side - 1) + noise(rng);
    }
  }
  if (label == ClassLabel::covid) {
    // Bright, speckled lesions: local texture survives global pooling.
    std::uniform_int_distribution<int> count(2, 4);
    std::uniform_real_distribution<double> pos(0.15 * side, 0.85 * side);
    std::uniform_real_distribution<double> radius(0.08 * side, 0.14 * side);
    std::bernoulli_distribution speckle(0.5);
    for (int b = count(rng); b > 0; --b) {
      const double cx = pos(rng), cy = pos(rng), r = radius(rng);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          const double w = std::exp(-d2 / (2.0 * r * r));
          gray[static_cast<std::size_t>(y) * side + x] += w * (40.0 + (speckle(rng) ? 60.0 : -60.0));
        }
      }
    }
  }

  Image out(side, side, 3);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(gray[i]), 0L, 255L));
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = v;
  }
  return out;
}

void write_toy_corpus(const fs::path& root, const ToyCorpusOptions& options) {
  std::mt19937_64 rng(options.seed);
  int serial = 0;
  for (const auto& [split, per_class] :
       {std::pair{"train", options.train_per_class}, std::pair{"val", options.val_per_class},
        std::pair{"test", options.test_per_class}}) {
    for (ClassLabel label : {ClassLabel::covid, ClassLabel::non_covid}) {
      const fs::path dir = root / split / std::string(to_string(label));
      fs::create_directories(dir);
      for (int i = 0; i < per_class; ++i) {
        const Image image = make_toy_image(label, options.side, rng);
        std::ostringstream name;
        name << to_string(label) << "_" << std::setw(5) << std::setfill('0') << serial++ << ".png";
        cv::Mat gray(image.height, image.width, CV_8UC1);
        for (int y = 0; y < image.height; ++y) {
          for (int x = 0; x < image.width; ++x) gray.at<std::uint8_t>(y, x) = image.at(x, y, 0);
        }
        if (!cv::imwrite((dir / name.str()).string(), gray)) {
          throw RuntimeFailure("cannot write toy image " + (dir / name.str()).string());
        }
      }
    }
  }
}

}  // namespace tss
