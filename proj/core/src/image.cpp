#include "tss/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstdlib>
#include <string>

#include "tss/errors.hpp"

namespace tss {

Image::Image(int w, int h, int c)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

Image horizontal_flip(const Image& image) {
  Image out(image.width, image.height, image.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = 0; y < image.height; ++y) {
    const std::uint8_t* src = image.pixels.data() + y * row_bytes;
    std::uint8_t* dst = out.pixels.data() + y * row_bytes;
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* from = src + static_cast<std::size_t>(image.width - 1 - x) * image.channels;
      std::copy(from, from + image.channels, dst + static_cast<std::size_t>(x) * image.channels);
    }
  }
  return out;
}

namespace {

Image from_mat_rgb(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(rgb.cols, rgb.rows, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<std::size_t>(rgb.cols) * 3,
              out.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  }
  return out;
}

cv::Mat to_mat_rgb(const Image& image) {
  if (image.channels != 3) {
    throw InputError("expected a 3-channel image, got " + std::to_string(image.channels));
  }
  // cv::Mat over const data is fine here: the result is only read.
  return cv::Mat(image.height, image.width, CV_8UC3,
                 const_cast<std::uint8_t*>(image.pixels.data()));
}

}  // namespace

Image load_image_rgb(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw InputError("image not found: " + path.string());
  }
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw InputError("unreadable image: " + path.string());
  }
  return from_mat_rgb(bgr);
}

void save_jpeg(const Image& image, const std::filesystem::path& path, int quality) {
  cv::Mat bgr;
  cv::cvtColor(to_mat_rgb(image), bgr, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, {cv::IMWRITE_JPEG_QUALITY, quality});
  } catch (const cv::Exception& e) {
    throw RuntimeFailure("jpeg encode failed for " + path.string() + ": " + e.what());
  }
  if (!ok) {
    throw RuntimeFailure("jpeg encode failed for " + path.string());
  }
}

double mean_abs_error(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw InputError("mean_abs_error: image shapes differ");
  }
  if (a.pixels.empty()) return 0.0;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    total += static_cast<std::uint64_t>(std::abs(int{a.pixels[i]} - int{b.pixels[i]}));
  }
  return static_cast<double>(total) / (255.0 * static_cast<double>(a.pixels.size()));
}

torch::Tensor to_uint8_chw(const Image& image, int side) {
  cv::Mat resized;
  const cv::Mat src = to_mat_rgb(image);
  if (image.width == side && image.height == side) {
    resized = src.clone();
  } else {
    cv::resize(src, resized, cv::Size(side, side), 0.0, 0.0, cv::INTER_LINEAR);
  }
  auto hwc = torch::from_blob(resized.data, {side, side, 3}, torch::kUInt8);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor normalize_input(const torch::Tensor& pixels, InputNormalization norm) {
  auto x = pixels.to(torch::kFloat32).div(255.0f);
  if (norm == InputNormalization::imagenet) {
    auto shape = pixels.dim() == 4 ? std::vector<std::int64_t>{1, 3, 1, 1}
                                   : std::vector<std::int64_t>{3, 1, 1};
    const auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view(shape);
    const auto stdev = torch::tensor({0.229f, 0.224f, 0.225f}).view(shape);
    x = (x - mean) / stdev;
  }
  return x;
}

torch::Tensor to_input_tensor(const Image& image, int side, InputNormalization norm) {
  return normalize_input(to_uint8_chw(image, side), norm);
}

}  // namespace tss
