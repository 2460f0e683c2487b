#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tss {

/// Interleaved 8-bit image, row-major: pixel (x, y) channel c lives at
/// ((y * width) + x) * channels + c.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c);

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Mirror about the vertical axis: out(x, y) = in(width - 1 - x, y).
Image horizontal_flip(const Image& image);

/// Decodes any format OpenCV understands. Output is always 3-channel RGB;
/// grayscale sources are replicated across channels.
Image load_image_rgb(const std::filesystem::path& path);

/// Writes an RGB image as JPEG (quality 95 unless overridden).
void save_jpeg(const Image& image, const std::filesystem::path& path, int quality = 95);

/// Mean absolute per-sample difference in [0, 1]; images must agree in shape.
double mean_abs_error(const Image& a, const Image& b);

enum class InputNormalization { unit_range, imagenet };

/// Bilinear resize to side x side; uint8 CHW tensor.
torch::Tensor to_uint8_chw(const Image& image, int side);

/// uint8 CHW (or NCHW) -> float scaled to [0,1] and, for `imagenet`,
/// standardised with the ImageNet channel mean/std.
torch::Tensor normalize_input(const torch::Tensor& pixels, InputNormalization norm);

/// normalize_input(to_uint8_chw(image, side), norm)
torch::Tensor to_input_tensor(const Image& image, int side, InputNormalization norm);

}  // namespace tss
