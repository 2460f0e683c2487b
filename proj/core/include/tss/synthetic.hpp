#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include "tss/image.hpp"
#include "tss/manifest.hpp"

namespace tss {

/// Desk-scale stand-in for a CT corpus.
///
/// Every image is a left-to-right brightness ramp with noise, so originals
/// and their mirrors are distinguishable. Images labelled covid carry a few
/// bright blobs; non_covid images do not.
struct ToyCorpusOptions {
  int train_per_class = 96;
  int val_per_class = 24;
  int test_per_class = 32;
  int side = 64;
  std::uint64_t seed = 7;
};

Image make_toy_image(ClassLabel label, int side, std::mt19937_64& rng);

/// Writes <root>/{train,val,test}/{covid,non_covid}/<n>.png.
void write_toy_corpus(const std::filesystem::path& root, const ToyCorpusOptions& options);

}  // namespace tss
