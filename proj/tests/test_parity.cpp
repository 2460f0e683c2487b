#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "tss/model.hpp"

using namespace tss;
namespace fs = std::filesystem;

// Compares backbone feature maps against torchvision on a seeded random
// initialisation exported by scripts/export_imagenet_weights.py. The ctest
// fixture sets TSS_REFERENCE_DIR; without it the tests skip.

namespace {

torch::Tensor load_tensor(const fs::path& file, const std::string& key) {
  std::ifstream in(file, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  return torch::pickle_load(bytes).toGenericDict().at(key).toTensor();
}

void check_parity(BackboneName name) {
  const char* env = std::getenv("TSS_REFERENCE_DIR");
  if (env == nullptr) GTEST_SKIP() << "TSS_REFERENCE_DIR not set";
  const fs::path dir(env);
  const std::string arch(to_string(name));
  if (!fs::exists(dir / (arch + "-ref.pt"))) GTEST_SKIP() << "no reference for " << arch;

  auto model = build_model(
      BackboneSpec::make(name, WeightsInit::imagenet_pretrained, dir / (arch + ".pt")), {}, 0);
  const auto x = load_tensor(dir / (arch + "-ref.pt"), "input");
  const auto expected = load_tensor(dir / (arch + "-ref.pt"), "features");
  model.net().eval();
  torch::NoGradGuard g;
  const auto got = model.net().backbone().forward(x);
  ASSERT_EQ(got.sizes(), expected.sizes());
  const double scale = expected.abs().max().item<double>();
  const double err = (got - expected).abs().max().item<double>();
  EXPECT_LE(err, 1e-5 * scale) << "max abs error " << err << " at scale " << scale;
}

}  // namespace

TEST(TorchvisionParity, DenseNet169) { check_parity(BackboneName::densenet169); }
TEST(TorchvisionParity, InceptionV3) { check_parity(BackboneName::inceptionv3); }
