#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"
#include "tss/errors.hpp"
#include "tss/model.hpp"

using namespace tss;
using tsstest::TempDir;

namespace {

ModelHandle tiny(std::uint64_t seed = 1, HeadSpec head = {}) {
  return build_model(BackboneSpec::make(BackboneName::tiny_test, WeightsInit::random), head, seed);
}

std::int64_t count_params(torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace

TEST(Model, TinyForwardShapeAndRange) {
  auto m = tiny();
  EXPECT_EQ(m.parameter_count(), 40849);
  torch::manual_seed(0);
  const auto out = m.predict(torch::rand({4, 3, 64, 64}));
  ASSERT_EQ(out.sizes(), (std::vector<std::int64_t>{4}));
  EXPECT_GE(out.min().item<float>(), 0.0f);
  EXPECT_LE(out.max().item<float>(), 1.0f);
}

TEST(Model, HeadParameterNames) {
  auto m = tiny();
  std::vector<std::string> names;
  for (const auto& [n, t] : m.named_state(DigestScope::head)) names.push_back(n);
  EXPECT_EQ(names, (std::vector<std::string>{"head.hidden.weight", "head.hidden.bias",
                                             "head.output.weight", "head.output.bias"}));
}

TEST(Model, SeedDeterminesWeights) {
  EXPECT_EQ(parameter_digest(tiny(5), DigestScope::all), parameter_digest(tiny(5), DigestScope::all));
  EXPECT_NE(parameter_digest(tiny(5), DigestScope::all), parameter_digest(tiny(6), DigestScope::all));
  // global RNG state must not leak into construction
  torch::manual_seed(123);
  const auto a = parameter_digest(tiny(9), DigestScope::all);
  torch::manual_seed(456);
  EXPECT_EQ(parameter_digest(tiny(9), DigestScope::all), a);
}

TEST(Model, InvalidCombinations) {
  EXPECT_THROW(build_model(BackboneSpec::make(BackboneName::tiny_test, WeightsInit::imagenet_pretrained),
                           {}, 0),
               InputError);
  BackboneSpec wrong_res = BackboneSpec::make(BackboneName::tiny_test, WeightsInit::random);
  wrong_res.input_resolution = 128;
  EXPECT_THROW(build_model(wrong_res, {}, 0), InputError);
  EXPECT_THROW(build_model(BackboneSpec::make(BackboneName::tiny_test, WeightsInit::random),
                           HeadSpec{0, HiddenActivation::relu}, 0),
               InputError);
}

TEST(Model, MissingPretrainedWeightsExplainsExport) {
  try {
    build_model(BackboneSpec::make(BackboneName::densenet169, WeightsInit::imagenet_pretrained,
                                   "/nonexistent/densenet169.pt"),
                {}, 0);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("export_imagenet_weights.py"), std::string::npos);
  }
}

TEST(Model, TrainableScopeSelectsParameters) {
  auto m = set_trainable_scope(tiny(), TrainableScope::head_only);
  std::int64_t n = 0;
  for (const auto& p : m.trainable_parameters()) n += p.numel();
  EXPECT_EQ(n, 1024 * 32 + 1024 + 1024 + 1);
  m = set_trainable_scope(std::move(m), TrainableScope::full_network);
  n = 0;
  for (const auto& p : m.trainable_parameters()) n += p.numel();
  EXPECT_EQ(n, m.parameter_count());
}

TEST(Model, CloneIsIndependent) {
  auto a = tiny(3);
  auto b = a.clone();
  EXPECT_EQ(parameter_digest(a, DigestScope::all), parameter_digest(b, DigestScope::all));
  {
    torch::NoGradGuard g;
    b.net().named_parameters()["head.output.bias"].add_(1.0);
  }
  EXPECT_NE(parameter_digest(a, DigestScope::all), parameter_digest(b, DigestScope::all));
  b.copy_state_from(a);
  EXPECT_EQ(parameter_digest(a, DigestScope::all), parameter_digest(b, DigestScope::all));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  auto m = set_trainable_scope(tiny(11, {16, HiddenActivation::sigmoid}), TrainableScope::head_only);
  save_checkpoint(m, dir / "m.pt");
  auto back = load_checkpoint(dir / "m.pt", BackboneName::tiny_test);
  EXPECT_EQ(parameter_digest(back, DigestScope::all), parameter_digest(m, DigestScope::all));
  EXPECT_EQ(back.head_spec().hidden_width, 16);
  EXPECT_EQ(back.head_spec().hidden_activation, HiddenActivation::sigmoid);
  EXPECT_EQ(back.seed(), 11u);
  EXPECT_EQ(back.trainable_scope(), TrainableScope::head_only);
  torch::manual_seed(1);
  const auto x = torch::rand({3, 3, 64, 64});
  EXPECT_TRUE(torch::equal(back.predict(x), m.predict(x)));
}

TEST(Checkpoint, RejectsMissingCorruptAndMismatched) {
  TempDir dir;
  EXPECT_THROW(load_checkpoint(dir / "absent.pt"), InputError);
  std::ofstream(dir / "junk.pt") << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.pt"), InputError);

  save_checkpoint(tiny(), dir / "ok.pt");
  EXPECT_THROW(load_checkpoint(dir / "ok.pt", BackboneName::densenet169), InputError);

  std::ifstream in(dir / "ok.pt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "cut.pt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir / "cut.pt"), InputError);
}

TEST(Backbones, DenseNet169Shapes) {
  auto m = build_model(BackboneSpec::make(BackboneName::densenet169, WeightsInit::random), {}, 0);
  EXPECT_EQ(count_params(m.net().backbone()), 12484480);
  auto x = torch::zeros({1, 3, 224, 224});
  torch::NoGradGuard g;
  m.net().eval();
  EXPECT_EQ(m.net().backbone().forward(x).sizes(), (std::vector<std::int64_t>{1, 1664, 7, 7}));
  EXPECT_EQ(m.predict(x).sizes(), (std::vector<std::int64_t>{1}));
}

TEST(Backbones, InceptionV3Shapes) {
  auto m = build_model(BackboneSpec::make(BackboneName::inceptionv3, WeightsInit::random), {}, 0);
  EXPECT_EQ(count_params(m.net().backbone()), 21785568);
  auto x = torch::zeros({1, 3, 299, 299});
  torch::NoGradGuard g;
  m.net().eval();
  EXPECT_EQ(m.net().backbone().forward(x).sizes(), (std::vector<std::int64_t>{1, 2048, 8, 8}));
}

TEST(Backbones, HeadOnlyKeepsBackboneInInferenceMode) {
  auto m = set_trainable_scope(
      build_model(BackboneSpec::make(BackboneName::densenet169, WeightsInit::random), {}, 0),
      TrainableScope::head_only);
  m.net().train(true);
  EXPECT_FALSE(m.net().backbone().is_training());
  EXPECT_TRUE(m.net().head().is_training());
  m = set_trainable_scope(std::move(m), TrainableScope::full_network);
  m.net().train(true);
  EXPECT_TRUE(m.net().backbone().is_training());
}
