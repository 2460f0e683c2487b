#include "tss/backbones.hpp"

#include <string>

namespace tss {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

TinyTestBackboneImpl::TinyTestBackboneImpl() {
  auto block = [](int in, int out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1));
  };
  conv1_ = register_module("conv1", block(3, 8));
  conv2_ = register_module("conv2", block(8, 16));
  conv3_ = register_module("conv3", block(16, 32));
}

torch::Tensor TinyTestBackboneImpl::forward(torch::Tensor x) {
  x = torch::relu(conv1_(x));
  x = torch::relu(conv2_(x));
  return torch::relu(conv3_(x));
}

// ---------------------------------------------------------------------------
// DenseNet-169

namespace {

class DenseLayerImpl : public nn::Module {
 public:
  DenseLayerImpl(std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
    norm1 = register_module("norm1", nn::BatchNorm2d(in));
    conv1 = register_module(
        "conv1", nn::Conv2d(nn::Conv2dOptions(in, bn_size * growth, 1).bias(false)));
    norm2 = register_module("norm2", nn::BatchNorm2d(bn_size * growth));
    conv2 = register_module(
        "conv2", nn::Conv2d(nn::Conv2dOptions(bn_size * growth, growth, 3).padding(1).bias(false)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv1(torch::relu(norm1(x)));
    y = conv2(torch::relu(norm2(y)));
    return torch::cat({x, y}, 1);
  }
  nn::BatchNorm2d norm1{nullptr}, norm2{nullptr};
  nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
 public:
  DenseBlockImpl(int layers, std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
    for (int i = 0; i < layers; ++i) {
      layers_.push_back(register_module("denselayer" + std::to_string(i + 1),
                                        DenseLayer(in + i * growth, growth, bn_size)));
    }
  }
  torch::Tensor forward(torch::Tensor x) {
    for (auto& layer : layers_) x = layer(x);
    return x;
  }

 private:
  std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

class TransitionImpl : public nn::Module {
 public:
  TransitionImpl(std::int64_t in, std::int64_t out) {
    norm = register_module("norm", nn::BatchNorm2d(in));
    conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 1).bias(false)));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    return F::avg_pool2d(conv(torch::relu(norm(x))), F::AvgPool2dFuncOptions(2).stride(2));
  }
  nn::BatchNorm2d norm{nullptr};
  nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Transition);

class DenseFeaturesImpl : public nn::Module {
 public:
  DenseFeaturesImpl() {
    constexpr std::int64_t kGrowth = 32, kBnSize = 4, kInit = 64;
    const int block_layers[] = {6, 12, 32, 32};
    conv0 = register_module(
        "conv0", nn::Conv2d(nn::Conv2dOptions(3, kInit, 7).stride(2).padding(3).bias(false)));
    norm0 = register_module("norm0", nn::BatchNorm2d(kInit));
    std::int64_t channels = kInit;
    for (int b = 0; b < 4; ++b) {
      blocks.push_back(register_module("denseblock" + std::to_string(b + 1),
                                       DenseBlock(block_layers[b], channels, kGrowth, kBnSize)));
      channels += block_layers[b] * kGrowth;
      if (b != 3) {
        transitions.push_back(register_module("transition" + std::to_string(b + 1),
                                              Transition(channels, channels / 2)));
        channels /= 2;
      }
    }
    norm5 = register_module("norm5", nn::BatchNorm2d(channels));
  }
  torch::Tensor forward(torch::Tensor x) {
    x = torch::relu(norm0(conv0(x)));
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      x = blocks[b](x);
      if (b < transitions.size()) x = transitions[b](x);
    }
    return norm5(x);
  }
  nn::Conv2d conv0{nullptr};
  nn::BatchNorm2d norm0{nullptr}, norm5{nullptr};
  std::vector<DenseBlock> blocks;
  std::vector<Transition> transitions;
};
TORCH_MODULE(DenseFeatures);

}  // namespace

DenseNet169BackboneImpl::DenseNet169BackboneImpl() {
  features_ = register_module("features", DenseFeatures().ptr());
}

torch::Tensor DenseNet169BackboneImpl::forward(torch::Tensor x) {
  return torch::relu(std::static_pointer_cast<DenseFeaturesImpl>(features_)->forward(x));
}

// ---------------------------------------------------------------------------
// Inception-v3

namespace {

using Pair = torch::ExpandingArray<2>;

class BasicConv2dImpl : public nn::Module {
 public:
  BasicConv2dImpl(std::int64_t in, std::int64_t out, Pair kernel, Pair stride = 1, Pair padding = 0) {
    conv = register_module(
        "conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(false)));
    bn = register_module("bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(out).eps(0.001)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return torch::relu(bn(conv(x))); }
  nn::Conv2d conv{nullptr};
  nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(BasicConv2d);

torch::Tensor avg3(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(1).padding(1));
}
torch::Tensor max3s2(const torch::Tensor& x) {
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2));
}

/// Inception block: named BasicConv2d children plus a forward recipe.
class MixedImpl : public nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;

 protected:
  BasicConv2d add(const std::string& name, std::int64_t in, std::int64_t out, Pair k,
                  Pair s = 1, Pair p = 0) {
    return register_module(name, BasicConv2d(in, out, k, s, p));
  }
};

class InceptionA : public MixedImpl {
 public:
  InceptionA(std::int64_t in, std::int64_t pool_features) {
    b1x1 = add("branch1x1", in, 64, 1);
    b5x5_1 = add("branch5x5_1", in, 48, 1);
    b5x5_2 = add("branch5x5_2", 48, 64, 5, 1, 2);
    b3dbl_1 = add("branch3x3dbl_1", in, 64, 1);
    b3dbl_2 = add("branch3x3dbl_2", 64, 96, 3, 1, 1);
    b3dbl_3 = add("branch3x3dbl_3", 96, 96, 3, 1, 1);
    bpool = add("branch_pool", in, pool_features, 1);
  }
  torch::Tensor forward(torch::Tensor x) override {
    return torch::cat({b1x1(x), b5x5_2(b5x5_1(x)), b3dbl_3(b3dbl_2(b3dbl_1(x))), bpool(avg3(x))}, 1);
  }
  BasicConv2d b1x1{nullptr}, b5x5_1{nullptr}, b5x5_2{nullptr}, b3dbl_1{nullptr},
      b3dbl_2{nullptr}, b3dbl_3{nullptr}, bpool{nullptr};
};

class InceptionB : public MixedImpl {
 public:
  explicit InceptionB(std::int64_t in) {
    b3x3 = add("branch3x3", in, 384, 3, 2);
    b3dbl_1 = add("branch3x3dbl_1", in, 64, 1);
    b3dbl_2 = add("branch3x3dbl_2", 64, 96, 3, 1, 1);
    b3dbl_3 = add("branch3x3dbl_3", 96, 96, 3, 2);
  }
  torch::Tensor forward(torch::Tensor x) override {
    return torch::cat({b3x3(x), b3dbl_3(b3dbl_2(b3dbl_1(x))), max3s2(x)}, 1);
  }
  BasicConv2d b3x3{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr}, b3dbl_3{nullptr};
};

class InceptionC : public MixedImpl {
 public:
  InceptionC(std::int64_t in, std::int64_t c7) {
    b1x1 = add("branch1x1", in, 192, 1);
    b7_1 = add("branch7x7_1", in, c7, 1);
    b7_2 = add("branch7x7_2", c7, c7, {1, 7}, 1, {0, 3});
    b7_3 = add("branch7x7_3", c7, 192, {7, 1}, 1, {3, 0});
    b7dbl_1 = add("branch7x7dbl_1", in, c7, 1);
    b7dbl_2 = add("branch7x7dbl_2", c7, c7, {7, 1}, 1, {3, 0});
    b7dbl_3 = add("branch7x7dbl_3", c7, c7, {1, 7}, 1, {0, 3});
    b7dbl_4 = add("branch7x7dbl_4", c7, c7, {7, 1}, 1, {3, 0});
    b7dbl_5 = add("branch7x7dbl_5", c7, 192, {1, 7}, 1, {0, 3});
    bpool = add("branch_pool", in, 192, 1);
  }
  torch::Tensor forward(torch::Tensor x) override {
    auto b7 = b7_3(b7_2(b7_1(x)));
    auto b7dbl = b7dbl_5(b7dbl_4(b7dbl_3(b7dbl_2(b7dbl_1(x)))));
    return torch::cat({b1x1(x), b7, b7dbl, bpool(avg3(x))}, 1);
  }
  BasicConv2d b1x1{nullptr}, b7_1{nullptr}, b7_2{nullptr}, b7_3{nullptr}, b7dbl_1{nullptr},
      b7dbl_2{nullptr}, b7dbl_3{nullptr}, b7dbl_4{nullptr}, b7dbl_5{nullptr}, bpool{nullptr};
};

class InceptionD : public MixedImpl {
 public:
  explicit InceptionD(std::int64_t in) {
    b3_1 = add("branch3x3_1", in, 192, 1);
    b3_2 = add("branch3x3_2", 192, 320, 3, 2);
    b7x3_1 = add("branch7x7x3_1", in, 192, 1);
    b7x3_2 = add("branch7x7x3_2", 192, 192, {1, 7}, 1, {0, 3});
    b7x3_3 = add("branch7x7x3_3", 192, 192, {7, 1}, 1, {3, 0});
    b7x3_4 = add("branch7x7x3_4", 192, 192, 3, 2);
  }
  torch::Tensor forward(torch::Tensor x) override {
    return torch::cat({b3_2(b3_1(x)), b7x3_4(b7x3_3(b7x3_2(b7x3_1(x)))), max3s2(x)}, 1);
  }
  BasicConv2d b3_1{nullptr}, b3_2{nullptr}, b7x3_1{nullptr}, b7x3_2{nullptr}, b7x3_3{nullptr},
      b7x3_4{nullptr};
};

class InceptionE : public MixedImpl {
 public:
  explicit InceptionE(std::int64_t in) {
    b1x1 = add("branch1x1", in, 320, 1);
    b3_1 = add("branch3x3_1", in, 384, 1);
    b3_2a = add("branch3x3_2a", 384, 384, {1, 3}, 1, {0, 1});
    b3_2b = add("branch3x3_2b", 384, 384, {3, 1}, 1, {1, 0});
    b3dbl_1 = add("branch3x3dbl_1", in, 448, 1);
    b3dbl_2 = add("branch3x3dbl_2", 448, 384, 3, 1, 1);
    b3dbl_3a = add("branch3x3dbl_3a", 384, 384, {1, 3}, 1, {0, 1});
    b3dbl_3b = add("branch3x3dbl_3b", 384, 384, {3, 1}, 1, {1, 0});
    bpool = add("branch_pool", in, 192, 1);
  }
  torch::Tensor forward(torch::Tensor x) override {
    auto b3 = b3_1(x);
    b3 = torch::cat({b3_2a(b3), b3_2b(b3)}, 1);
    auto bd = b3dbl_2(b3dbl_1(x));
    bd = torch::cat({b3dbl_3a(bd), b3dbl_3b(bd)}, 1);
    return torch::cat({b1x1(x), b3, bd, bpool(avg3(x))}, 1);
  }
  BasicConv2d b1x1{nullptr}, b3_1{nullptr}, b3_2a{nullptr}, b3_2b{nullptr}, b3dbl_1{nullptr},
      b3dbl_2{nullptr}, b3dbl_3a{nullptr}, b3dbl_3b{nullptr}, bpool{nullptr};
};

}  // namespace

InceptionV3BackboneImpl::InceptionV3BackboneImpl(bool transform_input)
    : transform_input_(transform_input) {
  auto stem = [&](const std::string& name, std::int64_t in, std::int64_t out, Pair k,
                  Pair s = 1, Pair p = 0) {
    stem_.push_back(register_module(name, BasicConv2d(in, out, k, s, p).ptr()));
  };
  stem("Conv2d_1a_3x3", 3, 32, 3, 2);
  stem("Conv2d_2a_3x3", 32, 32, 3);
  stem("Conv2d_2b_3x3", 32, 64, 3, 1, 1);
  stem("Conv2d_3b_1x1", 64, 80, 1);
  stem("Conv2d_4a_3x3", 80, 192, 3);

  auto mixed = [&](const std::string& name, std::shared_ptr<MixedImpl> block) {
    mixed_.push_back(register_module(name, std::move(block)));
  };
  mixed("Mixed_5b", std::make_shared<InceptionA>(192, 32));
  mixed("Mixed_5c", std::make_shared<InceptionA>(256, 64));
  mixed("Mixed_5d", std::make_shared<InceptionA>(288, 64));
  mixed("Mixed_6a", std::make_shared<InceptionB>(288));
  mixed("Mixed_6b", std::make_shared<InceptionC>(768, 128));
  mixed("Mixed_6c", std::make_shared<InceptionC>(768, 160));
  mixed("Mixed_6d", std::make_shared<InceptionC>(768, 160));
  mixed("Mixed_6e", std::make_shared<InceptionC>(768, 192));
  mixed("Mixed_7a", std::make_shared<InceptionD>(768));
  mixed("Mixed_7b", std::make_shared<InceptionE>(1280));
  mixed("Mixed_7c", std::make_shared<InceptionE>(2048));
}

torch::Tensor InceptionV3BackboneImpl::forward(torch::Tensor x) {
  if (transform_input_) {
    auto c0 = x.select(1, 0).unsqueeze(1) * (0.229 / 0.5) + (0.485 - 0.5) / 0.5;
    auto c1 = x.select(1, 1).unsqueeze(1) * (0.224 / 0.5) + (0.456 - 0.5) / 0.5;
    auto c2 = x.select(1, 2).unsqueeze(1) * (0.225 / 0.5) + (0.406 - 0.5) / 0.5;
    x = torch::cat({c0, c1, c2}, 1);
  }
  auto conv = [&](std::size_t i) {
    x = std::static_pointer_cast<BasicConv2dImpl>(stem_[i])->forward(x);
  };
  conv(0);
  conv(1);
  conv(2);
  x = max3s2(x);
  conv(3);
  conv(4);
  x = max3s2(x);
  for (auto& block : mixed_) x = std::static_pointer_cast<MixedImpl>(block)->forward(x);
  return x;
}

}  // namespace tss
