#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>

namespace tss {

/// Convolutional feature extractor. forward() returns the final feature map
/// [B, feature_channels(), H, W] after its last non-linearity; pooling is
/// the head's job.
class BackboneImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  virtual std::int64_t feature_channels() const = 0;
};

/// Three stride-2 3x3 conv + ReLU blocks (8/16/32 channels). ~6k parameters.
class TinyTestBackboneImpl : public BackboneImpl {
 public:
  TinyTestBackboneImpl();
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t feature_channels() const override { return 32; }

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
};

/// DenseNet-169 (growth 32, blocks 6/12/32/32). Parameter names follow
/// torchvision's `features.*` so exported ImageNet weights load unchanged.
class DenseNet169BackboneImpl : public BackboneImpl {
 public:
  DenseNet169BackboneImpl();
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t feature_channels() const override { return 1664; }

 private:
  std::shared_ptr<torch::nn::Module> features_;
};

/// Inception-v3 without the auxiliary classifier. Parameter names follow
/// torchvision (Conv2d_1a_3x3, Mixed_5b, ...). With transform_input the
/// ImageNet-standardised input is re-mapped to the [-1, 1] scaling the
/// published weights were trained with.
class InceptionV3BackboneImpl : public BackboneImpl {
 public:
  explicit InceptionV3BackboneImpl(bool transform_input);
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t feature_channels() const override { return 2048; }

 private:
  bool transform_input_;
  std::vector<std::shared_ptr<torch::nn::Module>> stem_;
  std::vector<std::shared_ptr<torch::nn::Module>> mixed_;
};

}  // namespace tss
