#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tss/backbones.hpp"
#include "tss/image.hpp"

namespace tss {

enum class BackboneName { densenet169, inceptionv3, tiny_test };
enum class WeightsInit { imagenet_pretrained, random };
enum class HiddenActivation { relu, sigmoid };
enum class TrainableScope { head_only, full_network };
enum class DigestScope { backbone, head, all };

std::string_view to_string(BackboneName v);
std::string_view to_string(WeightsInit v);
std::string_view to_string(HiddenActivation v);
std::string_view to_string(TrainableScope v);
BackboneName parse_backbone_name(std::string_view text);
WeightsInit parse_weights_init(std::string_view text);
HiddenActivation parse_hidden_activation(std::string_view text);
TrainableScope parse_trainable_scope(std::string_view text);

/// Square input side each backbone is fed at: 224, 299 and 64.
int standard_resolution(BackboneName name);

struct BackboneSpec {
  BackboneName name = BackboneName::tiny_test;
  WeightsInit weights_init = WeightsInit::random;
  int input_resolution = 64;
  /// ImageNet state dict exported by scripts/export_imagenet_weights.py;
  /// only consulted for imagenet_pretrained.
  std::filesystem::path weights_file;

  /// Spec with the standard resolution for `name`.
  static BackboneSpec make(BackboneName name, WeightsInit init,
                           std::filesystem::path weights_file = {});

  InputNormalization normalization() const {
    return name == BackboneName::tiny_test ? InputNormalization::unit_range
                                           : InputNormalization::imagenet;
  }
};

struct HeadSpec {
  int hidden_width = 1024;
  HiddenActivation hidden_activation = HiddenActivation::relu;
};

/// backbone -> global average pool -> dense(hidden) -> dense(1) -> sigmoid.
///
/// The same module serves the flip-detection and the downstream task; nothing
/// is replaced between phases.
class ClassifierImpl : public torch::nn::Module {
 public:
  ClassifierImpl(std::shared_ptr<BackboneImpl> backbone, HeadSpec head);

  /// Probabilities, shape [B].
  torch::Tensor forward(const torch::Tensor& x);

  /// Under head_only the backbone stays in inference mode, so batch-norm
  /// statistics are frozen along with its weights.
  void train(bool on = true) override;

  void set_scope(TrainableScope scope);
  TrainableScope scope() const { return scope_; }

  BackboneImpl& backbone() { return *backbone_; }
  torch::nn::Module& head() { return *head_; }

 private:
  std::shared_ptr<BackboneImpl> backbone_;
  std::shared_ptr<torch::nn::Module> head_;
  torch::nn::Linear hidden_{nullptr};
  torch::nn::Linear output_{nullptr};
  HiddenActivation activation_;
  TrainableScope scope_ = TrainableScope::full_network;
};

/// A built classifier together with the specs that fully determine its
/// shape. Move-only; use clone() for an independent copy.
class ModelHandle {
 public:
  ModelHandle(BackboneSpec backbone, HeadSpec head, std::uint64_t seed,
              std::shared_ptr<ClassifierImpl> net);
  ModelHandle(ModelHandle&&) noexcept = default;
  ModelHandle& operator=(ModelHandle&&) noexcept = default;
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;

  const BackboneSpec& backbone_spec() const { return backbone_; }
  const HeadSpec& head_spec() const { return head_; }
  std::uint64_t seed() const { return seed_; }
  TrainableScope trainable_scope() const { return net_->scope(); }
  torch::Device device() const;

  ClassifierImpl& net() { return *net_; }
  const ClassifierImpl& net() const { return *net_; }

  /// Inference-mode forward without autograd; restores the previous mode.
  torch::Tensor predict(const torch::Tensor& batch);

  /// Parameters and buffers under `scope`, in registration order, with
  /// fully-qualified names ("backbone.conv1.weight", "head.hidden.bias").
  std::vector<std::pair<std::string, torch::Tensor>> named_state(DigestScope scope) const;
  /// (name, shape) for every parameter and buffer.
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> signature() const;
  std::int64_t parameter_count() const;
  /// Parameters that will receive updates under the current scope.
  std::vector<torch::Tensor> trainable_parameters() const;

  ModelHandle clone() const;
  /// Overwrites every parameter and buffer with `other`'s values.
  void copy_state_from(const ModelHandle& other);
  void to(torch::Device device);

 private:
  BackboneSpec backbone_;
  HeadSpec head_;
  std::uint64_t seed_;
  std::shared_ptr<ClassifierImpl> net_;
};

/// Builds the classifier. Random parts are drawn from a private generator
/// seeded with `seed`, so equal seeds give bit-identical weights.
/// imagenet_pretrained loads spec.weights_file; a missing file is an
/// InputError telling how to export it.
ModelHandle build_model(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t seed);

ModelHandle set_trainable_scope(ModelHandle model, TrainableScope scope);

/// Versioned checkpoint: format version, backbone, head spec, seed, scope
/// and every parameter and buffer.
void save_checkpoint(const ModelHandle& model, const std::filesystem::path& path);

/// Throws InputError for missing/corrupt files and when `expected` names a
/// different backbone than the one recorded.
ModelHandle load_checkpoint(const std::filesystem::path& path,
                            std::optional<BackboneName> expected = std::nullopt);

/// SHA-256 over name, dtype, shape and bytes of each selected tensor.
std::string parameter_digest(const ModelHandle& model, DigestScope scope);

/// Device chosen by the TSS_DEVICE environment variable ("cpu" or "cuda");
/// cpu when unset.
torch::Device default_device();

}  // namespace tss
