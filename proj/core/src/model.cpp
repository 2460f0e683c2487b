#include "tss/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <unordered_set>

#include "tss/digest.hpp"
#include "tss/errors.hpp"

namespace fs = std::filesystem;

namespace tss {

namespace {

constexpr std::string_view kCheckpointFormat = "tss-checkpoint";
constexpr std::int64_t kCheckpointVersion = 1;

[[noreturn]] void bad_value(std::string_view what, std::string_view text) {
  throw InputError("unknown " + std::string(what) + ": '" + std::string(text) + "'");
}

std::shared_ptr<BackboneImpl> make_backbone(const BackboneSpec& spec) {
  switch (spec.name) {
    case BackboneName::tiny_test:
      return std::make_shared<TinyTestBackboneImpl>();
    case BackboneName::densenet169:
      return std::make_shared<DenseNet169BackboneImpl>();
    case BackboneName::inceptionv3:
      return std::make_shared<InceptionV3BackboneImpl>(spec.weights_init ==
                                                       WeightsInit::imagenet_pretrained);
  }
  throw InputError("unknown backbone");
}

void init_backbone(torch::nn::Module& backbone, at::Generator& gen) {
  for (const auto& m : backbone.modules()) {
    if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
      const auto& w = conv->weight;
      const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
      w.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
      if (conv->bias.defined()) {
        const double bound = 1.0 / std::sqrt(fan_in);
        conv->bias.uniform_(-bound, bound, gen);
      }
    } else if (auto* bn = m->as<torch::nn::BatchNorm2dImpl>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

// Glorot-uniform weights, zero bias.
void init_linear(torch::nn::LinearImpl& layer, at::Generator& gen) {
  const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.size(0) + layer.weight.size(1)));
  layer.weight.uniform_(-bound, bound, gen);
  layer.bias.zero_();
}

std::shared_ptr<ClassifierImpl> make_network(const BackboneSpec& backbone, const HeadSpec& head,
                                             std::uint64_t seed) {
  if (head.hidden_width < 1) throw InputError("head hidden_width must be positive");
  if (backbone.input_resolution != standard_resolution(backbone.name)) {
    throw InputError(std::string(to_string(backbone.name)) + " requires input resolution " +
                     std::to_string(standard_resolution(backbone.name)));
  }
  auto net = std::make_shared<ClassifierImpl>(make_backbone(backbone), head);
  at::Generator gen = at::detail::createCPUGenerator(seed);
  torch::NoGradGuard no_grad;
  init_backbone(net->backbone(), gen);
  for (const auto& m : net->head().modules(/*include_self=*/false)) {
    if (auto* linear = m->as<torch::nn::LinearImpl>()) init_linear(*linear, gen);
  }
  return net;
}

void load_imagenet_weights(BackboneImpl& backbone, const BackboneSpec& spec) {
  const std::string arch(to_string(spec.name));
  if (spec.weights_file.empty() || !fs::is_regular_file(spec.weights_file)) {
    throw InputError("pretrained ImageNet weights for " + arch + " not found" +
                     (spec.weights_file.empty() ? std::string(" (no weights file configured)")
                                                : " at " + spec.weights_file.string()) +
                     "; export them with: python3 scripts/export_imagenet_weights.py --arch " +
                     arch + " --out <dir>/" + arch + ".pt (needs torchvision and network access)");
  }
  std::ifstream in(spec.weights_file, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  c10::impl::GenericDict dict(c10::StringType::get(), c10::TensorType::get());
  try {
    dict = torch::pickle_load(bytes).toGenericDict();
  } catch (const c10::Error& e) {
    throw InputError("cannot parse weights file " + spec.weights_file.string() + ": " +
                     e.what_without_backtrace());
  }
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    auto it = dict.find(name);
    if (it == dict.end()) {
      throw InputError("weights file " + spec.weights_file.string() + " lacks tensor " + name);
    }
    const auto source = it->value().toTensor();
    if (source.sizes() != target.sizes()) {
      throw InputError("weights file tensor " + name + " has the wrong shape");
    }
    target.copy_(source);
  };
  for (auto& item : backbone.named_parameters()) copy_into(item.key(), item.value());
  for (auto& item : backbone.named_buffers()) copy_into(item.key(), item.value());
}

bool has_prefix(const std::string& name, DigestScope scope) {
  switch (scope) {
    case DigestScope::all:
      return true;
    case DigestScope::backbone:
      return name.starts_with("backbone.");
    case DigestScope::head:
      return name.starts_with("head.");
  }
  return false;
}

}  // namespace

std::string_view to_string(BackboneName v) {
  switch (v) {
    case BackboneName::densenet169: return "densenet169";
    case BackboneName::inceptionv3: return "inceptionv3";
    case BackboneName::tiny_test: return "tiny_test";
  }
  return "?";
}
std::string_view to_string(WeightsInit v) {
  return v == WeightsInit::imagenet_pretrained ? "imagenet_pretrained" : "random";
}
std::string_view to_string(HiddenActivation v) {
  return v == HiddenActivation::relu ? "relu" : "sigmoid";
}
std::string_view to_string(TrainableScope v) {
  return v == TrainableScope::head_only ? "head_only" : "full_network";
}

BackboneName parse_backbone_name(std::string_view text) {
  if (text == "densenet169") return BackboneName::densenet169;
  if (text == "inceptionv3") return BackboneName::inceptionv3;
  if (text == "tiny_test") return BackboneName::tiny_test;
  bad_value("backbone", text);
}
WeightsInit parse_weights_init(std::string_view text) {
  if (text == "imagenet_pretrained") return WeightsInit::imagenet_pretrained;
  if (text == "random") return WeightsInit::random;
  bad_value("weights init", text);
}
HiddenActivation parse_hidden_activation(std::string_view text) {
  if (text == "relu") return HiddenActivation::relu;
  if (text == "sigmoid") return HiddenActivation::sigmoid;
  bad_value("hidden activation", text);
}
TrainableScope parse_trainable_scope(std::string_view text) {
  if (text == "head_only") return TrainableScope::head_only;
  if (text == "full_network") return TrainableScope::full_network;
  bad_value("trainable scope", text);
}

int standard_resolution(BackboneName name) {
  switch (name) {
    case BackboneName::densenet169: return 224;
    case BackboneName::inceptionv3: return 299;
    case BackboneName::tiny_test: return 64;
  }
  throw InputError("unknown backbone");
}

BackboneSpec BackboneSpec::make(BackboneName name, WeightsInit init, fs::path weights_file) {
  return BackboneSpec{name, init, standard_resolution(name), std::move(weights_file)};
}

// ---------------------------------------------------------------------------

ClassifierImpl::ClassifierImpl(std::shared_ptr<BackboneImpl> backbone, HeadSpec head)
    : activation_(head.hidden_activation) {
  backbone_ = register_module("backbone", std::move(backbone));
  head_ = register_module("head", std::make_shared<torch::nn::Module>());
  hidden_ = head_->register_module(
      "hidden", torch::nn::Linear(backbone_->feature_channels(), head.hidden_width));
  output_ = head_->register_module("output", torch::nn::Linear(head.hidden_width, 1));
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& x) {
  auto pooled = backbone_->forward(x).mean({2, 3});
  auto h = hidden_(pooled);
  h = activation_ == HiddenActivation::relu ? torch::relu(h) : torch::sigmoid(h);
  return torch::sigmoid(output_(h)).squeeze(1);
}

void ClassifierImpl::train(bool on) {
  torch::nn::Module::train(on);
  if (on && scope_ == TrainableScope::head_only) backbone_->eval();
}

void ClassifierImpl::set_scope(TrainableScope scope) {
  if (scope != TrainableScope::head_only && scope != TrainableScope::full_network) {
    throw InputError("unknown trainable scope");
  }
  scope_ = scope;
  for (auto& p : backbone_->parameters()) p.requires_grad_(scope == TrainableScope::full_network);
  for (auto& p : head_->parameters()) p.requires_grad_(true);
  train(is_training());
}

// ---------------------------------------------------------------------------

ModelHandle::ModelHandle(BackboneSpec backbone, HeadSpec head, std::uint64_t seed,
                         std::shared_ptr<ClassifierImpl> net)
    : backbone_(std::move(backbone)), head_(head), seed_(seed), net_(std::move(net)) {}

torch::Device ModelHandle::device() const { return net_->parameters().front().device(); }

torch::Tensor ModelHandle::predict(const torch::Tensor& batch) {
  const bool was_training = net_->is_training();
  net_->eval();
  torch::Tensor out;
  {
    torch::NoGradGuard no_grad;
    out = net_->forward(batch.to(device()));
  }
  net_->train(was_training);
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> ModelHandle::named_state(DigestScope scope) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : net_->named_parameters()) {
    if (has_prefix(item.key(), scope)) out.emplace_back(item.key(), item.value());
  }
  for (const auto& item : net_->named_buffers()) {
    if (has_prefix(item.key(), scope)) out.emplace_back(item.key(), item.value());
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> ModelHandle::signature() const {
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
  for (const auto& [name, t] : named_state(DigestScope::all)) {
    out.emplace_back(name, t.sizes().vec());
  }
  return out;
}

std::int64_t ModelHandle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : net_->parameters()) n += p.numel();
  return n;
}

std::vector<torch::Tensor> ModelHandle::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : net_->parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

ModelHandle ModelHandle::clone() const {
  ModelHandle copy(backbone_, head_, seed_, make_network(backbone_, head_, seed_));
  copy.to(device());
  copy.copy_state_from(*this);
  copy.net_->set_scope(net_->scope());
  copy.net_->train(net_->is_training());
  return copy;
}

void ModelHandle::copy_state_from(const ModelHandle& other) {
  auto mine = named_state(DigestScope::all);
  auto theirs = other.named_state(DigestScope::all);
  if (mine.size() != theirs.size()) throw InputError("copy_state_from: architectures differ");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || mine[i].second.sizes() != theirs[i].second.sizes()) {
      throw InputError("copy_state_from: tensor mismatch at " + mine[i].first);
    }
    mine[i].second.copy_(theirs[i].second);
  }
}

void ModelHandle::to(torch::Device device) { net_->to(device); }

// ---------------------------------------------------------------------------

ModelHandle build_model(const BackboneSpec& backbone, const HeadSpec& head, std::uint64_t seed) {
  if (backbone.name == BackboneName::tiny_test &&
      backbone.weights_init == WeightsInit::imagenet_pretrained) {
    throw InputError("tiny_test has no ImageNet weights; use weights_init=random");
  }
  auto net = make_network(backbone, head, seed);
  if (backbone.weights_init == WeightsInit::imagenet_pretrained) {
    load_imagenet_weights(net->backbone(), backbone);
  }
  ModelHandle model(backbone, head, seed, std::move(net));
  model.net().set_scope(TrainableScope::full_network);
  return model;
}

ModelHandle set_trainable_scope(ModelHandle model, TrainableScope scope) {
  model.net().set_scope(scope);
  return model;
}

void save_checkpoint(const ModelHandle& model, const fs::path& path) {
  c10::impl::GenericDict state(c10::StringType::get(), c10::TensorType::get());
  for (const auto& [name, t] : model.named_state(DigestScope::all)) {
    state.insert(name, t.detach().cpu().clone());
  }
  c10::impl::GenericDict doc(c10::StringType::get(), c10::AnyType::get());
  doc.insert("format", std::string(kCheckpointFormat));
  doc.insert("format_version", kCheckpointVersion);
  doc.insert("backbone", std::string(to_string(model.backbone_spec().name)));
  doc.insert("weights_init", std::string(to_string(model.backbone_spec().weights_init)));
  doc.insert("input_resolution", static_cast<std::int64_t>(model.backbone_spec().input_resolution));
  doc.insert("head_hidden_width", static_cast<std::int64_t>(model.head_spec().hidden_width));
  doc.insert("head_activation", std::string(to_string(model.head_spec().hidden_activation)));
  doc.insert("seed", static_cast<std::int64_t>(model.seed()));
  doc.insert("trainable_scope", std::string(to_string(model.trainable_scope())));
  doc.insert("state", state);

  const std::vector<char> bytes = torch::pickle_save(c10::IValue(doc));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write checkpoint: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeFailure("failed writing checkpoint: " + path.string());
  }
  fs::rename(tmp, path);
}

ModelHandle load_checkpoint(const fs::path& path, std::optional<BackboneName> expected) {
  if (!fs::is_regular_file(path)) throw InputError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});

  c10::impl::GenericDict doc(c10::StringType::get(), c10::AnyType::get());
  try {
    doc = torch::pickle_load(bytes).toGenericDict();
  } catch (const c10::Error& e) {
    throw InputError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  auto field = [&](const char* key) -> c10::IValue {
    auto it = doc.find(key);
    if (it == doc.end()) throw InputError("checkpoint " + path.string() + " lacks field " + key);
    return it->value();
  };
  try {
    if (field("format").toStringRef() != kCheckpointFormat) {
      throw InputError(path.string() + " is not a tss checkpoint");
    }
    if (field("format_version").toInt() != kCheckpointVersion) {
      throw InputError("unsupported checkpoint format version in " + path.string());
    }
    BackboneSpec spec = BackboneSpec::make(parse_backbone_name(field("backbone").toStringRef()),
                                           parse_weights_init(field("weights_init").toStringRef()));
    if (expected && *expected != spec.name) {
      throw InputError("checkpoint " + path.string() + " holds a " +
                       std::string(to_string(spec.name)) + " model, expected " +
                       std::string(to_string(*expected)));
    }
    if (field("input_resolution").toInt() != spec.input_resolution) {
      throw InputError("checkpoint input resolution does not match " +
                       std::string(to_string(spec.name)));
    }
    HeadSpec head{static_cast<int>(field("head_hidden_width").toInt()),
                  parse_hidden_activation(field("head_activation").toStringRef())};
    const auto seed = static_cast<std::uint64_t>(field("seed").toInt());

    ModelHandle model(spec, head, seed, make_network(spec, head, seed));
    auto state = field("state").toGenericDict();
    auto targets = model.named_state(DigestScope::all);
    if (static_cast<std::size_t>(state.size()) != targets.size()) {
      throw InputError("checkpoint " + path.string() + " does not match the recorded architecture");
    }
    torch::NoGradGuard no_grad;
    for (auto& [name, target] : targets) {
      auto it = state.find(name);
      if (it == state.end()) throw InputError("checkpoint lacks tensor " + name);
      const auto source = it->value().toTensor();
      if (source.sizes() != target.sizes()) throw InputError("checkpoint tensor " + name + " has the wrong shape");
      target.copy_(source);
    }
    model.net().set_scope(parse_trainable_scope(field("trainable_scope").toStringRef()));
    return model;
  } catch (const c10::Error& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

std::string parameter_digest(const ModelHandle& model, DigestScope scope) {
  Sha256 hash;
  for (const auto& [name, t] : model.named_state(scope)) {
    const auto cpu = t.detach().cpu().contiguous();
    hash.update(name).update("\n").update(std::string(c10::toString(cpu.scalar_type()))).update("\n");
    for (auto d : cpu.sizes()) hash.update(std::to_string(d)).update(",");
    hash.update("\n");
    hash.update(std::span(static_cast<const std::byte*>(cpu.data_ptr()), cpu.nbytes()));
  }
  return hash.finish();
}

torch::Device default_device() {
  const char* env = std::getenv("TSS_DEVICE");
  if (env == nullptr || std::string_view(env).empty() || std::string_view(env) == "cpu") {
    return torch::kCPU;
  }
  if (std::string_view(env) == "cuda") {
    if (!torch::cuda::is_available()) throw InputError("TSS_DEVICE=cuda but CUDA is not available");
    return torch::kCUDA;
  }
  throw InputError("TSS_DEVICE must be 'cpu' or 'cuda', got '" + std::string(env) + "'");
}

}  // namespace tss
