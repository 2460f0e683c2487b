#include "tss/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "tss/errors.hpp"

namespace fs = std::filesystem;

namespace tss {

namespace {

constexpr std::string_view kHistoryMagic = "#tss-run-history v1";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw InputError("invalid number in run history: '" + std::string(text) + "'");
  }
  return v;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const TrainingRunConfig& config,
                                                        std::vector<torch::Tensor> params) {
  if (config.optimizer == OptimizerKind::rmsprop) {
    return std::make_unique<torch::optim::RMSprop>(
        std::move(params),
        torch::optim::RMSpropOptions(config.learning_rate).alpha(0.9).eps(1e-7).momentum(0.0));
  }
  return std::make_unique<torch::optim::SGD>(
      std::move(params), torch::optim::SGDOptions(config.learning_rate).momentum(0.0));
}

std::vector<torch::Tensor> snapshot(const ModelHandle& model) {
  std::vector<torch::Tensor> out;
  for (const auto& [name, t] : model.named_state(DigestScope::all)) {
    out.push_back(t.detach().clone());
  }
  return out;
}

void restore(ModelHandle& model, const std::vector<torch::Tensor>& state) {
  torch::NoGradGuard no_grad;
  auto targets = model.named_state(DigestScope::all);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i].second.copy_(state[i]);
}

std::string epoch_tag(int epoch) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << epoch;
  return s.str();
}

}  // namespace

std::string_view to_string(OptimizerKind v) { return v == OptimizerKind::rmsprop ? "rmsprop" : "sgd"; }
std::string_view to_string(CheckpointCriterion v) {
  return v == CheckpointCriterion::min_train_loss ? "min_train_loss" : "max_train_accuracy";
}
OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "rmsprop") return OptimizerKind::rmsprop;
  if (text == "sgd") return OptimizerKind::sgd;
  throw InputError("unknown optimizer: '" + std::string(text) + "'");
}
CheckpointCriterion parse_criterion(std::string_view text) {
  if (text == "min_train_loss") return CheckpointCriterion::min_train_loss;
  if (text == "max_train_accuracy") return CheckpointCriterion::max_train_accuracy;
  throw InputError("unknown checkpoint criterion: '" + std::string(text) + "'");
}

void TrainingRunConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be positive");
  }
  if (epochs < 1) throw InputError("epochs must be at least 1");
  if (batch_size < 1) throw InputError("batch_size must be at least 1");
}

// ---------------------------------------------------------------------------

std::string RunHistory::serialize() const {
  std::ostringstream out;
  out << kHistoryMagic << "\n";
  out << "#best_epoch=" << best_epoch << "\n";
  out << "#best_checkpoint=" << best_checkpoint_path.string() << "\n";
  out << "epoch\tloss\taccuracy\tcheckpoint\n";
  for (const auto& e : epochs) {
    out << e.epoch << "\t" << format_double(e.mean_loss) << "\t" << format_double(e.accuracy)
        << "\t" << (e.checkpointed ? 1 : 0) << "\n";
  }
  return out.str();
}

void RunHistory::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write run history: " + path.string());
  out << serialize();
}

RunHistory RunHistory::parse(std::string_view text) {
  RunHistory h;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kHistoryMagic) throw InputError("not a run history");
  while (std::getline(in, line)) {
    if (line.empty() || line.starts_with("epoch\t")) continue;
    if (line.starts_with("#best_epoch=")) {
      h.best_epoch = static_cast<int>(parse_double(line.substr(12)));
    } else if (line.starts_with("#best_checkpoint=")) {
      h.best_checkpoint_path = line.substr(17);
    } else {
      std::istringstream fields(line);
      std::string epoch, loss, acc, ckpt;
      if (!(std::getline(fields, epoch, '\t') && std::getline(fields, loss, '\t') &&
            std::getline(fields, acc, '\t') && std::getline(fields, ckpt, '\t'))) {
        throw InputError("malformed run history line: " + line);
      }
      EpochRecord r;
      r.epoch = static_cast<int>(parse_double(epoch));
      r.mean_loss = parse_double(loss);
      r.accuracy = parse_double(acc);
      r.checkpointed = ckpt == "1";
      h.epochs.push_back(std::move(r));
    }
  }
  return h;
}

RunHistory RunHistory::read(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read run history: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

double binary_cross_entropy(double prediction, int label) {
  const double p = std::clamp(prediction, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

// ---------------------------------------------------------------------------

ManifestSource::ManifestSource(const DatasetManifest& manifest, int resolution,
                               InputNormalization norm)
    : resolution_(resolution), norm_(norm) {
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    sources_.push_back(manifest.source_path(i));
    labels_.push_back(manifest.binary_label(i));
  }
  cache_.resize(sources_.size());
}

torch::Tensor ManifestSource::batch(std::span<const std::size_t> indices) {
  std::vector<torch::Tensor> pixels;
  pixels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto& slot = cache_.at(i);
    if (!slot.defined()) slot = to_uint8_chw(load_image_rgb(sources_[i]), resolution_);
    pixels.push_back(slot);
  }
  return normalize_input(torch::stack(pixels), norm_);
}

TensorSource::TensorSource(torch::Tensor inputs, std::vector<int> labels)
    : inputs_(std::move(inputs)), labels_(std::move(labels)) {
  if (inputs_.dim() != 4 || inputs_.size(0) != static_cast<std::int64_t>(labels_.size())) {
    throw InputError("TensorSource: inputs must be [N, C, H, W] with one label per row");
  }
}

torch::Tensor TensorSource::batch(std::span<const std::size_t> indices) {
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  return inputs_.index_select(0, torch::tensor(idx, torch::kLong));
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double criterion_value(const EpochRecord& record, CheckpointCriterion criterion) {
  return criterion == CheckpointCriterion::min_train_loss ? record.mean_loss : record.accuracy;
}

bool improves(double candidate, double incumbent, CheckpointCriterion criterion) {
  return criterion == CheckpointCriterion::min_train_loss ? candidate < incumbent
                                                          : candidate > incumbent;
}

TrainingResult run_training(ModelHandle model, SampleSource& data, const TrainingRunConfig& config,
                            const TrainingOptions& options) {
  config.validate();
  const std::size_t n = data.size();
  if (n == 0) throw InputError("cannot train on an empty dataset");

  model.net().set_scope(config.trainable_scope);
  model.net().train(true);
  auto optimizer = make_optimizer(config, model.trainable_parameters());
  const torch::Device device = model.device();

  const fs::path best_path = options.checkpoint_dir.empty()
                                 ? fs::path{}
                                 : options.checkpoint_dir / (options.run_name + "-best.pt");
  RunHistory history;
  history.best_checkpoint_path = best_path;
  std::vector<torch::Tensor> best_state;
  double best_value = 0.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_permutation(n, config.seed, epoch);
    EpochRecord record;
    record.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0, batch_no = 1; start < n; start += config.batch_size, ++batch_no) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<float> labels;
      for (std::size_t i : idx) labels.push_back(static_cast<float>(data.label(i)));

      const auto inputs = data.batch(idx).to(device);
      const auto targets = torch::tensor(labels).to(device);

      optimizer->zero_grad();
      const auto probs = model.net().forward(inputs);
      const auto clamped = probs.clamp(kBceEpsilon, 1.0 - kBceEpsilon);
      const auto per_sample =
          -(targets * torch::log(clamped) + (1 - targets) * torch::log(1 - clamped));
      const auto loss = per_sample.mean();
      if (!std::isfinite(loss.item<double>())) {
        throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
      }
      loss.backward();
      optimizer->step();

      const auto losses = per_sample.detach().to(torch::kCPU, torch::kDouble).contiguous();
      const auto p = probs.detach().to(torch::kCPU).contiguous();
      const auto loss_at = losses.accessor<double, 1>();
      const auto p_at = p.accessor<float, 1>();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto kk = static_cast<std::int64_t>(k);
        loss_sum += loss_at[kk];
        const float pk = p_at[kk];
        const int y = static_cast<int>(labels[k]);
        correct += (pk >= 0.5f ? 1 : 0) == y ? 1 : 0;
        if (options.record_predictions) {
          record.predictions.push_back(pk);
          record.labels.push_back(y);
        }
      }
    }
    record.mean_loss = loss_sum / static_cast<double>(n);
    record.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    const double value = criterion_value(record, config.checkpoint_criterion);
    if (epoch == 1 || improves(value, best_value, config.checkpoint_criterion)) {
      best_value = value;
      history.best_epoch = epoch;
      record.checkpointed = true;
      best_state = snapshot(model);
      if (!best_path.empty()) save_checkpoint(model, best_path);
    }
    if (options.keep_epoch_checkpoints && !options.checkpoint_dir.empty()) {
      save_checkpoint(model, options.checkpoint_dir /
                                 (options.run_name + "-epoch-" + epoch_tag(epoch) + ".pt"));
    }
    if (options.log != nullptr) {
      *options.log << options.run_name << " epoch " << epoch << "/" << config.epochs
                   << " loss=" << record.mean_loss << " acc=" << record.accuracy
                   << (record.checkpointed ? " *" : "") << "\n";
    }
    history.epochs.push_back(std::move(record));
  }

  restore(model, best_state);
  model.net().train(false);
  return TrainingResult{std::move(model), std::move(history)};
}

TrainingResult run_training(ModelHandle model, const DatasetManifest& data,
                            const TrainingRunConfig& config, const TrainingOptions& options) {
  ManifestSource source(data, model.backbone_spec().input_resolution,
                        model.backbone_spec().normalization());
  return run_training(std::move(model), source, config, options);
}

CheckpointChoice select_checkpoint(std::span<const RunHistory> histories,
                                   CheckpointCriterion criterion) {
  std::optional<CheckpointChoice> best;
  double best_value = 0.0;
  for (std::size_t r = 0; r < histories.size(); ++r) {
    for (std::size_t e = 0; e < histories[r].epochs.size(); ++e) {
      const double v = criterion_value(histories[r].epochs[e], criterion);
      if (!best || improves(v, best_value, criterion)) {
        best = CheckpointChoice{r, e};
        best_value = v;
      }
    }
  }
  if (!best) throw InputError("select_checkpoint: no run history entries");
  return *best;
}

}  // namespace tss
