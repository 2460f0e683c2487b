#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tss/manifest.hpp"
#include "tss/model.hpp"

namespace tss {

enum class OptimizerKind { rmsprop, sgd };
enum class CheckpointCriterion { min_train_loss, max_train_accuracy };

std::string_view to_string(OptimizerKind v);
std::string_view to_string(CheckpointCriterion v);
OptimizerKind parse_optimizer(std::string_view text);
CheckpointCriterion parse_criterion(std::string_view text);

/// Hyper-parameters of one optimizer run.
///
/// RMSProp uses decay 0.9, epsilon 1e-7 and no momentum; SGD is plain (no
/// momentum, no weight decay). The learning rate is constant within a run.
struct TrainingRunConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double learning_rate = 1e-5;
  int epochs = 30;
  int batch_size = 4;
  TrainableScope trainable_scope = TrainableScope::full_network;
  CheckpointCriterion checkpoint_criterion = CheckpointCriterion::min_train_loss;
  std::uint64_t seed = 0;

  /// Throws InputError on a non-positive learning rate, epoch count or batch size.
  void validate() const;

  friend bool operator==(const TrainingRunConfig&, const TrainingRunConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double accuracy = 0.0;
  bool checkpointed = false;
  /// Filled only when TrainingOptions::record_predictions is set: every
  /// prediction made during the epoch, in batch order, with its label.
  std::vector<float> predictions;
  std::vector<int> labels;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based, matches EpochRecord::epoch
  std::filesystem::path best_checkpoint_path;

  /// Line-delimited audit log: "epoch<TAB>loss<TAB>accuracy<TAB>checkpoint".
  std::string serialize() const;
  void write(const std::filesystem::path& path) const;
  static RunHistory parse(std::string_view text);
  static RunHistory read(const std::filesystem::path& path);
};

constexpr double kBceEpsilon = 1e-7;

/// -[y ln p + (1 - y) ln(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(double prediction, int label);

/// Random-access labelled inputs for the trainer.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t index) const = 0;
  /// Batch of normalised float inputs [B, 3, R, R] for the given indices.
  virtual torch::Tensor batch(std::span<const std::size_t> indices) = 0;
};

/// Inputs decoded from a manifest at a fixed resolution. Decoded pixels are
/// cached as uint8 after the first access.
class ManifestSource : public SampleSource {
 public:
  ManifestSource(const DatasetManifest& manifest, int resolution, InputNormalization norm);
  std::size_t size() const override { return sources_.size(); }
  int label(std::size_t index) const override { return labels_.at(index); }
  torch::Tensor batch(std::span<const std::size_t> indices) override;

 private:
  std::vector<std::filesystem::path> sources_;
  std::vector<int> labels_;
  std::vector<torch::Tensor> cache_;
  int resolution_;
  InputNormalization norm_;
};

/// Pre-built float inputs [N, 3, R, R] with labels.
class TensorSource : public SampleSource {
 public:
  TensorSource(torch::Tensor inputs, std::vector<int> labels);
  std::size_t size() const override { return labels_.size(); }
  int label(std::size_t index) const override { return labels_.at(index); }
  torch::Tensor batch(std::span<const std::size_t> indices) override;

 private:
  torch::Tensor inputs_;
  std::vector<int> labels_;
};

struct TrainingOptions {
  /// Where the best checkpoint ("<run_name>-best.pt") is written. Empty keeps
  /// the best state in memory only.
  std::filesystem::path checkpoint_dir;
  std::string run_name = "run";
  /// Also write "<run_name>-epoch-NN.pt" after every epoch.
  bool keep_epoch_checkpoints = false;
  bool record_predictions = false;
  std::ostream* log = nullptr;
};

struct TrainingResult {
  ModelHandle model;  // restored to the best epoch, not the last one
  RunHistory history;
};

/// Visiting order of epoch `epoch` (1-based): a shuffle seeded by (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch);

/// Trains for exactly config.epochs epochs and returns the model restored
/// to the epoch that was best under the configured criterion (earliest on
/// ties). Throws InputError on empty data or an invalid config and
/// RuntimeFailure on a non-finite loss.
TrainingResult run_training(ModelHandle model, SampleSource& data, const TrainingRunConfig& config,
                            const TrainingOptions& options = {});

TrainingResult run_training(ModelHandle model, const DatasetManifest& data,
                            const TrainingRunConfig& config, const TrainingOptions& options = {});

double criterion_value(const EpochRecord& record, CheckpointCriterion criterion);
/// Strict improvement: equal values do not count.
bool improves(double candidate, double incumbent, CheckpointCriterion criterion);

/// Array positions (0-based) of a run and of an epoch within that run.
struct CheckpointChoice {
  std::size_t run = 0;
  std::size_t epoch = 0;
  friend bool operator==(const CheckpointChoice&, const CheckpointChoice&) = default;
};

/// Globally best (run, epoch) under `criterion`; the earliest run, then
/// the earliest epoch, wins ties.
CheckpointChoice select_checkpoint(std::span<const RunHistory> histories,
                                   CheckpointCriterion criterion);

}  // namespace tss
