#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tss/manifest.hpp"
#include "tss/metrics.hpp"
#include "tss/model.hpp"
#include "tss/trainer.hpp"

namespace tss {

enum class Phase { self_supervision, transfer };
std::string_view to_string(Phase v);

struct PhasePlan {
  Phase phase = Phase::self_supervision;
  std::vector<TrainingRunConfig> runs;
};

/// The fixed two-phase schedule.
///
/// Flip-detection pretraining, best checkpoint by lowest training loss,
/// each run starting from the previous run's best:
///   1. RMSProp 1e-4, 30 epochs, head only
///   2. SGD 1e-5, batch 4, 30 epochs, whole network
///   3. SGD 1e-6, batch 4, 30 epochs, whole network
/// Transfer to the downstream task, final model = highest training accuracy
/// across both runs:
///   1. RMSProp 1e-4, 30 epochs, head only
///   2. SGD 1e-5, batch 4, 30 epochs, whole network
/// RMSProp runs use batch 32. Run seeds are derived from `seed`.
std::pair<PhasePlan, PhasePlan> build_phase_plans(std::uint64_t seed = 0);

/// Batch size used for the RMSProp (head-only) runs.
inline constexpr int kRmspropBatchSize = 32;

struct PhaseContext {
  std::filesystem::path checkpoint_dir;  // empty: keep best states in memory
  std::filesystem::path history_dir;     // empty: do not write history logs
  std::ostream* log = nullptr;
  bool record_predictions = false;
};

struct PhaseResult {
  ModelHandle model;
  std::vector<RunHistory> histories;
  CheckpointChoice choice;  // which (run, epoch) the returned model comes from
};

/// Runs the pretext plan on train-split pretext records (original -> 0,
/// flipped -> 1), chaining best checkpoints. The head is kept as is.
PhaseResult self_supervision_phase(ModelHandle model, const DatasetManifest& pretext_train,
                                   const PhasePlan& plan, const PhaseContext& context = {});
PhaseResult self_supervision_phase(ModelHandle model, SampleSource& pretext_train,
                                   const PhasePlan& plan, const PhaseContext& context = {});

/// Runs the transfer plan on train-split downstream records (covid -> 1)
/// and returns the best checkpoint by training accuracy across its runs.
PhaseResult transfer_phase(ModelHandle model, const DatasetManifest& downstream_train,
                           const PhasePlan& plan, const PhaseContext& context = {});
PhaseResult transfer_phase(ModelHandle model, SampleSource& downstream_train,
                           const PhasePlan& plan, const PhaseContext& context = {});

/// One cell of the experiment matrix.
struct ExperimentConfig {
  std::string id;
  BackboneSpec backbone;
  HeadSpec head;
  double ss_fraction = 0.0;  // 0 skips self-supervision entirely
  std::uint64_t seed = 0;
  std::filesystem::path data_root;
  std::filesystem::path output_dir;

  void validate() const;
  /// key = value lines, the same keys the matrix config uses.
  std::string serialize() const;
};

/// Prepared data under a data root:
///   <root>/downstream.manifest                 merged train + test
///   <root>/pretext/train/{original,flipped}/   pretext images
///   <root>/pretext/pretext-train-1.manifest    full pretext train set
///   <root>/pretext/pretext-test-1.manifest     materialised, unused
std::filesystem::path downstream_manifest_path(const std::filesystem::path& data_root);
std::filesystem::path pretext_manifest_path(const std::filesystem::path& pretext_dir, Split split,
                                            double fraction);
std::filesystem::path pretext_dir(const std::filesystem::path& data_root);

inline constexpr std::array<double, 4> kStandardFractions{0.25, 0.5, 0.75, 1.0};

/// Pretext images and manifests for an ingested downstream manifest, under
/// `pretext_dir`: images and a full manifest for every split that has
/// records, plus one pretext-train manifest per entry of `fractions`
/// (1.0 is the full train manifest). Returns the manifest files written.
std::vector<std::filesystem::path> build_pretext_manifests(
    const DatasetManifest& downstream, const std::filesystem::path& pretext_dir,
    std::span<const double> fractions = kStandardFractions);

/// Writes the whole layout above: the downstream manifest plus
/// build_pretext_manifests under <root>/pretext.
std::vector<std::filesystem::path> prepare_data_root(
    const DatasetManifest& downstream, const std::filesystem::path& data_root,
    std::span<const double> fractions = kStandardFractions);

struct ExperimentResult {
  MetricsReport report;
  std::vector<RunHistory> ss_histories;
  std::vector<RunHistory> transfer_histories;
  std::filesystem::path final_checkpoint;
};

struct ExperimentOptions {
  std::ostream* log = nullptr;
};

/// build -> optional self-supervision on take_fraction(ss_fraction) ->
/// transfer on the full downstream train split -> evaluation on the test
/// split. Writes <output_dir>/<id>/{checkpoints/, histories/, report.csv,
/// experiment.cfg}; on failure writes failure.txt instead of the report
/// and rethrows.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

/// Scores the downstream test records with `model`.
MetricsReport evaluate_model(ModelHandle& model, const DatasetManifest& test_manifest,
                             std::string experiment_id);

std::filesystem::path experiment_dir(const ExperimentConfig& config);
std::filesystem::path report_path(const ExperimentConfig& config);

struct MatrixRow {
  ExperimentConfig config;
  std::optional<MetricsReport> report;
  bool resumed = false;
  std::string error;  // non-empty when the experiment failed
};

struct MatrixOptions {
  bool resume = true;  // skip experiments whose report already exists
  int jobs = 1;        // experiments run concurrently (one per device)
  std::ostream* log = nullptr;
};

/// Runs each experiment, one row per config in input order. A failing
/// experiment is recorded in its row and the matrix carries on.
std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs,
                                  const MatrixOptions& options = {});

/// The ten cells {inceptionv3, densenet169} x {0, .25, .5, .75, 1}, ids exp01..exp10.
std::vector<ExperimentConfig> default_matrix(const std::filesystem::path& data_root,
                                             const std::filesystem::path& output_dir,
                                             const std::filesystem::path& weights_dir,
                                             std::uint64_t seed);

/// Reads a matrix config file (INI: a [defaults] section and one section
/// per experiment). Relative paths resolve against the file's directory.
std::vector<ExperimentConfig> read_matrix_config(const std::filesystem::path& path);

}  // namespace tss
