#include "tss/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>

#include "tss/errors.hpp"
#include "tss/ingest.hpp"

namespace fs = std::filesystem;

namespace tss {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t run_seed(std::uint64_t seed, Phase phase, std::size_t run) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(phase) << 8) | run));
}

std::string fraction_tag(double f) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  return std::string(buf, res.ptr);
}

std::vector<std::string> head_names(const ModelHandle& model) {
  std::vector<std::string> out;
  for (const auto& [name, t] : model.named_state(DigestScope::head)) out.push_back(name);
  return out;
}

PhaseResult run_phase(ModelHandle model, SampleSource& data, const PhasePlan& plan,
                      const PhaseContext& context, std::string_view prefix, bool chain_only) {
  if (plan.runs.empty()) throw InputError("phase plan has no runs");
  const auto signature_before = model.signature();
  std::vector<RunHistory> histories;
  std::vector<ModelHandle> bests;  // chain mode keeps only the final run's best
  std::optional<ModelHandle> carry(std::move(model));
  for (std::size_t k = 0; k < plan.runs.size(); ++k) {
    TrainingOptions opts;
    opts.checkpoint_dir = context.checkpoint_dir;
    opts.run_name = std::string(prefix) + "-run" + std::to_string(k + 1);
    opts.log = context.log;
    opts.record_predictions = context.record_predictions;
    auto result = run_training(std::move(*carry), data, plan.runs[k], opts);
    carry.reset();
    if (!context.history_dir.empty()) {
      result.history.write(context.history_dir / (opts.run_name + ".log"));
    }
    histories.push_back(std::move(result.history));
    const bool last = k + 1 == plan.runs.size();
    if (chain_only) {
      if (last) {
        bests.push_back(std::move(result.model));
      } else {
        carry.emplace(std::move(result.model));
      }
    } else {
      if (!last) carry.emplace(result.model.clone());
      bests.push_back(std::move(result.model));
    }
  }

  CheckpointChoice choice;
  ModelHandle chosen = [&] {
    if (chain_only) {
      choice = {histories.size() - 1,
                static_cast<std::size_t>(histories.back().best_epoch - 1)};
      return std::move(bests.back());
    }
    choice = select_checkpoint(histories, plan.runs.front().checkpoint_criterion);
    return std::move(bests[choice.run]);
  }();
  if (chosen.signature() != signature_before) {
    throw RuntimeFailure("architecture changed during the " + std::string(to_string(plan.phase)) +
                         " phase");
  }
  return PhaseResult{std::move(chosen), std::move(histories), choice};
}

void require_train_only(const DatasetManifest& m, std::string_view what) {
  if (m.empty()) throw InputError(std::string(what) + " manifest is empty");
  if (m.count(Split::test) != 0) {
    throw InputError(std::string(what) + " manifest contains test-split records");
  }
}

}  // namespace

std::string_view to_string(Phase v) {
  return v == Phase::self_supervision ? "self_supervision" : "transfer";
}

std::pair<PhasePlan, PhasePlan> build_phase_plans(std::uint64_t seed) {
  using O = OptimizerKind;
  using S = TrainableScope;
  using C = CheckpointCriterion;
  PhasePlan ss{Phase::self_supervision,
               {
                   {O::rmsprop, 1e-4, 30, kRmspropBatchSize, S::head_only, C::min_train_loss, 0},
                   {O::sgd, 1e-5, 30, 4, S::full_network, C::min_train_loss, 0},
                   {O::sgd, 1e-6, 30, 4, S::full_network, C::min_train_loss, 0},
               }};
  PhasePlan transfer{Phase::transfer,
                     {
                         {O::rmsprop, 1e-4, 30, kRmspropBatchSize, S::head_only, C::max_train_accuracy, 0},
                         {O::sgd, 1e-5, 30, 4, S::full_network, C::max_train_accuracy, 0},
                     }};
  for (auto* plan : {&ss, &transfer}) {
    for (std::size_t k = 0; k < plan->runs.size(); ++k) {
      plan->runs[k].seed = run_seed(seed, plan->phase, k);
    }
  }
  return {ss, transfer};
}

PhaseResult self_supervision_phase(ModelHandle model, SampleSource& pretext_train,
                                   const PhasePlan& plan, const PhaseContext& context) {
  if (plan.phase != Phase::self_supervision) throw InputError("expected a self-supervision plan");
  const auto heads = head_names(model);
  auto result = run_phase(std::move(model), pretext_train, plan, context, "ss", true);
  if (head_names(result.model) != heads) throw RuntimeFailure("head replaced during self-supervision");
  return result;
}

PhaseResult self_supervision_phase(ModelHandle model, const DatasetManifest& pretext_train,
                                   const PhasePlan& plan, const PhaseContext& context) {
  if (pretext_train.kind() != ManifestKind::pretext) {
    throw InputError("self-supervision needs a pretext manifest");
  }
  require_train_only(pretext_train, "pretext");
  ManifestSource source(pretext_train, model.backbone_spec().input_resolution,
                        model.backbone_spec().normalization());
  return self_supervision_phase(std::move(model), source, plan, context);
}

PhaseResult transfer_phase(ModelHandle model, SampleSource& downstream_train, const PhasePlan& plan,
                           const PhaseContext& context) {
  if (plan.phase != Phase::transfer) throw InputError("expected a transfer plan");
  return run_phase(std::move(model), downstream_train, plan, context, "transfer", false);
}

PhaseResult transfer_phase(ModelHandle model, const DatasetManifest& downstream_train,
                           const PhasePlan& plan, const PhaseContext& context) {
  if (downstream_train.kind() != ManifestKind::downstream) {
    throw InputError("transfer needs a downstream manifest");
  }
  require_train_only(downstream_train, "downstream training");
  ManifestSource source(downstream_train, model.backbone_spec().input_resolution,
                        model.backbone_spec().normalization());
  return transfer_phase(std::move(model), source, plan, context);
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (id.empty() || id.find_first_of("/\\ ,\t\n") != std::string::npos) {
    throw InputError("experiment id must be a non-empty token without separators: '" + id + "'");
  }
  if (!(ss_fraction == 0.0 || (ss_fraction > 0.0 && ss_fraction <= 1.0))) {
    throw InputError("ss_fraction must be 0 or lie in (0, 1] for " + id);
  }
  if (data_root.empty()) throw InputError("data_root not set for " + id);
  if (output_dir.empty()) throw InputError("output_dir not set for " + id);
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  out << "id = " << id << "\n";
  out << "backbone = " << to_string(backbone.name) << "\n";
  out << "weights_init = " << to_string(backbone.weights_init) << "\n";
  if (!backbone.weights_file.empty()) out << "weights_file = " << backbone.weights_file.string() << "\n";
  out << "head_hidden_width = " << head.hidden_width << "\n";
  out << "head_activation = " << to_string(head.hidden_activation) << "\n";
  out << "fraction = " << fraction_tag(ss_fraction) << "\n";
  out << "seed = " << seed << "\n";
  out << "data_root = " << data_root.string() << "\n";
  out << "output_dir = " << output_dir.string() << "\n";
  return out.str();
}

fs::path downstream_manifest_path(const fs::path& data_root) { return data_root / "downstream.manifest"; }

fs::path pretext_dir(const fs::path& data_root) { return data_root / "pretext"; }

fs::path pretext_manifest_path(const fs::path& dir, Split split, double fraction) {
  return dir / ("pretext-" + std::string(to_string(split)) + "-" + fraction_tag(fraction) + ".manifest");
}

std::vector<fs::path> build_pretext_manifests(const DatasetManifest& downstream,
                                             const fs::path& dir,
                                             std::span<const double> fractions) {
  if (downstream.kind() != ManifestKind::downstream) {
    throw InputError("pretext construction needs a downstream manifest");
  }
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InputError("fraction must lie in (0, 1]: " + fraction_tag(f));
  }
  std::vector<fs::path> written;
  for (Split split : {Split::train, Split::test}) {
    const auto subset = downstream.filter(split);
    if (subset.empty()) continue;
    const auto full = build_pretext_dataset(subset, dir / std::string(to_string(split)));
    if (split == Split::train) {
      for (double f : fractions) {
        const fs::path path = pretext_manifest_path(dir, split, f);
        (f == 1.0 ? full : take_fraction(full, f)).write(path);
        written.push_back(path);
      }
    }
    if (split == Split::test || written.empty() ||
        std::find(fractions.begin(), fractions.end(), 1.0) == fractions.end()) {
      full.write(pretext_manifest_path(dir, split, 1.0));
      written.push_back(pretext_manifest_path(dir, split, 1.0));
    }
  }
  return written;
}

std::vector<fs::path> prepare_data_root(const DatasetManifest& downstream, const fs::path& data_root,
                                       std::span<const double> fractions) {
  if (downstream.kind() != ManifestKind::downstream) {
    throw InputError("data preparation needs a downstream manifest");
  }
  fs::create_directories(data_root);
  downstream.write(downstream_manifest_path(data_root));
  std::vector<fs::path> written{downstream_manifest_path(data_root)};
  const auto pretext = build_pretext_manifests(downstream, pretext_dir(data_root), fractions);
  written.insert(written.end(), pretext.begin(), pretext.end());
  return written;
}

fs::path experiment_dir(const ExperimentConfig& config) { return config.output_dir / config.id; }

fs::path report_path(const ExperimentConfig& config) { return experiment_dir(config) / "report.csv"; }

MetricsReport evaluate_model(ModelHandle& model, const DatasetManifest& test_manifest,
                             std::string experiment_id) {
  if (test_manifest.kind() != ManifestKind::downstream) {
    throw InputError("evaluation needs a downstream manifest");
  }
  if (test_manifest.empty()) throw InputError("evaluation manifest is empty");
  ManifestSource source(test_manifest, model.backbone_spec().input_resolution,
                        model.backbone_spec().normalization());
  std::vector<double> scores;
  std::vector<int> labels;
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < source.size(); start += kBatch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(source.size(), start + kBatch); ++i) idx.push_back(i);
    const auto probs = model.predict(source.batch(idx)).to(torch::kCPU, torch::kDouble).contiguous();
    const auto acc = probs.accessor<double, 1>();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      scores.push_back(acc[static_cast<std::int64_t>(k)]);
      labels.push_back(source.label(idx[k]));
    }
  }
  return make_report(std::move(experiment_id), scores, labels);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  const fs::path dir = experiment_dir(config);
  fs::create_directories(dir);
  fs::remove(dir / "report.csv");
  fs::remove(dir / "failure.txt");
  {
    std::ofstream cfg(dir / "experiment.cfg", std::ios::trunc);
    cfg << config.serialize();
  }

  std::string stage = "setup";
  try {
    const auto downstream = DatasetManifest::read(downstream_manifest_path(config.data_root));
    const auto train = downstream.filter(Split::train);
    const auto test = downstream.filter(Split::test);

    std::optional<DatasetManifest> pretext;
    if (config.ss_fraction > 0.0) {
      const auto full = DatasetManifest::read(
          pretext_manifest_path(pretext_dir(config.data_root), Split::train, 1.0));
      pretext = take_fraction(full, config.ss_fraction);
    }

    auto train_keys = train.isolation_keys();
    if (pretext) train_keys.merge(pretext->isolation_keys());
    for (const auto& key : test.isolation_keys()) {
      if (train_keys.contains(key)) {
        throw InputError("test image " + key + " also appears in a training manifest");
      }
    }

    const auto [ss_plan, transfer_plan] = build_phase_plans(config.seed);
    PhaseContext context{dir / "checkpoints", dir / "histories", options.log, false};

    stage = "build";
    ModelHandle model = build_model(config.backbone, config.head, config.seed);
    model.to(default_device());
    const auto signature = model.signature();

    ExperimentResult result;
    if (pretext) {
      stage = "self_supervision";
      auto ss = self_supervision_phase(std::move(model), *pretext, ss_plan, context);
      model = std::move(ss.model);
      result.ss_histories = std::move(ss.histories);
    }
    stage = "transfer";
    auto transfer = transfer_phase(std::move(model), train, transfer_plan, context);
    model = std::move(transfer.model);
    result.transfer_histories = std::move(transfer.histories);
    if (model.signature() != signature) throw RuntimeFailure("architecture changed across phases");

    stage = "evaluate";
    result.report = evaluate_model(model, test, config.id);
    result.final_checkpoint = dir / "checkpoints" / "final.pt";
    save_checkpoint(model, result.final_checkpoint);
    write_report(result.report, dir / "report.csv");
    return result;
  } catch (const std::exception& e) {
    std::ofstream failure(dir / "failure.txt", std::ios::trunc);
    std::string message = e.what();
    for (char& c : message) {
      if (c == '\n') c = ' ';
    }
    failure << "status=failed\n"
            << "experiment_id=" << config.id << "\n"
            << "stage=" << stage << "\n"
            << "error_kind=" << (dynamic_cast<const InputError*>(&e) ? "input" : "runtime") << "\n"
            << "message=" << message << "\n";
    throw;
  }
}

std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs,
                                  const MatrixOptions& options) {
  if (configs.empty()) throw InputError("experiment matrix is empty");
  std::vector<MatrixRow> rows(configs.size());
  std::mutex log_mutex;

  auto run_one = [&](std::size_t i) {
    MatrixRow& row = rows[i];
    row.config = configs[i];
    if (options.resume && fs::exists(report_path(row.config))) {
      row.report = read_report(report_path(row.config));
      row.resumed = true;
      return;
    }
    try {
      ExperimentOptions eo;
      eo.log = options.jobs <= 1 ? options.log : nullptr;
      row.report = run_experiment(row.config, eo).report;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (options.log != nullptr) {
      std::lock_guard lock(log_mutex);
      *options.log << row.config.id << ": " << (row.error.empty() ? "done" : "failed: " + row.error)
                   << "\n";
    }
  };

  if (options.jobs <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
  } else {
    std::vector<std::future<void>> pending;
    std::size_t next = 0;
    while (next < configs.size() || !pending.empty()) {
      while (next < configs.size() && pending.size() < static_cast<std::size_t>(options.jobs)) {
        pending.push_back(std::async(std::launch::async, run_one, next++));
      }
      pending.front().get();
      pending.erase(pending.begin());
    }
  }
  return rows;
}

std::vector<ExperimentConfig> default_matrix(const fs::path& data_root, const fs::path& output_dir,
                                             const fs::path& weights_dir, std::uint64_t seed) {
  std::vector<ExperimentConfig> out;
  int index = 1;
  for (BackboneName name : {BackboneName::inceptionv3, BackboneName::densenet169}) {
    for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      std::ostringstream id;
      id << "exp" << std::setw(2) << std::setfill('0') << index++;
      ExperimentConfig c;
      c.id = id.str();
      c.backbone = BackboneSpec::make(name, WeightsInit::imagenet_pretrained,
                                      weights_dir / (std::string(to_string(name)) + ".pt"));
      c.ss_fraction = f;
      c.seed = seed;
      c.data_root = data_root;
      c.output_dir = output_dir;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace tss
