// tss: command-line driver for ingest, pretext construction, training,
// the experiment matrix, evaluation and reporting.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "plot.hpp"
#include "tss/errors.hpp"
#include "tss/ingest.hpp"
#include "tss/manifest.hpp"
#include "tss/metrics.hpp"
#include "tss/model.hpp"
#include "tss/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tss;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

void print_error(std::string_view kind, std::string_view command, const std::string& message) {
  std::cerr << "tss: error: kind=" << kind << " command=" << command
            << " message=" << one_line(message) << std::endl;
}

std::string fraction_text(double f) {
  std::ostringstream s;
  s << f;
  return s.str();
}

void print_counts(const DatasetManifest& m) {
  std::cout << "train=" << m.count(Split::train) << " test=" << m.count(Split::test) << "\n";
  for (Split s : {Split::train, Split::test}) {
    const auto part = m.filter(s);
    std::cout << to_string(s) << " covid=" << part.count(ClassLabel::covid)
              << " non_covid=" << part.count(ClassLabel::non_covid) << "\n";
  }
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  fs::path data_root;
  fs::path out_manifest;
};

int run_ingest(const IngestArgs& a) {
  const std::string layout = discover_layout(a.data_root).name;
  const auto manifest = ingest_directory(a.data_root);
  manifest.write(a.out_manifest);
  std::cout << "layout=" << layout << " records=" << manifest.size()
            << " digest=" << manifest.content_digest() << "\n";
  print_counts(manifest);
  return 0;
}

// ---- build-pretext --------------------------------------------------------

struct PretextArgs {
  fs::path manifest;
  fs::path out_dir;
  std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
};

int run_build_pretext(const PretextArgs& a) {
  for (double f : a.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InputError("fraction must lie in (0, 1]: " + fraction_text(f));
  }
  const auto downstream = DatasetManifest::read(a.manifest);
  for (const auto& path : build_pretext_manifests(downstream, a.out_dir, a.fractions)) {
    const auto m = DatasetManifest::read(path);
    std::cout << "wrote " << path.string() << " records=" << m.size()
              << " digest=" << m.content_digest() << "\n";
  }
  return 0;
}

// ---- fraction -------------------------------------------------------------

struct FractionArgs {
  fs::path manifest;
  double fraction = 1.0;
  fs::path out_manifest;
};

int run_fraction(const FractionArgs& a) {
  const auto subset = take_fraction(DatasetManifest::read(a.manifest), a.fraction);
  subset.write(a.out_manifest);
  std::cout << "records=" << subset.size() << " digest=" << subset.content_digest() << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path data_root;
  fs::path out_dir;
  std::string id = "run";
  std::string backbone = "tiny_test";
  std::string weights_init;
  fs::path weights_file;
  int head_hidden_width = 1024;
  std::string head_activation = "relu";
  double fraction = 0.0;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  ExperimentConfig c;
  c.id = a.id;
  const BackboneName name = parse_backbone_name(a.backbone);
  WeightsInit init = name == BackboneName::tiny_test ? WeightsInit::random : WeightsInit::imagenet_pretrained;
  if (!a.weights_init.empty()) init = parse_weights_init(a.weights_init);
  c.backbone = BackboneSpec::make(name, init, a.weights_file);
  c.head = HeadSpec{a.head_hidden_width, parse_hidden_activation(a.head_activation)};
  c.ss_fraction = a.fraction;
  c.seed = a.seed;
  c.data_root = a.data_root;
  c.output_dir = a.out_dir;
  ExperimentOptions opts;
  opts.log = a.quiet ? nullptr : &std::clog;
  const auto result = run_experiment(c, opts);
  std::cout << render_results_table(std::span(&result.report, 1), TableFormat::text);
  return 0;
}

// ---- matrix ---------------------------------------------------------------

struct MatrixArgs {
  fs::path config;
  fs::path out_dir;
  bool resume = false;
  int jobs = 1;
  bool quiet = false;
};

int run_matrix_cmd(const MatrixArgs& a) {
  auto configs = read_matrix_config(a.config);
  fs::path out = a.out_dir;
  for (auto& c : configs) {
    if (!out.empty()) c.output_dir = out;
    if (c.output_dir.empty()) throw InputError("no output directory for " + c.id + "; pass --out-dir");
    c.validate();
  }
  if (out.empty()) out = configs.front().output_dir;
  if (a.jobs < 1) throw InputError("--jobs must be at least 1");

  MatrixOptions opts;
  opts.resume = a.resume;
  opts.jobs = a.jobs;
  opts.log = a.quiet ? nullptr : &std::clog;
  const auto rows = run_matrix(configs, opts);

  std::vector<MetricsReport> reports;
  std::vector<std::string> failed;
  for (const auto& row : rows) {
    if (row.report) reports.push_back(*row.report);
    if (!row.error.empty()) failed.push_back(row.config.id);
  }
  fs::create_directories(out);
  std::ofstream(out / "results.csv") << render_results_table(reports, TableFormat::csv);
  std::ofstream(out / "results.txt") << render_results_table(reports, TableFormat::text);
  std::cout << render_results_table(reports, TableFormat::text);
  if (!failed.empty()) {
    std::string ids;
    for (const auto& id : failed) ids += (ids.empty() ? "" : ",") + id;
    throw RuntimeFailure(std::to_string(failed.size()) + " of " + std::to_string(rows.size()) +
                         " experiments failed: " + ids + " (see <out-dir>/<id>/failure.txt)");
  }
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  fs::path checkpoint;
  fs::path manifest;
  fs::path out_report;
  std::string backbone;
  std::string experiment_id;
  std::string split = "test";
};

int run_evaluate(const EvaluateArgs& a) {
  std::optional<BackboneName> expected;
  if (!a.backbone.empty()) expected = parse_backbone_name(a.backbone);
  auto model = load_checkpoint(a.checkpoint, expected);
  model.to(default_device());
  const auto manifest = DatasetManifest::read(a.manifest);
  const auto subset = a.split == "all" ? manifest : manifest.filter(parse_split(a.split));
  const std::string id = a.experiment_id.empty() ? a.checkpoint.stem().string() : a.experiment_id;
  const auto report = evaluate_model(model, subset, id);
  write_report(report, a.out_report);
  std::cout << render_results_table(std::span(&report, 1), TableFormat::text);
  return 0;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  fs::path reports_dir;
  std::string format = "text";
  fs::path plot;
  fs::path out;
};

std::map<std::string, std::string> read_cfg(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

int run_report(const ReportArgs& a) {
  const TableFormat format = parse_table_format(a.format);
  if (!fs::is_directory(a.reports_dir)) throw InputError("reports directory not found: " + a.reports_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(a.reports_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "report.csv")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<MetricsReport> reports;
  std::map<std::string, cli::PlotSeries> series;
  std::vector<std::string> series_order;
  for (const auto& d : dirs) {
    reports.push_back(read_report(d / "report.csv"));
    const auto cfg = read_cfg(d / "experiment.cfg");
    if (!cfg.contains("backbone") || !cfg.contains("fraction")) continue;
    const std::string& name = cfg.at("backbone");
    if (!series.contains(name)) series_order.push_back(name);
    auto& s = series[name];
    s.name = name;
    s.points.push_back({std::stod(cfg.at("fraction")), reports.back().accuracy});
  }

  const std::string table = render_results_table(reports, format);
  std::cout << table;
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!(out << table)) throw RuntimeFailure("cannot write " + a.out.string());
  }
  if (!a.plot.empty()) {
    std::vector<cli::PlotSeries> ordered;
    for (const auto& n : series_order) ordered.push_back(series[n]);
    cli::write_accuracy_plot(ordered, a.plot);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flip-detection self-supervision and transfer learning for CT classification", "tss"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::string command;
  std::function<int()> action;
  auto bind = [&](CLI::App* sub, std::function<int()> fn) {
    sub->callback([&, sub, fn] {
      command = sub->get_name();
      action = fn;
    });
  };

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build the downstream manifest from a corpus directory");
  c_ingest->add_option("--data-root", ingest.data_root, "Corpus root (COVID-CT repository layout or train/val/test folders)")->required();
  c_ingest->add_option("--out-manifest", ingest.out_manifest, "Manifest file to write")->required();
  bind(c_ingest, [&] { return run_ingest(ingest); });

  PretextArgs pretext;
  auto* c_pretext = app.add_subcommand("build-pretext", "Write original and flipped images plus pretext manifests");
  c_pretext->add_option("--manifest", pretext.manifest, "Downstream manifest")->required();
  c_pretext->add_option("--out-dir", pretext.out_dir, "Pretext directory (use <data-root>/pretext for training)")->required();
  c_pretext->add_option("--fractions", pretext.fractions, "Training-split fractions to write")
      ->delimiter(',')
      ->capture_default_str();
  bind(c_pretext, [&] { return run_build_pretext(pretext); });

  FractionArgs fraction;
  auto* c_fraction = app.add_subcommand("fraction", "Take a nested prefix subset of a pretext manifest");
  c_fraction->add_option("--manifest", fraction.manifest, "Full pretext manifest")->required();
  c_fraction->add_option("--fraction", fraction.fraction, "Fraction in (0, 1]")->required();
  c_fraction->add_option("--out-manifest", fraction.out_manifest, "Manifest file to write")->required();
  bind(c_fraction, [&] { return run_fraction(fraction); });

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Run one experiment: optional self-supervision, transfer, evaluation");
  c_train->add_option("--data-root", train.data_root, "Prepared data root (downstream.manifest, pretext/)")->required();
  c_train->add_option("--out-dir", train.out_dir, "Output directory; artifacts go to <out-dir>/<id>")->required();
  c_train->add_option("--id", train.id, "Experiment id")->capture_default_str();
  c_train->add_option("--backbone", train.backbone, "densenet169, inceptionv3 or tiny_test")->capture_default_str();
  c_train->add_option("--fraction", train.fraction, "Self-supervision fraction; 0 skips the phase")->capture_default_str();
  c_train->add_option("--seed", train.seed, "Seed for weights and shuffling")->capture_default_str();
  c_train->add_option("--weights-init", train.weights_init,
                      "imagenet_pretrained or random (default: random for tiny_test, else imagenet_pretrained)");
  c_train->add_option("--weights-file", train.weights_file, "Exported ImageNet weights for imagenet_pretrained");
  c_train->add_option("--head-hidden-width", train.head_hidden_width, "Hidden units in the dense head")->capture_default_str();
  c_train->add_option("--head-activation", train.head_activation, "relu or sigmoid")->capture_default_str();
  c_train->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");
  bind(c_train, [&] { return run_train(train); });

  MatrixArgs matrix;
  auto* c_matrix = app.add_subcommand("matrix", "Run every experiment of a matrix config");
  c_matrix->add_option("--config", matrix.config, "Matrix config (INI)")->required();
  c_matrix->add_option("--out-dir", matrix.out_dir, "Overrides output_dir from the config");
  c_matrix->add_flag("--resume", matrix.resume, "Skip experiments that already have a report");
  c_matrix->add_option("--jobs", matrix.jobs, "Experiments run concurrently")->capture_default_str();
  c_matrix->add_flag("--quiet", matrix.quiet, "No progress on stderr");
  bind(c_matrix, [&] { return run_matrix_cmd(matrix); });

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Score a saved checkpoint on a downstream manifest");
  c_eval->add_option("--checkpoint", evaluate.checkpoint, "Checkpoint file")->required();
  c_eval->add_option("--manifest", evaluate.manifest, "Downstream manifest")->required();
  c_eval->add_option("--out-report", evaluate.out_report, "Report file to write")->required();
  c_eval->add_option("--backbone", evaluate.backbone, "Reject checkpoints of any other backbone");
  c_eval->add_option("--experiment-id", evaluate.experiment_id, "Id in the report (default: checkpoint file stem)");
  c_eval->add_option("--split", evaluate.split, "test, train or all")->capture_default_str();
  bind(c_eval, [&] { return run_evaluate(evaluate); });

  ReportArgs report;
  auto* c_report = app.add_subcommand("report", "Tabulate per-experiment reports and optionally plot them");
  c_report->add_option("--reports-dir", report.reports_dir, "Directory holding <id>/report.csv")->required();
  c_report->add_option("--format", report.format, "text or csv")->capture_default_str();
  c_report->add_option("--plot", report.plot, "PNG of accuracy against self-supervision fraction");
  c_report->add_option("--out", report.out, "Also write the table to this file");
  bind(c_report, [&] { return run_report(report); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const auto subs = app.get_subcommands();
    print_error("usage", subs.empty() ? "tss" : subs.front()->get_name(), e.what());
    return kExitInput;
  }

  try {
    return action();
  } catch (const InputError& e) {
    print_error("input", command, e.what());
    return kExitInput;
  } catch (const RuntimeFailure& e) {
    print_error("runtime", command, e.what());
    return kExitRuntime;
  } catch (const c10::Error& e) {
    print_error("runtime", command, e.what_without_backtrace());
    return kExitRuntime;
  } catch (const std::exception& e) {
    print_error("runtime", command, e.what());
    return kExitRuntime;
  }
}
