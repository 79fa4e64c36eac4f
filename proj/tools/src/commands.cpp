#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmrn/checkpoint.hpp"
#include "dmrn/classifier.hpp"
#include "dmrn/cross_validation.hpp"
#include "dmrn/dataset.hpp"
#include "dmrn/error.hpp"
#include "dmrn/synth.hpp"
#include "dmrn/trainer.hpp"
#include "run_config.hpp"

namespace dmrn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string data;
  std::string config;
  std::string out = "runs";
  std::string run_dir;
  bool verbose = false;
  Overrides overrides;
  bool no_baseline = false;
  bool no_standardize = false;
};

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const std::string& command, std::uint64_t seed, const std::string& parent,
                      const std::string& explicit_dir) {
  fs::path dir;
  if (!explicit_dir.empty()) {
    dir = explicit_dir;
    if (fs::exists(dir) && !fs::is_empty(dir)) {
      throw ConfigError("run directory " + dir.string() + " exists and is not empty");
    }
  } else {
    const std::string base = command + "-" + utc_stamp() + "-" + std::to_string(seed);
    dir = fs::path(parent) / base;
    for (int n = 2; fs::exists(dir); ++n) dir = fs::path(parent) / (base + "-" + std::to_string(n));
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename F>
void write_stream(const fs::path& path, F&& body) {
  std::ostringstream s;
  body(s);
  write_text(path, s.str());
}

void add_model_options(CLI::App& app, CommonOptions& o) {
  auto& v = o.overrides;
  app.add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "Parent directory for the run directory");
  app.add_option("--run-dir", o.run_dir, "Exact run directory (must be empty or absent)");
  app.add_flag("-v,--verbose", o.verbose, "Print per-epoch losses");
  app.add_option("--seed", v.seed, "Seed for initialization, pairing and folds");
  app.add_option("--epochs", v.epochs);
  app.add_option("--batch-size", v.batch_size, "Pairs per mini-batch");
  app.add_option("--lr", v.learning_rate);
  app.add_option("--momentum", v.momentum);
  app.add_option("--weight-decay", v.weight_decay);
  app.add_option("--lr-step", v.lr_step_epochs, "Decay the learning rate every N epochs");
  app.add_option("--lr-gamma", v.lr_gamma);
  app.add_option("--channels", v.channels, "Four stage widths, e.g. 16,32,64,128");
  app.add_option("--blocks", v.blocks, "Residual blocks per stage");
  app.add_option("--sampler", v.sampler, "uniform | class_balanced");
  app.add_option("--pairs-per-epoch", v.pairs_per_epoch, "0 = one pair per training slice");
  app.add_option("--stages", v.stages, "Stages carrying a loss term, e.g. 1,2,3,4");
  app.add_option("--margin", v.margin);
  app.add_option("--svm-c", v.svm_c);
  app.add_option("--svm-iterations", v.svm_iterations);
  app.add_flag("--no-standardize", o.no_standardize, "Feed raw embeddings to the SVM");
}

void add_cv_options(CLI::App& app, CommonOptions& o) {
  app.add_option("--k", o.overrides.k, "Number of folds");
  app.add_option("--jobs", o.overrides.jobs, "Folds trained concurrently");
  app.add_flag("--no-baseline", o.no_baseline, "Skip the raw-pixel SVM baseline");
}

struct Resolved {
  RunConfig config;
  Dataset data;
  std::uint64_t data_hash = 0;
};

Resolved resolve(CommonOptions& o) {
  Resolved r;
  bool geometry_from_file = false;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + o.config + ": " + e.what());
    }
    geometry_from_file = j.contains("model") && (j["model"].contains("input_size") ||
                                                 j["model"].contains("input_channels"));
    r.config = from_json(j);
  }
  if (o.no_baseline) o.overrides.baseline = false;
  if (o.no_standardize) o.overrides.standardize = false;
  apply_overrides(r.config, o.overrides);
  r.data = load_dataset(o.data);
  r.data_hash = dataset_hash(o.data);
  bind_to_dataset(r.config, r.data.image_shape, r.data.num_classes, geometry_from_file);
  return r;
}

json run_record(const std::string& command, const CommonOptions& o, const Resolved& r) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << r.data_hash;
  return json{{"command", command},
              {"dataset", fs::absolute(o.data).lexically_normal().string()},
              {"dataset_hash", hash.str()},
              {"seed", r.config.seed},
              {"version", "0.1.0"}};
}

EpochCallback epoch_printer(bool verbose, std::ostream& out, const std::string& prefix) {
  if (!verbose) return {};
  return [&out, prefix](const EpochRecord& e) {
    out << prefix << "epoch " << e.epoch << " raw_loss " << e.raw_loss << " mean_pair_loss "
        << e.mean_pair_loss << '\n'
        << std::flush;
  };
}

void write_report_files(const fs::path& dir, const std::string& stem,
                        const ConfusionMatrix& confusion, const std::vector<std::string>& names) {
  const EvalReport report = compute_metrics(confusion);
  write_stream(dir / (stem + "report.csv"), [&](std::ostream& s) { write_report_csv(s, report, names); });
  write_stream(dir / (stem + "report.txt"), [&](std::ostream& s) { write_report_table(s, report, names); });
  write_stream(dir / (stem + "confusion.csv"),
               [&](std::ostream& s) { write_confusion_csv(s, confusion, names); });
}

json summary_json(const CvResult& r) {
  auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
  json j{{"accuracy", opt(r.report.accuracy.value())},
         {"macro_sensitivity", opt(r.report.macro.sensitivity)},
         {"macro_specificity", opt(r.report.macro.specificity)},
         {"macro_precision", opt(r.report.macro.precision)},
         {"macro_f1", opt(r.report.macro.f1)},
         {"studies", r.pooled.total()}};
  if (r.baseline_report) j["baseline_accuracy"] = opt(r.baseline_report->accuracy.value());
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"studies", f.confusion.total()},
                     {"accuracy", opt(compute_metrics(f.confusion).accuracy.value())}});
  }
  j["folds"] = folds;
  return j;
}

void write_cv_outputs(const fs::path& dir, const Dataset& data, const CvResult& r) {
  const auto& names = data.class_names;
  json plan = json::array();
  for (const auto& fold : r.plan.folds) {
    json ids = json::array();
    for (std::size_t i : fold) ids.push_back(data.studies[i].id);
    plan.push_back(ids);
  }
  write_json(dir / "folds.json", {{"seed", r.plan.seed}, {"folds", plan}});
  for (const auto& f : r.folds) {
    const fs::path fd = dir / ("fold_" + std::to_string(f.fold));
    fs::create_directories(fd);
    write_report_files(fd, "", f.confusion, names);
    if (f.baseline_confusion) write_report_files(fd, "baseline_", *f.baseline_confusion, names);
    write_stream(fd / "training_log.csv", [&](std::ostream& s) { f.log.write_csv(s); });
  }
  write_report_files(dir, "", r.pooled, names);
  if (r.baseline_pooled) write_report_files(dir, "baseline_", *r.baseline_pooled, names);
  write_stream(dir / "predictions.csv", [&](std::ostream& s) { write_predictions_csv(s, data, r); });
  write_json(dir / "summary.json", summary_json(r));
}

std::string percent(std::optional<double> v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *v;
  return s.str();
}

CvResult run_cv(const Resolved& r, const CommonOptions& o, std::ostream& out,
                const std::string& label) {
  return cross_validate(r.data, r.config.train, r.config.cv, [&](const FoldResult& f) {
    out << label << "fold " << f.fold << ": accuracy "
        << percent(compute_metrics(f.confusion).accuracy.value());
    if (f.baseline_confusion) {
      out << " (raw-pixel baseline " << percent(compute_metrics(*f.baseline_confusion).accuracy.value())
          << ")";
    }
    if (o.verbose && !f.log.epochs.empty()) {
      out << " final mean_pair_loss " << f.log.epochs.back().mean_pair_loss;
    }
    out << '\n' << std::flush;
  });
}

int cmd_gen(const std::string& preset, std::uint64_t seed, std::optional<double> difficulty,
            std::optional<std::size_t> image_size, const std::string& out_dir,
            std::ostream& out) {
  SynthSpec spec = SynthSpec::from_preset(preset);
  spec.seed = seed;
  if (difficulty) spec.difficulty = *difficulty;
  if (image_size) spec.image_size = *image_size;
  spec.validate();
  const fs::path root = out_dir.empty() ? fs::path("gen-" + utc_stamp() + "-" + std::to_string(seed))
                                        : fs::path(out_dir);
  if (fs::exists(root / "manifest.json")) {
    throw ConfigError("output directory " + root.string() + " already holds a dataset");
  }
  const Dataset data = generate_to(spec, root);
  write_json(root / "config.json", to_json(spec));
  out << "wrote " << data.studies.size() << " studies, " << data.slice_count() << " slices to "
      << root.string() << '\n';
  return kOk;
}

int cmd_train(CommonOptions& o, bool export_pairs, std::ostream& out) {
  Resolved r = resolve(o);
  const fs::path dir = make_run_dir("train", r.config.seed, o.out, o.run_dir);
  write_json(dir / "config.json", to_json(r.config));
  write_json(dir / "run.json", run_record("train", o, r));

  std::vector<std::size_t> all(r.data.studies.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto slices = collect_slices(r.data, all);
  if (export_pairs) {
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (const auto& s : slices) {
      labels.push_back(s.label());
      ids.push_back(s.slice->id);
    }
    const PairSample sample = sample_pairs(labels, epoch_sampler(r.config.train, 1));
    write_stream(dir / "pairs_epoch1.csv",
                 [&](std::ostream& s) { write_pairs_csv(s, sample.pairs, ids); });
  }
  TrainResult result = train(slices, r.config.train, epoch_printer(o.verbose, out, ""));
  for (const auto& w : result.log.warnings) out << "warning: " << w << '\n';
  save_checkpoint(result.params, dir / "checkpoint.dmrn");
  write_stream(dir / "training_log.csv", [&](std::ostream& s) { result.log.write_csv(s); });
  out << "trained " << r.config.train.epochs << " epochs; final mean_pair_loss "
      << result.log.epochs.back().mean_pair_loss << "\nrun directory: " << dir.string() << '\n';
  return kOk;
}

int cmd_cv(CommonOptions& o, std::ostream& out) {
  Resolved r = resolve(o);
  const fs::path dir = make_run_dir("cv", r.config.seed, o.out, o.run_dir);
  write_json(dir / "config.json", to_json(r.config));
  write_json(dir / "run.json", run_record("cv", o, r));
  const CvResult result = run_cv(r, o, out, "");
  write_cv_outputs(dir, r.data, result);
  write_report_table(out, result.report, r.data.class_names);
  if (result.baseline_report) {
    out << "raw-pixel baseline accuracy " << percent(result.baseline_report->accuracy.value())
        << '\n';
  }
  out << "run directory: " << dir.string() << '\n';
  return kOk;
}

int cmd_ablate(CommonOptions& o, std::ostream& out) {
  Resolved r = resolve(o);
  const fs::path dir = make_run_dir("ablate", r.config.seed, o.out, o.run_dir);
  write_json(dir / "run.json", run_record("ablate", o, r));

  struct Variant {
    const char* name;
    StageSet stages;
  };
  const Variant variants[] = {{"multiscale", StageSet::all()}, {"last_stage", StageSet{4}}};
  std::ostringstream table;
  table << "variant,stages,loss_terms_per_pair,accuracy,macro_f1,baseline_accuracy\n";
  for (const auto& v : variants) {
    Resolved variant = r;
    variant.config.train.loss.stages = v.stages;
    const fs::path vd = dir / v.name;
    fs::create_directories(vd);
    write_json(vd / "config.json", to_json(variant.config));
    const CvResult result = run_cv(variant, o, out, std::string(v.name) + " ");
    write_cv_outputs(vd, variant.data, result);
    table << v.name << ",\"" << v.stages.to_string() << "\","
          << loss_term_count(1, variant.config.train.loss) << ','
          << percent(result.report.accuracy.value()) << ',' << percent(result.report.macro.f1)
          << ','
          << (result.baseline_report ? percent(result.baseline_report->accuracy.value()) : "NA")
          << '\n';
    out << v.name << " (stages " << v.stages.to_string() << "): accuracy "
        << percent(result.report.accuracy.value()) << '\n';
  }
  write_text(dir / "comparison.csv", table.str());
  out << "run directory: " << dir.string() << '\n';
  return kOk;
}

int cmd_embed(const std::string& data_dir, const std::string& checkpoint, int branch,
              const std::string& parent, const std::string& run_dir, std::ostream& out) {
  ModelParams<float> params = load_checkpoint<float>(checkpoint);
  const Dataset data = load_dataset(data_dir);
  if (data.image_shape.size() != 3 || data.image_shape[0] != params.config.input_channels ||
      data.image_shape[1] != params.config.input_size) {
    throw DataError("dataset images " + shape_to_string(data.image_shape) +
                    " do not match the checkpoint's model input");
  }
  std::vector<std::size_t> all(data.studies.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto slices = collect_slices(data, all);

  std::uint64_t seed = 0;
  const fs::path dir = make_run_dir("embed", seed, parent, run_dir);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << dataset_hash(data_dir);
  write_json(dir / "config.json", {{"checkpoint", fs::absolute(checkpoint).lexically_normal().string()},
                                   {"dataset", fs::absolute(data_dir).lexically_normal().string()},
                                   {"dataset_hash", hash.str()},
                                   {"branch", branch}});

  FeatureMatrix features(slices.size(), rpu_embedding_dim(params.config.stage_channels[3]));
  for (std::size_t start = 0; start < slices.size(); start += 32) {
    const std::size_t end = std::min(slices.size(), start + 32);
    const Tensor<float> batch =
        stack_images<float>(std::span<const SliceRef>(slices).subspan(start, end - start));
    const Tensor<float> e = embed_batch(params, batch, branch - 1);
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t j = 0; j < features.cols; ++j) {
        features.row(i)[j] = e.data()[(i - start) * features.cols + j];
      }
    }
  }
  write_stream(dir / "embeddings.csv",
               [&](std::ostream& s) { write_embeddings_csv(s, slices, features); });
  out << "embedded " << slices.size() << " slices (" << features.cols << " dims)\nrun directory: "
      << dir.string() << '\n';
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale resemblance network: generate data, train, evaluate"};
  app.name("dmrn");
  app.require_subcommand(1);

  std::string preset = "table1-small", gen_out;
  std::uint64_t gen_seed = 1;
  std::optional<double> difficulty;
  std::optional<std::size_t> image_size;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--preset", preset, "table1 | table1-small | tiny")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--difficulty", difficulty, "Class-overlap knob in [0,1]");
  gen->add_option("--image-size", image_size, "Multiple of 32");
  gen->add_option("--out", gen_out, "Dataset directory");

  CommonOptions train_opts, cv_opts, ablate_opts;
  bool export_pairs = false;
  auto* train_cmd = app.add_subcommand("train", "Train on every study of a dataset");
  add_model_options(*train_cmd, train_opts);
  train_cmd->add_flag("--export-pairs", export_pairs, "Write the first epoch's pair list");

  auto* cv = app.add_subcommand("cv", "Study-level k-fold cross-validation");
  add_model_options(*cv, cv_opts);
  add_cv_options(*cv, cv_opts);

  auto* ablate = app.add_subcommand("ablate", "Cross-validate stages 1-4 against stage 4 only");
  add_model_options(*ablate, ablate_opts);
  add_cv_options(*ablate, ablate_opts);

  std::string embed_data, embed_ckpt, embed_out = "runs", embed_run_dir;
  int branch = 1;
  auto* embed_cmd = app.add_subcommand("embed", "Export last-stage embeddings as CSV");
  embed_cmd->add_option("--data", embed_data)->required()->check(CLI::ExistingDirectory);
  embed_cmd->add_option("--checkpoint", embed_ckpt)->required()->check(CLI::ExistingFile);
  embed_cmd->add_option("--branch", branch, "Twin branch, 1 or 2")->check(CLI::Range(1, 2));
  embed_cmd->add_option("--out", embed_out);
  embed_cmd->add_option("--run-dir", embed_run_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(preset, gen_seed, difficulty, image_size, gen_out, out);
    if (*train_cmd) return cmd_train(train_opts, export_pairs, out);
    if (*cv) return cmd_cv(cv_opts, out);
    if (*ablate) return cmd_ablate(ablate_opts, out);
    if (*embed_cmd) return cmd_embed(embed_data, embed_ckpt, branch, embed_out, embed_run_dir, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return kTrainingFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kTrainingFailure;
  }
  return kUsage;
}

}  // namespace dmrn::cli
