#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mcdsvdd/cli/run_config.hpp"
#include "mcdsvdd/core/digest.hpp"
#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/data/dataset.hpp"
#include "mcdsvdd/data/synthetic.hpp"
#include "mcdsvdd/detectors/detector.hpp"
#include "mcdsvdd/evaluation/protocol.hpp"
#include "mcdsvdd/evaluation/report.hpp"

namespace mcdsvdd::cli {

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2, kPartial = 3 };

// One JSON object per line on the error stream.
inline void log_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"level", "error"}, {"kind", kind}, {"message", message}}.dump() << "\n";
}

inline std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

inline std::string card_file_name(const std::string& detector, const std::string& top, const std::string& sub) {
  return file_safe(detector) + "__" + file_safe(top) + "__" + file_safe(sub) + ".card.json";
}

// Provenance of a model's training rows.
inline nlohmann::json training_manifest(const data::Dataset& train, const data::Dataset& validation,
                                        const std::string& top, const std::string& outlier, std::uint64_t master_seed,
                                        const std::string& config_digest) {
  std::string ids;
  for (const auto& id : train.ids()) ids += id + "\n";
  return {{"top_class", top},
          {"outlier_subclass", outlier},
          {"training_rows", train.size()},
          {"validation_rows", validation.size()},
          {"training_subclass_counts", train.subclass_counts()},
          {"training_ids_digest", hex_digest(ids)},
          {"master_seed", master_seed},
          {"config_digest", config_digest}};
}

// `# key=value` provenance lines followed by `id,score` rows.
inline void write_scores(std::ostream& out, const data::Dataset& input, const std::vector<double>& scores,
                         const detectors::ModelCard& card) {
  out << "# normalizer_digest=" << card.model.normalizer.digest() << "\n";
  out << "# config_digest=" << card.manifest.value("config_digest", std::string("unknown"))
      << " master_seed=" << card.manifest.value("master_seed", std::uint64_t{0}) << " detector=" << to_string(card.model.kind())
      << "\n";
  out << "id,score\n";
  for (std::size_t i = 0; i < input.size(); ++i) {
    out << input[i].id << ',' << evaluation::detail::exact(scores[i]) << '\n';
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
  out << text;
}

struct BenchOptions {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> detectors;
  std::optional<std::size_t> jobs;
  std::optional<std::string> output_dir;
};

inline int cmd_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  auto config = load_run_config(o.config);
  if (o.seed) config.seed = o.seed;
  if (!o.detectors.empty()) config.select_detectors(o.detectors);
  if (o.jobs) config.jobs = *o.jobs;
  finalize(config, o.output_dir);
  const auto seed = config.require_seed();
  const auto digest = config.digest();

  const auto parsed = config.load_data();
  const auto& dataset = parsed.dataset;
  std::vector<detectors::ModelDetector> dets;
  for (const auto& n : config.detector_names()) dets.emplace_back(config.detector_config(n));
  std::vector<const detectors::Detector*> ptrs;
  for (const auto& d : dets) ptrs.push_back(&d);

  const fs::path models_dir = config.output_dir / "models";
  fs::create_directories(models_dir);
  std::mutex card_errors_mutex;
  std::vector<std::string> card_errors;
  const evaluation::FitObserver save_fold0 = [&](const evaluation::EvalResult& cell, const evaluation::FoldResult& fold,
                                                 const data::Scenario& sc, const detectors::FittedDetector& fitted) {
    if (fold.fold != 0) return;
    const auto* model = dynamic_cast<const detectors::FittedModel*>(&fitted);
    if (model == nullptr) return;
    detectors::ModelCard card;
    card.model = model->model();
    card.fill_values = parsed.fill_values;
    card.manifest = training_manifest(sc.train, sc.validation, cell.top_class, cell.outlier_subclass, seed, digest);
    card.manifest["fold"] = fold.fold;
    try {
      detectors::save_card(card, models_dir / card_file_name(cell.detector, cell.top_class, cell.outlier_subclass));
    } catch (const Error& e) {
      std::lock_guard lock(card_errors_mutex);
      card_errors.push_back(e.what());
    }
  };

  const auto result = evaluation::full_benchmark(dataset, ptrs, config.cells_for(dataset), config.protocol, seed,
                                                 config.jobs, save_fold0);
  const evaluation::RunStamp stamp{seed, digest};
  const auto paths = evaluation::write_report(config.output_dir, result, stamp);
  auto effective = config.effective_json();
  effective["config_digest"] = digest;
  write_text_file(config.output_dir / "run.json", effective.dump(2) + "\n");

  for (const auto& c : result.cells) {
    if (!c.ok()) log_error(err, "cell", c.detector + " " + c.top_class + "/" + c.outlier_subclass + ": " + c.first_error());
  }
  for (const auto& e : card_errors) log_error(err, "card", e);
  out << evaluation::render_table(result.cells, stamp);
  out << "results: " << paths.results.string() << "\n";
  out << "table: " << paths.table.string() << "\n";

  const auto failed = result.failed_cells();
  if (failed == result.cells.size() && failed > 0) return kFailure;
  if (failed > 0 || !card_errors.empty()) return kPartial;
  return kSuccess;
}

struct TrainOptions {
  fs::path config;
  std::string detector;
  std::string top_class;
  std::string outlier;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> output_dir;
};

// Fits one detector on the training partition's inliers of `top_class`
// with `outlier` removed, then writes the card and the scores of every row
// of the input so later scoring can be replayed against them.
inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream&) {
  auto config = load_run_config(o.config);
  if (o.seed) config.seed = o.seed;
  config.select_detectors({o.detector});
  finalize(config, o.output_dir);
  const auto seed = config.require_seed();
  const auto digest = config.digest();
  const auto parsed = config.load_data();
  const auto& dataset = parsed.dataset;
  dataset.taxonomy().require(o.top_class, o.outlier);

  const auto prepared = evaluation::prepare_protocol(dataset, config.protocol, seed);
  const auto train = prepared.split.train.filter(
      [&](const data::Sample& s) { return s.top_class == o.top_class && s.subclass != o.outlier; });
  const auto det_config = config.detector_config(o.detector);
  const auto norm = prepared.shared_normalizer ? *prepared.shared_normalizer
                                               : data::QuantileNormalizer::fit(train, config.protocol.n_quantiles);
  const auto fit_seed = derive_seed(seed, {"train", o.detector, o.top_class, o.outlier});

  detectors::ModelCard card;
  card.model = detectors::fit_detector(det_config, train, dataset.empty_like(), fit_seed, &norm);
  card.fill_values = parsed.fill_values;
  card.manifest = training_manifest(train, dataset.empty_like(), o.top_class, o.outlier, seed, digest);

  const fs::path card_path =
      o.output ? fs::path(*o.output) : config.output_dir / card_file_name(o.detector, o.top_class, o.outlier);
  if (card_path.has_parent_path()) fs::create_directories(card_path.parent_path());
  detectors::save_card(card, card_path);

  std::ostringstream scores;
  write_scores(scores, dataset, card.model.score(dataset), card);
  fs::path scores_path = card_path;
  scores_path += ".scores.csv";
  write_text_file(scores_path, scores.str());

  for (const auto& w : card.model.report.warnings) out << "warning: " << w << "\n";
  out << "model: " << card_path.string() << "\n";
  out << "training scores: " << scores_path.string() << "\n";
  return kSuccess;
}

struct ScoreOptions {
  fs::path model;
  fs::path input;
  fs::path output;
};

inline int cmd_score(const ScoreOptions& o, std::ostream& out, std::ostream&) {
  const auto card = detectors::load_card(o.model);
  data::ParseOptions options;
  options.taxonomy.reset();
  options.fill_values = card.fill_values.empty() ? std::nullopt : std::optional(card.fill_values);
  options.expected_dim = card.model.dim();
  const auto parsed = data::parse_dataset(o.input, options);
  const auto scores = parsed.dataset.empty() ? std::vector<double>{} : card.model.score(parsed.dataset);
  std::ostringstream text;
  write_scores(text, parsed.dataset, scores, card);
  write_text_file(o.output, text.str());
  out << "scored " << scores.size() << " rows into " << o.output.string() << "\n";
  return kSuccess;
}

struct SynthOptions {
  fs::path spec;
  std::uint64_t seed = 0;
  fs::path output;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream&) {
  const auto j = detail::read_json_file(o.spec, "synthetic spec");
  const auto spec = data::SyntheticSpec::from_json(j);
  const auto d = data::generate_synthetic(spec, o.seed);
  std::ostringstream text;
  text << "# seed=" << o.seed << " spec_digest=" << hex_digest(j.dump()) << "\n";
  data::write_dataset(text, d);
  write_text_file(o.output, text.str());
  out << "wrote " << d.size() << " rows to " << o.output.string() << "\n";
  return kSuccess;
}

// Parses arguments and dispatches. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-class Deep SVDD anomaly-detection benchmark"};
  app.require_subcommand(1);

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "Cross-validated benchmark of every detector on every cell");
  b->add_option("--config", bench.config, "Run configuration (JSON)")->required();
  b->add_option("--seed", bench.seed, "Master seed, overrides the config");
  b->add_option("--detectors", bench.detectors, "Comma-separated detector names")->delimiter(',');
  b->add_option("--jobs", bench.jobs, "Worker threads");
  b->add_option("--output-dir", bench.output_dir, "Output directory");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Fit one detector and write its model card");
  t->add_option("--config", train.config, "Run configuration (JSON)")->required();
  t->add_option("--detector", train.detector, "Detector name")->required();
  t->add_option("--top-class", train.top_class, "Top class trained on")->required();
  t->add_option("--outlier", train.outlier, "Subclass excluded from training")->required();
  t->add_option("--seed", train.seed, "Master seed, overrides the config");
  t->add_option("--output", train.output, "Model card path");
  t->add_option("--output-dir", train.output_dir, "Output directory");

  ScoreOptions score;
  auto* s = app.add_subcommand("score", "Score a dataset file with a saved model card");
  s->add_option("--model", score.model, "Model card")->required();
  s->add_option("--input", score.input, "Dataset file")->required();
  s->add_option("--output", score.output, "Scores file")->required();

  SynthOptions synth;
  auto* y = app.add_subcommand("synth", "Generate a labeled Gaussian-mixture dataset");
  y->add_option("--spec", synth.spec, "Synthetic spec (JSON)")->required();
  y->add_option("--seed", synth.seed, "Seed")->required();
  y->add_option("--output", synth.output, "Dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (b->parsed()) return cmd_bench(bench, out, err);
    if (t->parsed()) return cmd_train(train, out, err);
    if (s->parsed()) return cmd_score(score, out, err);
    return cmd_synth(synth, out, err);
  } catch (const Error& e) {
    log_error(err, e.kind(), e.what());
    return e.kind() == "config" || e.kind() == "spec" ? kUsage : kFailure;
  } catch (const std::exception& e) {
    log_error(err, "internal", e.what());
    return kFailure;
  }
}

}  // namespace mcdsvdd::cli
