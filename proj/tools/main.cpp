#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/pipeline.hpp"
#include "bpstack/report.hpp"

namespace fs = std::filesystem;
using namespace bpstack;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string output;
  std::string model;
  std::string cohort;
  std::string schema;
  bool verbose = false;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunConfig resolve_config(const Globals& g, bool required) {
  RunConfig cfg;
  if (!g.config.empty()) {
    cfg = load_run_config(g.config);
  } else if (required) {
    throw ConfigError("--config is required for this command");
  }
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.propagate_seed();
  }
  if (g.threads) cfg.threads = *g.threads;
  if (!g.output.empty()) cfg.output = g.output;
  set_max_threads(cfg.threads);
  return cfg;
}

void write_report(const fs::path& dir, const std::string& stem, json report) {
  report["generated_at"] = utc_now();
  write_text_file(dir / (stem + ".json"), report.dump(2) + "\n");
  write_text_file(dir / (stem + ".txt"), render_text(report));
}

CohortTable load_scoring_cohort(const Globals& g, const ModelBundle& bundle, const char* source) {
  const CohortSchema schema = g.schema.empty() ? bundle.recipe.cohort_schema : read_schema_yaml(g.schema);
  auto loaded = load_cohort(g.cohort, schema, source);
  LeakagePatternSet patterns;
  patterns.patterns = bundle.recipe.leakage_patterns;
  return clean_cohort(loaded.table, patterns).table;
}

int cmd_generate(const Globals& g) {
  const auto cfg = resolve_config(g, true);
  for (const auto& p : run_generate(cfg, cfg.output)) std::cout << p.string() << "\n";
  return 0;
}

int cmd_train(const Globals& g) {
  const auto cfg = resolve_config(g, true);
  auto res = run_train(cfg);
  save_model(res.bundle, cfg.output / "model.json");
  write_report(cfg.output, "report", res.report);
  write_plot_csvs(cfg.output / "plots", res.cleaned_internal.targets(), res.cv.oof);
  std::cout << render_text(res.report);
  return 0;
}

int cmd_predict(const Globals& g) {
  if (g.model.empty() || g.cohort.empty()) throw ConfigError("predict needs --model and --cohort");
  const auto cfg = resolve_config(g, false);
  const auto bundle = load_model(g.model);
  const auto table = load_scoring_cohort(g, bundle, "scoring");
  const auto pred = run_predict(bundle, table);
  const fs::path out = cfg.output / "predictions.csv";
  write_text_file(out, format_predictions_csv(table, pred));
  std::cout << out.string() << "\n";
  return 0;
}

int cmd_validate_external(const Globals& g) {
  if (g.model.empty()) throw ConfigError("validate-external needs --model");
  const auto cfg = resolve_config(g, true);
  const auto bundle = load_model(g.model);
  auto inputs = load_inputs(cfg);
  LeakagePatternSet patterns;
  patterns.patterns = bundle.recipe.leakage_patterns;
  const auto internal = clean_cohort(inputs.internal, patterns).table;
  CohortTable external;
  if (!g.cohort.empty()) {
    external = load_scoring_cohort(g, bundle, "external");
  } else if (inputs.external) {
    external = clean_cohort(*inputs.external, patterns).table;
  } else {
    throw ConfigError("validate-external needs --cohort or an external cohort in the config");
  }
  const auto v = run_validate_external(cfg, bundle, internal, external);
  if (bundle.config_hash != config_hash(cfg)) {
    spdlog::warn("model was trained with a different config (hash {})", bundle.config_hash);
  }
  json report;
  report["format_version"] = kReportFormatVersion;
  report["generated_at"] = "";
  report["command"] = "validate-external";
  report["config"] = config_to_json(cfg);
  report["config_hash"] = config_hash(cfg);
  report["model_config_hash"] = bundle.config_hash;
  report["external"] = to_json_value(v);
  write_report(cfg.output, "external_report", report);
  std::cout << render_text(report);
  return 0;
}

int cmd_ablate(const Globals& g) {
  const auto cfg = resolve_config(g, true);
  const auto res = run_ablate(cfg);
  json report;
  report["format_version"] = kReportFormatVersion;
  report["generated_at"] = "";
  report["command"] = "ablate";
  report["config"] = config_to_json(cfg);
  report["config_hash"] = config_hash(cfg);
  report["ablation"] = to_json_value(res.ablation);
  write_report(cfg.output, "ablation_report", report);
  std::cout << render_text(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("bpstack");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"bpstack: blood pressure prediction pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration (YAML)");
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--threads", g.threads, "Worker cap, 0 = all cores");
  app.add_option("--output", g.output, "Output directory");
  app.add_flag("-v,--verbose", g.verbose, "Info-level logging");
  app.fallthrough();

  auto* generate = app.add_subcommand("generate", "Write a synthetic cohort pair and schema");
  auto* train = app.add_subcommand("train", "Cross-validate, fit and report");
  auto* predict = app.add_subcommand("predict", "Score a cohort with a saved model");
  predict->add_option("--model", g.model, "Model file")->check(CLI::ExistingFile);
  predict->add_option("--cohort", g.cohort, "Cohort CSV")->check(CLI::ExistingFile);
  predict->add_option("--schema", g.schema, "Schema YAML, default: the model's")->check(CLI::ExistingFile);
  auto* external = app.add_subcommand("validate-external", "Evaluate a saved model on another cohort");
  external->add_option("--model", g.model, "Model file")->check(CLI::ExistingFile);
  external->add_option("--cohort", g.cohort, "External cohort CSV")->check(CLI::ExistingFile);
  external->add_option("--schema", g.schema, "Schema YAML, default: the model's")->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Category and component ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (g.verbose) spdlog::set_level(spdlog::level::info);

  try {
    if (generate->parsed()) return cmd_generate(g);
    if (train->parsed()) return cmd_train(g);
    if (predict->parsed()) return cmd_predict(g);
    if (external->parsed()) return cmd_validate_external(g);
    if (ablate->parsed()) return cmd_ablate(g);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 1;
  } catch (const InvariantError& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  }
  return 0;
}
