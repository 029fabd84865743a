// Command-line front end. All real work happens behind the C API in
// libgldb; this file only translates flags into options JSON.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gldb/graphlogdebug.h"

namespace {

using nlohmann::json;

// Flag values override anything coming from --config.
json merge_options(const std::string& config_path, const json& flags) {
  json merged = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: cannot open config file: " << config_path << "\n";
      std::exit(GLDB_ERR_USAGE);
    }
    try {
      in >> merged;
    } catch (const json::exception& e) {
      std::cerr << "error: config file is not valid JSON: " << e.what() << "\n";
      std::exit(GLDB_ERR_USAGE);
    }
    if (!merged.is_object()) {
      std::cerr << "error: config file must hold a JSON object\n";
      std::exit(GLDB_ERR_USAGE);
    }
  }
  for (auto it = flags.begin(); it != flags.end(); ++it) merged[it.key()] = it.value();
  return merged;
}

int run_one_shot(gldb_status (*fn)(const char*, char**, char**), const json& options) {
  char* result = nullptr;
  char* error = nullptr;
  gldb_status status = fn(options.dump().c_str(), &result, &error);
  if (status == GLDB_OK) {
    if (result) std::cout << json::parse(result).dump(2) << "\n";
  } else {
    std::cerr << "error: " << (error ? error : "unknown failure") << "\n";
  }
  gldb_free(result);
  gldb_free(error);
  return status;
}

int run_detect(const std::string& checkpoint, const json& options) {
  gldb_detector* det = nullptr;
  char* error = nullptr;
  gldb_status status = gldb_detector_open(checkpoint.c_str(), &det, &error);
  if (status != GLDB_OK) {
    std::cerr << "error: " << (error ? error : "unknown failure") << "\n";
    gldb_free(error);
    return status;
  }
  char* result = nullptr;
  status = gldb_detector_run(det, options.dump().c_str(), &result, &error);
  if (status == GLDB_OK) {
    if (result) std::cout << json::parse(result).dump(2) << "\n";
  } else {
    std::cerr << "error: " << (error ? error : "unknown failure") << "\n";
  }
  gldb_free(result);
  gldb_free(error);
  gldb_detector_close(det);
  return status;
}

// Tracks which flags were actually given so defaults don't clobber --config.
struct OptionSink {
  CLI::App* cmd;
  json flags = json::object();

  template <typename T>
  void add(const std::string& name, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    cmd->add_option_function<T>(
           name, [this, key, holder](const T& v) { flags[key] = v; }, help)
        ->expected(1);
    (void)holder;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("gldb ") + gldb_version() +
               " - graph-based online log anomaly detector"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;

  auto add_model_flags = [](OptionSink& s) {
    s.add<int>("--d-obj", "d_obj", "object embedding width");
    s.add<int>("--d-hidden", "d_hidden", "hidden width");
    s.add<int>("--n-layers", "n_layers", "message-passing layers");
    s.add<int>("--n-heads", "n_heads", "attention heads");
    s.add<std::string>("--fusion", "fusion", "fusion mode: gated|plain");
    s.add<std::string>("--reduce", "reduce", "pair reduction: diff|concat|hadamard");
    s.add<std::string>("--embedder", "embedder", "text embedder: hash|precomputed:<path>");
    s.add<int>("--text-dim", "text_dim", "text embedding width");
    s.add<int>("--time-dim", "time_dim", "time encoding width");
  };

  // train
  auto* train = app.add_subcommand("train", "train a detector on the log prefix");
  OptionSink ts{train};
  ts.add<std::string>("--input", "input", "log file (CSV or JSONL)");
  ts.add<std::string>("--schema", "schema", "schema JSON");
  ts.add<std::string>("--out", "out", "checkpoint output path");
  ts.add<double>("--train-frac", "train_frac", "fraction of entries used for training");
  ts.add<int>("--epochs", "epochs", "training epochs");
  ts.add<double>("--lr", "lr", "learning rate");
  ts.add<int>("--neg-ratio", "neg_ratio", "negatives per positive");
  ts.add<unsigned>("--window", "window", "sliding window length (entries)");
  ts.add<double>("--tau", "tau", "link acceptance threshold");
  ts.add<std::uint64_t>("--seed", "seed", "master random seed");
  add_model_flags(ts);
  train->add_option("--config", config_path, "JSON file with options (flags win)");

  // detect
  auto* detect = app.add_subcommand("detect", "run online detection with a checkpoint");
  std::string checkpoint;
  OptionSink ds{detect};
  detect->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  ds.add<std::string>("--input", "input", "log file (CSV or JSONL)");
  ds.add<std::string>("--schema", "schema", "schema JSON");
  ds.add<std::string>("--out", "out", "verdicts JSONL output path");
  ds.add<std::string>("--snapshot-out", "snapshot_out", "graph snapshot output path");
  ds.add<double>("--tau", "tau", "link acceptance threshold override");
  ds.add<double>("--train-frac", "train_frac", "skip this prefix fraction of the log");
  detect->add_option("--config", config_path, "JSON file with options (flags win)");

  // inject
  auto* inject = app.add_subcommand("inject", "inject labeled synthetic anomalies");
  OptionSink is{inject};
  is.add<std::string>("--input", "input", "log file (CSV or JSONL)");
  is.add<std::string>("--schema", "schema", "schema JSON");
  is.add<std::string>("--out", "out", "perturbed log JSONL output path");
  is.add<double>("--rate", "rate", "injection rate over injectable entries");
  is.add<std::string>("--kind", "kind", "object-swap|event-swap");
  is.add<double>("--train-frac", "train_frac", "protect this prefix from injection");
  is.add<std::uint64_t>("--seed", "seed", "injection seed");
  inject->add_option("--config", config_path, "JSON file with options (flags win)");

  // generate
  auto* generate = app.add_subcommand("generate", "generate a synthetic community log");
  OptionSink gs{generate};
  gs.add<std::string>("--out", "out", "log JSONL output path");
  gs.add<std::string>("--schema-out", "schema_out", "schema JSON output path");
  gs.add<unsigned>("--n-entries", "n_entries", "number of log entries");
  gs.add<unsigned>("--n-objects", "n_objects", "number of distinct objects");
  gs.add<unsigned>("--n-communities", "n_communities", "object communities");
  gs.add<double>("--intra-prob", "intra_prob", "probability of staying inside a community");
  gs.add<std::uint64_t>("--seed", "seed", "generation seed");
  generate->add_option("--config", config_path, "JSON file with options (flags win)");

  // eval
  auto* eval = app.add_subcommand("eval", "score verdicts against labels");
  OptionSink es{eval};
  es.add<std::string>("--verdicts", "verdicts", "verdicts JSONL from detect");
  es.add<std::string>("--input", "input", "labeled log the verdicts refer to");
  es.add<std::string>("--schema", "schema", "schema JSON");
  es.add<std::string>("--mode", "mode", "object|event|auto");
  es.add<unsigned>("--n-normal", "n_normal", "normal entries sampled into the subset");
  es.add<std::uint64_t>("--seed", "seed", "subset sampling seed");
  es.add<std::string>("--histogram-out", "histogram_out", "score histogram CSV path");
  es.add<std::string>("--report-out", "report_out", "metrics report JSON path");
  eval->add_option("--config", config_path, "JSON file with options (flags win)");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  OptionSink cs{gradcheck};
  cs.add<std::uint64_t>("--seed", "seed", "instance seed");
  cs.add<int>("--n-coords", "n_coords", "sampled coordinates per run");
  cs.add<double>("--eps", "eps", "finite-difference step");
  add_model_flags(cs);
  gradcheck->add_option("--config", config_path, "JSON file with options (flags win)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : GLDB_ERR_USAGE;
  }

  if (train->parsed()) return run_one_shot(gldb_train, merge_options(config_path, ts.flags));
  if (detect->parsed()) return run_detect(checkpoint, merge_options(config_path, ds.flags));
  if (inject->parsed()) return run_one_shot(gldb_inject, merge_options(config_path, is.flags));
  if (generate->parsed())
    return run_one_shot(gldb_generate, merge_options(config_path, gs.flags));
  if (eval->parsed()) return run_one_shot(gldb_evaluate, merge_options(config_path, es.flags));
  if (gradcheck->parsed())
    return run_one_shot(gldb_grad_check, merge_options(config_path, cs.flags));
  return GLDB_ERR_USAGE;
}
