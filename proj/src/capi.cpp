#include "gldb/graphlogdebug.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gldb/evalkit.hpp"
#include "gldb/log_model.hpp"
#include "gldb/model.hpp"
#include "gldb/pipeline.hpp"
#include "gldb/util.hpp"

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

char* dup_cstring(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
gldb_status guarded(Fn&& fn, char** result_json, char** error_msg) {
  if (result_json) *result_json = nullptr;
  if (error_msg) *error_msg = nullptr;
  try {
    json result = fn();
    if (result_json) *result_json = dup_cstring(result.dump());
    return GLDB_OK;
  } catch (const gldb::Error& e) {
    if (error_msg) *error_msg = dup_cstring(e.what());
    return static_cast<gldb_status>(e.code());
  } catch (const std::exception& e) {
    if (error_msg) *error_msg = dup_cstring(std::string("internal: ") + e.what());
    return GLDB_ERR_INTERNAL;
  }
}

json parse_options(const char* options_json) {
  if (!options_json) gldb::throw_usage("BadOptions", "options JSON is NULL");
  try {
    json j = json::parse(options_json);
    if (!j.is_object()) gldb::throw_usage("BadOptions", "options must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    gldb::throw_usage("BadOptions", std::string("options not valid JSON: ") + e.what());
  }
}

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    gldb::throw_usage("BadOptions", std::string("missing required option '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

gldb::TextEmbedderSpec embedder_spec_from(const json& opts) {
  gldb::TextEmbedderSpec spec;
  std::string emb = opts.value("embedder", "hash");
  if (emb == "hash") {
    spec.kind = gldb::TextEmbedderKind::HashedNgram;
  } else if (emb.rfind("precomputed:", 0) == 0) {
    spec.kind = gldb::TextEmbedderKind::Precomputed;
    spec.table_path = emb.substr(std::strlen("precomputed:"));
  } else {
    gldb::throw_usage("BadOptions", "embedder must be 'hash' or 'precomputed:<path>'");
  }
  spec.dim = opts.value("text_dim", 384);
  spec.ngram_min = opts.value("ngram_min", 3);
  spec.ngram_max = opts.value("ngram_max", 5);
  spec.normalize = opts.value("normalize", true);
  spec.validate();
  return spec;
}

gldb::ModelConfig model_config_from(const json& opts) {
  gldb::ModelConfig cfg;
  cfg.d_obj = opts.value("d_obj", 512);
  cfg.d_hidden = opts.value("d_hidden", 512);
  cfg.n_layers = opts.value("n_layers", 3);
  cfg.n_heads = opts.value("n_heads", 4);
  cfg.fusion = gldb::fusion_from_name(opts.value("fusion", "gated"));
  cfg.reduce = gldb::reduce_from_name(opts.value("reduce", "diff"));
  cfg.leaky_slope = opts.value("leaky_slope", 0.2);
  cfg.init_scale = opts.value("init_scale", 0.1);
  cfg.validate();
  return cfg;
}

gldb::TrainConfig train_config_from(const json& opts) {
  gldb::TrainConfig cfg;
  cfg.rho = opts.value("neg_ratio", 10);
  cfg.lr = opts.value("lr", 1e-4);
  cfg.epochs = opts.value("epochs", 10);
  cfg.window = opts.value("window", 100u);
  cfg.seed = opts.value("seed", 0ull);
  cfg.tau = opts.value("tau", 0.5);
  cfg.aggregation = opts.value("aggregation", "mean") == std::string("min")
                        ? gldb::EventAggregation::Min
                        : gldb::EventAggregation::Mean;
  cfg.validate();
  return cfg;
}

// Reproducibility manifest. run_hash covers the command, resolved config,
// and input/output content hashes; timing fields stay outside the hash.
void write_manifest(const std::string& command, const json& resolved, const json& input_hashes,
                    const std::vector<std::string>& output_paths, double wall_clock_sec,
                    const std::string& manifest_path) {
  json m;
  m["command"] = command;
  m["config"] = resolved;
  m["tool_version"] = kVersion;
  m["inputs"] = input_hashes;
  json outs = json::object();
  for (const auto& p : output_paths) {
    std::ifstream probe(p, std::ios::binary);
    outs[p] = probe ? json(gldb::sha256_file_hex(p)) : json(nullptr);
  }
  m["outputs"] = outs;
  json hashable = {{"command", command}, {"config", resolved}, {"inputs", input_hashes},
                   {"outputs", outs},   {"tool_version", kVersion}};
  m["run_hash"] = gldb::sha256_hex(hashable.dump());
  m["wall_clock_sec"] = wall_clock_sec;
  std::ofstream out(manifest_path);
  if (out) out << m.dump(2) << "\n";
}

json file_hashes(std::initializer_list<std::pair<const char*, std::string>> files) {
  json j = json::object();
  for (const auto& [name, path] : files) j[name] = gldb::sha256_file_hex(path);
  return j;
}

}  // namespace

extern "C" {

const char* gldb_version(void) { return kVersion; }

void gldb_free(char* ptr) { std::free(ptr); }

gldb_status gldb_train(const char* options_json, char** result_json, char** error_msg) {
  return guarded(
      [&]() -> json {
        auto start = std::chrono::steady_clock::now();
        json opts = parse_options(options_json);
        std::string input = require_string(opts, "input");
        std::string schema_path = require_string(opts, "schema");
        std::string out_path = require_string(opts, "out");
        double train_frac = opts.value("train_frac", 0.9);

        gldb::LogSchema schema = gldb::parse_schema(schema_path);
        std::vector<gldb::LogEntry> log = gldb::read_log(input, schema);
        std::vector<gldb::LogEntry> train_entries;
        if (train_frac >= 1.0) {
          train_entries = log;
        } else {
          train_entries = gldb::split_train_test(log, train_frac).train;
        }

        gldb::TrainConfig tcfg = train_config_from(opts);
        gldb::ModelConfig mcfg = model_config_from(opts);
        gldb::TextEmbedderSpec espec = embedder_spec_from(opts);
        gldb::TimeEncodingSpec tspec;
        tspec.dim = opts.value("time_dim", 16);
        tspec.scale = opts.value("time_scale", 86400.0);

        gldb::TrainReport report;
        gldb::Checkpoint ckpt = gldb::train_online(train_entries, tcfg, mcfg, espec, tspec,
                                                   schema.content_hash(), &report);
        gldb::save_checkpoint(out_path, ckpt);

        json resolved = opts;
        resolved["train_frac"] = train_frac;
        resolved["epochs"] = tcfg.epochs;
        resolved["neg_ratio"] = tcfg.rho;
        resolved["lr"] = tcfg.lr;
        resolved["window"] = tcfg.window;
        resolved["tau"] = tcfg.tau;
        resolved["seed"] = tcfg.seed;
        resolved["d_obj"] = mcfg.d_obj;
        resolved["d_hidden"] = mcfg.d_hidden;
        resolved["n_layers"] = mcfg.n_layers;
        resolved["n_heads"] = mcfg.n_heads;
        resolved["fusion"] = gldb::fusion_name(mcfg.fusion);
        resolved["reduce"] = gldb::reduce_name(mcfg.reduce);
        resolved["text_dim"] = espec.dim;
        resolved["time_dim"] = tspec.dim;

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        write_manifest("train", resolved,
                       file_hashes({{"input", input}, {"schema", schema_path}}), {out_path}, secs,
                       out_path + ".manifest.json");

        json result;
        result["checkpoint"] = out_path;
        result["manifest"] = out_path + ".manifest.json";
        result["train_entries"] = train_entries.size();
        result["steps"] = report.steps;
        result["epoch_mean_loss"] = report.epoch_mean_loss;
        result["objects"] = ckpt.graph.object_count();
        result["events"] = ckpt.graph.event_count();
        return result;
      },
      result_json, error_msg);
}

gldb_status gldb_inject(const char* options_json, char** result_json, char** error_msg) {
  return guarded(
      [&]() -> json {
        auto start = std::chrono::steady_clock::now();
        json opts = parse_options(options_json);
        std::string input = require_string(opts, "input");
        std::string schema_path = require_string(opts, "schema");
        std::string out_path = require_string(opts, "out");

        gldb::LogSchema schema = gldb::parse_schema(schema_path);
        std::vector<gldb::LogEntry> log = gldb::read_log(input, schema);

        gldb::InjectionConfig cfg;
        cfg.rate = opts.value("rate", 0.05);
        std::string kind = opts.value("kind", "object-swap");
        if (kind == "object-swap") {
          cfg.kind = gldb::InjectionKind::ObjectSwap;
        } else if (kind == "event-swap") {
          cfg.kind = gldb::InjectionKind::EventSwap;
        } else {
          gldb::throw_usage("BadOptions", "kind must be object-swap or event-swap");
        }
        cfg.seed = opts.value("seed", 0ull);
        double train_frac = opts.value("train_frac", 0.9);
        cfg.first_injectable =
            static_cast<std::size_t>(static_cast<double>(log.size()) * train_frac);
        cfg.validate();

        std::vector<gldb::LogEntry> perturbed = gldb::inject(log, cfg);
        gldb::write_log_jsonl(out_path, perturbed, schema);

        std::size_t labeled = 0;
        for (const auto& e : perturbed) {
          if (e.label && e.label->any_positive()) ++labeled;
        }

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        json resolved = opts;
        resolved["rate"] = cfg.rate;
        resolved["kind"] = kind;
        resolved["seed"] = cfg.seed;
        resolved["train_frac"] = train_frac;
        write_manifest("inject", resolved,
                       file_hashes({{"input", input}, {"schema", schema_path}}), {out_path}, secs,
                       out_path + ".manifest.json");

        json result;
        result["out"] = out_path;
        result["entries"] = perturbed.size();
        result["injected"] = labeled;
        return result;
      },
      result_json, error_msg);
}

gldb_status gldb_generate(const char* options_json, char** result_json, char** error_msg) {
  return guarded(
      [&]() -> json {
        auto start = std::chrono::steady_clock::now();
        json opts = parse_options(options_json);
        std::string out_path = require_string(opts, "out");
        std::string schema_out = opts.value("schema_out", out_path + ".schema.json");

        gldb::SyntheticLogConfig cfg;
        cfg.n_entries = opts.value("n_entries", 2000u);
        cfg.n_objects = opts.value("n_objects", 200u);
        cfg.n_communities = opts.value("n_communities", 4u);
        cfg.intra_community_prob = opts.value("intra_prob", 0.9);
        cfg.min_objects_per_entry = opts.value("min_objects", 2u);
        cfg.max_objects_per_entry = opts.value("max_objects", 4u);
        cfg.seed = opts.value("seed", 0ull);
        cfg.validate();

        std::vector<gldb::LogEntry> log = gldb::generate_synthetic(cfg);
        gldb::LogSchema schema = gldb::synthetic_schema();
        gldb::write_log_jsonl(out_path, log, schema);
        {
          json sj;
          sj["timestamp_column"] = schema.timestamp_column;
          sj["object_delimiter"] = schema.object_delimiter;
          sj["columns"] = json::array();
          for (const auto& c : schema.columns) {
            sj["columns"].push_back({{"name", c.name}, {"role", gldb::role_name(c.role)}});
          }
          std::ofstream sf(schema_out);
          if (!sf) gldb::throw_data("IoError", "cannot write " + schema_out);
          sf << sj.dump(2) << "\n";
        }

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        write_manifest("generate", opts, json::object(), {out_path, schema_out}, secs,
                       out_path + ".manifest.json");

        json result;
        result["out"] = out_path;
        result["schema"] = schema_out;
        result["entries"] = log.size();
        return result;
      },
      result_json, error_msg);
}

gldb_status gldb_evaluate(const char* options_json, char** result_json, char** error_msg) {
  return guarded(
      [&]() -> json {
        json opts = parse_options(options_json);
        std::string verdicts_path = require_string(opts, "verdicts");
        std::string input = require_string(opts, "input");
        std::string schema_path = require_string(opts, "schema");
        std::string mode = opts.value("mode", "auto");
        std::size_t n_normal = opts.value("n_normal", 50u);
        std::uint64_t seed = opts.value("seed", 0ull);

        gldb::LogSchema schema = gldb::parse_schema(schema_path);
        std::vector<gldb::LogEntry> log = gldb::read_log(input, schema);
        std::vector<gldb::EntryVerdict> verdicts = gldb::read_verdicts_jsonl(verdicts_path);

        if (mode == "auto") {
          mode = "object";
          for (const auto& e : log) {
            if (e.label && e.label->event_label) {
              mode = "event";
              break;
            }
          }
        }

        std::vector<int> truth, predicted;
        for (const auto& v : verdicts) {
          if (v.entry_index >= log.size()) {
            gldb::throw_data("LengthMismatch", "verdict references entry beyond the log");
          }
          const gldb::LogEntry& e = log[v.entry_index];
          int t = 0;
          if (e.label) {
            if (mode == "event") {
              t = e.label->event_label.value_or(0);
            } else {
              t = e.label->any_positive() ? 1 : 0;
            }
          }
          truth.push_back(t);
          int p = 0;
          if (mode == "event") {
            p = v.has_evidence ? v.event_anomaly : 0;
          } else {
            for (const auto& l : v.links) p |= l.anomaly_flag;
          }
          predicted.push_back(p);
        }

        std::vector<std::size_t> subset = gldb::build_eval_subset(truth, n_normal, seed);
        std::vector<int> sub_truth, sub_pred;
        for (std::size_t i : subset) {
          sub_truth.push_back(truth[i]);
          sub_pred.push_back(predicted[i]);
        }
        gldb::MetricsReport metrics = gldb::compute_metrics(sub_pred, sub_truth);

        json result;
        result["mode"] = mode;
        result["metrics"] = {{"accuracy", metrics.accuracy}, {"precision", metrics.precision},
                             {"recall", metrics.recall},     {"f1", metrics.f1},
                             {"tp", metrics.tp},             {"fp", metrics.fp},
                             {"tn", metrics.tn},             {"fn", metrics.fn},
                             {"subset_size", metrics.subset_size}};
        try {
          result["correlation"] = gldb::degree_accuracy_correlation(verdicts, truth);
        } catch (const gldb::Error&) {
          result["correlation"] = nullptr;
        }
        result["config_echo"] = opts;

        if (opts.contains("histogram_out")) {
          std::string hp = opts.at("histogram_out").get<std::string>();
          std::ofstream hf(hp);
          if (!hf) gldb::throw_data("IoError", "cannot write " + hp);
          hf << gldb::score_histogram_csv(verdicts, truth);
          result["histogram"] = hp;
        }
        if (opts.contains("report_out")) {
          std::string rp = opts.at("report_out").get<std::string>();
          std::ofstream rf(rp);
          if (!rf) gldb::throw_data("IoError", "cannot write " + rp);
          rf << result.dump(2) << "\n";
        }
        return result;
      },
      result_json, error_msg);
}

gldb_status gldb_grad_check(const char* options_json, char** result_json, char** error_msg) {
  return guarded(
      [&]() -> json {
        json opts = parse_options(options_json);
        gldb::ModelConfig cfg = model_config_from(opts);
        std::uint64_t seed = opts.value("seed", 0ull);
        int n_coords = opts.value("n_coords", 200);
        double eps = opts.value("eps", 1e-4);
        gldb::GradCheckReport report = gldb::grad_check(cfg, seed, n_coords, eps);

        json result;
        result["max_rel_err"] = report.max_rel_err;
        result["pass"] = report.max_rel_err < 1e-3;
        json worst = json::array();
        for (std::size_t i = 0; i < report.entries.size() && i < 10; ++i) {
          const auto& e = report.entries[i];
          worst.push_back({{"tensor", e.tensor},
                           {"coord", e.coord},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric},
                           {"rel_err", e.rel_err}});
        }
        result["worst"] = worst;
        result["coords_checked"] = report.entries.size();
        return result;
      },
      result_json, error_msg);
}

struct gldb_detector {
  gldb::Checkpoint checkpoint;
};

gldb_status gldb_detector_open(const char* checkpoint_path, gldb_detector** out,
                               char** error_msg) {
  if (out) *out = nullptr;
  char* unused = nullptr;
  gldb_status status = guarded(
      [&]() -> json {
        if (!checkpoint_path) gldb::throw_usage("BadOptions", "checkpoint path is NULL");
        auto* det = new gldb_detector{gldb::load_checkpoint(checkpoint_path)};
        *out = det;
        return json::object();
      },
      &unused, error_msg);
  gldb_free(unused);
  return status;
}

gldb_status gldb_detector_run(gldb_detector* det, const char* options_json, char** result_json,
                              char** error_msg) {
  return guarded(
      [&]() -> json {
        if (!det) gldb::throw_usage("BadOptions", "detector handle is NULL");
        auto start = std::chrono::steady_clock::now();
        json opts = parse_options(options_json);
        std::string input = require_string(opts, "input");
        std::string schema_path = require_string(opts, "schema");
        std::string out_path = require_string(opts, "out");

        gldb::LogSchema schema = gldb::parse_schema(schema_path);
        if (schema.content_hash() != det->checkpoint.schema_hash) {
          gldb::throw_data("CheckpointIncompatible",
                           "schema hash does not match the checkpoint");
        }
        std::vector<gldb::LogEntry> log = gldb::read_log(input, schema);
        double train_frac = opts.value("train_frac", 0.0);
        std::vector<gldb::LogEntry> test_entries;
        if (train_frac > 0.0 && train_frac < 1.0) {
          test_entries = gldb::split_train_test(log, train_frac).test;
        } else {
          test_entries = log;
        }

        std::optional<double> tau;
        if (opts.contains("tau")) tau = opts.at("tau").get<double>();

        std::vector<gldb::EntryVerdict> verdicts =
            gldb::detect_online(test_entries, det->checkpoint, tau);
        gldb::write_verdicts_jsonl(out_path, verdicts);

        std::string snapshot_out = opts.value("snapshot_out", out_path + ".snapshot.json");
        {
          std::ofstream sf(snapshot_out, std::ios::binary);
          if (!sf) gldb::throw_data("IoError", "cannot write " + snapshot_out);
          sf << det->checkpoint.graph.to_snapshot_json();
        }

        std::size_t event_anomalies = 0, link_anomalies = 0;
        for (const auto& v : verdicts) {
          if (v.has_evidence && v.event_anomaly) ++event_anomalies;
          for (const auto& l : v.links) link_anomalies += static_cast<std::size_t>(l.anomaly_flag);
        }

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        write_manifest("detect", opts, file_hashes({{"input", input}, {"schema", schema_path}}),
                       {out_path, snapshot_out}, secs, out_path + ".manifest.json");

        json result;
        result["verdicts"] = out_path;
        result["snapshot"] = snapshot_out;
        result["entries"] = verdicts.size();
        result["event_anomalies"] = event_anomalies;
        result["link_anomalies"] = link_anomalies;
        result["throughput_entries_per_sec"] =
            secs > 0 ? static_cast<double>(verdicts.size()) / secs : 0.0;
        return result;
      },
      result_json, error_msg);
}

void gldb_detector_close(gldb_detector* det) { delete det; }

}  // extern "C"
