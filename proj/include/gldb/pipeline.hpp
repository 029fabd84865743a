#ifndef GLDB_PIPELINE_HPP
#define GLDB_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "gldb/embedding.hpp"
#include "gldb/graph_store.hpp"
#include "gldb/log_model.hpp"
#include "gldb/model.hpp"
#include "gldb/optimizer.hpp"
#include "gldb/util.hpp"

namespace gldb {

enum class EventAggregation { Mean, Min };

struct TrainConfig {
  int rho = 10;                 // negatives per positive
  double lr = 1e-4;
  int epochs = 10;
  std::uint32_t window = 100;
  std::uint64_t seed = 0;
  double tau = 0.5;
  EventAggregation aggregation = EventAggregation::Mean;

  void validate() const;
};

struct LinkPrediction {
  ObjectKey object;
  std::size_t event_entry = 0;
  double score = 0.0;
  int predicted_label = 0;      // 1 = accepted/normal
  int anomaly_flag = 0;         // 1 - predicted_label
};

struct EntryVerdict {
  std::size_t entry_index = 0;
  std::vector<LinkPrediction> links;
  bool has_evidence = false;    // false for zero-object entries
  double event_score = 0.0;
  int event_anomaly = 0;
};

struct Checkpoint {
  TrainConfig train_config;
  ModelParams params;
  Adam optimizer;
  Rng rng;                      // stream used for fresh object rows
  DynamicGraph graph;
  TextEmbedderSpec embedder_spec;
  TimeEncodingSpec time_spec;
  std::string schema_hash;
  std::int64_t last_entry_index = -1;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::size_t steps = 0;
};

// Alg 1: online training with negative sampling, multi-epoch replay.
// mutation_trace, when set, records one line per pipeline-visible mutation.
Checkpoint train_online(const std::vector<LogEntry>& train_log, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const TextEmbedderSpec& espec,
                        TimeEncodingSpec tspec, const std::string& schema_hash,
                        TrainReport* report = nullptr,
                        std::vector<std::string>* mutation_trace = nullptr);

// Alg 2: online detection with accepted-link graph updates. Mutates the
// checkpoint's graph and rng; parameters are never touched.
std::vector<EntryVerdict> detect_online(const std::vector<LogEntry>& test_log, Checkpoint& ckpt,
                                        std::optional<double> tau_override = std::nullopt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void write_verdicts_jsonl(const std::string& path, const std::vector<EntryVerdict>& verdicts);
std::vector<EntryVerdict> read_verdicts_jsonl(const std::string& path);

}  // namespace gldb

#endif  // GLDB_PIPELINE_HPP
