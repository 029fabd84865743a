#ifndef GLDB_EVALKIT_HPP
#define GLDB_EVALKIT_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gldb/log_model.hpp"
#include "gldb/pipeline.hpp"

namespace gldb {

enum class InjectionKind { ObjectSwap, EventSwap };

struct InjectionConfig {
  double rate = 0.05;
  InjectionKind kind = InjectionKind::ObjectSwap;
  std::uint64_t seed = 0;
  // injection applies only to entries with index >= first_injectable
  std::size_t first_injectable = 0;

  void validate() const;
};

// Perturbs ceil(rate * N_injectable) entries, drawing replacements from
// strictly earlier history, and sets anomaly labels on the swapped elements.
std::vector<LogEntry> inject(const std::vector<LogEntry>& log, const InjectionConfig& cfg);

struct SyntheticLogConfig {
  std::size_t n_entries = 2000;
  std::size_t n_objects = 200;
  std::size_t n_communities = 4;
  double intra_community_prob = 0.9;
  std::size_t min_objects_per_entry = 2;
  std::size_t max_objects_per_entry = 4;
  std::size_t vocab_per_community = 24;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<LogEntry> generate_synthetic(const SyntheticLogConfig& cfg);

LogSchema synthetic_schema();

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t subset_size = 0;
  double throughput_mean = 0.0;
  double throughput_std = 0.0;
};

MetricsReport compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth);

// Paper-style evaluation subset: all anomalous entries plus n_normal random
// normal ones. Returns positions into the aligned verdict/label vectors.
std::vector<std::size_t> build_eval_subset(const std::vector<int>& truth, std::size_t n_normal,
                                           std::uint64_t seed);

struct ThroughputReport {
  double mean = 0.0;
  double std_dev = 0.0;
  std::vector<double> runs;
};

// Wall-clock entries/sec over `runs` repeats of detector(), which must
// process `n_entries` entries per call.
ThroughputReport measure_throughput(const std::function<void()>& detector, std::size_t n_entries,
                                    int runs = 3);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

// Pearson correlation between per-entry event degree and the per-entry
// correctness indicator. Throws ConstantSeries when either side is constant.
double degree_accuracy_correlation(const std::vector<EntryVerdict>& verdicts,
                                   const std::vector<int>& truth);

struct BaselineConfig {
  int d_obj = 64;
  int d_hidden = 64;
  int rho = 10;
  double lr = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 0;
  double tau = 0.5;
};

// Graph-free MLP baseline: [object embedding || event feature] -> 3-layer MLP
// -> link score, trained with the same negative sampling and balanced BCE.
std::vector<EntryVerdict> mlp_baseline_run(const std::vector<LogEntry>& train_log,
                                           const std::vector<LogEntry>& test_log,
                                           const TextEmbedderSpec& espec, TimeEncodingSpec tspec,
                                           const BaselineConfig& cfg);

// Score histogram rows (bin_low, count, class) as CSV text.
std::string score_histogram_csv(const std::vector<EntryVerdict>& verdicts,
                                const std::vector<int>& truth, int bins = 20);

}  // namespace gldb

#endif  // GLDB_EVALKIT_HPP
