#ifndef GLDB_MODEL_HPP
#define GLDB_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gldb/embedding.hpp"
#include "gldb/graph_store.hpp"
#include "gldb/tape.hpp"
#include "gldb/util.hpp"

namespace gldb {

enum class FusionMode { Plain, Gated };
enum class ReduceMode { Diff, Concat, Hadamard };

struct ModelConfig {
  int d_obj = 512;
  int d_hidden = 512;
  int n_layers = 3;
  int n_heads = 4;
  FusionMode fusion = FusionMode::Gated;
  ReduceMode reduce = ReduceMode::Diff;
  double leaky_slope = 0.2;
  double init_scale = 0.1;

  void validate() const;
};

FusionMode fusion_from_name(const std::string& s);
const char* fusion_name(FusionMode m);
ReduceMode reduce_from_name(const std::string& s);
const char* reduce_name(ReduceMode m);

// All learnable state: named dense tensors plus the growable per-object
// embedding table.
struct ModelParams {
  ModelConfig config;
  int d_event_in = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> dense;
  Eigen::MatrixXd object_table;  // rows x d_obj

  static ModelParams init(const ModelConfig& cfg, int d_event_in, Rng& rng);

  Eigen::MatrixXd& tensor(const std::string& name);
  const Eigen::MatrixXd& tensor(const std::string& name) const;

  // Appends seeded-Gaussian rows until the table has `count` rows.
  void ensure_object_rows(std::uint32_t count, Rng& rng);

  bool all_finite() const;
  std::string checksum() const;
};

struct CandidateEvent {
  std::string text;
  std::int64_t timestamp = 0;
};

// A scored object-event pair. Events come either from the window view
// (position into visible_events) or from the candidate list.
struct PairRef {
  std::uint32_t object_id = 0;
  bool is_candidate = false;
  std::uint32_t event_pos = 0;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dense;            // parallel to ModelParams::dense
  Eigen::MatrixXd table;                         // same shape as object_table
  std::vector<std::uint32_t> touched_rows;       // rows with meaningful gradient
};

struct ForwardResult {
  std::unique_ptr<Tape> tape;
  std::vector<double> scores;                    // sigmoid(logit) per pair
  Var logits;
  Var loss;
  double loss_value = 0.0;
  bool has_loss = false;

  std::vector<Var> dense_vars;                   // leaves, parallel to params.dense
  Var table_var;

  // populated when diagnostics are requested
  Eigen::MatrixXd obj_e0;                        // objects x d_hidden, pre message passing
  Eigen::MatrixXd evt_ctx;                       // visible events x d_hidden
  Eigen::MatrixXd obj_egat;                      // objects x d_hidden, post message passing
};

class Model {
 public:
  explicit Model(ModelParams params) : params_(std::move(params)) {}

  ForwardResult run(const DynamicGraph& graph, const WindowView& view,
                    const TextEmbedder& embedder, const TimeEncodingSpec& tspec,
                    const std::vector<CandidateEvent>& candidates,
                    const std::vector<PairRef>& pairs, const std::vector<int>* labels,
                    bool want_diagnostics = false) const;

  // Runs backward on a result that carried a loss and extracts gradients.
  Gradients backward(ForwardResult& result) const;

  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
};

struct GradCheckEntry {
  std::string tensor;
  int coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> entries;
};

// Compares reverse-mode gradients of the full loss composition against
// central finite differences on a small random graph instance.
GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed, int n_coords = 200,
                           double eps = 1e-4);

}  // namespace gldb

#endif  // GLDB_MODEL_HPP
