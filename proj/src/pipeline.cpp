#include "gldb/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace gldb {

using nlohmann::json;

void TrainConfig::validate() const {
  if (rho < 1) throw_usage("BadConfig", "negative ratio must be >= 1");
  if (epochs < 1) throw_usage("BadConfig", "epochs must be >= 1");
  if (window < 1) throw_usage("BadConfig", "window must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw_usage("BadConfig", "tau must be in (0,1)");
  if (!(lr > 0.0)) throw_usage("BadConfig", "learning rate must be positive");
}

namespace {

struct StepPairs {
  std::vector<PairRef> pairs;
  std::vector<int> labels;
};

// Positives first, then negatives, in sampling order: the loss reduction
// order is fixed, keeping training deterministic. Negatives corrupt the
// object endpoint of the incoming entry's edges: they pair the candidate
// event with objects from the view that are absent from the entry. Sharing
// the event between both classes forces the model to discriminate objects
// instead of keying on event recency.
StepPairs assemble_pairs(const DynamicGraph& /*graph*/, const WindowView& view,
                         const EntrySubgraph& sub, int rho, Rng& neg_rng,
                         std::vector<std::string>* trace) {
  StepPairs out;
  std::unordered_set<std::uint32_t> in_entry;
  for (const auto& node : sub.objects) {
    out.pairs.push_back(PairRef{node.id, true, 0});
    out.labels.push_back(1);
    in_entry.insert(node.id);
  }
  std::vector<std::uint32_t> pool;
  for (std::uint32_t o = 0; o < view.num_objects; ++o) {
    if (!in_entry.count(o)) pool.push_back(o);
  }
  std::size_t want = static_cast<std::size_t>(rho) * out.pairs.size();
  std::size_t count = std::min(want, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(neg_rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.pairs.push_back(PairRef{pool[i], true, 0});
    out.labels.push_back(0);
  }
  if (trace) {
    trace->push_back("sample_negatives " + std::to_string(count) + " (positives " +
                     std::to_string(sub.objects.size()) + ")");
  }
  return out;
}

}  // namespace

Checkpoint train_online(const std::vector<LogEntry>& train_log, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const TextEmbedderSpec& espec,
                        TimeEncodingSpec tspec, const std::string& schema_hash,
                        TrainReport* report, std::vector<std::string>* mutation_trace) {
  cfg.validate();
  model_cfg.validate();
  if (train_log.empty()) throw_data("EmptyTrainSet", "no training entries");

  tspec.t_ref = train_log.front().timestamp;
  tspec.validate();
  TextEmbedder embedder(espec);

  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng neg_rng(derive_seed(cfg.seed, 2));

  Checkpoint ckpt;
  ckpt.train_config = cfg;
  ckpt.embedder_spec = espec;
  ckpt.time_spec = tspec;
  ckpt.schema_hash = schema_hash;
  ckpt.optimizer = Adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  Model model(ModelParams::init(model_cfg, espec.dim + tspec.dim, init_rng));
  if (report) report->epoch_mean_loss.clear();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t k = 0; k < train_log.size(); ++k) {
      const LogEntry& entry = train_log[k];
      EntrySubgraph sub = ckpt.graph.build_subgraph(entry);
      ckpt.graph.merge_objects(sub);
      model.params().ensure_object_rows(ckpt.graph.object_count(), init_rng);
      if (mutation_trace) {
        mutation_trace->push_back("merge_objects +" + std::to_string(sub.new_object_keys.size()));
      }

      WindowView view = ckpt.graph.window_view_at(cfg.window, k);
      StepPairs batch = assemble_pairs(ckpt.graph, view, sub, cfg.rho, neg_rng, mutation_trace);
      if (!batch.pairs.empty()) {
        std::vector<CandidateEvent> candidates{{entry.event_text, entry.timestamp}};
        ForwardResult fwd = model.run(ckpt.graph, view, embedder, tspec, candidates, batch.pairs,
                                      &batch.labels);
        Gradients grads = model.backward(fwd);
        ckpt.optimizer.step(model.params(), grads);
        loss_sum += fwd.loss_value;
        ++loss_count;
        if (report) ++report->steps;
        if (mutation_trace) mutation_trace->push_back("adam_step");
      }

      if (!sub.replay) {
        ckpt.graph.commit_entry(sub);
        if (mutation_trace) {
          mutation_trace->push_back("commit_event +" + std::to_string(sub.objects.size()) +
                                    " edges");
        }
      }
    }
    if (report) report->epoch_mean_loss.push_back(loss_count ? loss_sum / loss_count : 0.0);
    log_msg(LogLevel::Info, "epoch " + std::to_string(epoch + 1) + "/" +
                                std::to_string(cfg.epochs) + " mean loss " +
                                std::to_string(loss_count ? loss_sum / loss_count : 0.0));
  }

  ckpt.params = std::move(model.params());
  ckpt.rng = init_rng;
  ckpt.last_entry_index = static_cast<std::int64_t>(train_log.back().index);
  return ckpt;
}

std::vector<EntryVerdict> detect_online(const std::vector<LogEntry>& test_log, Checkpoint& ckpt,
                                        std::optional<double> tau_override) {
  double tau = tau_override.value_or(ckpt.train_config.tau);
  if (!(tau > 0.0 && tau < 1.0)) throw_usage("BadConfig", "tau must be in (0,1)");
  TextEmbedder embedder(ckpt.embedder_spec);
  Model model(std::move(ckpt.params));

  std::vector<EntryVerdict> verdicts;
  verdicts.reserve(test_log.size());
  for (const LogEntry& entry : test_log) {
    EntrySubgraph sub = ckpt.graph.build_subgraph(entry);
    ckpt.graph.merge_objects(sub);
    // first-seen objects get frozen seeded rows so they can be scored
    model.params().ensure_object_rows(ckpt.graph.object_count(), ckpt.rng);

    EntryVerdict verdict;
    verdict.entry_index = entry.index;
    if (sub.objects.empty()) {
      verdicts.push_back(std::move(verdict));
      continue;
    }

    WindowView view = ckpt.graph.window_view(ckpt.train_config.window);
    std::vector<CandidateEvent> candidates{{entry.event_text, entry.timestamp}};
    std::vector<PairRef> pairs;
    pairs.reserve(sub.objects.size());
    for (const auto& node : sub.objects) pairs.push_back(PairRef{node.id, true, 0});
    ForwardResult fwd =
        model.run(ckpt.graph, view, embedder, ckpt.time_spec, candidates, pairs, nullptr);

    std::vector<std::size_t> accepted;
    double agg = ckpt.train_config.aggregation == EventAggregation::Min ? 1.0 : 0.0;
    for (std::size_t i = 0; i < sub.objects.size(); ++i) {
      double s = fwd.scores[i];
      int predicted = s >= tau ? 1 : 0;
      verdict.links.push_back(LinkPrediction{ckpt.graph.object_key(sub.objects[i].id),
                                             entry.index, s, predicted, 1 - predicted});
      if (predicted == 1) accepted.push_back(i);
      if (ckpt.train_config.aggregation == EventAggregation::Min) {
        agg = std::min(agg, s);
      } else {
        agg += s;
      }
    }
    if (ckpt.train_config.aggregation == EventAggregation::Mean) {
      agg /= static_cast<double>(sub.objects.size());
    }
    verdict.has_evidence = true;
    verdict.event_score = agg;
    verdict.event_anomaly = agg < tau ? 1 : 0;
    verdicts.push_back(std::move(verdict));

    ckpt.graph.commit_entry(sub, accepted);
    ckpt.last_entry_index = static_cast<std::int64_t>(entry.index);
  }

  ckpt.params = std::move(model.params());
  return verdicts;
}

namespace {

constexpr char kMagic[4] = {'G', 'L', 'D', 'B'};
constexpr std::uint32_t kVersion = 1;

struct ByteSink {
  std::string bytes;
  void raw(const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void i64(std::int64_t v) { raw(&v, sizeof(v)); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const std::string& name, const Eigen::MatrixXd& m) {
    str(name);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
};

struct ByteSource {
  const std::string& bytes;
  std::size_t at = 0;

  void raw(void* p, std::size_t n) {
    if (at + n > bytes.size()) throw_data("CorruptChecksum", "checkpoint truncated");
    std::memcpy(p, bytes.data() + at, n);
    at += n;
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof(v)); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof(v)); return v; }
  std::int64_t i64() { std::int64_t v; raw(&v, sizeof(v)); return v; }
  std::string str() {
    std::uint64_t n = u64();
    if (at + n > bytes.size()) throw_data("CorruptChecksum", "checkpoint truncated");
    std::string s = bytes.substr(at, n);
    at += n;
    return s;
  }
  std::pair<std::string, Eigen::MatrixXd> tensor() {
    std::string name = str();
    std::uint64_t rows = u64();
    std::uint64_t cols = u64();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return {std::move(name), std::move(m)};
  }
};

json config_to_json(const Checkpoint& ckpt) {
  const TrainConfig& tc = ckpt.train_config;
  const ModelConfig& mc = ckpt.params.config;
  json j;
  j["train"] = {{"rho", tc.rho},       {"lr", tc.lr},
                {"epochs", tc.epochs}, {"window", tc.window},
                {"seed", tc.seed},     {"tau", tc.tau},
                {"aggregation", tc.aggregation == EventAggregation::Min ? "min" : "mean"}};
  j["model"] = {{"d_obj", mc.d_obj},
                {"d_hidden", mc.d_hidden},
                {"n_layers", mc.n_layers},
                {"n_heads", mc.n_heads},
                {"fusion", fusion_name(mc.fusion)},
                {"reduce", reduce_name(mc.reduce)},
                {"leaky_slope", mc.leaky_slope},
                {"init_scale", mc.init_scale}};
  j["d_event_in"] = ckpt.params.d_event_in;
  const TextEmbedderSpec& es = ckpt.embedder_spec;
  j["embedder"] = {{"kind", es.kind == TextEmbedderKind::HashedNgram ? "hash" : "precomputed"},
                   {"dim", es.dim},
                   {"ngram_min", es.ngram_min},
                   {"ngram_max", es.ngram_max},
                   {"normalize", es.normalize},
                   {"table_path", es.table_path}};
  const TimeEncodingSpec& ts = ckpt.time_spec;
  j["time"] = {{"dim", ts.dim},
               {"base_period", ts.base_period},
               {"t_ref", ts.t_ref},
               {"scale", ts.scale}};
  j["schema_hash"] = ckpt.schema_hash;
  j["last_entry_index"] = ckpt.last_entry_index;
  j["rng"] = ckpt.rng.serialize();
  j["adam_steps"] = const_cast<Checkpoint&>(ckpt).optimizer.step_count();
  return j;
}

void config_from_json(const json& j, Checkpoint& ckpt) {
  TrainConfig tc;
  tc.rho = j.at("train").at("rho").get<int>();
  tc.lr = j.at("train").at("lr").get<double>();
  tc.epochs = j.at("train").at("epochs").get<int>();
  tc.window = j.at("train").at("window").get<std::uint32_t>();
  tc.seed = j.at("train").at("seed").get<std::uint64_t>();
  tc.tau = j.at("train").at("tau").get<double>();
  tc.aggregation = j.at("train").value("aggregation", "mean") == std::string("min")
                       ? EventAggregation::Min
                       : EventAggregation::Mean;
  ckpt.train_config = tc;

  ModelConfig mc;
  mc.d_obj = j.at("model").at("d_obj").get<int>();
  mc.d_hidden = j.at("model").at("d_hidden").get<int>();
  mc.n_layers = j.at("model").at("n_layers").get<int>();
  mc.n_heads = j.at("model").at("n_heads").get<int>();
  mc.fusion = fusion_from_name(j.at("model").at("fusion").get<std::string>());
  mc.reduce = reduce_from_name(j.at("model").at("reduce").get<std::string>());
  mc.leaky_slope = j.at("model").at("leaky_slope").get<double>();
  mc.init_scale = j.at("model").at("init_scale").get<double>();
  ckpt.params.config = mc;
  ckpt.params.d_event_in = j.at("d_event_in").get<int>();

  TextEmbedderSpec es;
  es.kind = j.at("embedder").at("kind").get<std::string>() == "hash"
                ? TextEmbedderKind::HashedNgram
                : TextEmbedderKind::Precomputed;
  es.dim = j.at("embedder").at("dim").get<int>();
  es.ngram_min = j.at("embedder").at("ngram_min").get<int>();
  es.ngram_max = j.at("embedder").at("ngram_max").get<int>();
  es.normalize = j.at("embedder").at("normalize").get<bool>();
  es.table_path = j.at("embedder").at("table_path").get<std::string>();
  ckpt.embedder_spec = es;

  TimeEncodingSpec ts;
  ts.dim = j.at("time").at("dim").get<int>();
  ts.base_period = j.at("time").at("base_period").get<double>();
  ts.t_ref = j.at("time").at("t_ref").get<std::int64_t>();
  ts.scale = j.at("time").at("scale").get<double>();
  ckpt.time_spec = ts;

  ckpt.schema_hash = j.at("schema_hash").get<std::string>();
  ckpt.last_entry_index = j.at("last_entry_index").get<std::int64_t>();
  ckpt.rng.deserialize(j.at("rng").get<std::string>());
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ByteSink sink;
  sink.raw(kMagic, 4);
  sink.u32(kVersion);
  sink.str(config_to_json(ckpt).dump());

  auto& opt = const_cast<Checkpoint&>(ckpt).optimizer;
  std::uint32_t n_tensors = static_cast<std::uint32_t>(
      ckpt.params.dense.size() + 1 + opt.dense_m().size() + opt.dense_v().size() + 2 + 1);
  sink.u32(n_tensors);
  for (const auto& [name, m] : ckpt.params.dense) sink.tensor(name, m);
  sink.tensor("object_table", ckpt.params.object_table);
  for (std::size_t i = 0; i < opt.dense_m().size(); ++i) {
    sink.tensor("adam.m." + ckpt.params.dense[i].first, opt.dense_m()[i]);
  }
  for (std::size_t i = 0; i < opt.dense_v().size(); ++i) {
    sink.tensor("adam.v." + ckpt.params.dense[i].first, opt.dense_v()[i]);
  }
  sink.tensor("adam.table_m", opt.table_m());
  sink.tensor("adam.table_v", opt.table_v());
  Eigen::MatrixXd row_t(1, static_cast<Eigen::Index>(opt.row_steps().size()));
  for (std::size_t i = 0; i < opt.row_steps().size(); ++i) {
    row_t(0, static_cast<Eigen::Index>(i)) = static_cast<double>(opt.row_steps()[i]);
  }
  sink.tensor("adam.row_t", row_t);

  sink.str(ckpt.graph.to_snapshot_json());

  std::uint32_t crc = crc32(sink.bytes.data(), sink.bytes.size());
  sink.u32(crc);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("IoError", "cannot write checkpoint " + path);
  out.write(sink.bytes.data(), static_cast<std::streamsize>(sink.bytes.size()));
  if (!out) throw_data("IoError", "short write to " + path);

  // JSON sidecar with the resolved configuration
  std::ofstream side(path + ".json");
  if (side) side << config_to_json(ckpt).dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("IoError", "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (bytes.size() < 12) throw_data("CorruptChecksum", "checkpoint too small");

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw_data("CorruptChecksum", "checkpoint CRC mismatch");
  }
  bytes.resize(bytes.size() - 4);

  ByteSource src{bytes};
  char magic[4];
  src.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw_data("CorruptChecksum", "bad checkpoint magic");
  std::uint32_t version = src.u32();
  if (version != kVersion) {
    throw_data("VersionUnsupported", "checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  json cfg;
  try {
    cfg = json::parse(src.str());
  } catch (const json::exception& e) {
    throw_data("CorruptChecksum", std::string("bad checkpoint config: ") + e.what());
  }
  config_from_json(cfg, ckpt);
  ckpt.optimizer = Adam(AdamConfig{ckpt.train_config.lr, 0.9, 0.999, 1e-8});
  ckpt.optimizer.step_count() = cfg.at("adam_steps").get<std::int64_t>();

  std::uint32_t n_tensors = src.u32();
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;
  tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) tensors.push_back(src.tensor());

  auto take = [&tensors](const std::string& name) -> Eigen::MatrixXd {
    for (auto& [n, m] : tensors) {
      if (n == name) return std::move(m);
    }
    throw_data("CorruptChecksum", "checkpoint missing tensor " + name);
  };

  for (auto& [name, m] : tensors) {
    if (name.rfind("adam.", 0) == 0 || name == "object_table") continue;
    ckpt.params.dense.emplace_back(name, m);
  }
  ckpt.params.object_table = take("object_table");
  for (const auto& [name, m] : ckpt.params.dense) {
    ckpt.optimizer.dense_m().push_back(take("adam.m." + name));
    ckpt.optimizer.dense_v().push_back(take("adam.v." + name));
  }
  ckpt.optimizer.table_m() = take("adam.table_m");
  ckpt.optimizer.table_v() = take("adam.table_v");
  Eigen::MatrixXd row_t = take("adam.row_t");
  ckpt.optimizer.row_steps().resize(static_cast<std::size_t>(row_t.cols()));
  for (Eigen::Index i = 0; i < row_t.cols(); ++i) {
    ckpt.optimizer.row_steps()[static_cast<std::size_t>(i)] =
        static_cast<std::int64_t>(row_t(0, i));
  }

  ckpt.graph = DynamicGraph::from_snapshot_json(src.str());
  return ckpt;
}

void write_verdicts_jsonl(const std::string& path, const std::vector<EntryVerdict>& verdicts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("IoError", "cannot write " + path);
  for (const auto& v : verdicts) {
    json j;
    j["n"] = v.entry_index;
    if (v.has_evidence) {
      j["event_score"] = v.event_score;
      j["event_anomaly"] = v.event_anomaly;
    } else {
      j["event_score"] = nullptr;
      j["event_anomaly"] = nullptr;
    }
    json links = json::array();
    for (const auto& l : v.links) {
      links.push_back({{"object", l.object}, {"score", l.score}, {"anomaly", l.anomaly_flag}});
    }
    j["links"] = std::move(links);
    out << j.dump() << "\n";
  }
}

std::vector<EntryVerdict> read_verdicts_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("IoError", "cannot open " + path);
  std::vector<EntryVerdict> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    EntryVerdict v;
    v.entry_index = j.at("n").get<std::size_t>();
    if (!j.at("event_anomaly").is_null()) {
      v.has_evidence = true;
      v.event_score = j.at("event_score").get<double>();
      v.event_anomaly = j.at("event_anomaly").get<int>();
    }
    for (const auto& l : j.at("links")) {
      LinkPrediction lp;
      lp.object = l.at("object").get<std::string>();
      lp.event_entry = v.entry_index;
      lp.score = l.at("score").get<double>();
      lp.anomaly_flag = l.at("anomaly").get<int>();
      lp.predicted_label = 1 - lp.anomaly_flag;
      v.links.push_back(std::move(lp));
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace gldb
