#include "gldb/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "gldb/tape.hpp"

namespace gldb {

void InjectionConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw_usage("BadConfig", "injection rate must be in [0,1]");
}

std::vector<LogEntry> inject(const std::vector<LogEntry>& log, const InjectionConfig& cfg) {
  cfg.validate();
  std::vector<LogEntry> out = log;
  if (cfg.rate == 0.0 || log.empty()) return out;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].index >= cfg.first_injectable) candidates.push_back(i);
  }
  std::size_t quota =
      static_cast<std::size_t>(std::ceil(cfg.rate * static_cast<double>(candidates.size())));
  if (quota == 0) return out;

  // distinct objects in order of first appearance, with per-position prefix counts
  std::vector<ObjectKey> seen_objects;
  std::unordered_set<ObjectKey> seen_set;
  std::vector<std::size_t> prefix_objects(log.size(), 0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    prefix_objects[i] = seen_objects.size();
    for (const auto& key : log[i].objects) {
      if (seen_set.insert(key).second) seen_objects.push_back(key);
    }
  }

  // Co-occurrence over the unperturbed log: swapped-in elements should be
  // structurally foreign to the entry they land in, so injected labels mark
  // anomalies that are detectable in principle rather than plausible rewires.
  std::unordered_map<ObjectKey, std::unordered_set<ObjectKey>> co;
  for (const auto& entry : log) {
    for (const auto& a : entry.objects) {
      for (const auto& b : entry.objects) {
        if (a != b) co[a].insert(b);
      }
    }
  }
  auto cooccurs = [&](const ObjectKey& a, const ObjectKey& b) {
    if (a == b) return true;
    auto it = co.find(a);
    return it != co.end() && it->second.count(b) > 0;
  };

  Rng rng(derive_seed(cfg.seed, 11));
  rng.shuffle(candidates);

  std::size_t injected = 0;
  for (std::size_t pos : candidates) {
    if (injected == quota) break;
    LogEntry& entry = out[pos];
    if (cfg.kind == InjectionKind::ObjectSwap) {
      if (entry.objects.empty() || prefix_objects[pos] == 0) continue;
      std::unordered_set<ObjectKey> exclude(entry.objects.begin(), entry.objects.end());
      std::size_t victim = static_cast<std::size_t>(rng.uniform_index(entry.objects.size()));
      // prefer replacements that never co-occur with the entry's other
      // objects, and among those the ones sharing the fewest neighbors with
      // them (a direct-non-co-occurrence check alone still admits near
      // neighbors in sparse contexts); fall back to any absent earlier object
      std::unordered_set<ObjectKey> near;
      for (std::size_t j = 0; j < entry.objects.size(); ++j) {
        if (j == victim) continue;
        auto it = co.find(entry.objects[j]);
        if (it != co.end()) near.insert(it->second.begin(), it->second.end());
      }
      std::vector<ObjectKey> pool, fallback;
      std::size_t best_overlap = std::numeric_limits<std::size_t>::max();
      for (std::size_t k = 0; k < prefix_objects[pos]; ++k) {
        const ObjectKey& cand = seen_objects[k];
        if (exclude.count(cand)) continue;
        fallback.push_back(cand);
        bool foreign = true;
        for (std::size_t j = 0; j < entry.objects.size() && foreign; ++j) {
          if (j != victim && cooccurs(entry.objects[j], cand)) foreign = false;
        }
        if (!foreign) continue;
        std::size_t overlap = 0;
        if (auto it = co.find(cand); it != co.end()) {
          for (const auto& m : it->second) overlap += near.count(m);
        }
        if (overlap < best_overlap) {
          best_overlap = overlap;
          pool.clear();
        }
        if (overlap == best_overlap) pool.push_back(cand);
      }
      if (pool.empty()) pool = std::move(fallback);
      if (pool.empty()) continue;
      ObjectKey replacement = pool[rng.uniform_index(pool.size())];
      entry.objects[victim] = replacement;
      AnomalyLabel label = entry.label.value_or(AnomalyLabel{});
      label.object_labels[replacement] = 1;
      entry.label = label;
    } else {
      if (pos == 0) continue;
      // prefer donor entries whose objects never co-occur with this entry's
      // objects, so the moved text is foreign to the receiving context
      std::vector<std::size_t> earlier, any_earlier;
      for (std::size_t k = 0; k < pos; ++k) {
        if (log[k].event_text == entry.event_text) continue;
        any_earlier.push_back(k);
        bool foreign = true;
        for (const auto& o : log[k].objects) {
          for (const auto& q : entry.objects) {
            if (cooccurs(q, o)) {
              foreign = false;
              break;
            }
          }
          if (!foreign) break;
        }
        if (foreign) earlier.push_back(k);
      }
      if (earlier.empty()) earlier = std::move(any_earlier);
      if (earlier.empty()) continue;
      entry.event_text = log[earlier[rng.uniform_index(earlier.size())]].event_text;
      AnomalyLabel label = entry.label.value_or(AnomalyLabel{});
      label.event_label = 1;
      entry.label = label;
    }
    ++injected;
  }
  if (injected < quota) {
    throw_data("InjectionShortfall", "could only inject " + std::to_string(injected) + " of " +
                                         std::to_string(quota));
  }
  return out;
}

void SyntheticLogConfig::validate() const {
  if (n_entries == 0 || n_objects == 0 || n_communities == 0) {
    throw_usage("BadConfig", "synthetic config sizes must be positive");
  }
  if (n_communities > n_objects) throw_usage("BadConfig", "more communities than objects");
  if (!(intra_community_prob > 0.5 && intra_community_prob <= 1.0)) {
    throw_usage("BadConfig", "intra_community_prob must be in (0.5, 1]");
  }
  if (min_objects_per_entry < 1 || min_objects_per_entry > max_objects_per_entry) {
    throw_usage("BadConfig", "bad objects-per-entry range");
  }
}

LogSchema synthetic_schema() {
  LogSchema schema;
  schema.timestamp_column = "ts";
  schema.object_delimiter = ";";
  schema.columns = {{"message", AttributeRole::Event}, {"objects", AttributeRole::Object}};
  return schema;
}

std::vector<LogEntry> generate_synthetic(const SyntheticLogConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 21));

  std::vector<std::size_t> community_of(cfg.n_objects);
  std::vector<std::vector<std::size_t>> members(cfg.n_communities);
  for (std::size_t o = 0; o < cfg.n_objects; ++o) {
    std::size_t c = o % cfg.n_communities;
    community_of[o] = c;
    members[c].push_back(o);
  }
  auto object_name = [&](std::size_t o) {
    return "host-" + std::to_string(community_of[o]) + "-" + std::to_string(o);
  };

  static const char* kVerbs[] = {"started", "finished", "retried", "queued",  "flushed",
                                 "scanned", "rotated",  "synced",  "evicted", "replicated"};
  static const char* kNouns[] = {"job",    "block",  "segment", "lease",  "shard",
                                 "bucket", "replica", "stream",  "batch",  "index"};

  std::vector<LogEntry> entries;
  entries.reserve(cfg.n_entries);
  const std::int64_t t0 = 1600000000;
  for (std::size_t n = 0; n < cfg.n_entries; ++n) {
    std::size_t community = static_cast<std::size_t>(rng.uniform_index(cfg.n_communities));
    LogEntry entry;
    entry.index = n;
    entry.timestamp = t0 + static_cast<std::int64_t>(n) * 60;

    std::size_t span = cfg.max_objects_per_entry - cfg.min_objects_per_entry + 1;
    std::size_t want = cfg.min_objects_per_entry + static_cast<std::size_t>(rng.uniform_index(span));
    std::size_t attempts = 0;
    while (entry.objects.size() < want && attempts < 20 * want + 20) {
      ++attempts;
      std::size_t obj;
      if (rng.uniform01() > cfg.intra_community_prob && cfg.n_communities > 1) {
        // cross-community traffic goes through each community's shared hub
        // (its first member), modeling shared infrastructure: cross edges are
        // frequent for those few objects instead of diffuse over all of them
        std::size_t c;
        do {
          c = static_cast<std::size_t>(rng.uniform_index(cfg.n_communities));
        } while (c == community);
        obj = members[c][0];
      } else {
        obj = members[community][rng.uniform_index(members[community].size())];
      }
      ObjectKey key = object_name(obj);
      if (std::find(entry.objects.begin(), entry.objects.end(), key) == entry.objects.end()) {
        entry.objects.push_back(std::move(key));
      }
    }

    // community-flavored message text drawn from a small template vocabulary
    std::size_t word = rng.uniform_index(cfg.vocab_per_community);
    std::ostringstream text;
    text << "svc" << community << " " << kNouns[word % 10] << "-" << (word % 7) << " "
         << kVerbs[rng.uniform_index(10)] << " on pool" << community;
    entry.event_text = text.str();
    entries.push_back(std::move(entry));
  }
  return entries;
}

MetricsReport compute_metrics(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) {
    throw_data("LengthMismatch", "predicted and truth lengths differ");
  }
  if (predicted.empty()) throw_data("LengthMismatch", "metrics over empty vectors");
  MetricsReport r;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++r.tp;
    else if (predicted[i] == 1 && truth[i] == 0) ++r.fp;
    else if (predicted[i] == 0 && truth[i] == 0) ++r.tn;
    else ++r.fn;
  }
  r.subset_size = predicted.size();
  double n = static_cast<double>(predicted.size());
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;
  r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall > 0.0)
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::vector<std::size_t> build_eval_subset(const std::vector<int>& truth, std::size_t n_normal,
                                           std::uint64_t seed) {
  std::vector<std::size_t> subset;
  std::vector<std::size_t> normals;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) subset.push_back(i);
    else normals.push_back(i);
  }
  if (normals.size() < n_normal) {
    throw_data("TooFewNormals", "need " + std::to_string(n_normal) + " normal entries, have " +
                                    std::to_string(normals.size()));
  }
  Rng rng(derive_seed(seed, 31));
  for (std::size_t i = 0; i < n_normal; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(normals.size() - i));
    std::swap(normals[i], normals[j]);
    subset.push_back(normals[i]);
  }
  std::sort(subset.begin(), subset.end());
  return subset;
}

ThroughputReport measure_throughput(const std::function<void()>& detector, std::size_t n_entries,
                                    int runs) {
  if (n_entries == 0) throw_data("EmptyInput", "cannot measure throughput over empty input");
  ThroughputReport r;
  for (int i = 0; i < runs; ++i) {
    auto start = std::chrono::steady_clock::now();
    detector();
    auto end = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(end - start).count();
    r.runs.push_back(static_cast<double>(n_entries) / std::max(secs, 1e-9));
  }
  for (double v : r.runs) r.mean += v;
  r.mean /= static_cast<double>(r.runs.size());
  double var = 0.0;
  for (double v : r.runs) var += (v - r.mean) * (v - r.mean);
  r.std_dev = std::sqrt(var / static_cast<double>(r.runs.size()));
  return r;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw_data("LengthMismatch", "correlation needs two equal series of length >= 2");
  }
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw_data("ConstantSeries", "zero variance in correlation input");
  return sxy / std::sqrt(sxx * syy);
}

double degree_accuracy_correlation(const std::vector<EntryVerdict>& verdicts,
                                   const std::vector<int>& truth) {
  if (verdicts.size() != truth.size()) {
    throw_data("LengthMismatch", "verdicts and truth lengths differ");
  }
  std::vector<double> degree, correct;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (!verdicts[i].has_evidence) continue;
    degree.push_back(static_cast<double>(verdicts[i].links.size()));
    correct.push_back(verdicts[i].event_anomaly == truth[i] ? 1.0 : 0.0);
  }
  return pearson_correlation(degree, correct);
}

namespace {

struct BaselineState {
  ModelParams params;  // reuses the named-tensor container; no GAT tensors
  Adam adam;
  std::unordered_map<ObjectKey, std::uint32_t> object_ids;
  Rng init_rng;
  Rng neg_rng;

  std::uint32_t object_id(const ObjectKey& key) {
    auto it = object_ids.find(key);
    if (it != object_ids.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(object_ids.size());
    object_ids.emplace(key, id);
    params.ensure_object_rows(id + 1, init_rng);
    return id;
  }
};

struct BaselineBatch {
  std::vector<std::uint32_t> objects;
  std::vector<int> labels;
};

double baseline_forward(BaselineState& st, const Eigen::VectorXd& evt_feat,
                        const BaselineBatch& batch, bool train,
                        std::vector<double>* scores_out) {
  Tape tape;
  std::vector<Var> pv;
  for (const auto& [name, m] : st.params.dense) pv.push_back(leaf(tape, m));
  auto var_of = [&](const std::string& name) -> Var {
    for (std::size_t i = 0; i < st.params.dense.size(); ++i) {
      if (st.params.dense[i].first == name) return pv[i];
    }
    throw_internal("MissingTensor", name);
  };
  Eigen::Index k = static_cast<Eigen::Index>(batch.objects.size());
  Eigen::MatrixXd obj_rows(k, st.params.config.d_obj);
  for (Eigen::Index i = 0; i < k; ++i) {
    obj_rows.row(i) = st.params.object_table.row(batch.objects[static_cast<std::size_t>(i)]);
  }
  Var obj = leaf(tape, std::move(obj_rows));
  Eigen::MatrixXd evt_rows(k, evt_feat.size());
  for (Eigen::Index i = 0; i < k; ++i) evt_rows.row(i) = evt_feat.transpose();
  Var x = concat_cols({obj, leaf(tape, std::move(evt_rows))});
  Var h1 = elu(add_rowvec(matmul(x, var_of("w1")), var_of("b1")));
  Var h2 = elu(add_rowvec(matmul(h1, var_of("w2")), var_of("b2")));
  Var logits = add_rowvec(matmul(h2, var_of("w3")), var_of("b3"));
  if (scores_out) {
    scores_out->resize(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
      double z = logits.val()(i, 0);
      (*scores_out)[static_cast<std::size_t>(i)] =
          z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  }
  if (!train) return 0.0;
  Var loss = balanced_bce_logits(logits, batch.labels);
  tape.backward(loss.idx);
  Gradients grads;
  for (const auto& v : pv) grads.dense.push_back(v.grad());
  grads.table =
      Eigen::MatrixXd::Zero(st.params.object_table.rows(), st.params.object_table.cols());
  const Eigen::MatrixXd& og = obj.grad();
  for (Eigen::Index i = 0; i < k; ++i) {
    grads.table.row(batch.objects[static_cast<std::size_t>(i)]) += og.row(i);
  }
  std::set<std::uint32_t> touched(batch.objects.begin(), batch.objects.end());
  grads.touched_rows.assign(touched.begin(), touched.end());
  st.adam.step(st.params, grads);
  return loss.val()(0, 0);
}

}  // namespace

std::vector<EntryVerdict> mlp_baseline_run(const std::vector<LogEntry>& train_log,
                                           const std::vector<LogEntry>& test_log,
                                           const TextEmbedderSpec& espec, TimeEncodingSpec tspec,
                                           const BaselineConfig& cfg) {
  if (train_log.empty()) throw_data("EmptyTrainSet", "baseline needs training entries");
  tspec.t_ref = train_log.front().timestamp;
  TextEmbedder embedder(espec);
  int d_in = cfg.d_obj + espec.dim + tspec.dim;

  BaselineState st;
  st.init_rng = Rng(derive_seed(cfg.seed, 41));
  st.neg_rng = Rng(derive_seed(cfg.seed, 42));
  st.params.config.d_obj = cfg.d_obj;
  st.params.config.init_scale = 0.1;
  st.params.object_table = Eigen::MatrixXd(0, cfg.d_obj);
  auto weight = [&](const std::string& name, int in, int out) {
    Eigen::MatrixXd m(in, out);
    double std_dev = std::sqrt(1.0 / in);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = st.init_rng.gaussian() * std_dev;
    }
    st.params.dense.emplace_back(name, std::move(m));
  };
  weight("w1", d_in, cfg.d_hidden);
  st.params.dense.emplace_back("b1", Eigen::MatrixXd::Zero(1, cfg.d_hidden));
  weight("w2", cfg.d_hidden, cfg.d_hidden);
  st.params.dense.emplace_back("b2", Eigen::MatrixXd::Zero(1, cfg.d_hidden));
  weight("w3", cfg.d_hidden, 1);
  st.params.dense.emplace_back("b3", Eigen::MatrixXd::Zero(1, 1));
  st.adam = Adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  for (const auto& entry : train_log) {
    for (const auto& key : entry.objects) st.object_id(key);
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& entry : train_log) {
      if (entry.objects.empty()) continue;
      BaselineBatch batch;
      std::unordered_set<std::uint32_t> in_entry;
      for (const auto& key : entry.objects) {
        std::uint32_t id = st.object_id(key);
        batch.objects.push_back(id);
        batch.labels.push_back(1);
        in_entry.insert(id);
      }
      std::size_t pool = st.object_ids.size();
      std::size_t want = static_cast<std::size_t>(cfg.rho) * entry.objects.size();
      want = std::min(want, pool > in_entry.size() ? pool - in_entry.size() : 0);
      std::unordered_set<std::uint32_t> negs;
      std::size_t attempts = 0;
      while (negs.size() < want && attempts < 40 * want + 100) {
        ++attempts;
        std::uint32_t id = static_cast<std::uint32_t>(st.neg_rng.uniform_index(pool));
        if (!in_entry.count(id)) negs.insert(id);
      }
      std::vector<std::uint32_t> neg_sorted(negs.begin(), negs.end());
      std::sort(neg_sorted.begin(), neg_sorted.end());
      for (std::uint32_t id : neg_sorted) {
        batch.objects.push_back(id);
        batch.labels.push_back(0);
      }
      Eigen::VectorXd feat = event_feature(entry.event_text, entry.timestamp, embedder, tspec);
      baseline_forward(st, feat, batch, true, nullptr);
    }
  }

  std::vector<EntryVerdict> verdicts;
  verdicts.reserve(test_log.size());
  for (const auto& entry : test_log) {
    EntryVerdict v;
    v.entry_index = entry.index;
    if (!entry.objects.empty()) {
      BaselineBatch batch;
      for (const auto& key : entry.objects) batch.objects.push_back(st.object_id(key));
      Eigen::VectorXd feat = event_feature(entry.event_text, entry.timestamp, embedder, tspec);
      std::vector<double> scores;
      baseline_forward(st, feat, batch, false, &scores);
      double mean = 0.0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        int predicted = scores[i] >= cfg.tau ? 1 : 0;
        v.links.push_back(
            LinkPrediction{entry.objects[i], entry.index, scores[i], predicted, 1 - predicted});
        mean += scores[i];
      }
      mean /= static_cast<double>(scores.size());
      v.has_evidence = true;
      v.event_score = mean;
      v.event_anomaly = mean < cfg.tau ? 1 : 0;
    }
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

std::string score_histogram_csv(const std::vector<EntryVerdict>& verdicts,
                                const std::vector<int>& truth, int bins) {
  if (verdicts.size() != truth.size()) {
    throw_data("LengthMismatch", "verdicts and truth lengths differ");
  }
  std::vector<std::vector<std::size_t>> counts(2, std::vector<std::size_t>(bins, 0));
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (!verdicts[i].has_evidence) continue;
    int b = std::min(bins - 1, static_cast<int>(verdicts[i].event_score * bins));
    counts[truth[i] == 1 ? 1 : 0][static_cast<std::size_t>(b)]++;
  }
  std::ostringstream out;
  out << "bin_low,count,class\n";
  for (int cls = 0; cls < 2; ++cls) {
    for (int b = 0; b < bins; ++b) {
      out << static_cast<double>(b) / bins << "," << counts[cls][static_cast<std::size_t>(b)]
          << "," << (cls == 1 ? "anomaly" : "normal") << "\n";
    }
  }
  return out.str();
}

}  // namespace gldb
