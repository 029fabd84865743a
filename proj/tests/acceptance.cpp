// Acceptance gate: one pass/fail line per criterion, exit 0 only if every
// hard criterion passes (criterion 6 is report-only by design).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "gldb/evalkit.hpp"
#include "gldb/model.hpp"
#include "gldb/pipeline.hpp"

using namespace gldb;

namespace {

double now_sec() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Scaled-down model dimensions: the full 512-d configuration cannot train
// 3 x 2,000 entries x 10 epochs within the time budget on one core, so the
// quality criteria run the same architecture at reduced width.
ModelConfig accept_model() {
  ModelConfig mc;
  mc.d_obj = 32;
  mc.d_hidden = 32;
  mc.n_layers = 2;
  mc.n_heads = 2;
  return mc;
}

TextEmbedderSpec accept_espec() {
  TextEmbedderSpec es;
  es.dim = 64;
  return es;
}

TimeEncodingSpec accept_tspec() {
  TimeEncodingSpec ts;
  ts.dim = 8;
  return ts;
}

struct ExperimentResult {
  double f1 = 0.0;
  double baseline_f1 = 0.0;
  Checkpoint checkpoint;
  std::vector<LogEntry> test_entries;
};

// One synthetic end-to-end run: generate, inject into the test split, train
// on the clean prefix, detect, score on the all-anomalies + 50-normals subset.
ExperimentResult run_experiment(std::uint64_t seed, InjectionKind kind, bool event_mode,
                                bool with_baseline, std::size_t n_entries = 2000,
                                std::size_t min_objects = 2) {
  SyntheticLogConfig gen;
  gen.n_entries = n_entries;
  gen.n_objects = 200;
  gen.n_communities = 4;
  gen.intra_community_prob = 0.9;
  gen.min_objects_per_entry = min_objects;
  gen.max_objects_per_entry = 4;
  gen.seed = seed;
  std::vector<LogEntry> log = generate_synthetic(gen);

  std::size_t n_train = log.size() * 9 / 10;
  InjectionConfig inj;
  inj.rate = 0.05;
  inj.kind = kind;
  inj.seed = seed;
  inj.first_injectable = n_train;
  std::vector<LogEntry> injected = inject(log, inj);

  std::vector<LogEntry> train(injected.begin(),
                              injected.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<LogEntry> test(injected.begin() + static_cast<std::ptrdiff_t>(n_train),
                             injected.end());

  TrainConfig tc;  // training hyperparameters at their defaults, except the
  tc.lr = 1e-3;    // learning rate, rescaled to match the narrower model
  tc.seed = seed;
  ExperimentResult out;
  out.checkpoint =
      train_online(train, tc, accept_model(), accept_espec(), accept_tspec(), "synthetic");
  Checkpoint detect_ck = out.checkpoint;
  std::vector<EntryVerdict> verdicts = detect_online(test, detect_ck);

  auto score = [&](const std::vector<EntryVerdict>& vs) {
    std::vector<int> truth, predicted;
    for (std::size_t i = 0; i < test.size(); ++i) {
      int t = 0;
      if (test[i].label) {
        t = event_mode ? test[i].label->event_label.value_or(0)
                       : (test[i].label->any_positive() ? 1 : 0);
      }
      truth.push_back(t);
      int p = 0;
      if (event_mode) {
        p = vs[i].has_evidence ? vs[i].event_anomaly : 0;
      } else {
        for (const auto& l : vs[i].links) p |= l.anomaly_flag;
      }
      predicted.push_back(p);
    }
    std::vector<std::size_t> subset = build_eval_subset(truth, 50, seed);
    std::vector<int> st, sp;
    for (std::size_t i : subset) {
      st.push_back(truth[i]);
      sp.push_back(predicted[i]);
    }
    return compute_metrics(sp, st).f1;
  };
  out.f1 = score(verdicts);
  out.test_entries = test;

  if (with_baseline) {
    BaselineConfig bc;
    bc.d_obj = 32;
    bc.d_hidden = 32;
    bc.seed = seed;
    out.baseline_f1 = score(mlp_baseline_run(train, test, accept_espec(), accept_tspec(), bc));
  }
  return out;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail, bool hard = true) {
  std::cout << "criterion " << id << " " << (pass ? "PASS" : (hard ? "FAIL" : "FAIL (soft)"))
            << " - " << detail << std::endl;
  if (!pass && hard) ++failures;
}

LogEntry make_entry(std::size_t index, std::int64_t ts, std::string text,
                    std::vector<ObjectKey> objects) {
  LogEntry e;
  e.index = index;
  e.timestamp = ts;
  e.event_text = std::move(text);
  e.objects = std::move(objects);
  return e;
}

void criterion_1() {
  double start = now_sec();
  double worst = 0.0;
  ModelConfig cfg;
  cfg.d_obj = 16;
  cfg.d_hidden = 16;
  cfg.n_layers = 3;
  cfg.n_heads = 4;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    worst = std::max(worst, grad_check(cfg, seed, 80, 1e-4).max_rel_err);
  }
  double secs = now_sec() - start;
  std::ostringstream d;
  d << "gradient fidelity: max rel err " << worst << " (< 1e-3), " << secs << " s (< 30 s)";
  report(1, worst < 1e-3 && secs < 30.0, d.str());
}

void criterion_2() {
  // hand-traced 2-entry log: second entry must see 3 positives + 30 negatives
  std::vector<LogEntry> log;
  std::vector<ObjectKey> first_objs;
  for (int i = 0; i < 30; ++i) first_objs.push_back("node-" + std::to_string(i));
  log.push_back(make_entry(0, 100, "warmup burst", first_objs));
  log.push_back(make_entry(1, 200, "three object event", {"extra-a", "extra-b", "extra-c"}));

  TrainConfig tc;
  tc.epochs = 1;
  tc.rho = 10;
  ModelConfig mc;
  mc.d_obj = 8;
  mc.d_hidden = 8;
  mc.n_layers = 1;
  mc.n_heads = 1;
  TextEmbedderSpec es;
  es.dim = 16;
  TimeEncodingSpec ts;
  ts.dim = 4;
  std::vector<std::string> trace;
  train_online(log, tc, mc, es, ts, "h", nullptr, &trace);

  std::vector<std::string> expected = {
      "merge_objects +30", "sample_negatives 0 (positives 30)", "adam_step",
      "commit_event +30 edges", "merge_objects +3", "sample_negatives 30 (positives 3)",
      "adam_step", "commit_event +3 edges"};
  bool pass = trace == expected;
  std::ostringstream d;
  d << "algorithm fidelity: mutation trace ";
  if (pass) {
    d << "matches the hand-derived 8-step sequence";
  } else {
    d << "mismatch; got:";
    for (const auto& line : trace) d << " [" << line << "]";
  }
  report(2, pass, d.str());
}

void criterion_3() {
  DynamicGraph g;
  auto s0 = g.build_subgraph(make_entry(0, 1, "base", {"a", "b", "c", "d"}));
  g.merge_objects(s0);
  g.commit_entry(s0);

  // zero accepted links: no event node added
  auto s1 = g.build_subgraph(make_entry(1, 2, "all rejected", {"a", "b"}));
  g.merge_objects(s1);
  g.commit_entry(s1, std::vector<std::size_t>{});
  bool no_event = g.event_count() == 1 && !g.event_for_entry(1).has_value();

  // k accepted links: exactly k edges
  auto s2 = g.build_subgraph(make_entry(2, 3, "partial accept", {"a", "b", "c", "d"}));
  g.merge_objects(s2);
  g.commit_entry(s2, std::vector<std::size_t>{1, 3});
  bool k_edges = g.event_count() == 2 && g.edge_count() == 6 && g.has_edge(1, 1) &&
                 g.has_edge(3, 1) && !g.has_edge(0, 1) && !g.has_edge(2, 1);

  report(3, no_event && k_edges,
         "update rule: zero accepted links add no event; k accepted links add exactly k edges");
}

ExperimentResult g_c4_seed0;  // reused by criterion 7

void criterion_4_to_7() {
  double start = now_sec();
  std::vector<double> f1s, base_f1s;
  int wins = 0;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    ExperimentResult r = run_experiment(seed, InjectionKind::ObjectSwap, false, true);
    f1s.push_back(r.f1);
    base_f1s.push_back(r.baseline_f1);
    if (r.f1 >= r.baseline_f1) ++wins;
    if (seed == 0) g_c4_seed0 = std::move(r);
  }
  double mean_f1 = (f1s[0] + f1s[1] + f1s[2]) / 3.0;
  double secs = now_sec() - start;
  {
    std::ostringstream d;
    d << "object-swap detection: mean F1 " << mean_f1 << " (>= 0.90; per-seed " << f1s[0] << ", "
      << f1s[1] << ", " << f1s[2] << "), " << secs << " s (< 600 s)";
    report(4, mean_f1 >= 0.90 && secs < 600.0, d.str());
  }

  std::vector<double> ef1s;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    ef1s.push_back(
        run_experiment(seed, InjectionKind::EventSwap, true, false, 2000, 3).f1);
  }
  double mean_ef1 = (ef1s[0] + ef1s[1] + ef1s[2]) / 3.0;
  {
    std::ostringstream d;
    d << "event-swap detection: mean F1 " << mean_ef1 << " (>= 0.85; per-seed " << ef1s[0]
      << ", " << ef1s[1] << ", " << ef1s[2] << ")";
    report(5, mean_ef1 >= 0.85, d.str());
  }

  {
    double mean_base = (base_f1s[0] + base_f1s[1] + base_f1s[2]) / 3.0;
    std::ostringstream d;
    d << "baseline ordering (report-only): graph model wins " << wins
      << "/3 seeds (mean F1 " << mean_f1 << " vs MLP " << mean_base << ")";
    report(6, wins >= 2, d.str(), /*hard=*/false);
  }

  {
    ThroughputReport tp = measure_throughput(
        [&] {
          Checkpoint ck = g_c4_seed0.checkpoint;
          detect_online(g_c4_seed0.test_entries, ck);
        },
        g_c4_seed0.test_entries.size(), 3);
    std::ostringstream d;
    d << "throughput: " << tp.mean << " entries/s mean over 3 runs (>= 100, std " << tp.std_dev
      << ")";
    report(7, tp.mean >= 100.0, d.str());
  }
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_8() {
  auto dir = std::filesystem::temp_directory_path() / "gldb_accept";
  std::filesystem::create_directories(dir);
  SyntheticLogConfig gen;
  gen.n_entries = 300;
  gen.n_objects = 40;
  gen.n_communities = 4;
  gen.seed = 12;
  std::vector<LogEntry> log = generate_synthetic(gen);
  std::vector<LogEntry> train(log.begin(), log.begin() + 270);
  std::vector<LogEntry> test(log.begin() + 270, log.end());

  auto run = [&](const std::string& tag) {
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 5;
    ModelConfig mc;
    mc.d_obj = 16;
    mc.d_hidden = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    TextEmbedderSpec es;
    es.dim = 32;
    TimeEncodingSpec ts;
    ts.dim = 4;
    Checkpoint ck = train_online(train, tc, mc, es, ts, "synthetic");
    std::string ck_path = (dir / (tag + ".ckpt")).string();
    save_checkpoint(ck_path, ck);
    auto verdicts = detect_online(test, ck);
    std::string v_path = (dir / (tag + ".verdicts.jsonl")).string();
    write_verdicts_jsonl(v_path, verdicts);
    return std::make_pair(file_bytes(ck_path), file_bytes(v_path));
  };
  auto [ck1, v1] = run("run1");
  auto [ck2, v2] = run("run2");
  bool pass = !ck1.empty() && ck1 == ck2 && !v1.empty() && v1 == v2;
  report(8, pass, "determinism: identical seed/config/data give byte-identical checkpoints and "
                  "verdict streams");
}

void criterion_9() {
  Rng rng(99);
  bool pass = true;
  std::vector<int> predicted, truth;
  for (int i = 0; i < 1000; ++i) {
    predicted.push_back(static_cast<int>(rng.uniform_index(2)));
    truth.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  MetricsReport r = compute_metrics(predicted, truth);
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    tp += predicted[i] == 1 && truth[i] == 1;
    fp += predicted[i] == 1 && truth[i] == 0;
    tn += predicted[i] == 0 && truth[i] == 0;
    fn += predicted[i] == 0 && truth[i] == 1;
  }
  pass = pass && r.tp == tp && r.fp == fp && r.tn == tn && r.fn == fn;
  pass = pass && r.accuracy == static_cast<double>(tp + tn) / 1000.0;
  pass = pass && r.precision == static_cast<double>(tp) / static_cast<double>(tp + fp);
  pass = pass && r.recall == static_cast<double>(tp) / static_cast<double>(tp + fn);
  pass = pass && r.f1 == 2.0 * r.precision * r.recall / (r.precision + r.recall);

  // zero-division convention: no positive predictions -> 0 precision/recall/F1
  MetricsReport z = compute_metrics({0, 0, 0, 0}, {1, 1, 0, 0});
  pass = pass && z.precision == 0.0 && z.recall == 0.0 && z.f1 == 0.0;
  report(9, pass, "metric correctness: brute-force recount on 1,000 vectors exact; "
                  "zero-division convention reports 0");
}

void criterion_10() {
  Rng rng(2024);
  std::size_t violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    DynamicGraph g;
    std::size_t n_entries = 2 + rng.uniform_index(8);
    std::vector<LogEntry> entries;
    for (std::size_t i = 0; i < n_entries; ++i) {
      std::size_t n_obj = 1 + rng.uniform_index(4);
      std::set<ObjectKey> objs;
      while (objs.size() < n_obj) {
        objs.insert("obj-" + std::to_string(rng.uniform_index(12)));
      }
      entries.push_back(make_entry(i, static_cast<std::int64_t>(i * 10),
                                   "text-" + std::to_string(rng.uniform_index(5)),
                                   {objs.begin(), objs.end()}));
    }

    std::size_t prev_objects = 0, prev_events = 0, prev_edges = 0;
    std::size_t epochs = 1 + rng.uniform_index(3);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      for (const auto& entry : entries) {
        EntrySubgraph sub = g.build_subgraph(entry);
        g.merge_objects(sub);
        if (!sub.replay) {
          // random accepted subset half of the time, full commit otherwise
          if (rng.uniform_index(2) == 0) {
            g.commit_entry(sub);
          } else {
            std::vector<std::size_t> accepted;
            for (std::size_t p = 0; p < sub.objects.size(); ++p) {
              if (rng.uniform_index(2)) accepted.push_back(p);
            }
            g.commit_entry(sub, accepted);
          }
        }
        // snapshot monotonicity: counts never shrink
        if (g.object_count() < prev_objects || g.event_count() < prev_events ||
            g.edge_count() < prev_edges) {
          ++violations;
        }
        prev_objects = g.object_count();
        prev_events = g.event_count();
        prev_edges = g.edge_count();
      }
    }

    // event uniqueness: every committed event belongs to exactly one entry
    std::set<std::size_t> entry_ids;
    for (std::uint32_t ev = 0; ev < g.event_count(); ++ev) {
      if (!entry_ids.insert(g.event_meta(ev).entry_index).second) ++violations;
    }

    // star property: an event's edges only touch its own entry's objects
    for (std::uint32_t ev = 0; ev < g.event_count(); ++ev) {
      const LogEntry& src = entries[g.event_meta(ev).entry_index];
      std::set<ObjectKey> allowed(src.objects.begin(), src.objects.end());
      for (std::uint32_t obj : g.event_objects(ev)) {
        if (!allowed.count(g.object_key(obj))) ++violations;
      }
    }

    // snapshot round trip preserves the graph
    if (!(DynamicGraph::from_snapshot_json(g.to_snapshot_json()) == g)) ++violations;

    // non-edge sampling validity over the final view
    WindowView view = g.window_view(1 + static_cast<std::uint32_t>(rng.uniform_index(8)));
    std::size_t capacity = g.non_edge_capacity(view);
    if (capacity > 0) {
      std::size_t count = 1 + rng.uniform_index(capacity);
      auto sample = g.enumerate_non_edges(view, rng, count);
      std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
      for (const auto& [obj, ev] : sample) {
        if (g.has_edge(obj, ev)) ++violations;
        if (!seen.insert({obj, ev}).second) ++violations;
      }
      if (sample.size() != count) ++violations;
    }
  }
  std::ostringstream d;
  d << "structural invariants: " << violations << " violations over 500 random replay sequences";
  report(10, violations == 0, d.str());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4_to_7();
  criterion_8();
  criterion_9();
  criterion_10();
  std::cout << (failures == 0 ? "acceptance: all hard criteria passed"
                              : "acceptance: " + std::to_string(failures) + " hard failure(s)")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
