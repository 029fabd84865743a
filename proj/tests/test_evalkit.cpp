#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "gldb/evalkit.hpp"

using namespace gldb;

namespace {

std::vector<LogEntry> community_log(std::size_t n = 100, std::uint64_t seed = 0) {
  SyntheticLogConfig cfg;
  cfg.n_entries = n;
  cfg.n_objects = 20;
  cfg.n_communities = 4;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("synthetic generator produces a well-formed log") {
  SyntheticLogConfig cfg;
  cfg.n_entries = 50;
  cfg.n_objects = 12;
  cfg.n_communities = 3;
  cfg.seed = 1;
  auto log = generate_synthetic(cfg);
  REQUIRE(log.size() == 50);
  std::set<ObjectKey> all_objects;
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].index == i);
    if (i) CHECK(log[i].timestamp > log[i - 1].timestamp);
    CHECK_FALSE(log[i].objects.empty());
    CHECK(log[i].objects.size() <= cfg.max_objects_per_entry);
    CHECK_FALSE(log[i].event_text.empty());
    for (const auto& key : log[i].objects) {
      all_objects.insert(key);
      CHECK(key.rfind("host-", 0) == 0);
    }
    // per-entry objects are distinct
    std::set<ObjectKey> uniq(log[i].objects.begin(), log[i].objects.end());
    CHECK(uniq.size() == log[i].objects.size());
  }
  CHECK(all_objects.size() <= cfg.n_objects);
  CHECK(all_objects.size() > cfg.n_objects / 2);

  // deterministic in the seed
  auto again = generate_synthetic(cfg);
  CHECK(log == again);
  cfg.seed = 2;
  CHECK(generate_synthetic(cfg) != log);
}

TEST_CASE("synthetic entries are community-coherent") {
  auto log = community_log(200, 3);
  std::size_t pure = 0, mixed = 0;
  for (const auto& e : log) {
    std::set<char> communities;
    for (const auto& key : e.objects) communities.insert(key[5]);  // "host-<c>-..."
    if (communities.size() == 1) ++pure;
    else ++mixed;
  }
  // intra_community_prob = 0.9 keeps most entries inside one community
  CHECK(pure > mixed);
}

TEST_CASE("object-swap injection hits the quota with valid labels") {
  auto log = community_log(100, 7);
  InjectionConfig cfg;
  cfg.rate = 0.1;
  cfg.kind = InjectionKind::ObjectSwap;
  cfg.seed = 5;
  cfg.first_injectable = 50;
  auto out = inject(log, cfg);
  REQUIRE(out.size() == log.size());

  // ceil(0.1 * 50) = 5 injected entries
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i < 50) {
      CHECK(out[i] == log[i]);  // protected prefix untouched
      continue;
    }
    if (!out[i].label) {
      CHECK(out[i] == log[i]);
      continue;
    }
    ++labeled;
    CHECK(out[i].timestamp == log[i].timestamp);
    CHECK(out[i].event_text == log[i].event_text);
    CHECK(out[i].objects.size() == log[i].objects.size());
    // exactly one swapped-in object, labeled 1, absent from the original entry
    REQUIRE(out[i].label->object_labels.size() == 1);
    const auto& [swapped, flag] = *out[i].label->object_labels.begin();
    CHECK(flag == 1);
    CHECK(std::find(out[i].objects.begin(), out[i].objects.end(), swapped) != out[i].objects.end());
    CHECK(std::find(log[i].objects.begin(), log[i].objects.end(), swapped) == log[i].objects.end());
    // the replacement is drawn from strictly earlier history
    bool seen_before = false;
    for (std::size_t k = 0; k < i && !seen_before; ++k) {
      seen_before = std::find(log[k].objects.begin(), log[k].objects.end(), swapped) !=
                    log[k].objects.end();
    }
    CHECK(seen_before);
  }
  CHECK(labeled == 5);
}

TEST_CASE("event-swap injection replaces text with earlier text") {
  auto log = community_log(80, 11);
  InjectionConfig cfg;
  cfg.rate = 0.2;
  cfg.kind = InjectionKind::EventSwap;
  cfg.seed = 2;
  cfg.first_injectable = 40;
  auto out = inject(log, cfg);
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out[i].label) continue;
    ++labeled;
    CHECK(i >= 40);
    CHECK(out[i].label->event_label == 1);
    CHECK(out[i].event_text != log[i].event_text);
    CHECK(out[i].objects == log[i].objects);
    bool found_earlier = false;
    for (std::size_t k = 0; k < i && !found_earlier; ++k) {
      found_earlier = log[k].event_text == out[i].event_text;
    }
    CHECK(found_earlier);
  }
  CHECK(labeled == 8);  // ceil(0.2 * 40)
}

TEST_CASE("injection edge cases") {
  auto log = community_log(30);
  InjectionConfig cfg;
  cfg.rate = 0.0;
  CHECK(inject(log, cfg) == log);
  cfg.rate = 1.5;
  CHECK_THROWS_AS(inject(log, cfg), Error);
  // determinism
  cfg.rate = 0.1;
  cfg.seed = 9;
  CHECK(inject(log, cfg) == inject(log, cfg));
}

TEST_CASE("compute_metrics matches a brute-force recount") {
  Rng rng(17);
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
  CHECK(r.tp == tp);
  CHECK(r.fp == fp);
  CHECK(r.tn == tn);
  CHECK(r.fn == fn);
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(tp + tn) / 1000.0));
  CHECK(r.precision == doctest::Approx(static_cast<double>(tp) / static_cast<double>(tp + fp)));
  CHECK(r.recall == doctest::Approx(static_cast<double>(tp) / static_cast<double>(tp + fn)));
  CHECK(r.f1 ==
        doctest::Approx(2.0 * r.precision * r.recall / (r.precision + r.recall)));
}

TEST_CASE("metrics zero-division convention reports 0") {
  // no positive predictions: precision, recall, f1 all 0
  MetricsReport r = compute_metrics({0, 0, 0}, {1, 0, 1});
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(compute_metrics({1}, {1, 0}), Error);
  CHECK_THROWS_AS(compute_metrics({}, {}), Error);
}

TEST_CASE("eval subset takes all positives plus sampled normals") {
  std::vector<int> truth(40, 0);
  truth[3] = truth[17] = truth[39] = 1;
  auto subset = build_eval_subset(truth, 10, 4);
  CHECK(subset.size() == 13);
  CHECK(std::is_sorted(subset.begin(), subset.end()));
  std::set<std::size_t> uniq(subset.begin(), subset.end());
  CHECK(uniq.size() == subset.size());
  CHECK(uniq.count(3));
  CHECK(uniq.count(17));
  CHECK(uniq.count(39));
  CHECK(build_eval_subset(truth, 10, 4) == subset);  // deterministic
  CHECK_THROWS_AS(build_eval_subset(truth, 38, 4), Error);  // only 37 normals
}

TEST_CASE("pearson correlation against hand-computed values") {
  CHECK(pearson_correlation({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(pearson_correlation({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  // oracle by hand: devs x=(-2,-1,1,2), y=(-2,0,0,2); r = 8/sqrt(10*8)
  CHECK(pearson_correlation({1, 2, 4, 5}, {1, 3, 3, 5}) ==
        doctest::Approx(8.0 / std::sqrt(80.0)).epsilon(1e-12));
  CHECK_THROWS_AS(pearson_correlation({1, 1, 1}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(pearson_correlation({1}, {1}), Error);
}

TEST_CASE("degree-accuracy correlation skips no-evidence entries") {
  auto verdict = [](std::size_t degree, int anomaly, bool evidence = true) {
    EntryVerdict v;
    v.has_evidence = evidence;
    v.event_anomaly = anomaly;
    for (std::size_t i = 0; i < degree; ++i) v.links.push_back(LinkPrediction{});
    return v;
  };
  std::vector<EntryVerdict> verdicts = {verdict(1, 1), verdict(2, 0), verdict(3, 0),
                                        verdict(4, 0), verdict(9, 1, false)};
  std::vector<int> truth = {0, 0, 0, 0, 1};
  // degrees (1,2,3,4), correct (0,1,1,1): r = hand-computed
  double expect = pearson_correlation({1, 2, 3, 4}, {0, 1, 1, 1});
  CHECK(degree_accuracy_correlation(verdicts, truth) == doctest::Approx(expect));

  std::vector<EntryVerdict> constant = {verdict(2, 0), verdict(2, 0)};
  CHECK_THROWS_AS(degree_accuracy_correlation(constant, {0, 0}), Error);
}

TEST_CASE("throughput measurement aggregates repeated runs") {
  int calls = 0;
  ThroughputReport r = measure_throughput([&] { ++calls; }, 50, 3);
  CHECK(calls == 3);
  CHECK(r.runs.size() == 3);
  CHECK(r.mean > 0.0);
  CHECK(r.std_dev >= 0.0);
  CHECK_THROWS_AS(measure_throughput([] {}, 0), Error);
}

TEST_CASE("score histogram counts evidence entries per class") {
  std::vector<EntryVerdict> verdicts(3);
  verdicts[0].has_evidence = true;
  verdicts[0].event_score = 0.03;
  verdicts[1].has_evidence = true;
  verdicts[1].event_score = 0.97;
  verdicts[2].has_evidence = false;
  std::vector<int> truth = {1, 0, 0};
  std::string csv = score_histogram_csv(verdicts, truth, 10);
  CHECK(csv.rfind("bin_low,count,class\n", 0) == 0);
  CHECK(csv.find("0,1,anomaly") != std::string::npos);
  CHECK(csv.find("0.9,1,normal") != std::string::npos);
  // 20 data rows for 10 bins x 2 classes
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
}

TEST_CASE("MLP baseline trains deterministically and scores test entries") {
  auto log = community_log(60, 13);
  std::vector<LogEntry> train(log.begin(), log.begin() + 50);
  std::vector<LogEntry> test(log.begin() + 50, log.end());
  TextEmbedderSpec es;
  es.dim = 16;
  TimeEncodingSpec ts;
  ts.dim = 4;
  BaselineConfig cfg;
  cfg.d_obj = 8;
  cfg.d_hidden = 8;
  cfg.epochs = 2;
  cfg.rho = 3;
  auto v1 = mlp_baseline_run(train, test, es, ts, cfg);
  auto v2 = mlp_baseline_run(train, test, es, ts, cfg);
  REQUIRE(v1.size() == test.size());
  for (std::size_t i = 0; i < v1.size(); ++i) {
    REQUIRE(v1[i].has_evidence);
    CHECK(v1[i].event_score == v2[i].event_score);
    for (const auto& l : v1[i].links) {
      CHECK(l.score > 0.0);
      CHECK(l.score < 1.0);
    }
  }
}
