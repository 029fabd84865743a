#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gldb/evalkit.hpp"
#include "gldb/pipeline.hpp"

using namespace gldb;

namespace {

TextEmbedderSpec small_espec() {
  TextEmbedderSpec es;
  es.dim = 16;
  return es;
}

TimeEncodingSpec small_tspec() {
  TimeEncodingSpec ts;
  ts.dim = 4;
  return ts;
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.d_obj = 8;
  mc.d_hidden = 8;
  mc.n_layers = 2;
  mc.n_heads = 2;
  return mc;
}

TrainConfig small_train(std::uint64_t seed = 0) {
  TrainConfig tc;
  tc.epochs = 2;
  tc.window = 10;
  tc.rho = 3;
  tc.seed = seed;
  return tc;
}

std::vector<LogEntry> small_log(std::size_t n = 24, std::uint64_t seed = 0) {
  SyntheticLogConfig cfg;
  cfg.n_entries = n;
  cfg.n_objects = 12;
  cfg.n_communities = 3;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gldb_pl_" + name)).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("training replays the expected mutation sequence") {
  // 2 hand-written entries, single epoch: the trace must show, per entry,
  // object merge -> negative sampling -> one optimizer step -> commit
  std::vector<LogEntry> log(2);
  log[0].index = 0;
  log[0].timestamp = 100;
  log[0].event_text = "first event text";
  log[0].objects = {"a", "b", "c"};
  log[1].index = 1;
  log[1].timestamp = 200;
  log[1].event_text = "second event text";
  log[1].objects = {"c", "d"};

  TrainConfig tc;
  tc.epochs = 1;
  tc.rho = 10;
  tc.window = 100;
  std::vector<std::string> trace;
  Checkpoint ckpt = train_online(log, tc, small_model(), small_espec(), small_tspec(), "hash",
                                 nullptr, &trace);

  REQUIRE(trace.size() == 8);
  CHECK(trace[0] == "merge_objects +3");
  // entry 0: empty window and every object belongs to the entry -> no negatives
  CHECK(trace[1] == "sample_negatives 0 (positives 3)");
  CHECK(trace[2] == "adam_step");
  CHECK(trace[3] == "commit_event +3 edges");
  CHECK(trace[4] == "merge_objects +1");
  // entry 1: rho * |pos| = 20 wanted, but only 2 of the 4 known objects are
  // absent from the entry, so only 2 corrupted pairs exist
  CHECK(trace[5] == "sample_negatives 2 (positives 2)");
  CHECK(trace[6] == "adam_step");
  CHECK(trace[7] == "commit_event +2 edges");

  CHECK(ckpt.graph.object_count() == 4);
  CHECK(ckpt.graph.event_count() == 2);
  CHECK(ckpt.last_entry_index == 1);
}

TEST_CASE("negative quota is rho times positives when space allows") {
  auto log = small_log(12);
  TrainConfig tc = small_train();
  tc.epochs = 1;
  tc.rho = 2;
  std::vector<std::string> trace;
  train_online(log, tc, small_model(), small_espec(), small_tspec(), "h", nullptr, &trace);
  // by the later entries the non-edge space dwarfs the quota
  bool saw_full_quota = false;
  for (const auto& line : trace) {
    if (line.rfind("sample_negatives ", 0) != 0) continue;
    std::size_t n = std::stoul(line.substr(17));
    std::size_t pos = std::stoul(line.substr(line.find("positives ") + 10));
    CHECK(n <= 2 * pos);
    if (n == 2 * pos && n > 0) saw_full_quota = true;
  }
  CHECK(saw_full_quota);
}

TEST_CASE("training is deterministic in the seed") {
  auto log = small_log();
  auto e = small_espec();
  auto t = small_tspec();
  Checkpoint a = train_online(log, small_train(7), small_model(), e, t, "h");
  Checkpoint b = train_online(log, small_train(7), small_model(), e, t, "h");
  Checkpoint c = train_online(log, small_train(8), small_model(), e, t, "h");
  CHECK(a.params.checksum() == b.params.checksum());
  CHECK(a.params.checksum() != c.params.checksum());
  CHECK(a.graph == b.graph);
}

TEST_CASE("training loss stays finite and steps are counted") {
  auto log = small_log();
  TrainReport report;
  Checkpoint ckpt =
      train_online(log, small_train(), small_model(), small_espec(), small_tspec(), "h", &report);
  CHECK(report.steps == 2 * log.size());  // every entry has objects -> one step each
  REQUIRE(report.epoch_mean_loss.size() == 2);
  for (double l : report.epoch_mean_loss) {
    CHECK(std::isfinite(l));
    CHECK(l > 0.0);
  }
  CHECK(ckpt.params.all_finite());
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto log = small_log();
  Checkpoint ckpt =
      train_online(log, small_train(3), small_model(), small_espec(), small_tspec(), "schemaX");
  std::string p1 = temp_path("ck1.bin");
  save_checkpoint(p1, ckpt);

  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.params.checksum() == ckpt.params.checksum());
  CHECK(loaded.graph == ckpt.graph);
  CHECK(loaded.schema_hash == "schemaX");
  CHECK(loaded.train_config.seed == 3);
  CHECK(loaded.optimizer.step_count() == ckpt.optimizer.step_count());
  CHECK(loaded.rng.serialize() == ckpt.rng.serialize());

  // saving the loaded checkpoint reproduces the file byte for byte
  std::string p2 = temp_path("ck2.bin");
  save_checkpoint(p2, loaded);
  CHECK(read_file(p1) == read_file(p2));
  CHECK_FALSE(read_file(p1).empty());
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto log = small_log(10);
  TrainConfig tc = small_train();
  tc.epochs = 1;
  Checkpoint ckpt = train_online(log, tc, small_model(), small_espec(), small_tspec(), "h");
  std::string path = temp_path("ck_corrupt.bin");
  save_checkpoint(path, ckpt);

  std::string bytes = read_file(path);
  SUBCASE("flipped byte") {
    bytes[bytes.size() / 2] ^= 0x41;
    std::ofstream(path, std::ios::binary) << bytes;
    try {
      load_checkpoint(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == "CorruptChecksum");
      CHECK(e.code() == ErrorCode::Data);
    }
  }
  SUBCASE("truncated file") {
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 3);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(path), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(temp_path("nope.bin")), Error);
  }
}

TEST_CASE("detection freezes parameters and commits accepted links") {
  auto log = small_log(30);
  std::vector<LogEntry> train(log.begin(), log.begin() + 24);
  std::vector<LogEntry> test(log.begin() + 24, log.end());

  Checkpoint ckpt =
      train_online(train, small_train(), small_model(), small_espec(), small_tspec(), "h");
  std::string dense_before;
  for (const auto& [name, m] : ckpt.params.dense) {
    dense_before += name + std::to_string(m.sum());
  }
  std::uint32_t events_before = ckpt.graph.event_count();

  auto verdicts = detect_online(test, ckpt, 1e-3);  // tiny tau: accept everything
  REQUIRE(verdicts.size() == test.size());
  std::string dense_after;
  for (const auto& [name, m] : ckpt.params.dense) {
    dense_after += name + std::to_string(m.sum());
  }
  CHECK(dense_before == dense_after);  // learned weights untouched

  for (const auto& v : verdicts) {
    REQUIRE(v.has_evidence);
    CHECK(v.event_anomaly == 0);
    for (const auto& l : v.links) {
      CHECK(l.score > 0.0);
      CHECK(l.score < 1.0);
      CHECK(l.anomaly_flag == 0);
    }
  }
  // every entry accepted -> one event node per test entry
  CHECK(ckpt.graph.event_count() == events_before + test.size());
}

TEST_CASE("a high threshold rejects events entirely") {
  auto log = small_log(30);
  std::vector<LogEntry> train(log.begin(), log.begin() + 24);
  std::vector<LogEntry> test(log.begin() + 24, log.end());
  Checkpoint ckpt =
      train_online(train, small_train(), small_model(), small_espec(), small_tspec(), "h");
  std::uint32_t events_before = ckpt.graph.event_count();
  auto verdicts = detect_online(test, ckpt, 0.999999);
  for (const auto& v : verdicts) {
    CHECK(v.event_anomaly == 1);
    for (const auto& l : v.links) CHECK(l.anomaly_flag == 1);
  }
  CHECK(ckpt.graph.event_count() == events_before);  // nothing committed
}

TEST_CASE("zero-object entries yield no-evidence verdicts") {
  auto log = small_log(12);
  TrainConfig tc = small_train();
  tc.epochs = 1;
  Checkpoint ckpt = train_online(log, tc, small_model(), small_espec(), small_tspec(), "h");
  LogEntry empty;
  empty.index = 99;
  empty.timestamp = 1600999999;
  empty.event_text = "orphan event";
  auto verdicts = detect_online({empty}, ckpt);
  REQUIRE(verdicts.size() == 1);
  CHECK_FALSE(verdicts[0].has_evidence);
  CHECK(verdicts[0].links.empty());
}

TEST_CASE("event aggregation min vs mean") {
  auto log = small_log(20);
  TrainConfig tc = small_train();
  tc.epochs = 1;
  Checkpoint base = train_online(log, tc, small_model(), small_espec(), small_tspec(), "h");
  std::string path = temp_path("ck_agg.bin");
  save_checkpoint(path, base);

  std::vector<LogEntry> probe = small_log(24, 5);
  std::vector<LogEntry> tail(probe.begin() + 20, probe.end());

  Checkpoint mean_ck = load_checkpoint(path);
  auto mean_v = detect_online(tail, mean_ck);
  Checkpoint min_ck = load_checkpoint(path);
  min_ck.train_config.aggregation = EventAggregation::Min;
  auto min_v = detect_online(tail, min_ck);
  REQUIRE(mean_v.size() == min_v.size());
  for (std::size_t i = 0; i < mean_v.size(); ++i) {
    if (!mean_v[i].has_evidence) continue;
    double lo = 1.0, sum = 0.0;
    for (const auto& l : mean_v[i].links) {
      lo = std::min(lo, l.score);
      sum += l.score;
    }
    CHECK(mean_v[i].event_score ==
          doctest::Approx(sum / static_cast<double>(mean_v[i].links.size())));
    CHECK(min_v[i].event_score == doctest::Approx(lo));
  }
}

TEST_CASE("verdict JSONL round trips including null event fields") {
  std::vector<EntryVerdict> verdicts(2);
  verdicts[0].entry_index = 4;
  verdicts[0].has_evidence = true;
  verdicts[0].event_score = 0.75;
  verdicts[0].event_anomaly = 0;
  verdicts[0].links.push_back(LinkPrediction{"obj-a", 4, 0.9, 1, 0});
  verdicts[0].links.push_back(LinkPrediction{"obj-b", 4, 0.2, 0, 1});
  verdicts[1].entry_index = 5;  // no evidence

  std::string path = temp_path("verdicts.jsonl");
  write_verdicts_jsonl(path, verdicts);
  auto back = read_verdicts_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].entry_index == 4);
  CHECK(back[0].event_score == doctest::Approx(0.75));
  REQUIRE(back[0].links.size() == 2);
  CHECK(back[0].links[1].object == "obj-b");
  CHECK(back[0].links[1].anomaly_flag == 1);
  CHECK(back[0].links[1].predicted_label == 0);
  CHECK_FALSE(back[1].has_evidence);

  // the emitted line uses the documented field names
  std::string text = read_file(path);
  CHECK(text.find("\"n\":4") != std::string::npos);
  CHECK(text.find("\"event_score\"") != std::string::npos);
  CHECK(text.find("\"links\"") != std::string::npos);
  CHECK(text.find("\"event_anomaly\":null") != std::string::npos);
}

TEST_CASE("config validation catches bad values") {
  TrainConfig tc;
  tc.rho = 0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.tau = 1.5;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.lr = 0.0;
  CHECK_THROWS_AS(tc.validate(), Error);
  CHECK_THROWS_AS(train_online({}, TrainConfig{}, small_model(), small_espec(), small_tspec(), "h"),
                  Error);
}
