#include "gldb/embedding.hpp"

#include <fstream>
#include <memory>

#include <json.hpp>

#include "gldb/util.hpp"

namespace gldb {

using nlohmann::json;

void TextEmbedderSpec::validate() const {
  if (dim < 8) throw_usage("BadSpec", "text embedding dim must be >= 8");
  if (ngram_min < 1 || ngram_min > ngram_max) {
    throw_usage("BadSpec", "n-gram range must satisfy 1 <= min <= max");
  }
  if (kind == TextEmbedderKind::Precomputed && table_path.empty()) {
    throw_usage("BadSpec", "precomputed embedder needs a table path");
  }
}

void TimeEncodingSpec::validate() const {
  if (dim <= 0 || dim % 2 != 0) throw_usage("BadSpec", "time encoding dim must be positive even");
  if (!(base_period > 0.0) || !(scale > 0.0)) {
    throw_usage("BadSpec", "time encoding base_period and scale must be positive");
  }
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x00000100000001b3ULL;

std::uint64_t fnv1a64(const char* data, std::size_t len, std::uint64_t seed) {
  std::uint64_t h = kFnvOffset ^ seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

Eigen::VectorXd hash_embed(const std::string& text, const TextEmbedderSpec& spec) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.dim);
  for (int n = spec.ngram_min; n <= spec.ngram_max; ++n) {
    if (text.size() < static_cast<std::size_t>(n)) continue;
    // length-dependent seed so equal byte windows of different n stay distinct
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(n);
    for (std::size_t i = 0; i + n <= text.size(); ++i) {
      std::uint64_t h = fnv1a64(text.data() + i, static_cast<std::size_t>(n), seed);
      int bucket = static_cast<int>((h >> 1) % static_cast<std::uint64_t>(spec.dim));
      double sign = (h & 1) ? 1.0 : -1.0;
      v[bucket] += sign;
    }
  }
  if (spec.normalize) {
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
  }
  return v;
}

PrecomputedTable PrecomputedTable::load(const std::string& path, int expected_dim) {
  std::ifstream in(path);
  if (!in) throw_data("IoError", "cannot open embedding table " + path);
  PrecomputedTable table;
  table.dim_ = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw_data("ParseError", "embedding table line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto& vec = j.at("vec");
    if (static_cast<int>(vec.size()) != expected_dim) {
      throw_data("DimensionMismatch", "embedding table line " + std::to_string(line_no) +
                                          ": got dim " + std::to_string(vec.size()) +
                                          ", expected " + std::to_string(expected_dim));
    }
    Eigen::VectorXd v(expected_dim);
    for (int i = 0; i < expected_dim; ++i) v[i] = vec.at(i).get<double>();
    table.table_[j.at("key").get<std::string>()] = std::move(v);
  }
  return table;
}

const Eigen::VectorXd& PrecomputedTable::lookup(const std::string& text) const {
  std::string key = sha256_hex(text);
  auto it = table_.find(key);
  if (it == table_.end()) {
    throw_data("MissingEmbedding", "no precomputed embedding for key " + key);
  }
  return it->second;
}

Eigen::VectorXd time_encode(std::int64_t t, const TimeEncodingSpec& spec) {
  Eigen::VectorXd v(spec.dim);
  double u = static_cast<double>(t - spec.t_ref) / spec.scale;
  for (int i = 0; i < spec.dim / 2; ++i) {
    double freq = u / std::pow(spec.base_period, 2.0 * i / spec.dim);
    v[2 * i] = std::sin(freq);
    v[2 * i + 1] = std::cos(freq);
  }
  return v;
}

TextEmbedder::TextEmbedder(TextEmbedderSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == TextEmbedderKind::Precomputed) {
    table_ = std::make_shared<PrecomputedTable>(
        PrecomputedTable::load(spec_.table_path, spec_.dim));
  }
}

Eigen::VectorXd TextEmbedder::embed(const std::string& text) const {
  if (spec_.kind == TextEmbedderKind::HashedNgram) return hash_embed(text, spec_);
  return table_->lookup(text);
}

Eigen::VectorXd event_feature(const std::string& text, std::int64_t t,
                              const TextEmbedder& embedder, const TimeEncodingSpec& tspec) {
  Eigen::VectorXd out(embedder.spec().dim + tspec.dim);
  out.head(embedder.spec().dim) = embedder.embed(text);
  out.tail(tspec.dim) = time_encode(t, tspec);
  return out;
}

}  // namespace gldb
