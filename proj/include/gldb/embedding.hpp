#ifndef GLDB_EMBEDDING_HPP
#define GLDB_EMBEDDING_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace gldb {

enum class TextEmbedderKind { HashedNgram, Precomputed };

struct TextEmbedderSpec {
  TextEmbedderKind kind = TextEmbedderKind::HashedNgram;
  int dim = 384;
  int ngram_min = 3;
  int ngram_max = 5;
  bool normalize = true;
  std::string table_path;  // Precomputed only

  void validate() const;
};

struct TimeEncodingSpec {
  int dim = 16;                 // even, sin/cos pairs
  double base_period = 10000.0;
  std::int64_t t_ref = 0;       // timestamp of first training entry
  double scale = 86400.0;       // seconds per unit

  void validate() const;
};

// Signed feature hashing over character n-grams. Pure, platform-stable.
Eigen::VectorXd hash_embed(const std::string& text, const TextEmbedderSpec& spec);

// Loaded precomputed table, keyed by sha256 of the exact event text.
class PrecomputedTable {
 public:
  static PrecomputedTable load(const std::string& path, int expected_dim);
  const Eigen::VectorXd& lookup(const std::string& text) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, Eigen::VectorXd> table_;
  int dim_ = 0;
};

Eigen::VectorXd time_encode(std::int64_t t, const TimeEncodingSpec& spec);

// Text embedder facade over the two spec kinds.
class TextEmbedder {
 public:
  explicit TextEmbedder(TextEmbedderSpec spec);
  Eigen::VectorXd embed(const std::string& text) const;
  const TextEmbedderSpec& spec() const { return spec_; }

 private:
  TextEmbedderSpec spec_;
  std::shared_ptr<PrecomputedTable> table_;
};

// [text embedding || time encoding], length espec.dim + tspec.dim.
Eigen::VectorXd event_feature(const std::string& text, std::int64_t t,
                              const TextEmbedder& embedder, const TimeEncodingSpec& tspec);

}  // namespace gldb

#endif  // GLDB_EMBEDDING_HPP
