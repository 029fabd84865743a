#ifndef GLDB_LOG_MODEL_HPP
#define GLDB_LOG_MODEL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gldb {

enum class AttributeRole { Object, Event, Feature };

const char* role_name(AttributeRole role);
AttributeRole role_from_name(const std::string& name);

struct LogSchema {
  struct Column {
    std::string name;
    AttributeRole role;
  };
  std::vector<Column> columns;
  std::string timestamp_column;
  std::string object_delimiter;

  const std::string& event_column() const;
  std::vector<std::string> object_columns() const;
  void validate() const;

  // Stable content hash used to guard checkpoint/schema compatibility.
  std::string content_hash() const;
};

// One object identifier, normalized (trimmed, case preserved).
using ObjectKey = std::string;

struct AnomalyLabel {
  std::optional<int> event_label;                 // 0/1, 1 = abnormal event
  std::map<ObjectKey, int> object_labels;         // 0/1 per object

  bool any_positive() const;
  bool operator==(const AnomalyLabel&) const = default;
};

struct LogEntry {
  std::size_t index = 0;
  std::int64_t timestamp = 0;
  std::string event_text;
  std::vector<ObjectKey> objects;                 // deduped, order preserving
  std::map<std::string, std::string> features;
  std::optional<AnomalyLabel> label;

  bool operator==(const LogEntry&) const = default;
};

LogSchema parse_schema(const std::string& path);
LogSchema parse_schema_json(const std::string& json_text);

// Reads CSV (RFC 4180, header row) or JSONL depending on extension/content,
// sorts stably by timestamp, splits multi-valued object cells, dedupes
// objects per entry and assigns indices 0..N-1 in sorted order.
std::vector<LogEntry> read_log(const std::string& path, const LogSchema& schema);

void write_log_jsonl(const std::string& path, const std::vector<LogEntry>& entries,
                     const LogSchema& schema);

struct SplitView {
  std::vector<LogEntry> train;
  std::vector<LogEntry> test;
};

SplitView split_train_test(const std::vector<LogEntry>& log, double train_fraction);

std::int64_t parse_timestamp(const std::string& raw);

std::vector<ObjectKey> split_object_cell(const std::string& cell, const std::string& delimiter);

}  // namespace gldb

#endif  // GLDB_LOG_MODEL_HPP
