#include "gldb/log_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gldb/util.hpp"

namespace gldb {

using nlohmann::json;

const char* role_name(AttributeRole role) {
  switch (role) {
    case AttributeRole::Object: return "object";
    case AttributeRole::Event: return "event";
    case AttributeRole::Feature: return "feature";
  }
  return "?";
}

AttributeRole role_from_name(const std::string& name) {
  if (name == "object") return AttributeRole::Object;
  if (name == "event") return AttributeRole::Event;
  if (name == "feature") return AttributeRole::Feature;
  throw_data("SchemaInvalid", "unknown attribute role '" + name + "'");
}

const std::string& LogSchema::event_column() const {
  for (const auto& c : columns) {
    if (c.role == AttributeRole::Event) return c.name;
  }
  throw_data("SchemaInvalid", "schema has no event column");
}

std::vector<std::string> LogSchema::object_columns() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.role == AttributeRole::Object) out.push_back(c.name);
  }
  return out;
}

void LogSchema::validate() const {
  if (timestamp_column.empty()) {
    throw_data("SchemaInvalid", "timestamp_column missing or empty");
  }
  std::set<std::string> names;
  int n_event = 0, n_object = 0;
  for (const auto& c : columns) {
    if (!names.insert(c.name).second) {
      throw_data("SchemaInvalid", "duplicate column name '" + c.name + "'");
    }
    if (c.role == AttributeRole::Event) {
      ++n_event;
      if (c.name == timestamp_column) {
        throw_data("SchemaInvalid", "timestamp column cannot be the event column");
      }
    }
    if (c.role == AttributeRole::Object) ++n_object;
  }
  if (n_event != 1) {
    throw_data("SchemaInvalid", "schema must declare exactly one event column, got " +
                                    std::to_string(n_event));
  }
  if (n_object < 1) {
    throw_data("SchemaInvalid", "schema must declare at least one object column");
  }
}

std::string LogSchema::content_hash() const {
  json j;
  j["timestamp_column"] = timestamp_column;
  j["object_delimiter"] = object_delimiter;
  j["columns"] = json::array();
  for (const auto& c : columns) {
    j["columns"].push_back({{"name", c.name}, {"role", role_name(c.role)}});
  }
  return sha256_hex(j.dump());
}

bool AnomalyLabel::any_positive() const {
  if (event_label && *event_label == 1) return true;
  for (const auto& [k, v] : object_labels) {
    if (v == 1) return true;
  }
  return false;
}

LogSchema parse_schema_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw_data("SchemaInvalid", std::string("schema is not valid JSON: ") + e.what());
  }
  LogSchema schema;
  if (!j.contains("timestamp_column") || !j.contains("columns")) {
    throw_data("SchemaInvalid", "schema needs 'timestamp_column' and 'columns'");
  }
  schema.timestamp_column = j.at("timestamp_column").get<std::string>();
  schema.object_delimiter = j.value("object_delimiter", ";");
  for (const auto& c : j.at("columns")) {
    schema.columns.push_back({c.at("name").get<std::string>(),
                              role_from_name(c.at("role").get<std::string>())});
  }
  schema.validate();
  return schema;
}

LogSchema parse_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("IoError", "cannot open schema file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema_json(ss.str());
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_all_digits(const std::string& s, std::size_t from, std::size_t to) {
  if (from >= to) return false;
  for (std::size_t i = from; i < to; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  std::int64_t yoe = y - era * 400;
  std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

// RFC 4180 CSV reader over a whole stream; handles quoted fields with
// embedded delimiters, quotes, and newlines, plus CRLF line ends.
std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  int c;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  while ((c = in.get()) != EOF) {
    char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r') {
      // swallowed; row ends on the \n
    } else if (ch == '\n') {
      end_row();
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

AnomalyLabel label_from_json(const json& j) {
  AnomalyLabel label;
  if (j.contains("event") && !j.at("event").is_null()) {
    label.event_label = j.at("event").get<int>();
  }
  if (j.contains("objects")) {
    for (const auto& [k, v] : j.at("objects").items()) {
      label.object_labels[k] = v.get<int>();
    }
  }
  return label;
}

json label_to_json(const AnomalyLabel& label) {
  json j = json::object();
  if (label.event_label) j["event"] = *label.event_label;
  if (!label.object_labels.empty()) {
    json objs = json::object();
    for (const auto& [k, v] : label.object_labels) objs[k] = v;
    j["objects"] = objs;
  }
  return j;
}

LogEntry entry_from_cells(const LogSchema& schema,
                          const std::map<std::string, std::string>& cells,
                          const std::optional<AnomalyLabel>& label, std::size_t row_no) {
  LogEntry entry;
  auto ts_it = cells.find(schema.timestamp_column);
  if (ts_it == cells.end()) {
    throw_data("ParseError", "row " + std::to_string(row_no) + ": missing timestamp column '" +
                                 schema.timestamp_column + "'");
  }
  entry.timestamp = parse_timestamp(ts_it->second);
  for (const auto& col : schema.columns) {
    auto it = cells.find(col.name);
    if (it == cells.end()) {
      if (col.role == AttributeRole::Feature) continue;
      throw_data("ParseError",
                 "row " + std::to_string(row_no) + ": missing column '" + col.name + "'");
    }
    switch (col.role) {
      case AttributeRole::Event:
        entry.event_text = it->second;
        break;
      case AttributeRole::Object: {
        for (auto& key : split_object_cell(it->second, schema.object_delimiter)) {
          if (std::find(entry.objects.begin(), entry.objects.end(), key) == entry.objects.end()) {
            entry.objects.push_back(std::move(key));
          }
        }
        break;
      }
      case AttributeRole::Feature:
        entry.features[col.name] = it->second;
        break;
    }
  }
  entry.label = label;
  return entry;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) throw_data("TimestampUnparseable", "empty timestamp");
  bool neg = s[0] == '-';
  if (is_all_digits(s, neg ? 1 : 0, s.size())) {
    try {
      return std::stoll(s);
    } catch (const std::exception&) {
      throw_data("TimestampUnparseable", "integer timestamp out of range: " + s);
    }
  }
  // ISO-8601: YYYY-MM-DD[THH:MM[:SS]][Z]
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int matched = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &sec);
  if (matched < 4 && s.find(' ') != std::string::npos) {
    matched = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &sec);
  }
  if (matched < 3 || mo < 1 || mo > 12 || d < 1 || d > 31) {
    throw_data("TimestampUnparseable", "cannot parse timestamp '" + s + "'");
  }
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

std::vector<ObjectKey> split_object_cell(const std::string& cell, const std::string& delimiter) {
  std::vector<ObjectKey> out;
  if (delimiter.empty()) {
    std::string v = trim(cell);
    if (!v.empty()) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= cell.size()) {
    std::size_t next = cell.find(delimiter, pos);
    std::string piece =
        trim(next == std::string::npos ? cell.substr(pos) : cell.substr(pos, next - pos));
    if (!piece.empty()) out.push_back(piece);
    if (next == std::string::npos) break;
    pos = next + delimiter.size();
  }
  return out;
}

std::vector<LogEntry> read_log(const std::string& path, const LogSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("IoError", "cannot open log file " + path);

  std::vector<LogEntry> entries;
  if (has_suffix(path, ".csv")) {
    auto rows = read_csv(in);
    if (rows.empty()) throw_data("ParseError", "empty CSV file");
    const auto& header = rows[0];
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != header.size()) {
        throw_data("ParseError", "row " + std::to_string(r) + ": expected " +
                                     std::to_string(header.size()) + " cells, got " +
                                     std::to_string(rows[r].size()));
      }
      std::map<std::string, std::string> cells;
      for (std::size_t c = 0; c < header.size(); ++c) cells[header[c]] = rows[r][c];
      entries.push_back(entry_from_cells(schema, cells, std::nullopt, r));
    }
  } else {
    std::string line;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
      ++row_no;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw_data("ParseError", "row " + std::to_string(row_no) + ": " + e.what());
      }
      std::map<std::string, std::string> cells;
      std::optional<AnomalyLabel> label;
      for (const auto& [k, v] : j.items()) {
        if (k == "_label") {
          label = label_from_json(v);
        } else if (v.is_string()) {
          cells[k] = v.get<std::string>();
        } else {
          cells[k] = v.dump();
        }
      }
      entries.push_back(entry_from_cells(schema, cells, label, row_no));
    }
  }

  std::stable_sort(entries.begin(), entries.end(),
                   [](const LogEntry& a, const LogEntry& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].index = i;
  return entries;
}

void write_log_jsonl(const std::string& path, const std::vector<LogEntry>& entries,
                     const LogSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("IoError", "cannot write " + path);
  const std::string& event_col = schema.event_column();
  auto object_cols = schema.object_columns();
  for (const auto& entry : entries) {
    json j;
    j[schema.timestamp_column] = std::to_string(entry.timestamp);
    j[event_col] = entry.event_text;
    // All objects are written back into the first object column, joined by
    // the schema delimiter; per-column provenance is not tracked.
    std::string joined;
    for (std::size_t i = 0; i < entry.objects.size(); ++i) {
      if (i) joined += schema.object_delimiter;
      joined += entry.objects[i];
    }
    j[object_cols.front()] = joined;
    for (std::size_t i = 1; i < object_cols.size(); ++i) j[object_cols[i]] = "";
    for (const auto& [k, v] : entry.features) j[k] = v;
    if (entry.label) j["_label"] = label_to_json(*entry.label);
    out << j.dump() << "\n";
  }
}

SplitView split_train_test(const std::vector<LogEntry>& log, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw_usage("BadFraction", "train fraction must be in (0,1)");
  }
  std::size_t n_train = static_cast<std::size_t>(log.size() * train_fraction);
  if (n_train == 0 || n_train == log.size()) {
    throw_data("EmptySplit", "split leaves an empty side (N=" + std::to_string(log.size()) + ")");
  }
  SplitView view;
  view.train.assign(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(n_train));
  view.test.assign(log.begin() + static_cast<std::ptrdiff_t>(n_train), log.end());
  return view;
}

}  // namespace gldb
