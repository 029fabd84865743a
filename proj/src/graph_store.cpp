#include "gldb/graph_store.hpp"

#include <algorithm>

#include <json.hpp>

namespace gldb {

using nlohmann::json;

EntrySubgraph DynamicGraph::build_subgraph(const LogEntry& entry) const {
  EntrySubgraph sub;
  sub.entry_index = entry.index;
  sub.timestamp = entry.timestamp;
  sub.event_text = entry.event_text;

  auto it = entry_to_event_.find(entry.index);
  if (it != entry_to_event_.end()) {
    sub.replay = true;
    sub.event = NodeRef{NodeKind::Event, it->second};
  } else {
    sub.event = NodeRef{NodeKind::Event, event_count()};
  }

  std::uint32_t next_new = object_count();
  for (const auto& key : entry.objects) {
    auto existing = find_object(key);
    if (existing) {
      sub.objects.push_back(NodeRef{NodeKind::Object, *existing});
      sub.is_new_object.push_back(false);
    } else {
      sub.objects.push_back(NodeRef{NodeKind::Object, next_new++});
      sub.is_new_object.push_back(true);
      sub.new_object_keys.push_back(key);
    }
  }
  return sub;
}

void DynamicGraph::merge_objects(const EntrySubgraph& sub) {
  std::size_t new_slot = 0;
  for (std::size_t i = 0; i < sub.objects.size(); ++i) {
    std::uint32_t id = sub.objects[i].id;
    if (sub.is_new_object[i]) {
      const ObjectKey& key = sub.new_object_keys.at(new_slot++);
      auto existing = find_object(key);
      if (existing) {
        if (*existing != id) {
          throw_internal("StaleSubgraph", "object '" + key + "' moved since subgraph was built");
        }
        continue;  // already merged
      }
      if (id != object_count()) {
        throw_internal("StaleSubgraph", "non-contiguous new object id " + std::to_string(id));
      }
      object_index_.emplace(key, id);
      object_keys_.push_back(key);
    } else if (id >= object_count()) {
      throw_internal("StaleSubgraph", "unknown object id " + std::to_string(id));
    }
  }
}

void DynamicGraph::commit_entry(const EntrySubgraph& sub,
                                const std::optional<std::vector<std::size_t>>& accepted) {
  if (entry_to_event_.count(sub.entry_index)) {
    throw_internal("DoubleCommit",
                   "entry " + std::to_string(sub.entry_index) + " already committed");
  }
  std::vector<std::size_t> edge_positions;
  if (accepted) {
    edge_positions = *accepted;
    if (edge_positions.empty()) return;  // event rejected entirely
  } else {
    edge_positions.resize(sub.objects.size());
    for (std::size_t i = 0; i < edge_positions.size(); ++i) edge_positions[i] = i;
  }

  std::uint32_t event_id = event_count();
  if (sub.event.id != event_id) {
    throw_internal("StaleSubgraph", "subgraph event id does not match graph head");
  }
  events_.push_back(EventMeta{sub.entry_index, sub.timestamp, sub.event_text});
  event_objects_.emplace_back();
  for (std::size_t pos : edge_positions) {
    std::uint32_t obj = sub.objects.at(pos).id;
    if (obj >= object_count()) {
      throw_internal("StaleSubgraph", "commit before merge_objects for object id " +
                                          std::to_string(obj));
    }
    if (edge_set_.insert(edge_key(obj, event_id)).second) {
      event_objects_.back().push_back(obj);
    }
  }
  entry_log_.push_back(event_id);
  entry_to_event_.emplace(sub.entry_index, event_id);
}

WindowView DynamicGraph::window_view(std::uint32_t window_length) const {
  return window_view_at(window_length, entry_log_.size());
}

WindowView DynamicGraph::window_view_at(std::uint32_t window_length,
                                        std::size_t committed_prefix) const {
  if (window_length == 0) throw_usage("BadWindow", "window length must be >= 1");
  committed_prefix = std::min(committed_prefix, entry_log_.size());
  WindowView view;
  view.window_length = window_length;
  view.num_objects = object_count();
  std::size_t begin = committed_prefix > window_length ? committed_prefix - window_length : 0;
  view.visible_events.assign(entry_log_.begin() + static_cast<std::ptrdiff_t>(begin),
                             entry_log_.begin() + static_cast<std::ptrdiff_t>(committed_prefix));
  return view;
}

std::optional<std::uint32_t> DynamicGraph::find_object(const ObjectKey& key) const {
  auto it = object_index_.find(key);
  if (it == object_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> DynamicGraph::event_for_entry(std::size_t entry_index) const {
  auto it = entry_to_event_.find(entry_index);
  if (it == entry_to_event_.end()) return std::nullopt;
  return it->second;
}

std::size_t DynamicGraph::non_edge_capacity(const WindowView& view) const {
  std::size_t space = static_cast<std::size_t>(view.num_objects) * view.visible_events.size();
  std::size_t edges_in_view = 0;
  for (std::uint32_t ev : view.visible_events) edges_in_view += event_objects_.at(ev).size();
  return space - edges_in_view;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> DynamicGraph::enumerate_non_edges(
    const WindowView& view, Rng& rng, std::size_t count) const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (count == 0) return out;
  std::size_t capacity = non_edge_capacity(view);
  if (capacity < count) {
    throw_data("InsufficientNegatives", "requested " + std::to_string(count) + " non-edges, only " +
                                            std::to_string(capacity) + " exist");
  }

  // Rejection sampling while the space is sparse; exhaustive enumeration with
  // a partial Fisher-Yates draw once rejection becomes unlikely to finish.
  if (count * 4 <= capacity) {
    std::unordered_set<std::uint64_t> seen;
    std::size_t attempts = 0;
    std::size_t cap = 20 * count + 100;
    while (out.size() < count && attempts < cap) {
      ++attempts;
      std::uint32_t obj = static_cast<std::uint32_t>(rng.uniform_index(view.num_objects));
      std::uint32_t ev =
          view.visible_events[rng.uniform_index(view.visible_events.size())];
      std::uint64_t key = edge_key(obj, ev);
      if (edge_set_.count(key) || !seen.insert(key).second) continue;
      out.emplace_back(obj, ev);
    }
    if (out.size() == count) return out;
    out.clear();
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
  all.reserve(capacity);
  for (std::uint32_t ev : view.visible_events) {
    for (std::uint32_t obj = 0; obj < view.num_objects; ++obj) {
      if (!edge_set_.count(edge_key(obj, ev))) all.emplace_back(obj, ev);
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.uniform_index(all.size() - i);
    std::swap(all[i], all[j]);
    out.push_back(all[i]);
  }
  return out;
}

std::string DynamicGraph::to_snapshot_json() const {
  json j;
  j["version"] = 1;
  json objects = json::array();
  for (std::uint32_t id = 0; id < object_count(); ++id) {
    objects.push_back({{"key", object_keys_[id]}, {"id", id}});
  }
  j["objects"] = std::move(objects);
  json events = json::array();
  json edges = json::array();
  for (std::uint32_t id = 0; id < event_count(); ++id) {
    const EventMeta& meta = events_[id];
    events.push_back({{"id", id},
                      {"entry_index", meta.entry_index},
                      {"timestamp", meta.timestamp},
                      {"text", meta.text}});
    for (std::uint32_t obj : event_objects_[id]) {
      edges.push_back({obj, id, meta.timestamp});
    }
  }
  j["events"] = std::move(events);
  j["edges"] = std::move(edges);
  return j.dump();
}

DynamicGraph DynamicGraph::from_snapshot_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw_data("ParseError", std::string("bad snapshot JSON: ") + e.what());
  }
  if (j.value("version", 0) != 1) {
    throw_data("VersionUnsupported", "snapshot version must be 1");
  }
  DynamicGraph g;
  for (const auto& o : j.at("objects")) {
    std::uint32_t id = o.at("id").get<std::uint32_t>();
    std::string key = o.at("key").get<std::string>();
    if (id != g.object_count()) throw_data("ParseError", "snapshot object ids not dense");
    g.object_index_.emplace(key, id);
    g.object_keys_.push_back(std::move(key));
  }
  for (const auto& e : j.at("events")) {
    std::uint32_t id = e.at("id").get<std::uint32_t>();
    if (id != g.event_count()) throw_data("ParseError", "snapshot event ids not dense");
    g.events_.push_back(EventMeta{e.at("entry_index").get<std::size_t>(),
                                  e.at("timestamp").get<std::int64_t>(),
                                  e.at("text").get<std::string>()});
    g.event_objects_.emplace_back();
    g.entry_log_.push_back(id);
    g.entry_to_event_.emplace(g.events_.back().entry_index, id);
  }
  for (const auto& edge : j.at("edges")) {
    std::uint32_t obj = edge.at(0).get<std::uint32_t>();
    std::uint32_t ev = edge.at(1).get<std::uint32_t>();
    if (obj >= g.object_count() || ev >= g.event_count()) {
      throw_data("ParseError", "snapshot edge references unknown node");
    }
    if (g.edge_set_.insert(edge_key(obj, ev)).second) {
      g.event_objects_[ev].push_back(obj);
    }
  }
  return g;
}

bool DynamicGraph::operator==(const DynamicGraph& other) const {
  return to_snapshot_json() == other.to_snapshot_json();
}

}  // namespace gldb
