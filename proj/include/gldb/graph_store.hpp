#ifndef GLDB_GRAPH_STORE_HPP
#define GLDB_GRAPH_STORE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gldb/log_model.hpp"
#include "gldb/util.hpp"

namespace gldb {

enum class NodeKind : std::uint8_t { Object, Event };

struct NodeRef {
  NodeKind kind;
  std::uint32_t id;

  bool operator==(const NodeRef&) const = default;
};

struct EntrySubgraph {
  std::size_t entry_index = 0;
  NodeRef event{NodeKind::Event, 0};
  std::vector<NodeRef> objects;
  std::vector<bool> is_new_object;                // parallel to objects
  std::vector<ObjectKey> new_object_keys;         // keys for is_new_object slots, in order
  std::int64_t timestamp = 0;
  std::string event_text;
  bool replay = false;                            // entry already committed (epoch >= 2)
};

struct EventMeta {
  std::size_t entry_index;
  std::int64_t timestamp;
  std::string text;
};

struct WindowView {
  std::uint32_t window_length = 0;
  std::vector<std::uint32_t> visible_events;      // event ids, oldest first
  std::uint32_t num_objects = 0;                  // all object nodes are visible
};

// The evolving heterogeneous graph: deduped object nodes, unique event nodes,
// timestamped object-event edges. Nodes and edges only grow.
class DynamicGraph {
 public:
  EntrySubgraph build_subgraph(const LogEntry& entry) const;

  // Phase 1 of the two-phase insert: register new object nodes only.
  void merge_objects(const EntrySubgraph& sub);

  // Phase 2: insert the event node and its edges. In detection mode pass the
  // subset of accepted edge positions (indices into sub.objects); the event
  // is inserted only when at least one edge is accepted.
  void commit_entry(const EntrySubgraph& sub,
                    const std::optional<std::vector<std::size_t>>& accepted = std::nullopt);

  WindowView window_view(std::uint32_t window_length) const;
  // View as of a prefix of the commit log; used when replaying epochs.
  WindowView window_view_at(std::uint32_t window_length, std::size_t committed_prefix) const;

  std::uint32_t object_count() const { return static_cast<std::uint32_t>(object_keys_.size()); }
  std::uint32_t event_count() const { return static_cast<std::uint32_t>(events_.size()); }
  std::size_t committed_entries() const { return entry_log_.size(); }
  std::size_t edge_count() const { return edge_set_.size(); }

  std::optional<std::uint32_t> find_object(const ObjectKey& key) const;
  const ObjectKey& object_key(std::uint32_t id) const { return object_keys_.at(id); }
  const EventMeta& event_meta(std::uint32_t id) const { return events_.at(id); }
  const std::vector<std::uint32_t>& event_objects(std::uint32_t event_id) const {
    return event_objects_.at(event_id);
  }
  std::optional<std::uint32_t> event_for_entry(std::size_t entry_index) const;
  bool has_edge(std::uint32_t object_id, std::uint32_t event_id) const {
    return edge_set_.count(edge_key(object_id, event_id)) != 0;
  }

  // Uniformly samples `count` distinct absent (object, event) pairs over the
  // view's pair space. Throws InsufficientNegatives when the space is too small.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> enumerate_non_edges(
      const WindowView& view, Rng& rng, std::size_t count) const;

  std::size_t non_edge_capacity(const WindowView& view) const;

  std::string to_snapshot_json() const;
  static DynamicGraph from_snapshot_json(const std::string& text);

  bool operator==(const DynamicGraph& other) const;

 private:
  static std::uint64_t edge_key(std::uint32_t object_id, std::uint32_t event_id) {
    return (static_cast<std::uint64_t>(object_id) << 32) | event_id;
  }

  std::unordered_map<ObjectKey, std::uint32_t> object_index_;
  std::vector<ObjectKey> object_keys_;
  std::vector<EventMeta> events_;
  std::vector<std::vector<std::uint32_t>> event_objects_;   // event id -> object ids
  std::unordered_set<std::uint64_t> edge_set_;
  std::vector<std::uint32_t> entry_log_;                    // committed event ids in order
  std::unordered_map<std::size_t, std::uint32_t> entry_to_event_;
};

}  // namespace gldb

#endif  // GLDB_GRAPH_STORE_HPP
