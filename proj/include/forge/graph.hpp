#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forge/io.hpp"
#include "forge/time.hpp"

namespace forge {

inline constexpr int kGraphSchemaVersion = 1;

// Points into a source document: the span that supports an entity mention
// or a relation statement.
struct ProvenanceRef {
    std::string doc_id;
    std::string section_label;
    std::size_t char_start = 0;
    std::size_t char_end = 0; // exclusive

    friend auto operator<=>(const ProvenanceRef&, const ProvenanceRef&) = default;
};

struct Entity {
    std::string entity_id; // "e000042", assigned in creation order
    std::string type_label;
    std::string name;
    std::string description;
    std::set<std::string> aliases;         // never contains `name`
    std::vector<ProvenanceRef> provenance; // non-empty, sorted, deduplicated
    Timestamp first_seen = 0;              // min over provenance document times

    // The surface used for embedding and alignment.
    std::string composed_text() const;
};

struct RelationEdge {
    std::string edge_id; // "r000007", assigned in creation order
    std::string subject_id;
    std::string object_id;
    std::string predicate; // canonical schema predicate
    std::vector<ProvenanceRef> evidence; // non-empty, sorted, deduplicated
    std::int64_t frequency = 1;          // count of supporting extractions
    Timestamp first_seen = 0;
    Timestamp last_seen = 0;
    double confidence = 0.0;
};

// A (subject, predicate, object) statement resolved to names, as handed to
// downstream consumers (evaluation context injection, recovery scoring).
struct Fact {
    std::string edge_id;
    std::string subject_id;
    std::string object_id;
    std::string subject_name;
    std::string predicate;
    std::string object_name;
    double confidence = 0.0;
};

// Mutable, append-oriented store. Entities and edges are never removed;
// updates only merge into them. Ids encode creation order, which downstream
// stages rely on for deterministic iteration.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(std::string domain_id, TimeWindow window);

    const std::string& domain_id() const { return domain_id_; }
    const TimeWindow& window() const { return window_; }

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    // Insertion returns the assigned id. Throws ContractViolation on
    // malformed input (empty name, empty provenance, unknown endpoints).
    std::string add_entity(Entity e);
    std::string add_edge(RelationEdge e);

    const Entity* find_entity(const std::string& entity_id) const;
    const RelationEdge* find_edge(const std::string& edge_id) const;
    Entity* mutable_entity(const std::string& entity_id);
    RelationEdge* mutable_edge(const std::string& edge_id);

    // Lookup by the (subject, predicate, object) key used for reinforcement.
    RelationEdge* find_edge_by_key(const std::string& subject_id, const std::string& predicate,
                                   const std::string& object_id);

    const std::vector<Entity>& entities() const { return entities_; } // id order
    const std::vector<RelationEdge>& edges() const { return edges_; } // id order

    // Latest document timestamp seen across all edge evidence; 0 if empty.
    Timestamp latest_evidence_time() const;

private:
    std::string domain_id_;
    TimeWindow window_;
    std::vector<Entity> entities_;
    std::vector<RelationEdge> edges_;
    std::map<std::string, std::size_t> entity_by_id_;
    std::map<std::string, std::size_t> edge_by_id_;
    std::map<std::string, std::size_t> edge_by_key_;

    static std::string edge_key(const std::string& s, const std::string& p, const std::string& o);
};

// Immutable time-sliced view: entities with first_seen <= t and edges with
// first_seen <= t whose endpoints survive the slice. Provenance refs are
// kept verbatim; evidence gathering filters them against document times,
// since only the corpus knows when each document arrived.
class KGSnapshot {
public:
    Timestamp as_of() const { return as_of_; }
    const std::string& domain_id() const { return domain_id_; }

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<RelationEdge>& edges() const { return edges_; }

    const Entity* entity(const std::string& entity_id) const;
    const RelationEdge* edge(const std::string& edge_id) const;

    // Edge ids incident to an entity, sorted. Unknown id -> NotFoundError.
    const std::vector<std::string>& incident_edges(const std::string& entity_id) const;
    std::size_t degree(const std::string& entity_id) const;

    // Degree value at quantile q (nearest-rank over all snapshot entities).
    std::size_t degree_quantile(double q) const;

    // Facts on edges reachable within `hops` steps of the entity, treating
    // edges as undirected; sorted by confidence descending, edge id as the
    // tie-break. hops == 0 -> empty.
    std::vector<Fact> neighborhood(const std::string& entity_id, std::size_t hops) const;

    Fact fact_for(const RelationEdge& e) const;

    friend KGSnapshot snapshot_at(const KnowledgeGraph& graph, Timestamp t);

private:
    Timestamp as_of_ = 0;
    std::string domain_id_;
    std::vector<Entity> entities_;
    std::vector<RelationEdge> edges_;
    std::map<std::string, std::size_t> entity_by_id_;
    std::map<std::string, std::size_t> edge_by_id_;
    std::map<std::string, std::vector<std::string>> incident_;
};

KGSnapshot snapshot_at(const KnowledgeGraph& graph, Timestamp t);

// Directory layout: entities.jsonl, relations.jsonl, manifest.json.
// load() verifies the schema version and referential integrity.
void persist_graph(const KnowledgeGraph& graph, const std::filesystem::path& dir);
KnowledgeGraph load_graph(const std::filesystem::path& dir);

Json entity_to_json(const Entity& e);
Entity entity_from_json(const Json& j);
Json edge_to_json(const RelationEdge& e);
RelationEdge edge_from_json(const Json& j);
Json provenance_to_json(const ProvenanceRef& p);
ProvenanceRef provenance_from_json(const Json& j);

} // namespace forge
