#include "forge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "forge/errors.hpp"

namespace forge {
namespace {

std::string sequence_id(const char* prefix, std::size_t n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, n);
    return std::string(buf);
}

void sort_dedup(std::vector<ProvenanceRef>& refs) {
    std::sort(refs.begin(), refs.end());
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
}

} // namespace

std::string Entity::composed_text() const {
    return type_label + " | " + name + " | " + description;
}

KnowledgeGraph::KnowledgeGraph(std::string domain_id, TimeWindow window)
    : domain_id_(std::move(domain_id)), window_(window) {}

std::string KnowledgeGraph::edge_key(const std::string& s, const std::string& p,
                                     const std::string& o) {
    return s + "\x1f" + p + "\x1f" + o;
}

std::string KnowledgeGraph::add_entity(Entity e) {
    if (e.name.empty()) throw ContractViolation("entity needs a non-empty name");
    if (e.type_label.empty()) throw ContractViolation("entity needs a type label");
    if (e.provenance.empty()) throw ContractViolation("entity needs provenance");
    e.aliases.erase(e.name);
    sort_dedup(e.provenance);
    e.entity_id = sequence_id("e", entities_.size());
    entity_by_id_[e.entity_id] = entities_.size();
    entities_.push_back(std::move(e));
    return entities_.back().entity_id;
}

std::string KnowledgeGraph::add_edge(RelationEdge e) {
    if (e.predicate.empty()) throw ContractViolation("edge needs a predicate");
    if (e.evidence.empty()) throw ContractViolation("edge needs evidence");
    if (!find_entity(e.subject_id) || !find_entity(e.object_id)) {
        throw ContractViolation("edge endpoints must exist: " + e.subject_id + " -> " +
                                e.object_id);
    }
    if (e.first_seen > e.last_seen) throw ContractViolation("edge first_seen after last_seen");
    const std::string key = edge_key(e.subject_id, e.predicate, e.object_id);
    if (edge_by_key_.count(key)) {
        throw ContractViolation("edge already exists for key " + e.subject_id + " " +
                                e.predicate + " " + e.object_id);
    }
    sort_dedup(e.evidence);
    e.edge_id = sequence_id("r", edges_.size());
    edge_by_id_[e.edge_id] = edges_.size();
    edge_by_key_[key] = edges_.size();
    edges_.push_back(std::move(e));
    return edges_.back().edge_id;
}

const Entity* KnowledgeGraph::find_entity(const std::string& entity_id) const {
    const auto it = entity_by_id_.find(entity_id);
    return it == entity_by_id_.end() ? nullptr : &entities_[it->second];
}

const RelationEdge* KnowledgeGraph::find_edge(const std::string& edge_id) const {
    const auto it = edge_by_id_.find(edge_id);
    return it == edge_by_id_.end() ? nullptr : &edges_[it->second];
}

Entity* KnowledgeGraph::mutable_entity(const std::string& entity_id) {
    const auto it = entity_by_id_.find(entity_id);
    return it == entity_by_id_.end() ? nullptr : &entities_[it->second];
}

RelationEdge* KnowledgeGraph::mutable_edge(const std::string& edge_id) {
    const auto it = edge_by_id_.find(edge_id);
    return it == edge_by_id_.end() ? nullptr : &edges_[it->second];
}

RelationEdge* KnowledgeGraph::find_edge_by_key(const std::string& subject_id,
                                               const std::string& predicate,
                                               const std::string& object_id) {
    const auto it = edge_by_key_.find(edge_key(subject_id, predicate, object_id));
    return it == edge_by_key_.end() ? nullptr : &edges_[it->second];
}

Timestamp KnowledgeGraph::latest_evidence_time() const {
    Timestamp latest = 0;
    for (const auto& e : edges_) latest = std::max(latest, e.last_seen);
    for (const auto& e : entities_) latest = std::max(latest, e.first_seen);
    return latest;
}

// --- snapshot ---------------------------------------------------------------

KGSnapshot snapshot_at(const KnowledgeGraph& graph, Timestamp t) {
    KGSnapshot snap;
    snap.as_of_ = t;
    snap.domain_id_ = graph.domain_id();
    for (const auto& e : graph.entities()) {
        if (e.first_seen > t) continue;
        snap.entity_by_id_[e.entity_id] = snap.entities_.size();
        snap.entities_.push_back(e);
        snap.incident_[e.entity_id]; // ensure the key exists
    }
    for (const auto& e : graph.edges()) {
        if (e.first_seen > t) continue;
        if (!snap.entity_by_id_.count(e.subject_id) || !snap.entity_by_id_.count(e.object_id)) {
            continue;
        }
        snap.edge_by_id_[e.edge_id] = snap.edges_.size();
        snap.edges_.push_back(e);
        snap.incident_[e.subject_id].push_back(e.edge_id);
        if (e.object_id != e.subject_id) snap.incident_[e.object_id].push_back(e.edge_id);
    }
    for (auto& [id, edges] : snap.incident_) std::sort(edges.begin(), edges.end());
    return snap;
}

const Entity* KGSnapshot::entity(const std::string& entity_id) const {
    const auto it = entity_by_id_.find(entity_id);
    return it == entity_by_id_.end() ? nullptr : &entities_[it->second];
}

const RelationEdge* KGSnapshot::edge(const std::string& edge_id) const {
    const auto it = edge_by_id_.find(edge_id);
    return it == edge_by_id_.end() ? nullptr : &edges_[it->second];
}

const std::vector<std::string>& KGSnapshot::incident_edges(const std::string& entity_id) const {
    const auto it = incident_.find(entity_id);
    if (it == incident_.end()) {
        throw NotFoundError("entity not in snapshot: " + entity_id);
    }
    return it->second;
}

std::size_t KGSnapshot::degree(const std::string& entity_id) const {
    return incident_edges(entity_id).size();
}

std::size_t KGSnapshot::degree_quantile(double q) const {
    if (q < 0.0 || q > 1.0) throw ContractViolation("quantile must be in [0, 1]");
    if (entities_.empty()) return 0;
    std::vector<std::size_t> degrees;
    degrees.reserve(entities_.size());
    for (const auto& e : entities_) degrees.push_back(degree(e.entity_id));
    std::sort(degrees.begin(), degrees.end());
    // Nearest-rank: smallest index i with (i+1)/n >= q.
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(degrees.size())));
    if (rank > 0) --rank;
    if (rank >= degrees.size()) rank = degrees.size() - 1;
    return degrees[rank];
}

Fact KGSnapshot::fact_for(const RelationEdge& e) const {
    const Entity* s = entity(e.subject_id);
    const Entity* o = entity(e.object_id);
    if (!s || !o) throw DataError("edge " + e.edge_id + " references entities outside snapshot");
    Fact f;
    f.edge_id = e.edge_id;
    f.subject_id = e.subject_id;
    f.object_id = e.object_id;
    f.subject_name = s->name;
    f.predicate = e.predicate;
    f.object_name = o->name;
    f.confidence = e.confidence;
    return f;
}

std::vector<Fact> KGSnapshot::neighborhood(const std::string& entity_id, std::size_t hops) const {
    if (!entity(entity_id)) throw NotFoundError("entity not in snapshot: " + entity_id);
    std::vector<Fact> facts;
    if (hops == 0) return facts;

    // BFS distances; an edge belongs to the h-hop neighborhood when its
    // nearer endpoint is within h-1 steps.
    std::map<std::string, std::size_t> dist;
    std::deque<std::string> queue;
    dist[entity_id] = 0;
    queue.push_back(entity_id);
    std::set<std::string> collected;
    while (!queue.empty()) {
        const std::string cur = queue.front();
        queue.pop_front();
        const std::size_t d = dist[cur];
        if (d >= hops) continue;
        for (const auto& eid : incident_edges(cur)) {
            const RelationEdge* e = edge(eid);
            collected.insert(eid);
            const std::string& other = e->subject_id == cur ? e->object_id : e->subject_id;
            if (!dist.count(other)) {
                dist[other] = d + 1;
                queue.push_back(other);
            }
        }
    }
    for (const auto& eid : collected) facts.push_back(fact_for(*edge(eid)));
    std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.edge_id < b.edge_id;
    });
    return facts;
}

// --- serialization ----------------------------------------------------------

Json provenance_to_json(const ProvenanceRef& p) {
    return {{"doc_id", p.doc_id},
            {"section_label", p.section_label},
            {"char_start", p.char_start},
            {"char_end", p.char_end}};
}

ProvenanceRef provenance_from_json(const Json& j) {
    ProvenanceRef p;
    try {
        p.doc_id = j.at("doc_id").get<std::string>();
        p.section_label = j.at("section_label").get<std::string>();
        p.char_start = j.at("char_start").get<std::size_t>();
        p.char_end = j.at("char_end").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad provenance ref: ") + e.what());
    }
    return p;
}

Json entity_to_json(const Entity& e) {
    Json prov = Json::array();
    for (const auto& p : e.provenance) prov.push_back(provenance_to_json(p));
    return {{"entity_id", e.entity_id},
            {"type", e.type_label},
            {"name", e.name},
            {"description", e.description},
            {"aliases", e.aliases},
            {"provenance", prov},
            {"first_seen", format_rfc3339(e.first_seen)}};
}

Entity entity_from_json(const Json& j) {
    Entity e;
    try {
        e.entity_id = j.at("entity_id").get<std::string>();
        e.type_label = j.at("type").get<std::string>();
        e.name = j.at("name").get<std::string>();
        e.description = j.value("description", "");
        e.aliases = j.value("aliases", std::set<std::string>{});
        for (const auto& p : j.at("provenance")) e.provenance.push_back(provenance_from_json(p));
        e.first_seen = parse_rfc3339(j.at("first_seen").get<std::string>());
    } catch (const Json::exception& ex) {
        throw DataError(std::string("bad entity record: ") + ex.what());
    }
    if (e.provenance.empty()) throw DataError("entity " + e.entity_id + " has no provenance");
    return e;
}

Json edge_to_json(const RelationEdge& e) {
    Json ev = Json::array();
    for (const auto& p : e.evidence) ev.push_back(provenance_to_json(p));
    return {{"edge_id", e.edge_id},
            {"subject_id", e.subject_id},
            {"object_id", e.object_id},
            {"predicate", e.predicate},
            {"evidence", ev},
            {"frequency", e.frequency},
            {"first_seen", format_rfc3339(e.first_seen)},
            {"last_seen", format_rfc3339(e.last_seen)},
            {"confidence", e.confidence}};
}

RelationEdge edge_from_json(const Json& j) {
    RelationEdge e;
    try {
        e.edge_id = j.at("edge_id").get<std::string>();
        e.subject_id = j.at("subject_id").get<std::string>();
        e.object_id = j.at("object_id").get<std::string>();
        e.predicate = j.at("predicate").get<std::string>();
        for (const auto& p : j.at("evidence")) e.evidence.push_back(provenance_from_json(p));
        e.frequency = j.at("frequency").get<std::int64_t>();
        e.first_seen = parse_rfc3339(j.at("first_seen").get<std::string>());
        e.last_seen = parse_rfc3339(j.at("last_seen").get<std::string>());
        e.confidence = j.at("confidence").get<double>();
    } catch (const Json::exception& ex) {
        throw DataError(std::string("bad relation record: ") + ex.what());
    }
    if (e.evidence.empty()) throw DataError("edge " + e.edge_id + " has no evidence");
    if (e.frequency < 1) throw DataError("edge " + e.edge_id + " has frequency < 1");
    return e;
}

void persist_graph(const KnowledgeGraph& graph, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<Json> entity_rows;
    for (const auto& e : graph.entities()) entity_rows.push_back(entity_to_json(e));
    write_jsonl(dir / "entities.jsonl", entity_rows);

    std::vector<Json> edge_rows;
    for (const auto& e : graph.edges()) edge_rows.push_back(edge_to_json(e));
    write_jsonl(dir / "relations.jsonl", edge_rows);

    write_json_file(dir / "manifest.json",
                    {{"schema_version", kGraphSchemaVersion},
                     {"domain_id", graph.domain_id()},
                     {"window_start", format_rfc3339(graph.window().start)},
                     {"window_end", format_rfc3339(graph.window().end)},
                     {"entity_count", graph.entity_count()},
                     {"edge_count", graph.edge_count()}});
}

KnowledgeGraph load_graph(const std::filesystem::path& dir) {
    const Json manifest = read_json_file(dir / "manifest.json");
    const int version = manifest.value("schema_version", -1);
    if (version != kGraphSchemaVersion) {
        throw DataError("graph store at " + dir.string() + " has schema_version " +
                        std::to_string(version) + ", expected " +
                        std::to_string(kGraphSchemaVersion));
    }
    TimeWindow window;
    window.start = parse_rfc3339(manifest.at("window_start").get<std::string>());
    window.end = parse_rfc3339(manifest.at("window_end").get<std::string>());
    KnowledgeGraph graph(manifest.at("domain_id").get<std::string>(), window);

    std::size_t lineno = 0;
    for (const auto& row : read_jsonl(dir / "entities.jsonl")) {
        ++lineno;
        Entity e;
        try {
            e = entity_from_json(row);
        } catch (const DataError& ex) {
            throw DataError("entities.jsonl line " + std::to_string(lineno) + ": " + ex.what());
        }
        const std::string expected = e.entity_id;
        const std::string assigned = graph.add_entity(std::move(e));
        if (assigned != expected) {
            throw DataError("entities.jsonl line " + std::to_string(lineno) +
                            ": ids out of sequence (" + expected + " vs " + assigned + ")");
        }
    }
    lineno = 0;
    for (const auto& row : read_jsonl(dir / "relations.jsonl")) {
        ++lineno;
        RelationEdge e;
        try {
            e = edge_from_json(row);
        } catch (const DataError& ex) {
            throw DataError("relations.jsonl line " + std::to_string(lineno) + ": " + ex.what());
        }
        if (!graph.find_entity(e.subject_id) || !graph.find_entity(e.object_id)) {
            throw DataError("relations.jsonl line " + std::to_string(lineno) + ": edge " +
                            e.edge_id + " references unknown entities");
        }
        const std::string expected = e.edge_id;
        const std::string assigned = graph.add_edge(std::move(e));
        if (assigned != expected) {
            throw DataError("relations.jsonl line " + std::to_string(lineno) +
                            ": ids out of sequence (" + expected + " vs " + assigned + ")");
        }
    }
    return graph;
}

} // namespace forge
