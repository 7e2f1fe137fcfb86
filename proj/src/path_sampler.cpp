#include "forge/path_sampler.hpp"

#include <algorithm>

#include "forge/errors.hpp"

namespace forge {
namespace {

void append_unique(std::vector<ProvenanceRef>& out, std::set<ProvenanceRef>& seen,
                   const std::vector<ProvenanceRef>& refs) {
    for (const auto& r : refs) {
        if (seen.insert(r).second) out.push_back(r);
    }
}

} // namespace

std::string hop_direction_name(HopDirection d) {
    return d == HopDirection::Forward ? "forward" : "inverse";
}

HopDirection hop_direction_from(const std::string& name) {
    if (name == "forward") return HopDirection::Forward;
    if (name == "inverse") return HopDirection::Inverse;
    throw DataError("unknown hop direction: " + name);
}

std::optional<ReasoningPath> sample_path(const KGSnapshot& snapshot,
                                         const SamplingPolicy& policy, Rng& rng) {
    if (snapshot.entity_count() == 0) throw ContractViolation("cannot sample from an empty snapshot");
    if (policy.k_min < 1) throw ContractViolation("k_min must be >= 1");
    if (policy.k_max < policy.k_min) throw ContractViolation("k_max must be >= k_min");
    if (policy.degree_percentile <= 0.0 || policy.degree_percentile >= 1.0) {
        throw ContractViolation("degree_percentile must be in (0, 1)");
    }
    if (policy.max_attempts < 1) throw ContractViolation("max_attempts must be >= 1");

    // Start candidates: connected entities, in id order for determinism.
    std::vector<const Entity*> starts;
    for (const auto& e : snapshot.entities()) {
        if (snapshot.degree(e.entity_id) >= 1) starts.push_back(&e);
    }
    if (starts.empty()) return std::nullopt;

    const std::size_t degree_floor =
        policy.bias == PathBias::HighDegree ? snapshot.degree_quantile(policy.degree_percentile)
                                            : 0;

    for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
        const int k =
            policy.k_min +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(policy.k_max - policy.k_min + 1)));

        ReasoningPath path;
        path.as_of = snapshot.as_of();
        path.policy_name = policy.bias == PathBias::HighDegree ? "high_degree" : "uniform";

        const Entity* start = starts[rng.below(starts.size())];
        path.node_ids.push_back(start->entity_id);
        std::set<std::string> visited = {start->entity_id};

        bool dead_end = false;
        for (int hop = 0; hop < k; ++hop) {
            const std::string& cur = path.node_ids.back();
            // Candidate steps: incident edges whose far endpoint is new.
            std::vector<std::pair<std::string, bool>> options; // (edge_id, forward?)
            for (const auto& eid : snapshot.incident_edges(cur)) {
                const RelationEdge* e = snapshot.edge(eid);
                const bool forward = e->subject_id == cur;
                const std::string& far = forward ? e->object_id : e->subject_id;
                if (!visited.count(far)) options.emplace_back(eid, forward);
            }
            if (options.empty()) {
                dead_end = true;
                break;
            }
            const auto& [eid, forward] = options[rng.below(options.size())];
            const RelationEdge* e = snapshot.edge(eid);
            const std::string& far = forward ? e->object_id : e->subject_id;
            path.edge_ids.push_back(eid);
            path.directions.push_back(forward ? HopDirection::Forward : HopDirection::Inverse);
            path.node_ids.push_back(far);
            visited.insert(far);
        }
        if (dead_end) continue;

        if (policy.bias == PathBias::HighDegree) {
            bool hub_found = false;
            for (std::size_t i = 1; i + 1 < path.node_ids.size(); ++i) {
                if (snapshot.degree(path.node_ids[i]) >= degree_floor) {
                    hub_found = true;
                    break;
                }
            }
            if (!hub_found) continue;
        }

        // Collect provenance in path order: v0, r1, v1, r2, ...
        std::set<ProvenanceRef> seen;
        for (std::size_t i = 0; i < path.node_ids.size(); ++i) {
            append_unique(path.evidence, seen, snapshot.entity(path.node_ids[i])->provenance);
            if (i < path.edge_ids.size()) {
                append_unique(path.evidence, seen, snapshot.edge(path.edge_ids[i])->evidence);
            }
        }
        return path;
    }
    return std::nullopt;
}

std::vector<EvidenceItem> gather_evidence(const ReasoningPath& path, const Corpus& corpus) {
    std::vector<EvidenceItem> bundle;
    std::set<ProvenanceRef> seen;
    for (const auto& ref : path.evidence) {
        if (!seen.insert(ref).second) continue;
        const Document* doc = corpus.find(ref.doc_id);
        if (!doc) {
            throw DataError("evidence references missing document '" + ref.doc_id +
                            "' — graph/corpus stores are inconsistent");
        }
        if (doc->submitted_at > path.as_of) continue; // newer than the snapshot: not usable

        const Section* sec = doc->find_section(ref.section_label);
        if (!sec) {
            throw DataError("evidence references missing section '" + ref.section_label +
                            "' of document '" + ref.doc_id + "'");
        }
        if (ref.char_start >= ref.char_end || ref.char_end > sec->text.size()) {
            throw DataError("evidence span " + std::to_string(ref.char_start) + "-" +
                            std::to_string(ref.char_end) + " overruns section '" +
                            ref.section_label + "' of document '" + ref.doc_id + "'");
        }
        bundle.push_back({ref, sec->text.substr(ref.char_start, ref.char_end - ref.char_start)});
    }
    return bundle;
}

Json path_to_json(const ReasoningPath& p) {
    Json dirs = Json::array();
    for (const auto& d : p.directions) dirs.push_back(hop_direction_name(d));
    Json evidence = Json::array();
    for (const auto& r : p.evidence) evidence.push_back(provenance_to_json(r));
    return {{"path_id", p.path_id},     {"as_of", format_rfc3339(p.as_of)},
            {"nodes", p.node_ids},      {"relations", p.edge_ids},
            {"hop_directions", dirs},   {"evidence_refs", evidence},
            {"policy", p.policy_name}};
}

ReasoningPath path_from_json(const Json& j) {
    ReasoningPath p;
    try {
        p.path_id = j.at("path_id").get<std::string>();
        p.as_of = parse_rfc3339(j.at("as_of").get<std::string>());
        p.node_ids = j.at("nodes").get<std::vector<std::string>>();
        p.edge_ids = j.at("relations").get<std::vector<std::string>>();
        for (const auto& d : j.at("hop_directions")) {
            p.directions.push_back(hop_direction_from(d.get<std::string>()));
        }
        for (const auto& r : j.at("evidence_refs")) {
            p.evidence.push_back(provenance_from_json(r));
        }
        p.policy_name = j.value("policy", "uniform");
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad path record: ") + e.what());
    }
    if (p.node_ids.size() != p.edge_ids.size() + 1 ||
        p.directions.size() != p.edge_ids.size() || p.edge_ids.empty()) {
        throw DataError("path " + p.path_id + " has inconsistent node/edge counts");
    }
    return p;
}

} // namespace forge
