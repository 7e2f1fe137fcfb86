#pragma once

#include <optional>

#include "forge/corpus.hpp"
#include "forge/graph.hpp"
#include "forge/rng.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Reasoning paths: simple k-hop walks over a snapshot, endpoints and hops
// recorded with the direction each edge was traversed in, plus the
// provenance spans that back every element.
// ---------------------------------------------------------------------------

enum class HopDirection { Forward, Inverse };

std::string hop_direction_name(HopDirection d);
HopDirection hop_direction_from(const std::string& name);

struct ReasoningPath {
    std::string path_id;
    Timestamp as_of = 0;
    std::vector<std::string> node_ids;       // k+1 entries, no repeats
    std::vector<std::string> edge_ids;       // k entries
    std::vector<HopDirection> directions;    // k entries
    std::vector<ProvenanceRef> evidence;     // path order, deduplicated
    std::string policy_name;                 // "uniform" | "high_degree"

    std::size_t k() const { return edge_ids.size(); }
    const std::string& terminal() const { return node_ids.back(); }
};

enum class PathBias { Uniform, HighDegree };

struct SamplingPolicy {
    int k_min = 1;
    int k_max = 3;
    PathBias bias = PathBias::Uniform;
    double degree_percentile = 0.90; // intermediates must clear this quantile
    int max_attempts = 200;
};

// Draws one path, or nullopt when max_attempts rejections exhaust the
// budget (caller may relax k or give up). The walk starts uniformly over
// entities with degree >= 1 and extends uniformly over incident edges that
// lead to unvisited nodes; high-degree bias keeps only paths where some
// intermediate node clears the degree quantile (k == 1 can never satisfy
// that, so it always exhausts under high_degree).
std::optional<ReasoningPath> sample_path(const KGSnapshot& snapshot,
                                         const SamplingPolicy& policy, Rng& rng);

struct EvidenceItem {
    ProvenanceRef ref;
    std::string text;
};

// Dereferences the path's provenance spans against the corpus, dropping
// spans from documents submitted after as_of. A missing document or an
// out-of-range span is store corruption (DataError). Result keeps path
// order and is deduplicated by (doc_id, section, span).
std::vector<EvidenceItem> gather_evidence(const ReasoningPath& path, const Corpus& corpus);

Json path_to_json(const ReasoningPath& p);
ReasoningPath path_from_json(const Json& j);

} // namespace forge
