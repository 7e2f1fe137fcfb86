#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/rng.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Approximate nearest-neighbour index over unit vectors (HNSW).
//
// Hierarchical navigable small-world graph: each element draws a level from
// a geometric distribution; upper layers are sparse expressways, layer 0
// holds everyone. Searches greedily descend the layers and run a beam of
// width ef on layer 0. Expected O(log N) hops per query.
//
// Implementation notes:
//  * Level draws come from an internally seeded RNG, so index construction
//    is reproducible run to run.
//  * Vector updates tombstone the old element and reinsert under the same
//    external id; dead elements stay traversable but never surface in
//    results. At our scale (thousands of entities, merge-driven updates)
//    the garbage stays negligible, so there is no compaction pass.
//  * All candidate heaps order by (distance, insertion index) to keep
//    tie-breaks deterministic.
// ---------------------------------------------------------------------------

struct HnswParams {
    std::size_t dim = 0;
    std::size_t M = 16;               // neighbours kept per element per layer
    std::size_t ef_construction = 200; // beam width while inserting
    std::size_t ef_search = 100;       // default beam width while querying
    std::uint64_t seed = 0x51ab71; // level-draw stream
};

struct SearchHit {
    std::string id;
    double similarity = 0.0; // cosine, descending in results
};

class AnnIndex {
public:
    explicit AnnIndex(HnswParams params);

    std::size_t dim() const { return params_.dim; }
    std::size_t size() const { return live_count_; } // live entries only
    const HnswParams& params() const { return params_; }

    bool contains(const std::string& id) const;
    // The stored vector for a live id; nullptr if absent.
    const EmbeddingVector* vector(const std::string& id) const;
    std::vector<std::string> ids() const; // sorted

    // Inserts a new element. The id must not be live (ContractViolation);
    // dimension mismatches raise ConfigError. The vector is normalized.
    void add(const std::string& id, EmbeddingVector v);

    // Replaces the vector behind an existing id (tombstone + reinsert).
    void update(const std::string& id, EmbeddingVector v);

    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const;
    std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k,
                                  std::size_t ef) const;

private:
    struct Node {
        std::string external_id;
        EmbeddingVector vec;
        int level = 0;
        bool alive = true;
        // links[l] = neighbour internal ids on layer l, 0 <= l <= level
        std::vector<std::vector<std::uint32_t>> links;
    };

    HnswParams params_;
    double ml_ = 0.0; // 1 / ln(M)
    mutable Rng level_rng_;
    std::vector<Node> nodes_;
    std::map<std::string, std::uint32_t> by_external_;
    std::int64_t entry_ = -1;
    int max_level_ = -1;
    std::size_t live_count_ = 0;

    double distance(const EmbeddingVector& a, const EmbeddingVector& b) const;
    int draw_level();
    std::uint32_t greedy_descend(const EmbeddingVector& q, std::uint32_t start, int from_level,
                                 int to_level) const;
    std::vector<std::pair<double, std::uint32_t>> search_layer(const EmbeddingVector& q,
                                                               std::uint32_t entry, int level,
                                                               std::size_t ef) const;
    std::vector<std::uint32_t> select_neighbors(const EmbeddingVector& q,
                                                std::vector<std::pair<double, std::uint32_t>> cands,
                                                std::size_t m) const;
    void insert_internal(const std::string& id, EmbeddingVector v);
};

} // namespace forge
