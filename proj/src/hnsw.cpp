#include "forge/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace forge {
namespace {

using Scored = std::pair<double, std::uint32_t>; // (distance, internal id)

struct MinHeap {
    // Smallest distance on top; ties broken by internal id for determinism.
    std::priority_queue<Scored, std::vector<Scored>, std::greater<Scored>> q;
};

struct MaxHeap {
    std::priority_queue<Scored, std::vector<Scored>, std::less<Scored>> q;
};

} // namespace

AnnIndex::AnnIndex(HnswParams params) : params_(params), level_rng_(params.seed) {
    if (params_.dim == 0) throw ConfigError("AnnIndex needs a positive dimension");
    if (params_.M < 2) throw ConfigError("AnnIndex M must be >= 2");
    if (params_.ef_construction < params_.M) {
        throw ConfigError("ef_construction must be >= M");
    }
    if (params_.ef_search == 0) throw ConfigError("ef_search must be positive");
    ml_ = 1.0 / std::log(static_cast<double>(params_.M));
}

bool AnnIndex::contains(const std::string& id) const { return by_external_.count(id) > 0; }

const EmbeddingVector* AnnIndex::vector(const std::string& id) const {
    const auto it = by_external_.find(id);
    return it == by_external_.end() ? nullptr : &nodes_[it->second].vec;
}

std::vector<std::string> AnnIndex::ids() const {
    std::vector<std::string> out;
    out.reserve(by_external_.size());
    for (const auto& [id, _] : by_external_) out.push_back(id);
    return out;
}

double AnnIndex::distance(const EmbeddingVector& a, const EmbeddingVector& b) const {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return 1.0 - d;
}

int AnnIndex::draw_level() {
    const double u = level_rng_.unit();
    return static_cast<int>(std::floor(-std::log(1.0 - u) * ml_));
}

void AnnIndex::add(const std::string& id, EmbeddingVector v) {
    if (id.empty()) throw ContractViolation("AnnIndex id must be non-empty");
    if (by_external_.count(id)) {
        throw ContractViolation("AnnIndex already holds id '" + id + "'; use update()");
    }
    insert_internal(id, std::move(v));
}

void AnnIndex::update(const std::string& id, EmbeddingVector v) {
    const auto it = by_external_.find(id);
    if (it == by_external_.end()) {
        throw ContractViolation("AnnIndex::update on unknown id '" + id + "'");
    }
    nodes_[it->second].alive = false;
    --live_count_;
    by_external_.erase(it);
    insert_internal(id, std::move(v));
}

void AnnIndex::insert_internal(const std::string& id, EmbeddingVector v) {
    if (v.size() != params_.dim) {
        throw ConfigError("AnnIndex dimension mismatch: vector has " + std::to_string(v.size()) +
                          ", index expects " + std::to_string(params_.dim));
    }
    l2_normalize(v);

    const auto internal = static_cast<std::uint32_t>(nodes_.size());
    Node node;
    node.external_id = id;
    node.vec = std::move(v);
    node.level = draw_level();
    node.links.resize(node.level + 1);
    nodes_.push_back(std::move(node));
    by_external_[id] = internal;
    ++live_count_;

    Node& fresh = nodes_[internal];
    if (entry_ < 0) {
        entry_ = internal;
        max_level_ = fresh.level;
        return;
    }

    std::uint32_t cur = greedy_descend(fresh.vec, static_cast<std::uint32_t>(entry_), max_level_,
                                       fresh.level + 1);

    for (int lc = std::min(fresh.level, max_level_); lc >= 0; --lc) {
        auto candidates = search_layer(fresh.vec, cur, lc, params_.ef_construction);
        if (!candidates.empty()) cur = candidates.front().second;
        const std::size_t m_max = lc == 0 ? params_.M * 2 : params_.M;
        const auto neighbors = select_neighbors(fresh.vec, candidates, params_.M);
        for (const std::uint32_t nb : neighbors) {
            nodes_[internal].links[lc].push_back(nb);
            nodes_[nb].links[lc].push_back(internal);
            // Shrink the neighbour's list if it overflowed.
            auto& nb_links = nodes_[nb].links[lc];
            if (nb_links.size() > m_max) {
                std::vector<Scored> rescored;
                rescored.reserve(nb_links.size());
                for (const std::uint32_t x : nb_links) {
                    rescored.emplace_back(distance(nodes_[nb].vec, nodes_[x].vec), x);
                }
                std::sort(rescored.begin(), rescored.end());
                nb_links = select_neighbors(nodes_[nb].vec, rescored, m_max);
            }
        }
    }

    if (fresh.level > max_level_) {
        max_level_ = fresh.level;
        entry_ = internal;
    }
}

std::uint32_t AnnIndex::greedy_descend(const EmbeddingVector& q, std::uint32_t start,
                                       int from_level, int to_level) const {
    std::uint32_t cur = start;
    double cur_dist = distance(q, nodes_[cur].vec);
    for (int lc = from_level; lc >= to_level; --lc) {
        bool improved = true;
        while (improved) {
            improved = false;
            if (lc >= static_cast<int>(nodes_[cur].links.size())) continue;
            for (const std::uint32_t nb : nodes_[cur].links[lc]) {
                const double d = distance(q, nodes_[nb].vec);
                if (d < cur_dist || (d == cur_dist && nb < cur)) {
                    cur = nb;
                    cur_dist = d;
                    improved = true;
                }
            }
        }
    }
    return cur;
}

std::vector<Scored> AnnIndex::search_layer(const EmbeddingVector& q, std::uint32_t entry,
                                           int level, std::size_t ef) const {
    std::vector<bool> visited(nodes_.size(), false);
    MinHeap candidates;
    MaxHeap best;

    const double d0 = distance(q, nodes_[entry].vec);
    visited[entry] = true;
    candidates.q.emplace(d0, entry);
    best.q.emplace(d0, entry);

    while (!candidates.q.empty()) {
        const auto [d, c] = candidates.q.top();
        candidates.q.pop();
        if (best.q.size() >= ef && d > best.q.top().first) break;
        if (level >= static_cast<int>(nodes_[c].links.size())) continue;
        for (const std::uint32_t nb : nodes_[c].links[level]) {
            if (visited[nb]) continue;
            visited[nb] = true;
            const double dn = distance(q, nodes_[nb].vec);
            if (best.q.size() < ef || dn < best.q.top().first) {
                candidates.q.emplace(dn, nb);
                best.q.emplace(dn, nb);
                if (best.q.size() > ef) best.q.pop();
            }
        }
    }

    std::vector<Scored> out;
    out.reserve(best.q.size());
    while (!best.q.empty()) {
        out.push_back(best.q.top());
        best.q.pop();
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> AnnIndex::select_neighbors(const EmbeddingVector& q,
                                                      std::vector<Scored> cands,
                                                      std::size_t m) const {
    // Heuristic selection (keeps the graph navigable in clustered data):
    // take a candidate only if it is closer to q than to every neighbour
    // already selected; backfill with the nearest rejects if short.
    std::sort(cands.begin(), cands.end());
    std::vector<std::uint32_t> selected;
    std::vector<Scored> rejected;
    for (const auto& [d, c] : cands) {
        if (selected.size() >= m) break;
        bool keep = true;
        for (const std::uint32_t s : selected) {
            if (distance(nodes_[c].vec, nodes_[s].vec) < d) {
                keep = false;
                break;
            }
        }
        if (keep) {
            selected.push_back(c);
        } else {
            rejected.emplace_back(d, c);
        }
    }
    for (const auto& [d, c] : rejected) {
        if (selected.size() >= m) break;
        selected.push_back(c);
    }
    return selected;
}

std::vector<SearchHit> AnnIndex::search(const EmbeddingVector& query, std::size_t k) const {
    return search(query, k, params_.ef_search);
}

std::vector<SearchHit> AnnIndex::search(const EmbeddingVector& query, std::size_t k,
                                        std::size_t ef) const {
    if (query.size() != params_.dim) {
        throw ConfigError("AnnIndex dimension mismatch: query has " + std::to_string(query.size()) +
                          ", index expects " + std::to_string(params_.dim));
    }
    if (k == 0) throw ContractViolation("AnnIndex::search needs k > 0");
    std::vector<SearchHit> hits;
    if (live_count_ == 0 || entry_ < 0) return hits;

    EmbeddingVector q = query;
    l2_normalize(q);

    const std::uint32_t start =
        greedy_descend(q, static_cast<std::uint32_t>(entry_), max_level_, 1);
    auto found = search_layer(q, start, 0, std::max(ef, k));

    for (const auto& [d, internal] : found) {
        const Node& node = nodes_[internal];
        if (!node.alive) continue;
        // A tombstoned id may have been reinserted; only report the live node.
        const auto it = by_external_.find(node.external_id);
        if (it == by_external_.end() || it->second != internal) continue;
        hits.push_back({node.external_id, 1.0 - d});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

} // namespace forge
