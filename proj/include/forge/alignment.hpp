#pragma once

#include <optional>
#include <variant>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/graph.hpp"
#include "forge/hnsw.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Extraction candidates: what one chat call proposes for one document,
// before alignment against the graph.
// ---------------------------------------------------------------------------

struct MentionSpan {
    std::string section_label;
    std::size_t char_start = 0;
    std::size_t char_end = 0; // exclusive
};

struct CandidateEntity {
    std::string type_label;
    std::string name;
    std::string description;
    MentionSpan span;

    std::string composed_text() const { return type_label + " | " + name + " | " + description; }
};

struct CandidateRelation {
    std::string subject_name; // must name a candidate entity of the same batch
    std::string predicate_phrase;
    std::string object_name;
    MentionSpan span;
};

struct ExtractionBatch {
    std::string doc_id;
    Timestamp doc_time = 0;
    std::vector<CandidateEntity> entities;
    std::vector<CandidateRelation> relations;
};

struct ExtractionFailure {
    std::string doc_id;
    std::string reason;
};

struct AlignmentDecision {
    enum class Outcome { Merged, Created };
    Outcome outcome = Outcome::Created;
    std::string entity_id;
    double similarity = 0.0; // best candidate similarity seen (0 if index empty)
};

// Counters reported by apply_update.
struct UpdateDelta {
    std::size_t entities_created = 0;
    std::size_t entities_merged = 0;
    std::size_t edges_created = 0;
    std::size_t edges_reinforced = 0;
    std::size_t relations_rejected = 0;   // predicate failed normalization
    std::size_t embeddings_deferred = 0;  // transport failures after the retry pass
    std::int64_t align_wall_ms = 0;       // embed + search + merge bookkeeping
};

struct AlignmentOptions {
    double tau = 0.85;                 // entity merge threshold, in [0, 1]
    double relation_threshold = 0.6;   // predicate acceptance threshold
    int ann_k = 8;                     // neighbours consulted per candidate
    std::vector<std::string> schema;   // canonical predicates, non-empty
    std::string prompt_template;       // extraction prompt, "{{document}}" hole
    std::string prompt_version = "v1";
};

// Lowercase, split on non-alphanumerics, drop function words, strip simple
// suffixes, rejoin. Both predicate phrases and schema entries pass through
// this before embedding, so "makes use of" and "uses" land near each other.
std::string canonical_relation_form(const std::string& phrase);

class AlignmentEngine {
public:
    AlignmentEngine(ModelGateway& gateway, AlignmentOptions options);

    const AlignmentOptions& options() const { return options_; }

    // One chat call (plus at most one repair retry on a malformed reply).
    // Invalid spans or unknown endpoints are dropped with a warning rather
    // than failing the document. Also records per-document usage.
    std::variant<ExtractionBatch, ExtractionFailure> extract_batch(const Document& doc);

    // Pure decision: embed the candidate, consult the index, merge when the
    // best neighbour clears tau, otherwise create.
    AlignmentDecision align_entity(const CandidateEntity& cand, const AnnIndex& index);

    // Maps a free-form predicate phrase onto the schema; nullopt when the
    // best similarity falls below the threshold.
    std::optional<std::string> normalize_relation(const std::string& phrase);

    // f-hat: ln(1+f)/ln(17) capped at 1; r-hat: exp(-age_days/180);
    // s-hat: min(1, |evidence|/3). Blended 0.4/0.3/0.3.
    static double score_confidence(const RelationEdge& edge, Timestamp now);

    // Folds batches into the graph and index: entities first (aligned in
    // batch order), then relations keyed by (subject, predicate, object).
    // Afterwards every edge confidence is rescored against the latest
    // evidence time. Batches are processed sorted by doc_id.
    UpdateDelta apply_update(KnowledgeGraph& graph, AnnIndex& index,
                             std::vector<ExtractionBatch> batches);

private:
    ModelGateway& gateway_;
    AlignmentOptions options_;
    std::map<std::string, EmbeddingVector> schema_vecs_; // canonical form -> embedding

    EmbeddingVector embed_canonical(const std::string& canonical);
    static std::optional<ExtractionBatch> parse_reply(const std::string& text, const Document& doc,
                                                      std::vector<std::string>& warnings);
};

} // namespace forge
