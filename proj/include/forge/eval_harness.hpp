#pragma once

#include "forge/gateway.hpp"
#include "forge/qa_generator.hpp"
#include "forge/quality_control.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Baselines over the snapshot-sliced stores: â = f(q, G_{t_q}, D_{t_q}).
// Every prediction records what it injected so the contamination gate can
// audit it after the fact.
// ---------------------------------------------------------------------------

enum class Method { IO, CoT, SC, RAG, OneHopKG, RagPlusOneHopKG };

std::string method_name(Method m); // "io", "cot", "sc", "rag", "onehop_kg", "rag_onehop_kg"
Method method_from(const std::string& name);
const std::vector<Method>& all_methods();

struct MethodParams {
    int top_k = 5;               // retrieved chunks for RAG methods
    int sc_samples = 5;          // SC votes; >= 3 and odd
    double link_threshold = 0.5; // topic-entity linking cosine floor
    int link_max = 2;            // topic entities per question, at most
};

struct Prediction {
    std::string qa_id;
    Method method = Method::IO;
    int run_index = 0;
    std::string answer;
    std::vector<std::string> retrieved_chunks; // chunk ids, rank order
    std::vector<std::string> injected_facts;   // edge ids, injection order
    std::int64_t tokens = 0;
    std::int64_t latency_ms = 0;
    bool failed = false; // transport gave out; judged incorrect
};

enum class Verdict { Correct, Incorrect, Missing };

std::string verdict_name(Verdict v);
Verdict verdict_from(const std::string& name);

struct VerdictRecord {
    std::string qa_id;
    Method method = Method::IO;
    int run_index = 0;
    Verdict verdict = Verdict::Incorrect;
};

// Embeds every chunk of the corpus once; queries filter by document
// availability at t_q before ranking by cosine (ties: chunk_id).
class ChunkIndex {
public:
    ChunkIndex(const Corpus& corpus, const ChunkPolicy& policy, ModelGateway& gateway);

    std::vector<const Chunk*> top_k(const EmbeddingVector& query, Timestamp t_q, int k) const;
    std::size_t size() const { return chunks_.size(); }

private:
    std::vector<Chunk> chunks_;
    std::vector<EmbeddingVector> vecs_;
    std::map<std::string, Timestamp> doc_time_;
};

struct EvalTemplates {
    std::string io;      // {{question}}
    std::string cot;     // {{question}}; instructs an "ANSWER:" last line
    std::string context; // {{context}} {{question}} — RAG / KG methods
    std::string judge;   // {{question}} {{gold}} {{candidate}}
};

struct CellStat {
    std::vector<double> per_run;
    double mean = 0.0;
    double stddev = 0.0; // population
};

struct Report {
    int runs = 0;
    std::vector<std::string> methods;
    // method -> ("overall" | qtype name) -> accuracy stats, percent
    std::map<std::string, std::map<std::string, CellStat>> accuracy;

    Json to_json() const;
};

class EvalHarness {
public:
    EvalHarness(ModelGateway& gateway, const KnowledgeGraph& graph, ChunkIndex& chunks,
                EvalTemplates templates, MethodParams params);

    // One prediction for one (method, pair, run). The snapshot must be
    // taken at the pair's issue time.
    Prediction answer_with_method(Method method, const QAPair& qa, const KGSnapshot& snapshot,
                                  int run_index);

    // Normalized exact match short-circuits to correct, an empty candidate
    // to missing; otherwise one judge call (retry once, fail closed to
    // incorrect).
    Verdict judge_answer(const QAPair& qa, const std::string& candidate,
                         const std::string& tag_suffix);

    // Full grid: every (method, pair, run) gets one prediction and one
    // verdict; outputs are canonically ordered by (method, qa_id, run).
    // Validates every pair's issue time against the graph window before
    // the first call.
    Report run_benchmark(const std::vector<Method>& methods, const std::vector<QAPair>& pairs,
                         int runs, std::vector<Prediction>* predictions_out = nullptr,
                         std::vector<VerdictRecord>* verdicts_out = nullptr);

    // Topic linking for the 1-hop baselines: entities whose composed-text
    // embedding clears the threshold against the question embedding, best
    // first, at most link_max. Exposed for tests.
    std::vector<const Entity*> link_topic_entities(const EmbeddingVector& question_vec,
                                                   const KGSnapshot& snapshot);

private:
    ModelGateway& gateway_;
    const KnowledgeGraph& graph_;
    ChunkIndex& chunks_;
    EvalTemplates templates_;
    MethodParams params_;
    std::map<std::string, EmbeddingVector> entity_vec_cache_; // composed text -> vec

    std::string run_chat(const std::string& prompt, const std::string& tag, Prediction& pred);
};

struct FactRecord {
    std::string fact_id;
    std::string text;
};

// Fraction of facts matched by at least one graph triplet, verbalized as
// "subject predicate object" and compared by embedding cosine. An empty
// graph recovers nothing (0.0); an empty fact list is a contract violation.
double fact_recovery_rate(const KnowledgeGraph& graph, const std::vector<FactRecord>& facts,
                          ModelGateway& gateway, double threshold = 0.75);

std::string verbalize_fact(const KnowledgeGraph& graph, const RelationEdge& edge);

Json prediction_to_json(const Prediction& p);
Json verdict_record_to_json(const VerdictRecord& v);
Json fact_record_to_json(const FactRecord& f);
FactRecord fact_record_from_json(const Json& j);

} // namespace forge
