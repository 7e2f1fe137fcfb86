#pragma once

#include "forge/gateway.hpp"
#include "forge/qa_generator.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Multi-stage quality control. A pair reaches the benchmark only when every
// stage passes; a rejected pair carries exactly one rejection reason (the
// first failing stage stops its pipeline).
// ---------------------------------------------------------------------------

enum class QcStage { Answerability, Independence, Clarity, Dedup };

std::string qc_stage_name(QcStage s);
QcStage qc_stage_from(const std::string& name);

struct QCVerdict {
    std::string qa_id;
    QcStage stage = QcStage::Answerability;
    bool pass = false;
    std::string reason;      // set on reject ("judge-unparseable", "duplicate-of:qa00001", ...)
    std::string judge_trace; // raw judge reply, answerability only
};

struct QcOptions {
    std::string answerability_template; // holes: {{question}} {{answer}} {{evidence}}
    double dedup_threshold = 0.92;      // question-embedding cosine
};

struct QcResult {
    std::vector<QAPair> kept;        // normalized survivors, qa_id order
    std::vector<QCVerdict> verdicts; // one per (qa_id, stage) evaluated
};

// The static independence filter. Returns the matched pattern through
// `which` (for reporting) when the question trips the blocklist.
bool hits_blocklist(const std::string& question, std::string* which = nullptr);

// Lowercase, collapse whitespace, standardize terminal punctuation: a
// question ends with exactly one "?", a statement keeps a single instance
// of its original terminal mark. Idempotent.
QAPair normalize_pair(QAPair qa);

class QualityController {
public:
    QualityController(ModelGateway& gateway, QcOptions options);

    // One judge call (plus one retry on a malformed reply); pass iff the
    // judge says both answerable and faithful. Fails closed.
    QCVerdict check_answerability(const QAPair& qa, const Corpus& corpus);

    // Pure text scans, no model calls.
    QCVerdict check_context_independence(const QAPair& qa) const;
    QCVerdict check_clarity(const QAPair& qa) const;

    // Embedding-cosine clustering at the dedup threshold; the cluster
    // representative is the smallest qa_id, so input order never matters.
    // Emits one verdict per pair (pass for representatives).
    std::pair<std::vector<QAPair>, std::vector<QCVerdict>> deduplicate(
        std::vector<QAPair> pairs);

    // Full pipeline: answerability -> independence -> clarity ->
    // normalize -> dedup, first failure recorded and the pair dropped.
    // Answerability judging fans out across `workers`; verdict order is
    // canonical (qa_id, stage) regardless.
    QcResult run(std::vector<QAPair> pairs, const Corpus& corpus, std::size_t workers = 1);

private:
    ModelGateway& gateway_;
    QcOptions options_;
};

Json qc_verdict_to_json(const QCVerdict& v);
QCVerdict qc_verdict_from_json(const Json& j);

} // namespace forge
