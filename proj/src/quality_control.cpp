#include "forge/quality_control.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <regex>

#include <spdlog/spdlog.h>

#include "forge/parallel.hpp"
#include "forge/text.hpp"

namespace forge {
namespace {

const std::array<const char*, 4> kBlockedPhrases = {
    "in this paper",
    "in this work",
    "this study",
    "the authors",
};

// "Theorem 12", "figure~3", "Section5" — a document-local reference.
const std::regex& reference_pattern() {
    static const std::regex re("(theorem|lemma|figure|table|section|equation)\\s*~?\\s*[0-9]",
                               std::regex::icase);
    return re;
}

std::optional<Json> parse_judge_reply(const std::string& text) {
    Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("answerable") || !j["answerable"].is_boolean()) return std::nullopt;
    if (!j.contains("faithful") || !j["faithful"].is_boolean()) return std::nullopt;
    return j;
}

// Terminal punctuation run -> single mark ("??" -> "?", ".." -> ".").
std::string standardize_terminal(std::string s, char forced = '\0') {
    std::size_t end = s.size();
    while (end > 0 && (s[end - 1] == '?' || s[end - 1] == '.' || s[end - 1] == '!')) --end;
    const char first_mark = end < s.size() ? s[end] : '\0';
    s.erase(end);
    if (forced != '\0') {
        s.push_back(forced);
    } else if (first_mark != '\0') {
        s.push_back(first_mark);
    }
    return s;
}

// Union-find over pair indices for duplicate clustering.
class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

} // namespace

std::string qc_stage_name(QcStage s) {
    switch (s) {
    case QcStage::Answerability: return "answerability";
    case QcStage::Independence: return "independence";
    case QcStage::Clarity: return "clarity";
    case QcStage::Dedup: return "dedup";
    }
    throw ContractViolation("unhandled qc stage");
}

QcStage qc_stage_from(const std::string& name) {
    if (name == "answerability") return QcStage::Answerability;
    if (name == "independence") return QcStage::Independence;
    if (name == "clarity") return QcStage::Clarity;
    if (name == "dedup") return QcStage::Dedup;
    throw DataError("unknown qc stage: " + name);
}

bool hits_blocklist(const std::string& question, std::string* which) {
    const std::string lowered = to_lower(question);
    for (const char* phrase : kBlockedPhrases) {
        if (lowered.find(phrase) != std::string::npos) {
            if (which) *which = phrase;
            return true;
        }
    }
    std::smatch m;
    if (std::regex_search(question, m, reference_pattern())) {
        if (which) *which = "numbered-reference:" + to_lower(m[1].str());
        return true;
    }
    return false;
}

QAPair normalize_pair(QAPair qa) {
    qa.question = standardize_terminal(collapse_whitespace(to_lower(qa.question)), '?');
    qa.answer = standardize_terminal(collapse_whitespace(to_lower(qa.answer)));
    return qa;
}

QualityController::QualityController(ModelGateway& gateway, QcOptions options)
    : gateway_(gateway), options_(std::move(options)) {
    if (options_.answerability_template.find("{{question}}") == std::string::npos ||
        options_.answerability_template.find("{{answer}}") == std::string::npos) {
        throw ConfigError("answerability template must carry {{question}} and {{answer}} holes");
    }
    if (options_.dedup_threshold <= 0.0 || options_.dedup_threshold > 1.0) {
        throw ConfigError("dedup threshold must lie in (0, 1]");
    }
}

QCVerdict QualityController::check_answerability(const QAPair& qa, const Corpus& corpus) {
    QCVerdict v;
    v.qa_id = qa.qa_id;
    v.stage = QcStage::Answerability;

    std::string evidence_text;
    for (const auto& ref : qa.evidence_refs) {
        const Document* doc = corpus.find(ref.doc_id);
        if (!doc) {
            throw DataError("qa " + qa.qa_id + " cites missing document '" + ref.doc_id + "'");
        }
        const Section* sec = doc->find_section(ref.section_label);
        if (!sec || ref.char_end > sec->text.size() || ref.char_start >= ref.char_end) {
            throw DataError("qa " + qa.qa_id + " cites an unresolvable span in '" + ref.doc_id +
                            "'");
        }
        evidence_text +=
            "- (" + ref.doc_id + " / " + ref.section_label + ") " +
            collapse_whitespace(sec->text.substr(ref.char_start, ref.char_end - ref.char_start)) +
            "\n";
    }

    std::string prompt = options_.answerability_template;
    prompt = replace_all(prompt, "{{question}}", qa.question);
    prompt = replace_all(prompt, "{{answer}}", qa.answer);
    prompt = replace_all(prompt, "{{evidence}}", evidence_text);

    ChatRequest req;
    req.messages = {{Role::User, prompt}};
    req.tag = "judge:answerability:" + qa.qa_id;

    ChatResponse resp = gateway_.complete(req, "qc");
    std::optional<Json> reply = parse_judge_reply(resp.text);
    if (!reply) {
        ChatRequest repair = req;
        repair.messages.push_back({Role::Assistant, resp.text});
        repair.messages.push_back(
            {Role::User,
             "That reply was not the required JSON. Respond with exactly "
             "{\"answerable\": bool, \"faithful\": bool} and nothing else."});
        repair.tag = req.tag + ":retry";
        resp = gateway_.complete(repair, "qc");
        reply = parse_judge_reply(resp.text);
    }
    if (!reply) {
        v.pass = false;
        v.reason = "judge-unparseable";
        v.judge_trace = resp.text;
        return v;
    }

    const bool answerable = (*reply)["answerable"].get<bool>();
    const bool faithful = (*reply)["faithful"].get<bool>();
    v.pass = answerable && faithful;
    if (!v.pass) v.reason = !answerable ? "not-answerable" : "not-faithful";
    v.judge_trace = reply->dump();
    return v;
}

QCVerdict QualityController::check_context_independence(const QAPair& qa) const {
    QCVerdict v;
    v.qa_id = qa.qa_id;
    v.stage = QcStage::Independence;
    std::string which;
    if (hits_blocklist(qa.question, &which)) {
        v.pass = false;
        v.reason = "document-local-reference:" + which;
    } else {
        v.pass = true;
    }
    return v;
}

QCVerdict QualityController::check_clarity(const QAPair& qa) const {
    QCVerdict v;
    v.qa_id = qa.qa_id;
    v.stage = QcStage::Clarity;
    v.pass = false;

    const auto words = split_words(qa.question);
    if (qa.question.find("{{") != std::string::npos ||
        qa.question.find("[PATH]") != std::string::npos) {
        v.reason = "template-artifact";
    } else if (words.size() < 3) {
        v.reason = "too-short";
    } else if (words.size() > 120) {
        v.reason = "too-long";
    } else if (collapse_whitespace(to_lower(qa.question)) ==
               collapse_whitespace(to_lower(qa.answer))) {
        v.reason = "degenerate";
    } else {
        v.pass = true;
    }
    return v;
}

std::pair<std::vector<QAPair>, std::vector<QCVerdict>> QualityController::deduplicate(
    std::vector<QAPair> pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const QAPair& a, const QAPair& b) { return a.qa_id < b.qa_id; });

    std::vector<EmbeddingVector> vecs;
    vecs.reserve(pairs.size());
    for (const auto& qa : pairs) vecs.push_back(gateway_.embed(qa.question, "qc"));

    DisjointSets sets(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = i + 1; j < pairs.size(); ++j) {
            if (dot(vecs[i], vecs[j]) >= options_.dedup_threshold) sets.unite(i, j);
        }
    }

    // Cluster representative: the smallest qa_id (== smallest index after
    // the sort above), so permuted inputs converge on the same kept-set.
    std::map<std::size_t, std::size_t> representative;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::size_t root = sets.find(i);
        auto it = representative.find(root);
        if (it == representative.end() || pairs[i].qa_id < pairs[it->second].qa_id) {
            representative[root] = i;
        }
    }

    std::vector<QAPair> kept;
    std::vector<QCVerdict> verdicts;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        QCVerdict v;
        v.qa_id = pairs[i].qa_id;
        v.stage = QcStage::Dedup;
        const std::size_t rep = representative.at(sets.find(i));
        if (rep == i) {
            v.pass = true;
            kept.push_back(pairs[i]);
        } else {
            v.pass = false;
            v.reason = "duplicate-of:" + pairs[rep].qa_id;
        }
        verdicts.push_back(std::move(v));
    }
    return {std::move(kept), std::move(verdicts)};
}

QcResult QualityController::run(std::vector<QAPair> pairs, const Corpus& corpus,
                                std::size_t workers) {
    std::sort(pairs.begin(), pairs.end(),
              [](const QAPair& a, const QAPair& b) { return a.qa_id < b.qa_id; });

    std::vector<QCVerdict> answerability(pairs.size());
    parallel_for(pairs.size(), workers,
                 [&](std::size_t i) { answerability[i] = check_answerability(pairs[i], corpus); });

    QcResult result;
    std::vector<QAPair> survivors;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const QAPair& qa = pairs[i];
        result.verdicts.push_back(answerability[i]);
        if (!answerability[i].pass) continue;

        QCVerdict v = check_context_independence(qa);
        result.verdicts.push_back(v);
        if (!v.pass) continue;

        v = check_clarity(qa);
        result.verdicts.push_back(v);
        if (!v.pass) continue;

        survivors.push_back(normalize_pair(qa));
    }

    auto [kept, dedup_verdicts] = deduplicate(std::move(survivors));
    result.verdicts.insert(result.verdicts.end(), dedup_verdicts.begin(), dedup_verdicts.end());
    result.kept = std::move(kept);

    std::sort(result.verdicts.begin(), result.verdicts.end(),
              [](const QCVerdict& a, const QCVerdict& b) {
                  if (a.qa_id != b.qa_id) return a.qa_id < b.qa_id;
                  return static_cast<int>(a.stage) < static_cast<int>(b.stage);
              });
    return result;
}

Json qc_verdict_to_json(const QCVerdict& v) {
    Json j = {{"qa_id", v.qa_id},
              {"stage", qc_stage_name(v.stage)},
              {"outcome", v.pass ? "pass" : "reject"}};
    if (!v.pass) j["reason"] = v.reason;
    if (!v.judge_trace.empty()) j["judge_trace"] = v.judge_trace;
    return j;
}

QCVerdict qc_verdict_from_json(const Json& j) {
    QCVerdict v;
    try {
        v.qa_id = j.at("qa_id").get<std::string>();
        v.stage = qc_stage_from(j.at("stage").get<std::string>());
        v.pass = j.at("outcome").get<std::string>() == "pass";
        v.reason = j.value("reason", "");
        v.judge_trace = j.value("judge_trace", "");
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad qc verdict record: ") + e.what());
    }
    return v;
}

} // namespace forge
