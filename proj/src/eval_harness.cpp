#include "forge/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "forge/text.hpp"

namespace forge {
namespace {

std::string fold(const std::string& s) {
    std::string t = collapse_whitespace(to_lower(s));
    while (!t.empty() && (t.back() == '.' || t.back() == '?' || t.back() == '!')) t.pop_back();
    return trim(t);
}

std::string spaced(const std::string& predicate) {
    return replace_all(predicate, "_", " ");
}

// "... ANSWER: TorchFlux" -> "TorchFlux" (last marker, to end of line).
std::string extract_answer_line(const std::string& text) {
    const std::size_t p = text.rfind("ANSWER:");
    if (p == std::string::npos) return trim(text);
    const std::size_t from = p + 7;
    const std::size_t nl = text.find('\n', from);
    return trim(text.substr(from, nl == std::string::npos ? std::string::npos : nl - from));
}

std::optional<Verdict> parse_verdict_reply(const std::string& text) {
    Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("verdict") || !j["verdict"].is_string()) return std::nullopt;
    const std::string v = j["verdict"].get<std::string>();
    if (v == "correct") return Verdict::Correct;
    if (v == "incorrect") return Verdict::Incorrect;
    if (v == "missing") return Verdict::Missing;
    return std::nullopt;
}

CellStat make_stat(std::vector<double> per_run) {
    CellStat stat;
    stat.per_run = std::move(per_run);
    for (double v : stat.per_run) stat.mean += v;
    stat.mean /= static_cast<double>(stat.per_run.size());
    double var = 0.0;
    for (double v : stat.per_run) var += (v - stat.mean) * (v - stat.mean);
    stat.stddev = std::sqrt(var / static_cast<double>(stat.per_run.size()));
    return stat;
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
    case Method::IO: return "io";
    case Method::CoT: return "cot";
    case Method::SC: return "sc";
    case Method::RAG: return "rag";
    case Method::OneHopKG: return "onehop_kg";
    case Method::RagPlusOneHopKG: return "rag_onehop_kg";
    }
    throw ContractViolation("unhandled method");
}

Method method_from(const std::string& name) {
    for (Method m : all_methods()) {
        if (method_name(m) == name) return m;
    }
    throw DataError("unknown method: " + name);
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {Method::IO,  Method::CoT,      Method::SC,
                                                Method::RAG, Method::OneHopKG,
                                                Method::RagPlusOneHopKG};
    return methods;
}

std::string verdict_name(Verdict v) {
    switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::Missing: return "missing";
    }
    throw ContractViolation("unhandled verdict");
}

Verdict verdict_from(const std::string& name) {
    if (name == "correct") return Verdict::Correct;
    if (name == "incorrect") return Verdict::Incorrect;
    if (name == "missing") return Verdict::Missing;
    throw DataError("unknown verdict: " + name);
}

// --- ChunkIndex --------------------------------------------------------------

ChunkIndex::ChunkIndex(const Corpus& corpus, const ChunkPolicy& policy, ModelGateway& gateway) {
    chunks_ = chunk_corpus(corpus, policy);
    vecs_.reserve(chunks_.size());
    for (const auto& c : chunks_) vecs_.push_back(gateway.embed(c.text, "eval"));
    for (const auto& doc : corpus.documents) doc_time_[doc.id] = doc.submitted_at;
}

std::vector<const Chunk*> ChunkIndex::top_k(const EmbeddingVector& query, Timestamp t_q,
                                            int k) const {
    if (k < 1) throw ContractViolation("top_k needs k >= 1");
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const auto it = doc_time_.find(chunks_[i].doc_id);
        if (it == doc_time_.end() || it->second > t_q) continue; // not yet published
        scored.emplace_back(dot(query, vecs_[i]), i);
    }
    std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return chunks_[a.second].chunk_id < chunks_[b.second].chunk_id;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(k);
    std::vector<const Chunk*> out;
    out.reserve(scored.size());
    for (const auto& [score, idx] : scored) out.push_back(&chunks_[idx]);
    return out;
}

// --- EvalHarness --------------------------------------------------------------

EvalHarness::EvalHarness(ModelGateway& gateway, const KnowledgeGraph& graph, ChunkIndex& chunks,
                         EvalTemplates templates, MethodParams params)
    : gateway_(gateway), graph_(graph), chunks_(chunks), templates_(std::move(templates)),
      params_(params) {
    if (templates_.io.find("{{question}}") == std::string::npos ||
        templates_.cot.find("{{question}}") == std::string::npos) {
        throw ConfigError("io/cot templates must carry a {{question}} hole");
    }
    if (templates_.context.find("{{context}}") == std::string::npos ||
        templates_.context.find("{{question}}") == std::string::npos) {
        throw ConfigError("context template must carry {{context}} and {{question}} holes");
    }
    if (templates_.judge.find("{{gold}}") == std::string::npos ||
        templates_.judge.find("{{candidate}}") == std::string::npos) {
        throw ConfigError("judge template must carry {{gold}} and {{candidate}} holes");
    }
    if (params_.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (params_.link_max < 1) throw ConfigError("link_max must be >= 1");
    if (params_.link_threshold < 0.0 || params_.link_threshold > 1.0) {
        throw ConfigError("link_threshold must lie in [0, 1]");
    }
}

std::string EvalHarness::run_chat(const std::string& prompt, const std::string& tag,
                                  Prediction& pred) {
    ChatRequest req;
    req.messages = {{Role::User, prompt}};
    req.tag = tag;
    const ChatResponse resp = gateway_.complete(req, "eval");
    pred.tokens += resp.prompt_tokens + resp.completion_tokens;
    pred.latency_ms += resp.latency_ms;
    return resp.text;
}

std::vector<const Entity*> EvalHarness::link_topic_entities(const EmbeddingVector& question_vec,
                                                            const KGSnapshot& snapshot) {
    std::vector<std::pair<double, const Entity*>> scored;
    for (const auto& e : snapshot.entities()) {
        const std::string composed = e.composed_text();
        auto it = entity_vec_cache_.find(composed);
        if (it == entity_vec_cache_.end()) {
            it = entity_vec_cache_.emplace(composed, gateway_.embed(composed, "eval")).first;
        }
        const double sim = dot(question_vec, it->second);
        if (sim >= params_.link_threshold) scored.emplace_back(sim, &e);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->entity_id < b.second->entity_id;
    });
    if (scored.size() > static_cast<std::size_t>(params_.link_max)) {
        scored.resize(params_.link_max);
    }
    std::vector<const Entity*> out;
    out.reserve(scored.size());
    for (const auto& [sim, e] : scored) out.push_back(e);
    return out;
}

Prediction EvalHarness::answer_with_method(Method method, const QAPair& qa,
                                           const KGSnapshot& snapshot, int run_index) {
    Prediction pred;
    pred.qa_id = qa.qa_id;
    pred.method = method;
    pred.run_index = run_index;

    const std::string suffix = qa.qa_id + ":r" + std::to_string(run_index);
    try {
        switch (method) {
        case Method::IO: {
            const std::string prompt = replace_all(templates_.io, "{{question}}", qa.question);
            pred.answer = trim(run_chat(prompt, "eval:io:" + suffix, pred));
            break;
        }
        case Method::CoT: {
            const std::string prompt = replace_all(templates_.cot, "{{question}}", qa.question);
            pred.answer = extract_answer_line(run_chat(prompt, "eval:cot:" + suffix, pred));
            break;
        }
        case Method::SC: {
            const std::string prompt = replace_all(templates_.cot, "{{question}}", qa.question);
            std::vector<std::string> answers;
            for (int s = 0; s < params_.sc_samples; ++s) {
                answers.push_back(extract_answer_line(
                    run_chat(prompt, "eval:sc:" + suffix + ":s" + std::to_string(s), pred)));
            }
            std::map<std::string, int> votes;
            for (const auto& a : answers) ++votes[fold(a)];
            int best = -1;
            for (const auto& a : answers) { // first sample wins ties
                if (votes[fold(a)] > best) {
                    best = votes[fold(a)];
                    pred.answer = a;
                }
            }
            break;
        }
        case Method::RAG:
        case Method::OneHopKG:
        case Method::RagPlusOneHopKG: {
            const EmbeddingVector qvec = gateway_.embed(qa.question, "eval");
            std::string context;
            if (method == Method::RAG || method == Method::RagPlusOneHopKG) {
                for (const Chunk* c :
                     chunks_.top_k(qvec, qa.issue_time, params_.top_k)) {
                    context += "- [" + c->chunk_id + "] " + collapse_whitespace(c->text) + "\n";
                    pred.retrieved_chunks.push_back(c->chunk_id);
                }
            }
            if (method == Method::OneHopKG || method == Method::RagPlusOneHopKG) {
                std::set<std::string> seen_edges;
                for (const Entity* e : link_topic_entities(qvec, snapshot)) {
                    for (const Fact& f : snapshot.neighborhood(e->entity_id, 1)) {
                        if (!seen_edges.insert(f.edge_id).second) continue;
                        context += "- " + f.subject_name + " " + spaced(f.predicate) + " " +
                                   f.object_name + ".\n";
                        pred.injected_facts.push_back(f.edge_id);
                    }
                }
            }
            if (context.empty()) context = "(no material retrieved)\n";
            std::string prompt = replace_all(templates_.context, "{{context}}", context);
            prompt = replace_all(prompt, "{{question}}", qa.question);
            pred.answer = trim(
                run_chat(prompt, "eval:" + method_name(method) + ":" + suffix, pred));
            break;
        }
        }
    } catch (const TransportError& e) {
        spdlog::warn("prediction {} via {} failed: {}", qa.qa_id, method_name(method), e.what());
        pred.failed = true;
        pred.answer.clear();
    }
    return pred;
}

Verdict EvalHarness::judge_answer(const QAPair& qa, const std::string& candidate,
                                  const std::string& tag_suffix) {
    if (trim(candidate).empty()) return Verdict::Missing;
    if (fold(candidate) == fold(qa.answer)) return Verdict::Correct;

    std::string prompt = templates_.judge;
    prompt = replace_all(prompt, "{{question}}", qa.question);
    prompt = replace_all(prompt, "{{gold}}", qa.answer);
    prompt = replace_all(prompt, "{{candidate}}", candidate);

    ChatRequest req;
    req.messages = {{Role::User, prompt}};
    req.tag = "judge:answer:" + tag_suffix;

    ChatResponse resp = gateway_.complete(req, "eval");
    std::optional<Verdict> verdict = parse_verdict_reply(resp.text);
    if (!verdict) {
        ChatRequest repair = req;
        repair.messages.push_back({Role::Assistant, resp.text});
        repair.messages.push_back(
            {Role::User,
             "That reply was not the required JSON. Respond with exactly "
             "{\"verdict\": \"correct\" | \"incorrect\" | \"missing\"} and nothing else."});
        repair.tag = req.tag + ":retry";
        resp = gateway_.complete(repair, "eval");
        verdict = parse_verdict_reply(resp.text);
    }
    if (!verdict) {
        spdlog::warn("judge reply for {} unparseable after retry; counting incorrect",
                     tag_suffix);
        return Verdict::Incorrect;
    }
    return *verdict;
}

Report EvalHarness::run_benchmark(const std::vector<Method>& methods,
                                  const std::vector<QAPair>& pairs, int runs,
                                  std::vector<Prediction>* predictions_out,
                                  std::vector<VerdictRecord>* verdicts_out) {
    if (runs < 1) throw ContractViolation("run_benchmark needs runs >= 1");
    if (methods.empty()) throw ContractViolation("run_benchmark needs at least one method");
    if (pairs.empty()) throw InsufficientData("benchmark is empty");
    for (Method m : methods) {
        if (m == Method::SC && (params_.sc_samples < 3 || params_.sc_samples % 2 == 0)) {
            throw ConfigError("SC needs an odd sc_samples >= 3, have " +
                              std::to_string(params_.sc_samples));
        }
    }

    std::vector<QAPair> ordered = pairs;
    std::sort(ordered.begin(), ordered.end(),
              [](const QAPair& a, const QAPair& b) { return a.qa_id < b.qa_id; });

    // Every issue time must be servable before the first model call.
    for (const auto& qa : ordered) {
        if (!graph_.window().contains(qa.issue_time)) {
            throw ConfigError("qa " + qa.qa_id + " has issue_time " +
                              format_rfc3339(qa.issue_time) + " outside the graph window");
        }
    }

    std::map<Timestamp, KGSnapshot> snapshots;
    for (const auto& qa : ordered) {
        if (!snapshots.count(qa.issue_time)) {
            snapshots.emplace(qa.issue_time, snapshot_at(graph_, qa.issue_time));
        }
    }

    std::vector<Prediction> predictions;
    std::vector<VerdictRecord> verdicts;
    // method -> qtype -> run -> {correct, total}
    std::map<std::string, std::map<std::string, std::vector<std::pair<int, int>>>> counts;

    for (Method method : methods) {
        const std::string mname = method_name(method);
        for (int run = 0; run < runs; ++run) {
            for (const auto& qa : ordered) {
                const KGSnapshot& snapshot = snapshots.at(qa.issue_time);
                Prediction pred = answer_with_method(method, qa, snapshot, run);
                Verdict verdict =
                    pred.failed
                        ? Verdict::Incorrect
                        : judge_answer(qa, pred.answer,
                                       mname + ":" + qa.qa_id + ":r" + std::to_string(run));

                for (const std::string& key :
                     {std::string("overall"), question_type_name(qa.qtype)}) {
                    auto& cells = counts[mname][key];
                    if (cells.size() < static_cast<std::size_t>(runs)) cells.resize(runs);
                    cells[run].second += 1;
                    if (verdict == Verdict::Correct) cells[run].first += 1;
                }

                verdicts.push_back({qa.qa_id, method, run, verdict});
                predictions.push_back(std::move(pred));
            }
        }
    }

    const auto canonical = [](const auto& a, const auto& b) {
        const std::string ma = method_name(a.method), mb = method_name(b.method);
        if (ma != mb) return ma < mb;
        if (a.qa_id != b.qa_id) return a.qa_id < b.qa_id;
        return a.run_index < b.run_index;
    };
    std::sort(predictions.begin(), predictions.end(), canonical);
    std::sort(verdicts.begin(), verdicts.end(), canonical);

    Report report;
    report.runs = runs;
    for (Method m : methods) report.methods.push_back(method_name(m));
    for (const auto& [mname, by_key] : counts) {
        for (const auto& [key, cells] : by_key) {
            std::vector<double> per_run;
            per_run.reserve(cells.size());
            for (const auto& [correct, total] : cells) {
                per_run.push_back(total == 0 ? 0.0
                                             : 100.0 * static_cast<double>(correct) /
                                                   static_cast<double>(total));
            }
            report.accuracy[mname][key] = make_stat(std::move(per_run));
        }
    }

    if (predictions_out) *predictions_out = std::move(predictions);
    if (verdicts_out) *verdicts_out = std::move(verdicts);
    return report;
}

Json Report::to_json() const {
    Json acc = Json::object();
    for (const auto& [mname, by_key] : accuracy) {
        Json row = Json::object();
        for (const auto& [key, stat] : by_key) {
            row[key] = {{"mean", stat.mean}, {"std", stat.stddev}, {"per_run", stat.per_run}};
        }
        acc[mname] = std::move(row);
    }
    return {{"runs", runs}, {"methods", methods}, {"accuracy", acc}};
}

// --- fact recovery ------------------------------------------------------------

std::string verbalize_fact(const KnowledgeGraph& graph, const RelationEdge& edge) {
    const Entity* subject = graph.find_entity(edge.subject_id);
    const Entity* object = graph.find_entity(edge.object_id);
    if (!subject || !object) {
        throw ContractViolation("edge " + edge.edge_id + " has dangling endpoints");
    }
    return subject->name + " " + spaced(edge.predicate) + " " + object->name;
}

double fact_recovery_rate(const KnowledgeGraph& graph, const std::vector<FactRecord>& facts,
                          ModelGateway& gateway, double threshold) {
    if (facts.empty()) throw ContractViolation("fact_recovery_rate needs a non-empty fact list");
    if (graph.edge_count() == 0) return 0.0;

    std::vector<EmbeddingVector> triplet_vecs;
    triplet_vecs.reserve(graph.edge_count());
    for (const auto& edge : graph.edges()) {
        triplet_vecs.push_back(gateway.embed(verbalize_fact(graph, edge), "recovery"));
    }

    std::size_t recovered = 0;
    for (const auto& fact : facts) {
        const EmbeddingVector fvec = gateway.embed(fact.text, "recovery");
        for (const auto& tvec : triplet_vecs) {
            if (dot(fvec, tvec) >= threshold) {
                ++recovered;
                break;
            }
        }
    }
    return static_cast<double>(recovered) / static_cast<double>(facts.size());
}

// --- serialization ------------------------------------------------------------

Json prediction_to_json(const Prediction& p) {
    return {{"qa_id", p.qa_id},
            {"method", method_name(p.method)},
            {"run", p.run_index},
            {"answer", p.answer},
            {"retrieved_chunks", p.retrieved_chunks},
            {"injected_facts", p.injected_facts},
            {"tokens", p.tokens},
            {"latency_ms", p.latency_ms},
            {"failed", p.failed}};
}

Json verdict_record_to_json(const VerdictRecord& v) {
    return {{"qa_id", v.qa_id},
            {"method", method_name(v.method)},
            {"run", v.run_index},
            {"verdict", verdict_name(v.verdict)}};
}

Json fact_record_to_json(const FactRecord& f) {
    return {{"fact_id", f.fact_id}, {"text", f.text}};
}

FactRecord fact_record_from_json(const Json& j) {
    FactRecord f;
    try {
        f.fact_id = j.at("fact_id").get<std::string>();
        f.text = j.at("text").get<std::string>();
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad fact record: ") + e.what());
    }
    return f;
}

} // namespace forge
