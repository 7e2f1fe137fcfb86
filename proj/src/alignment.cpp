#include "forge/alignment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "forge/text.hpp"

namespace forge {
namespace {

const std::set<std::string>& function_words() {
    static const std::set<std::string> words = {"a",  "an", "the", "of",  "on",   "in",
                                                "to", "by", "at",  "for", "with", "is",
                                                "are", "was", "were", "be", "been", "its"};
    return words;
}

std::string strip_suffix(const std::string& w) {
    const std::size_t n = w.size();
    if (n > 5 && w.ends_with("ing")) return w.substr(0, n - 3);
    if (n > 4 && w.ends_with("ed")) return w.substr(0, n - 2);
    if (n > 4 && w.ends_with("es")) return w.substr(0, n - 2);
    if (n > 3 && w.ends_with("s")) return w.substr(0, n - 1);
    return w;
}

ProvenanceRef ref_from(const std::string& doc_id, const MentionSpan& span) {
    return {doc_id, span.section_label, span.char_start, span.char_end};
}

// Span must address a real slice of a real section.
bool span_valid(const Document& doc, const MentionSpan& span, std::string& why) {
    const Section* sec = doc.find_section(span.section_label);
    if (!sec) {
        why = "unknown section '" + span.section_label + "'";
        return false;
    }
    if (span.char_start >= span.char_end || span.char_end > sec->text.size()) {
        why = "span " + std::to_string(span.char_start) + "-" + std::to_string(span.char_end) +
              " outside section '" + span.section_label + "' (" +
              std::to_string(sec->text.size()) + " chars)";
        return false;
    }
    return true;
}

std::string render_document(const Document& doc) {
    std::string out = "TITLE: " + doc.title + "\n";
    for (const auto& s : doc.sections) {
        out += "SECTION " + s.label + ":\n" + s.text + "\n";
    }
    return out;
}

} // namespace

std::string canonical_relation_form(const std::string& phrase) {
    std::vector<std::string> kept;
    for (const auto& w : split_words(phrase)) {
        if (function_words().count(w)) continue;
        kept.push_back(strip_suffix(w));
    }
    return join(kept, " ");
}

AlignmentEngine::AlignmentEngine(ModelGateway& gateway, AlignmentOptions options)
    : gateway_(gateway), options_(std::move(options)) {
    if (options_.tau < 0.0 || options_.tau > 1.0) {
        throw ConfigError("alignment tau must be in [0, 1]");
    }
    if (options_.relation_threshold < 0.0 || options_.relation_threshold > 1.0) {
        throw ConfigError("relation threshold must be in [0, 1]");
    }
    if (options_.ann_k < 1) throw ConfigError("ann_k must be >= 1");
    if (options_.schema.empty()) throw ConfigError("alignment needs a non-empty schema");
    if (options_.prompt_template.find("{{document}}") == std::string::npos) {
        throw ConfigError("extraction prompt template needs a {{document}} placeholder");
    }
}

EmbeddingVector AlignmentEngine::embed_canonical(const std::string& canonical) {
    return gateway_.embed(canonical, "align");
}

std::optional<ExtractionBatch> AlignmentEngine::parse_reply(const std::string& text,
                                                            const Document& doc,
                                                            std::vector<std::string>& warnings) {
    Json parsed;
    try {
        parsed = Json::parse(text);
    } catch (const Json::parse_error&) {
        return std::nullopt;
    }
    if (!parsed.is_object() || !parsed.contains("entities") || !parsed.contains("relations") ||
        !parsed.at("entities").is_array() || !parsed.at("relations").is_array()) {
        return std::nullopt;
    }

    ExtractionBatch batch;
    batch.doc_id = doc.id;
    batch.doc_time = doc.submitted_at;

    std::set<std::string> names;
    for (const auto& e : parsed.at("entities")) {
        CandidateEntity cand;
        try {
            cand.type_label = e.at("type").get<std::string>();
            cand.name = e.at("name").get<std::string>();
            cand.description = e.value("description", "");
            cand.span = {e.at("section").get<std::string>(), e.at("start").get<std::size_t>(),
                         e.at("end").get<std::size_t>()};
        } catch (const Json::exception& ex) {
            warnings.push_back("doc " + doc.id + ": dropping malformed entity: " + ex.what());
            continue;
        }
        if (cand.name.empty() || cand.type_label.empty()) {
            warnings.push_back("doc " + doc.id + ": dropping entity with empty name or type");
            continue;
        }
        std::string why;
        if (!span_valid(doc, cand.span, why)) {
            warnings.push_back("doc " + doc.id + ": dropping entity '" + cand.name + "': " + why);
            continue;
        }
        names.insert(cand.name);
        batch.entities.push_back(std::move(cand));
    }

    for (const auto& r : parsed.at("relations")) {
        CandidateRelation rel;
        try {
            rel.subject_name = r.at("subject").get<std::string>();
            rel.predicate_phrase = r.at("predicate").get<std::string>();
            rel.object_name = r.at("object").get<std::string>();
            rel.span = {r.at("section").get<std::string>(), r.at("start").get<std::size_t>(),
                        r.at("end").get<std::size_t>()};
        } catch (const Json::exception& ex) {
            warnings.push_back("doc " + doc.id + ": dropping malformed relation: " + ex.what());
            continue;
        }
        if (rel.predicate_phrase.empty()) {
            warnings.push_back("doc " + doc.id + ": dropping relation with empty predicate");
            continue;
        }
        std::string why;
        if (!span_valid(doc, rel.span, why)) {
            warnings.push_back("doc " + doc.id + ": dropping relation '" + rel.predicate_phrase +
                               "': " + why);
            continue;
        }
        if (!names.count(rel.subject_name) || !names.count(rel.object_name)) {
            warnings.push_back("doc " + doc.id + ": dropping relation '" + rel.subject_name +
                               " -> " + rel.object_name +
                               "': endpoints are not extracted entities");
            continue;
        }
        batch.relations.push_back(std::move(rel));
    }
    return batch;
}

std::variant<ExtractionBatch, ExtractionFailure> AlignmentEngine::extract_batch(
    const Document& doc) {
    if (doc.sections.empty()) {
        throw ContractViolation("cannot extract from document without sections: " + doc.id);
    }
    const std::string prompt =
        replace_all(options_.prompt_template, "{{document}}", render_document(doc));

    ChatRequest req;
    req.messages.push_back({Role::User, prompt});
    req.temperature = 0.0;
    req.tag = "extract:" + doc.id;

    ChatResponse resp = gateway_.complete(req, "extract");
    std::int64_t tokens = resp.prompt_tokens + resp.completion_tokens;
    std::int64_t wall = resp.latency_ms;

    std::vector<std::string> warnings;
    auto batch = parse_reply(resp.text, doc, warnings);
    if (!batch) {
        // One repair attempt: quote the failure back and ask again.
        ChatRequest repair = req;
        repair.messages.push_back({Role::Assistant, resp.text.empty() ? "(empty)" : resp.text});
        repair.messages.push_back(
            {Role::User,
             "That reply was not a single valid JSON object with \"entities\" and "
             "\"relations\" arrays. Reply again with exactly one JSON object and nothing else."});
        repair.tag = req.tag + ":retry";
        ChatResponse second = gateway_.complete(repair, "extract");
        tokens += second.prompt_tokens + second.completion_tokens;
        wall += second.latency_ms;
        warnings.clear();
        batch = parse_reply(second.text, doc, warnings);
        if (!batch) {
            gateway_.ledger()->record_document({doc.id,
                                                static_cast<std::int64_t>(doc.char_count()),
                                                tokens, wall});
            return ExtractionFailure{doc.id, "extraction reply unparseable after repair retry"};
        }
    }
    for (const auto& w : warnings) spdlog::warn("{}", w);
    gateway_.ledger()->record_document(
        {doc.id, static_cast<std::int64_t>(doc.char_count()), tokens, wall});
    return std::move(*batch);
}

AlignmentDecision AlignmentEngine::align_entity(const CandidateEntity& cand,
                                                const AnnIndex& index) {
    if (cand.name.empty()) throw ContractViolation("candidate entity has no name");
    const EmbeddingVector vec = gateway_.embed(cand.composed_text(), "align");
    AlignmentDecision decision;
    if (index.size() == 0) {
        decision.outcome = AlignmentDecision::Outcome::Created;
        return decision;
    }
    const auto hits = index.search(vec, static_cast<std::size_t>(options_.ann_k));
    if (hits.empty()) {
        decision.outcome = AlignmentDecision::Outcome::Created;
        return decision;
    }
    decision.similarity = hits.front().similarity;
    if (hits.front().similarity >= options_.tau) {
        decision.outcome = AlignmentDecision::Outcome::Merged;
        decision.entity_id = hits.front().id;
    } else {
        decision.outcome = AlignmentDecision::Outcome::Created;
    }
    return decision;
}

std::optional<std::string> AlignmentEngine::normalize_relation(const std::string& phrase) {
    if (phrase.empty()) throw ContractViolation("cannot normalize an empty predicate phrase");
    const std::string form = canonical_relation_form(phrase);
    if (form.empty()) return std::nullopt;

    if (schema_vecs_.empty()) {
        for (const auto& pred : options_.schema) {
            const std::string pred_form = canonical_relation_form(pred);
            if (pred_form.empty()) {
                throw ConfigError("schema predicate '" + pred + "' canonicalizes to nothing");
            }
            schema_vecs_[pred] = embed_canonical(pred_form);
        }
    }

    const EmbeddingVector vec = embed_canonical(form);
    std::string best_pred;
    double best_sim = -1.0;
    for (const auto& [pred, pvec] : schema_vecs_) { // map order: lexicographic tie-break
        const double sim = dot(vec, pvec);
        if (sim > best_sim) {
            best_sim = sim;
            best_pred = pred;
        }
    }
    if (best_sim < options_.relation_threshold) return std::nullopt;
    return best_pred;
}

double AlignmentEngine::score_confidence(const RelationEdge& edge, Timestamp now) {
    if (edge.frequency < 1) throw ContractViolation("edge frequency must be >= 1");
    const double f_hat = std::min(
        1.0, std::log1p(static_cast<double>(edge.frequency)) / std::log(17.0));
    const double age_days = std::max(0.0, days_between(edge.last_seen, now));
    const double r_hat = std::exp(-age_days / 180.0);
    const double s_hat = std::min(1.0, static_cast<double>(edge.evidence.size()) / 3.0);
    return std::clamp(0.4 * f_hat + 0.3 * r_hat + 0.3 * s_hat, 0.0, 1.0);
}

UpdateDelta AlignmentEngine::apply_update(KnowledgeGraph& graph, AnnIndex& index,
                                          std::vector<ExtractionBatch> batches) {
    // Validate everything before touching the graph.
    for (const auto& batch : batches) {
        if (batch.doc_id.empty()) throw ContractViolation("extraction batch without doc_id");
        std::set<std::string> names;
        for (const auto& e : batch.entities) {
            if (e.name.empty() || e.type_label.empty()) {
                throw ContractViolation("batch " + batch.doc_id +
                                        " holds an entity without name or type");
            }
            names.insert(e.name);
        }
        for (const auto& r : batch.relations) {
            if (!names.count(r.subject_name) || !names.count(r.object_name)) {
                throw ContractViolation("batch " + batch.doc_id + " relation '" + r.subject_name +
                                        " -> " + r.object_name +
                                        "' references entities outside the batch");
            }
        }
    }
    std::stable_sort(batches.begin(), batches.end(),
                     [](const ExtractionBatch& a, const ExtractionBatch& b) {
                         return a.doc_id < b.doc_id;
                     });

    UpdateDelta delta;
    using Clock = std::chrono::steady_clock;

    for (const auto& batch : batches) {
        std::map<std::string, std::string> resolved; // candidate name -> entity id

        std::vector<const CandidateEntity*> queue;
        for (const auto& cand : batch.entities) queue.push_back(&cand);

        // Transport hiccups defer a candidate once; the second failure drops
        // it (and later its relations) with a warning instead of aborting
        // the whole update.
        std::vector<const CandidateEntity*> deferred;
        for (int round = 0; round < 2 && !queue.empty(); ++round) {
            for (const CandidateEntity* cand : queue) {
                const auto t0 = Clock::now();
                try {
                    const EmbeddingVector vec = gateway_.embed(cand->composed_text(), "align");
                    AlignmentDecision decision;
                    if (index.size() > 0) {
                        const auto hits =
                            index.search(vec, static_cast<std::size_t>(options_.ann_k));
                        if (!hits.empty() && hits.front().similarity >= options_.tau) {
                            decision.outcome = AlignmentDecision::Outcome::Merged;
                            decision.entity_id = hits.front().id;
                            decision.similarity = hits.front().similarity;
                        }
                    }
                    if (decision.outcome == AlignmentDecision::Outcome::Merged) {
                        Entity* ent = graph.mutable_entity(decision.entity_id);
                        const std::string before = ent->composed_text();
                        if (cand->name != ent->name) ent->aliases.insert(cand->name);
                        if (cand->description.size() > ent->description.size()) {
                            ent->description = cand->description;
                        }
                        ent->provenance.push_back(ref_from(batch.doc_id, cand->span));
                        std::sort(ent->provenance.begin(), ent->provenance.end());
                        ent->provenance.erase(
                            std::unique(ent->provenance.begin(), ent->provenance.end()),
                            ent->provenance.end());
                        ent->first_seen = std::min(ent->first_seen, batch.doc_time);
                        if (ent->composed_text() != before) {
                            index.update(ent->entity_id,
                                         gateway_.embed(ent->composed_text(), "align"));
                        }
                        resolved[cand->name] = ent->entity_id;
                        ++delta.entities_merged;
                    } else {
                        Entity e;
                        e.type_label = cand->type_label;
                        e.name = cand->name;
                        e.description = cand->description;
                        e.provenance.push_back(ref_from(batch.doc_id, cand->span));
                        e.first_seen = batch.doc_time;
                        const std::string id = graph.add_entity(std::move(e));
                        index.add(id, vec);
                        resolved[cand->name] = id;
                        ++delta.entities_created;
                    }
                } catch (const TransportError& e) {
                    if (round == 0) {
                        deferred.push_back(cand);
                    } else {
                        ++delta.embeddings_deferred;
                        spdlog::warn("doc {}: dropping candidate '{}' after repeated embedding "
                                     "failures: {}",
                                     batch.doc_id, cand->name, e.what());
                    }
                }
                delta.align_wall_ms += std::chrono::duration_cast<std::chrono::milliseconds>(
                                           Clock::now() - t0)
                                           .count();
            }
            queue = std::move(deferred);
            deferred.clear();
        }

        for (const auto& rel : batch.relations) {
            const auto canon = normalize_relation(rel.predicate_phrase);
            if (!canon) {
                ++delta.relations_rejected;
                spdlog::warn("doc {}: predicate '{}' matches no schema relation", batch.doc_id,
                             rel.predicate_phrase);
                continue;
            }
            const auto subj = resolved.find(rel.subject_name);
            const auto obj = resolved.find(rel.object_name);
            if (subj == resolved.end() || obj == resolved.end()) {
                spdlog::warn("doc {}: dropping relation '{} -> {}': endpoint was not aligned",
                             batch.doc_id, rel.subject_name, rel.object_name);
                continue;
            }
            const ProvenanceRef ref = ref_from(batch.doc_id, rel.span);
            if (RelationEdge* existing =
                    graph.find_edge_by_key(subj->second, *canon, obj->second)) {
                existing->frequency += 1;
                existing->evidence.push_back(ref);
                std::sort(existing->evidence.begin(), existing->evidence.end());
                existing->evidence.erase(
                    std::unique(existing->evidence.begin(), existing->evidence.end()),
                    existing->evidence.end());
                existing->first_seen = std::min(existing->first_seen, batch.doc_time);
                existing->last_seen = std::max(existing->last_seen, batch.doc_time);
                ++delta.edges_reinforced;
            } else {
                RelationEdge e;
                e.subject_id = subj->second;
                e.object_id = obj->second;
                e.predicate = *canon;
                e.evidence.push_back(ref);
                e.frequency = 1;
                e.first_seen = e.last_seen = batch.doc_time;
                graph.add_edge(std::move(e));
                ++delta.edges_created;
            }
        }
    }

    const Timestamp now = graph.latest_evidence_time();
    for (const auto& e : graph.edges()) {
        graph.mutable_edge(e.edge_id)->confidence = score_confidence(e, now);
    }
    return delta;
}

} // namespace forge
