#include "forge/qa_generator.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <spdlog/spdlog.h>

#include "forge/text.hpp"

namespace forge {
namespace {

std::string sanitize_field(const std::string& s) {
    return collapse_whitespace(replace_all(s, "|", "/"));
}

// Loose equality for answer grounding: case/whitespace-insensitive, ignores
// trailing sentence punctuation.
std::string fold(const std::string& s) {
    std::string t = collapse_whitespace(to_lower(s));
    while (!t.empty() && (t.back() == '.' || t.back() == '?' || t.back() == '!')) t.pop_back();
    return trim(t);
}

std::optional<Json> parse_generation_reply(const std::string& text) {
    Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("question") || !j["question"].is_string()) return std::nullopt;
    if (!j.contains("answer") || !j["answer"].is_string()) return std::nullopt;
    if (!j.contains("abstain") || !j["abstain"].is_boolean()) return std::nullopt;
    return j;
}

std::string format_id(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, n);
    return buf;
}

} // namespace

std::string question_type_name(QuestionType t) {
    switch (t) {
    case QuestionType::SingleHop: return "single_hop";
    case QuestionType::SingleHopConditional: return "single_hop_conditional";
    case QuestionType::MultiHop: return "multi_hop";
    case QuestionType::MultiHopDifficult: return "multi_hop_difficult";
    case QuestionType::Counterfactual: return "counterfactual";
    case QuestionType::OpenEnded: return "open_ended";
    }
    throw ContractViolation("unhandled question type");
}

QuestionType question_type_from(const std::string& name) {
    for (QuestionType t : all_question_types()) {
        if (question_type_name(t) == name) return t;
    }
    throw DataError("unknown question type: " + name);
}

const std::vector<QuestionType>& all_question_types() {
    static const std::vector<QuestionType> types = {
        QuestionType::SingleHop,     QuestionType::SingleHopConditional,
        QuestionType::MultiHop,      QuestionType::MultiHopDifficult,
        QuestionType::Counterfactual, QuestionType::OpenEnded,
    };
    return types;
}

bool type_compatible(QuestionType t, std::size_t k) {
    switch (t) {
    case QuestionType::SingleHop:
    case QuestionType::SingleHopConditional: return k == 1;
    case QuestionType::MultiHop:
    case QuestionType::MultiHopDifficult: return k >= 2;
    case QuestionType::Counterfactual:
    case QuestionType::OpenEnded: return k >= 1;
    }
    return false;
}

std::optional<PerturbationDescriptor> perturb_for_counterfactual(
    const ReasoningPath& path, const KGSnapshot& snapshot,
    const std::vector<std::string>& schema, Rng& rng) {
    if (path.edge_ids.empty()) throw ContractViolation("cannot perturb an edgeless path");

    std::vector<PerturbationDescriptor> alternatives;

    // Predicate swaps, hop by hop, schema order.
    for (std::size_t hop = 0; hop < path.edge_ids.size(); ++hop) {
        const std::string& current = snapshot.edge(path.edge_ids[hop])->predicate;
        for (const auto& pred : schema) {
            if (pred == current) continue;
            PerturbationDescriptor d;
            d.kind = "predicate";
            d.element_index = hop + 1; // hops are 1-based, mirroring r_1..r_k
            d.original = current;
            d.perturbed = pred;
            alternatives.push_back(std::move(d));
        }
    }

    // Entity swaps on non-terminal nodes: same type, not already on the
    // path (a swap that re-introduces a path node would collapse the chain
    // instead of minimally perturbing it).
    const std::set<std::string> on_path(path.node_ids.begin(), path.node_ids.end());
    for (std::size_t pos = 0; pos + 1 < path.node_ids.size(); ++pos) {
        const Entity* original = snapshot.entity(path.node_ids[pos]);
        for (const auto& e : snapshot.entities()) {
            if (e.type_label != original->type_label || on_path.count(e.entity_id)) continue;
            PerturbationDescriptor d;
            d.kind = "entity";
            d.element_index = pos;
            d.original = original->name;
            d.perturbed = e.name;
            d.perturbed_entity_id = e.entity_id;
            alternatives.push_back(std::move(d));
        }
    }

    if (alternatives.empty()) return std::nullopt;
    return alternatives[rng.below(alternatives.size())];
}

std::string path_block(const ReasoningPath& path, QuestionType qtype, const KGSnapshot& snapshot,
                       std::size_t evidence_count, const std::string& condition,
                       const std::optional<PerturbationDescriptor>& perturbation) {
    std::string out = "[PATH]\n";
    out += "qtype: " + question_type_name(qtype) + "\n";
    out += "k: " + std::to_string(path.k()) + "\n";
    for (std::size_t i = 0; i < path.node_ids.size(); ++i) {
        const Entity* e = snapshot.entity(path.node_ids[i]);
        out += "node" + std::to_string(i) + ": " + sanitize_field(e->name) + " | " +
               sanitize_field(e->type_label) + "\n";
        if (i < path.edge_ids.size()) {
            out += "hop" + std::to_string(i + 1) + ": " +
                   sanitize_field(snapshot.edge(path.edge_ids[i])->predicate) + " | " +
                   hop_direction_name(path.directions[i]) + "\n";
        }
    }
    if (!condition.empty()) out += "condition: " + sanitize_field(condition) + "\n";
    if (perturbation) {
        out += "perturbation: " + sanitize_field(perturbation->kind) + " | " +
               std::to_string(perturbation->element_index) + " | " +
               sanitize_field(perturbation->original) + " | " +
               sanitize_field(perturbation->perturbed) + "\n";
    }
    out += "evidence_count: " + std::to_string(evidence_count) + "\n";
    out += "[/PATH]";
    return out;
}

std::string derive_condition(const ReasoningPath& path, const Corpus& corpus) {
    Timestamp latest = 0;
    bool found = false;
    for (const auto& ref : path.evidence) {
        const Document* doc = corpus.find(ref.doc_id);
        if (!doc || doc->submitted_at > path.as_of) continue;
        latest = found ? std::max(latest, doc->submitted_at) : doc->submitted_at;
        found = true;
    }
    if (!found) latest = path.as_of;
    // "2025-03-14T00:00:00Z" -> "2025-03"
    return "according to records dated " + format_rfc3339(latest).substr(0, 7);
}

QaGenerator::QaGenerator(ModelGateway& gateway, GenerationOptions options)
    : gateway_(gateway), options_(std::move(options)) {
    if (options_.exemplars_per_type < 1) {
        throw ConfigError("exemplars_per_type must be >= 1");
    }
    for (const auto& [qtype, text] : options_.templates) {
        if (text.find("{{path_block}}") == std::string::npos) {
            throw ConfigError("generation template for '" + question_type_name(qtype) +
                              "' lacks the {{path_block}} hole");
        }
    }
}

std::string QaGenerator::render_prompt(
    const ReasoningPath& path, QuestionType qtype, const KGSnapshot& snapshot,
    const std::vector<EvidenceItem>& evidence, const std::string& condition,
    const std::optional<PerturbationDescriptor>& perturbation) const {
    const auto tpl = options_.templates.find(qtype);
    if (tpl == options_.templates.end()) {
        throw ConfigError("no generation template for type '" + question_type_name(qtype) + "'");
    }

    std::string exemplar_text;
    int used = 0;
    for (const auto& ex : options_.exemplars) {
        if (ex.qtype != qtype) continue;
        exemplar_text += "Q: " + ex.question + "\nA: " + ex.answer + "\n";
        if (++used >= options_.exemplars_per_type) break;
    }
    if (used == 0) {
        throw ConfigError("no exemplar available for type '" + question_type_name(qtype) + "'");
    }

    std::string evidence_text;
    for (const auto& item : evidence) {
        evidence_text += "- (" + item.ref.doc_id + " / " + item.ref.section_label + ") " +
                         collapse_whitespace(item.text) + "\n";
    }

    std::string prompt = tpl->second;
    prompt = replace_all(prompt, "{{exemplars}}", exemplar_text);
    prompt = replace_all(prompt, "{{path_block}}",
                         path_block(path, qtype, snapshot, evidence.size(), condition,
                                    perturbation));
    prompt = replace_all(prompt, "{{evidence}}", evidence_text);
    return prompt;
}

std::variant<QAPair, Abstention> QaGenerator::generate(
    const ReasoningPath& path, QuestionType qtype, const std::string& qa_id,
    const KGSnapshot& snapshot, const Corpus& corpus,
    const std::optional<PerturbationDescriptor>& perturbation) {
    if (!type_compatible(qtype, path.k())) {
        throw ContractViolation("question type '" + question_type_name(qtype) +
                                "' is incompatible with a k=" + std::to_string(path.k()) +
                                " path");
    }
    if (qtype == QuestionType::Counterfactual) {
        if (!perturbation) {
            throw ContractViolation("counterfactual generation needs a perturbation descriptor");
        }
        if (perturbation->kind != "predicate" && perturbation->kind != "entity") {
            throw ContractViolation("unknown perturbation kind '" + perturbation->kind + "'");
        }
    } else if (perturbation) {
        throw ContractViolation("perturbations only apply to counterfactual generation");
    }

    const std::vector<EvidenceItem> evidence = gather_evidence(path, corpus);
    if (evidence.empty()) return Abstention{"no-evidence"};

    const std::string condition = qtype == QuestionType::SingleHopConditional
                                      ? derive_condition(path, corpus)
                                      : std::string();
    const std::string prompt =
        render_prompt(path, qtype, snapshot, evidence, condition, perturbation);

    const std::string tag = "genqa:" + question_type_name(qtype) + ":" + qa_id;
    ChatRequest req;
    req.messages = {{Role::User, prompt}};
    req.tag = tag;

    ChatResponse resp = gateway_.complete(req, "genqa");
    std::optional<Json> reply = parse_generation_reply(resp.text);
    if (!reply) {
        // One repair round: restate the envelope, carry the path block so
        // the retry is self-contained.
        ChatRequest repair = req;
        repair.messages.push_back({Role::Assistant, resp.text});
        repair.messages.push_back(
            {Role::User,
             "That reply was not the required JSON. Respond with exactly one JSON object "
             "{\"question\": string, \"answer\": string, \"abstain\": bool} and nothing else, "
             "for this path:\n\n" +
                 path_block(path, qtype, snapshot, evidence.size(), condition, perturbation)});
        repair.tag = tag + ":retry";
        resp = gateway_.complete(repair, "genqa");
        reply = parse_generation_reply(resp.text);
        if (!reply) {
            spdlog::warn("generation reply for {} unparseable after retry", qa_id);
            return Abstention{"unparseable-reply"};
        }
    }

    if ((*reply)["abstain"].get<bool>()) return Abstention{"model-abstained"};
    std::string question = collapse_whitespace((*reply)["question"].get<std::string>());
    std::string answer = collapse_whitespace((*reply)["answer"].get<std::string>());
    if (question.empty() || answer.empty()) return Abstention{"empty-output"};

    const bool entity_answer =
        qtype == QuestionType::SingleHop || qtype == QuestionType::SingleHopConditional ||
        qtype == QuestionType::MultiHop || qtype == QuestionType::MultiHopDifficult;

    if (entity_answer) {
        const Entity* terminal = snapshot.entity(path.terminal());
        bool grounded = fold(answer) == fold(terminal->name);
        for (const auto& alias : terminal->aliases) {
            if (grounded) break;
            grounded = fold(answer) == fold(alias);
        }
        if (!grounded) {
            spdlog::warn("answer for {} does not name the terminal entity; abstaining", qa_id);
            return Abstention{"ungrounded-answer"};
        }
        answer = terminal->name; // pin to the canonical surface form
    }

    if (qtype == QuestionType::MultiHop || qtype == QuestionType::MultiHopDifficult) {
        for (std::size_t i = 1; i + 1 < path.node_ids.size(); ++i) {
            const Entity* mid = snapshot.entity(path.node_ids[i]);
            std::vector<std::string> surfaces = {mid->name};
            surfaces.insert(surfaces.end(), mid->aliases.begin(), mid->aliases.end());
            for (const auto& s : surfaces) {
                if (contains_token(question, s)) {
                    spdlog::warn("question for {} leaks intermediate '{}'; abstaining", qa_id, s);
                    return Abstention{"intermediate-leak"};
                }
            }
        }
    }

    if (qtype == QuestionType::Counterfactual) {
        // The cautious-answer rule: no entity surface may appear in the
        // answer unless the path, the perturbation, or the evidence text
        // itself introduces it.
        std::set<std::string> allowed = {to_lower(perturbation->original),
                                         to_lower(perturbation->perturbed)};
        for (const auto& node_id : path.node_ids) {
            const Entity* e = snapshot.entity(node_id);
            allowed.insert(to_lower(e->name));
            for (const auto& a : e->aliases) allowed.insert(to_lower(a));
        }
        for (const auto& e : snapshot.entities()) {
            std::vector<std::string> surfaces = {e.name};
            surfaces.insert(surfaces.end(), e.aliases.begin(), e.aliases.end());
            for (const auto& s : surfaces) {
                if (allowed.count(to_lower(s))) continue;
                bool in_evidence = false;
                for (const auto& item : evidence) {
                    if (contains_token(item.text, s)) {
                        in_evidence = true;
                        break;
                    }
                }
                if (!in_evidence && contains_token(answer, s)) {
                    spdlog::warn("counterfactual answer for {} introduces '{}'; abstaining",
                                 qa_id, s);
                    return Abstention{"unsupported-entity"};
                }
            }
        }
    }

    QAPair qa;
    qa.qa_id = qa_id;
    qa.domain_id = snapshot.domain_id();
    qa.qtype = qtype;
    qa.question = question;
    qa.answer = answer;
    qa.path_id = path.path_id;
    qa.prompt_tag = tag;
    qa.model_id = gateway_.backend()->identity();

    Timestamp issue = 0;
    for (const auto& item : evidence) {
        qa.evidence_refs.push_back(item.ref);
        issue = std::max(issue, corpus.find(item.ref.doc_id)->submitted_at);
    }
    if (perturbation && perturbation->kind == "entity") {
        // The pair only becomes answerable once the stand-in entity itself
        // is on the record.
        issue = std::max(issue, snapshot.entity(perturbation->perturbed_entity_id)->first_seen);
    }
    qa.issue_time = issue;
    return qa;
}

GenerationPlan plan_generation(const KGSnapshot& snapshot,
                               const std::map<QuestionType, int>& targets,
                               const SamplingPolicy& policy,
                               const std::vector<std::string>& schema, Rng& rng) {
    for (const auto& [qtype, count] : targets) {
        if (count < 0) {
            throw ContractViolation("negative target for type '" + question_type_name(qtype) +
                                    "'");
        }
    }

    GenerationPlan plan;
    for (QuestionType qtype : all_question_types()) {
        const auto it = targets.find(qtype);
        if (it == targets.end() || it->second == 0) continue;
        const int target = it->second;

        SamplingPolicy p = policy;
        switch (qtype) {
        case QuestionType::SingleHop:
        case QuestionType::SingleHopConditional:
            p.k_min = p.k_max = 1;
            break;
        case QuestionType::MultiHop:
            p.k_min = std::max(2, policy.k_min);
            p.k_max = std::max(p.k_min, policy.k_max);
            break;
        case QuestionType::MultiHopDifficult:
            p.k_min = std::max(2, policy.k_min);
            p.k_max = std::max(p.k_min, policy.k_max);
            p.bias = PathBias::HighDegree;
            break;
        case QuestionType::Counterfactual:
        case QuestionType::OpenEnded:
            break;
        }

        std::set<std::string> signatures; // per type: one question per path shape
        int made = 0;
        // Each sample_path call already burns up to max_attempts internal
        // rejections, so the outer budget stays small.
        int budget = target * 20;
        while (made < target && budget-- > 0) {
            std::optional<ReasoningPath> path = sample_path(snapshot, p, rng);
            if (!path) break; // sampler exhausted; more outer tries won't help
            const std::string sig = join(path->node_ids, "|") + "//" + join(path->edge_ids, "|");
            if (!signatures.insert(sig).second) continue;

            PlanEntry entry;
            entry.qtype = qtype;
            if (qtype == QuestionType::Counterfactual) {
                entry.perturbation = perturb_for_counterfactual(*path, snapshot, schema, rng);
                if (!entry.perturbation) {
                    signatures.erase(sig);
                    continue; // not perturbable; try another path
                }
            }
            entry.path = std::move(*path);
            plan.entries.push_back(std::move(entry));
            ++made;
        }
        if (made < target) plan.shortfall[qtype] = target - made;
    }

    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        plan.entries[i].path.path_id = format_id("p", i);
    }
    return plan;
}

Json qa_to_json(const QAPair& qa) {
    Json refs = Json::array();
    for (const auto& r : qa.evidence_refs) refs.push_back(provenance_to_json(r));
    return {{"qa_id", qa.qa_id},
            {"domain_id", qa.domain_id},
            {"qtype", question_type_name(qa.qtype)},
            {"question", qa.question},
            {"answer", qa.answer},
            {"issue_time", format_rfc3339(qa.issue_time)},
            {"path_id", qa.path_id},
            {"evidence_refs", refs},
            {"trace", {{"prompt_tag", qa.prompt_tag}, {"model_id", qa.model_id}}}};
}

QAPair qa_from_json(const Json& j) {
    QAPair qa;
    try {
        qa.qa_id = j.at("qa_id").get<std::string>();
        qa.domain_id = j.at("domain_id").get<std::string>();
        qa.qtype = question_type_from(j.at("qtype").get<std::string>());
        qa.question = j.at("question").get<std::string>();
        qa.answer = j.at("answer").get<std::string>();
        qa.issue_time = parse_rfc3339(j.at("issue_time").get<std::string>());
        qa.path_id = j.at("path_id").get<std::string>();
        for (const auto& r : j.at("evidence_refs")) {
            qa.evidence_refs.push_back(provenance_from_json(r));
        }
        const Json& trace = j.at("trace");
        qa.prompt_tag = trace.value("prompt_tag", "");
        qa.model_id = trace.value("model_id", "");
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad qa record: ") + e.what());
    }
    return qa;
}

Json exemplar_to_json(const Exemplar& e) {
    return {{"qtype", question_type_name(e.qtype)},
            {"question", e.question},
            {"answer", e.answer}};
}

Exemplar exemplar_from_json(const Json& j) {
    Exemplar e;
    try {
        e.qtype = question_type_from(j.at("qtype").get<std::string>());
        e.question = j.at("question").get<std::string>();
        e.answer = j.at("answer").get<std::string>();
    } catch (const Json::exception& ex) {
        throw DataError(std::string("bad exemplar record: ") + ex.what());
    }
    return e;
}

} // namespace forge
