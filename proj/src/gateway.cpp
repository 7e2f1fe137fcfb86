#include "forge/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "forge/text.hpp"

namespace forge {
namespace {

std::int64_t ceil_div4(std::size_t chars) {
    return static_cast<std::int64_t>((chars + 3) / 4);
}

const std::string* last_user_text(const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role == Role::User) return &it->text;
    }
    return req.messages.empty() ? nullptr : &req.messages.back().text;
}

// --- machine-readable path block -------------------------------------------
//
// Generation and judge prompts carry a [PATH]...[/PATH] block with simple
// "key: value" lines. The mock synthesizers answer from it, which keeps the
// offline pipeline closed-loop without scripting every sampled path.

struct PathBlock {
    std::map<std::string, std::string> kv;

    bool has(const std::string& k) const { return kv.count(k) > 0; }
    std::string get(const std::string& k) const {
        auto it = kv.find(k);
        return it == kv.end() ? std::string() : it->second;
    }
};

PathBlock parse_path_block(const std::string& text) {
    PathBlock block;
    bool inside = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string line =
            trim(text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
        if (line == "[PATH]") {
            inside = true;
        } else if (line == "[/PATH]") {
            break;
        } else if (inside) {
            const std::size_t colon = line.find(':');
            if (colon != std::string::npos) {
                block.kv[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
            }
        }
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return block;
}

// "AtlasRL | method" -> {"AtlasRL", "method"}
std::vector<std::string> split_fields(const std::string& v) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t bar = v.find('|', pos);
        out.push_back(trim(v.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos)));
        if (bar == std::string::npos) break;
        pos = bar + 1;
    }
    return out;
}

std::string spaced(const std::string& predicate) {
    return replace_all(predicate, "_", " ");
}

// Verb surface forms keep synthesized questions from collapsing onto one
// template (near-duplicate detection would then eat them).
std::string verb_infinitive(const std::string& pred) {
    if (pred == "uses") return "rely on";
    if (pred == "evaluates_on") return "run evaluations on";
    if (pred == "addresses") return "aim to solve";
    if (pred == "outperforms") return "claim gains over";
    if (pred == "reports") return "report results in terms of";
    if (pred == "extends") return "build directly upon";
    return "connect through " + spaced(pred) + " to";
}

std::string verb_third_person(const std::string& pred) {
    if (pred == "uses") return "relies on";
    if (pred == "evaluates_on") return "runs evaluations on";
    if (pred == "addresses") return "aims to solve";
    if (pred == "outperforms") return "claims gains over";
    if (pred == "reports") return "reports results in terms of";
    if (pred == "extends") return "builds directly upon";
    return "connects through " + spaced(pred) + " to";
}

Json synth_generation(const PathBlock& b) {
    Json out;
    out["abstain"] = false;
    if (!b.has("k") || !b.has("node0") || !b.has("qtype")) {
        out["abstain"] = true;
        out["question"] = "";
        out["answer"] = "";
        return out;
    }
    if (b.get("evidence_count") == "0") {
        out["abstain"] = true;
        out["question"] = "";
        out["answer"] = "";
        return out;
    }
    const int k = std::max(1, std::atoi(b.get("k").c_str()));
    const std::string qtype = b.get("qtype");
    const auto node0 = split_fields(b.get("node0"));
    const auto terminal = split_fields(b.get("node" + std::to_string(k)));
    const std::string n0 = node0.empty() ? "" : node0[0];
    const std::string tname = terminal.empty() ? "" : terminal[0];
    const std::string ttype = terminal.size() > 1 ? terminal[1] : "entity";

    std::vector<std::string> preds, dirs;
    for (int i = 1; i <= k; ++i) {
        const auto hop = split_fields(b.get("hop" + std::to_string(i)));
        preds.push_back(hop.empty() ? "" : hop[0]);
        dirs.push_back(hop.size() > 1 ? hop[1] : "forward");
    }

    std::string question, answer;
    if (qtype == "single_hop" || qtype == "single_hop_conditional") {
        const bool fwd = dirs[0] == "forward";
        const std::string cond =
            qtype == "single_hop_conditional" ? " " + b.get("condition") : "";
        if (fwd) {
            question = "Which " + ttype + " does " + n0 + " " + verb_infinitive(preds[0]) +
                       cond + "?";
        } else {
            question = "Which " + ttype + " " + verb_third_person(preds[0]) + " " + n0 + cond + "?";
        }
        answer = tname;
    } else if (qtype == "multi_hop" || qtype == "multi_hop_difficult") {
        std::vector<std::string> steps;
        for (int i = 0; i < k; ++i) {
            steps.push_back((dirs[i] == "forward" ? "moving forward along '" :
                                                    "moving backward along '") +
                            preds[i] + "'");
        }
        question = "Starting from " + n0 + ", which " + ttype + " is reached after " +
                   std::to_string(k) + " step" + (k > 1 ? "s" : "") + ": " +
                   join(steps, ", then ") + "?";
        answer = tname;
    } else if (qtype == "counterfactual") {
        const auto pert = split_fields(b.get("perturbation"));
        const std::string kind = pert.empty() ? "" : pert[0];
        const std::string original = pert.size() > 2 ? pert[2] : "";
        const std::string perturbed = pert.size() > 3 ? pert[3] : "";
        if (kind == "predicate") {
            question = "Suppose the record showed '" + perturbed + "' instead of '" + original +
                       "' on that step: would the documented connection from " + n0 + " to " +
                       tname + " still be supported, and why?";
            answer = "No. The evidence records '" + original + "' on that step, not '" +
                     perturbed + "', so the documented chain from " + n0 + " to " + tname +
                     " no longer holds under that change.";
        } else {
            question = "Suppose " + perturbed + " stood in for " + original +
                       " on this chain: would the documented connection from " + n0 + " to " +
                       tname + " still be supported, and why?";
            answer = "No. The recorded evidence involves " + original + ", not " + perturbed +
                     "; substituting " + perturbed + " breaks the documented chain from " + n0 +
                     " to " + tname + ".";
        }
    } else { // open_ended
        std::vector<std::string> chain;
        for (const auto& p : preds) chain.push_back("'" + p + "'");
        question = "Drawing only on the published record, how does " + n0 + " relate to " +
                   tname + "?";
        answer = n0 + " reaches " + tname + " through " + std::to_string(k) +
                 " documented step" + (k > 1 ? "s" : "") + " (" + join(chain, " then ") +
                 "); the cited records describe each link directly.";
    }
    out["question"] = question;
    out["answer"] = answer;
    return out;
}

std::string extract_between(const std::string& text, const std::string& begin,
                            const std::string& end) {
    const std::size_t b = text.find(begin);
    if (b == std::string::npos) return {};
    const std::size_t from = b + begin.size();
    const std::size_t e = text.find(end, from);
    if (e == std::string::npos) return trim(text.substr(from));
    return trim(text.substr(from, e - from));
}

std::string first_line_after(const std::string& text, const std::string& marker) {
    const std::size_t p = text.find(marker);
    if (p == std::string::npos) return {};
    const std::size_t from = p + marker.size();
    const std::size_t nl = text.find('\n', from);
    return trim(text.substr(from, nl == std::string::npos ? std::string::npos : nl - from));
}

std::string normalize_for_match(const std::string& s) {
    std::string t = collapse_whitespace(to_lower(s));
    while (!t.empty() && (t.back() == '?' || t.back() == '.' || t.back() == '!')) t.pop_back();
    return trim(t);
}

Json synth_answer_judgement(const std::string& prompt) {
    const std::string gold = normalize_for_match(first_line_after(prompt, "GOLD:"));
    const std::string cand =
        normalize_for_match(extract_between(prompt, "CANDIDATE START", "CANDIDATE END"));
    Json out;
    if (cand.empty()) {
        out["verdict"] = "missing";
    } else if (!gold.empty() && cand.find(gold) != std::string::npos) {
        out["verdict"] = "correct";
    } else {
        out["verdict"] = "incorrect";
    }
    return out;
}

std::uint64_t fnv1a64(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

std::string role_name(Role r) {
    switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) {
        throw ContractViolation("dot: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double na = 0.0, nb = 0.0, d = 0.0;
    if (a.size() != b.size()) {
        throw ContractViolation("cosine: dimension mismatch");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return d / std::sqrt(na * nb);
}

void l2_normalize(EmbeddingVector& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n == 0.0) return;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
}

// --- UsageLedger ------------------------------------------------------------

void UsageLedger::record_call(const std::string& stage, const ChatResponse& resp) {
    std::lock_guard<std::mutex> lock(mutex_);
    StageUsage& s = stages_[stage];
    s.calls += 1;
    s.prompt_tokens += resp.prompt_tokens;
    s.completion_tokens += resp.completion_tokens;
    s.wall_ms += resp.latency_ms;
}

void UsageLedger::record_attempt(const std::string& stage) {
    std::lock_guard<std::mutex> lock(mutex_);
    stages_[stage].calls += 1;
}

void UsageLedger::record_document(const DocumentUsage& usage) {
    std::lock_guard<std::mutex> lock(mutex_);
    documents_.push_back(usage);
}

std::map<std::string, StageUsage> UsageLedger::stages() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stages_;
}

std::vector<DocumentUsage> UsageLedger::documents() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<DocumentUsage> docs = documents_;
    std::sort(docs.begin(), docs.end(),
              [](const DocumentUsage& a, const DocumentUsage& b) { return a.doc_id < b.doc_id; });
    return docs;
}

Json UsageLedger::to_json() const {
    Json j;
    j["stages"] = Json::object();
    for (const auto& [name, s] : stages()) {
        j["stages"][name] = {{"calls", s.calls},
                             {"prompt_tokens", s.prompt_tokens},
                             {"completion_tokens", s.completion_tokens},
                             {"wall_ms", s.wall_ms}};
    }
    j["documents"] = Json::array();
    for (const auto& d : documents()) {
        j["documents"].push_back(
            {{"doc_id", d.doc_id}, {"chars", d.chars}, {"tokens", d.tokens}, {"wall_ms", d.wall_ms}});
    }
    return j;
}

UsageLedger UsageLedger::from_json(const Json& j) {
    UsageLedger ledger;
    // Bind before items(): the proxy would outlive a temporary json.
    const Json stage_map = j.value("stages", Json::object());
    for (const auto& [name, s] : stage_map.items()) {
        StageUsage u;
        u.calls = s.value("calls", std::int64_t{0});
        u.prompt_tokens = s.value("prompt_tokens", std::int64_t{0});
        u.completion_tokens = s.value("completion_tokens", std::int64_t{0});
        u.wall_ms = s.value("wall_ms", std::int64_t{0});
        ledger.stages_[name] = u;
    }
    for (const auto& d : j.value("documents", Json::array())) {
        ledger.record_document({d.at("doc_id").get<std::string>(), d.at("chars").get<std::int64_t>(),
                                d.at("tokens").get<std::int64_t>(),
                                d.value("wall_ms", std::int64_t{0})});
    }
    return ledger;
}

std::pair<double, double> least_squares(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 2) throw InsufficientData("least_squares needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(xy.size());
    my /= static_cast<double>(xy.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0.0) throw InsufficientData("least_squares: x values are all identical");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

ScalingReport report_usage(const UsageLedger& ledger) {
    ScalingReport report;
    report.points = ledger.documents();
    if (report.points.size() < 2) {
        throw InsufficientData("report_usage needs at least 2 per-document records, have " +
                               std::to_string(report.points.size()));
    }
    std::vector<std::pair<double, double>> xy;
    xy.reserve(report.points.size());
    for (const auto& p : report.points) {
        if (p.chars <= 0 || p.tokens <= 0) {
            throw InsufficientData("report_usage: non-positive chars/tokens for " + p.doc_id);
        }
        xy.emplace_back(std::log(static_cast<double>(p.chars)),
                        std::log(static_cast<double>(p.tokens)));
    }
    std::tie(report.token_slope, report.token_intercept) = least_squares(xy);
    return report;
}

// --- MockBackend ------------------------------------------------------------

MockBackend::MockBackend(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw ConfigError("mock embedding dimension must be positive");
}

void MockBackend::script(const std::string& tag, const std::string& reply) {
    scripted_[tag] = reply;
}

void MockBackend::load_script(const Json& table) {
    if (!table.is_object()) throw ConfigError("mock script must be a JSON object of tag -> reply");
    for (const auto& [tag, reply] : table.items()) {
        if (!reply.is_string()) {
            throw ConfigError("mock script reply for tag '" + tag + "' must be a string");
        }
        scripted_[tag] = reply.get<std::string>();
    }
}

ChatResponse MockBackend::complete(const ChatRequest& req) {
    std::string reply;
    const auto it = scripted_.find(req.tag);
    if (it != scripted_.end()) {
        reply = it->second;
    } else if (req.tag.rfind("genqa:", 0) == 0) {
        const std::string* prompt = last_user_text(req);
        reply = synth_generation(parse_path_block(prompt ? *prompt : "")).dump();
    } else if (req.tag.rfind("judge:answerability", 0) == 0) {
        reply = Json{{"answerable", true}, {"faithful", true}}.dump();
    } else if (req.tag.rfind("judge:answer", 0) == 0) {
        const std::string* prompt = last_user_text(req);
        reply = synth_answer_judgement(prompt ? *prompt : "").dump();
    } else {
        const std::string* prompt = last_user_text(req);
        reply = prompt ? *prompt : "";
    }

    ChatResponse resp;
    resp.text = reply;
    std::size_t prompt_chars = 0;
    for (const auto& m : req.messages) prompt_chars += m.text.size();
    resp.prompt_tokens = ceil_div4(prompt_chars);
    resp.completion_tokens = ceil_div4(reply.size());
    resp.latency_ms = 0; // keep artifacts free of wall-clock noise
    return resp;
}

EmbeddingVector MockBackend::embed(const std::string& text) {
    return trigram_embedding(text, dim_);
}

EmbeddingVector trigram_embedding(const std::string& text, std::size_t dim) {
    EmbeddingVector v(dim, 0.0);
    const std::string padded = " " + text + " ";
    if (padded.size() >= 3) {
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            v[fnv1a64(padded.data() + i, 3) % dim] += 1.0;
        }
    }
    l2_normalize(v);
    return v;
}

// --- ModelGateway -----------------------------------------------------------

ModelGateway::ModelGateway(std::shared_ptr<ModelBackend> backend,
                           std::shared_ptr<UsageLedger> ledger, RetryPolicy retry)
    : backend_(std::move(backend)), ledger_(std::move(ledger)), retry_(retry) {
    if (!backend_) throw ContractViolation("ModelGateway requires a backend");
    if (!ledger_) ledger_ = std::make_shared<UsageLedger>();
    if (retry_.attempts < 1) throw ConfigError("retry attempts must be >= 1");
}

ChatResponse ModelGateway::complete(const ChatRequest& req, const std::string& stage) {
    if (req.messages.empty()) throw ContractViolation("chat request has no messages");
    for (const auto& m : req.messages) {
        if (m.text.empty()) throw ContractViolation("chat message text is empty");
    }
    if (req.temperature < 0.0) throw ContractViolation("temperature must be >= 0");
    if (req.max_tokens <= 0) throw ContractViolation("max_tokens must be positive");
    if (req.tag.empty()) throw ContractViolation("chat request needs a routing tag");
    if (stage.empty()) throw ContractViolation("stage name must be non-empty");

    for (int attempt = 0;; ++attempt) {
        try {
            ChatResponse resp = backend_->complete(req);
            ledger_->record_call(stage, resp);
            return resp;
        } catch (const TransportError&) {
            ledger_->record_attempt(stage);
            if (attempt + 1 >= retry_.attempts) throw;
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<std::int64_t>(retry_.backoff_base_ms)
                                          << attempt));
        }
    }
}

EmbeddingVector ModelGateway::embed(const std::string& text, const std::string& stage) {
    if (text.empty()) throw ContractViolation("cannot embed empty text");
    if (stage.empty()) throw ContractViolation("stage name must be non-empty");
    for (int attempt = 0;; ++attempt) {
        try {
            EmbeddingVector v = backend_->embed(text);
            if (v.size() != backend_->embedding_dim()) {
                throw ConfigError("backend returned embedding of dimension " +
                                  std::to_string(v.size()) + ", expected " +
                                  std::to_string(backend_->embedding_dim()));
            }
            l2_normalize(v);
            return v;
        } catch (const TransportError&) {
            if (attempt + 1 >= retry_.attempts) throw;
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<std::int64_t>(retry_.backoff_base_ms)
                                          << attempt));
        }
    }
}

} // namespace forge
