#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "forge/errors.hpp"
#include "forge/io.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// Chat and embedding primitives.
//
// Every stage talks to language models through one gateway so that usage
// accounting, retries, and the mock backend behave identically everywhere.
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

std::string role_name(Role r);

struct ChatMessage {
    Role role = Role::User;
    std::string text;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    // Routing/accounting key, e.g. "extract:doc-003". The mock backend
    // resolves scripted replies by exact tag.
    std::string tag;
};

struct ChatResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t latency_ms = 0;
};

// Unit-length embedding. Row vectors are plain doubles; cosine of unit
// vectors reduces to a dot product.
using EmbeddingVector = std::vector<double>;

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
void l2_normalize(EmbeddingVector& v);

// ---------------------------------------------------------------------------
// Usage ledger: per-stage counters plus per-document records for the
// scaling analysis. Thread-safe; stages run extraction in parallel.
// ---------------------------------------------------------------------------

struct StageUsage {
    std::int64_t calls = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t wall_ms = 0;
};

struct DocumentUsage {
    std::string doc_id;
    std::int64_t chars = 0;   // document length in characters
    std::int64_t tokens = 0;  // prompt + completion tokens spent on it
    std::int64_t wall_ms = 0;
};

class UsageLedger {
public:
    UsageLedger() = default;
    // Movable so from_json can hand one back; the mutex itself is not moved.
    // Moving a ledger that other threads still write to is a caller bug.
    UsageLedger(UsageLedger&& other) noexcept
        : stages_(std::move(other.stages_)), documents_(std::move(other.documents_)) {}

    void record_call(const std::string& stage, const ChatResponse& resp);
    // A failed transport attempt: bumps the stage's call counter without
    // touching token totals.
    void record_attempt(const std::string& stage);
    void record_document(const DocumentUsage& usage);

    std::map<std::string, StageUsage> stages() const;
    std::vector<DocumentUsage> documents() const; // sorted by doc_id

    Json to_json() const;
    static UsageLedger from_json(const Json& j);

private:
    mutable std::mutex mutex_;
    std::map<std::string, StageUsage> stages_;
    std::vector<DocumentUsage> documents_;
};

// Log-log regression over the per-document records: slope of
// ln(tokens) against ln(chars), plus the raw points (sorted by doc_id).
// Throws InsufficientData below two records or without two distinct
// document lengths.
struct ScalingReport {
    std::vector<DocumentUsage> points;
    double token_slope = 0.0;
    double token_intercept = 0.0; // intercept of the ln-ln fit
};

ScalingReport report_usage(const UsageLedger& ledger);

// Least-squares slope/intercept of y against x. Exposed for tests.
std::pair<double, double> least_squares(const std::vector<std::pair<double, double>>& xy);

// ---------------------------------------------------------------------------
// Backends.
// ---------------------------------------------------------------------------

class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual std::size_t embedding_dim() const = 0;
    virtual std::string identity() const = 0;
};

// Deterministic offline backend.
//
// complete(): an exact scripted reply for the request tag wins; otherwise
// a family synthesizer (generation/judge tags carry machine-readable
// context blocks it can answer from); otherwise the last user message is
// echoed back. Token counts are ceil(chars/4); latency is always 0 so
// artifacts never embed wall-clock noise.
//
// embed(): hashed character trigrams over the text padded with one space
// on each side, FNV-1a 64-bit, bucketed modulo the dimension, then
// L2-normalized. Pure function of the text.
class MockBackend : public ModelBackend {
public:
    explicit MockBackend(std::size_t dim = 256);

    void script(const std::string& tag, const std::string& reply);
    void load_script(const Json& table); // {"tag": "reply", ...}

    ChatResponse complete(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    std::size_t embedding_dim() const override { return dim_; }
    std::string identity() const override { return "mock"; }

private:
    std::size_t dim_;
    std::map<std::string, std::string> scripted_;
};

// Static helper so offline tools (fixture generators, tests) can reproduce
// mock embeddings without a backend instance.
EmbeddingVector trigram_embedding(const std::string& text, std::size_t dim);

// OpenAI-compatible HTTP backend. Exercised in tests against a local stub
// server; real use reads MODEL_API_KEY from the environment.
struct HttpBackendConfig {
    std::string base_url;    // e.g. "http://127.0.0.1:8089"
    std::string api_key;
    std::string chat_model = "default-chat";
    std::string embed_model = "default-embed";
    std::size_t embed_dim = 256;
    int timeout_sec = 30;
};

class HttpBackend : public ModelBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);

    ChatResponse complete(const ChatRequest& req) override;
    EmbeddingVector embed(const std::string& text) override;
    std::size_t embedding_dim() const override { return cfg_.embed_dim; }
    std::string identity() const override { return cfg_.chat_model; }

private:
    HttpBackendConfig cfg_;
};

// ---------------------------------------------------------------------------
// Gateway: request validation, retry with exponential backoff, ledger
// updates. All model traffic in the pipeline flows through here.
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int attempts = 3;
    int backoff_base_ms = 500; // 500, 1000, 2000, ...
};

class ModelGateway {
public:
    ModelGateway(std::shared_ptr<ModelBackend> backend, std::shared_ptr<UsageLedger> ledger,
                 RetryPolicy retry = {});

    // Validates the request, dispatches with retries on TransportError,
    // and records the call under `stage` in the ledger.
    ChatResponse complete(const ChatRequest& req, const std::string& stage);

    // Embeds non-empty text; result is unit length and deterministic for a
    // given backend identity.
    EmbeddingVector embed(const std::string& text, const std::string& stage);

    std::size_t embedding_dim() const { return backend_->embedding_dim(); }
    const std::shared_ptr<UsageLedger>& ledger() const { return ledger_; }
    const std::shared_ptr<ModelBackend>& backend() const { return backend_; }

private:
    std::shared_ptr<ModelBackend> backend_;
    std::shared_ptr<UsageLedger> ledger_;
    RetryPolicy retry_;
};

} // namespace forge
