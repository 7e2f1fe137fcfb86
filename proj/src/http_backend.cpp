#include <chrono>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "forge/gateway.hpp"

namespace forge {
namespace {

Json to_openai_messages(const ChatRequest& req) {
    Json arr = Json::array();
    for (const auto& m : req.messages) {
        arr.push_back({{"role", role_name(m.role)}, {"content", m.text}});
    }
    return arr;
}

// "http://host:port/some/prefix" -> {"http://host:port", "/some/prefix"}
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const std::size_t scheme = base_url.find("://");
    const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const std::size_t slash = base_url.find('/', host_start);
    if (slash == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, slash), prefix};
}

} // namespace

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw ConfigError("http backend needs a base_url");
    if (cfg_.embed_dim == 0) throw ConfigError("embed_dim must be positive");
}

ChatResponse HttpBackend::complete(const ChatRequest& req) {
    const auto [host, prefix] = split_base_url(cfg_.base_url);
    httplib::Client client(host);
    client.set_connection_timeout(cfg_.timeout_sec);
    client.set_read_timeout(cfg_.timeout_sec);

    Json body = {{"model", cfg_.chat_model},
                 {"messages", to_openai_messages(req)},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    if (!res) {
        throw TransportError("chat endpoint unreachable at " + cfg_.base_url + " (" +
                             httplib::to_string(res.error()) + ")");
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status) +
                             " for tag " + req.tag);
    }
    Json parsed;
    try {
        parsed = Json::parse(res->body);
    } catch (const Json::parse_error& e) {
        throw TransportError(std::string("chat endpoint returned invalid JSON: ") + e.what());
    }

    ChatResponse out;
    try {
        out.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception&) {
        throw TransportError("chat reply missing choices[0].message.content");
    }
    const Json usage = parsed.value("usage", Json::object());
    out.prompt_tokens = usage.value("prompt_tokens", std::int64_t{0});
    out.completion_tokens = usage.value("completion_tokens", std::int64_t{0});
    out.latency_ms = ms;
    return out;
}

EmbeddingVector HttpBackend::embed(const std::string& text) {
    const auto [host, prefix] = split_base_url(cfg_.base_url);
    httplib::Client client(host);
    client.set_connection_timeout(cfg_.timeout_sec);
    client.set_read_timeout(cfg_.timeout_sec);

    Json body = {{"model", cfg_.embed_model}, {"input", text}};
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("embedding endpoint unreachable at " + cfg_.base_url + " (" +
                             httplib::to_string(res.error()) + ")");
    }
    if (res->status < 200 || res->status >= 300) {
        throw TransportError("embedding endpoint returned HTTP " + std::to_string(res->status));
    }
    Json parsed;
    try {
        parsed = Json::parse(res->body);
    } catch (const Json::parse_error& e) {
        throw TransportError(std::string("embedding endpoint returned invalid JSON: ") + e.what());
    }
    EmbeddingVector v;
    try {
        v = parsed.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const Json::exception&) {
        throw TransportError("embedding reply missing data[0].embedding");
    }
    if (v.size() != cfg_.embed_dim) {
        throw ConfigError("embedding endpoint returned dimension " + std::to_string(v.size()) +
                          ", configured " + std::to_string(cfg_.embed_dim));
    }
    l2_normalize(v);
    return v;
}

} // namespace forge
