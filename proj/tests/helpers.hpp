#pragma once

// Shared scaffolding for the test binaries. Kept header-only; every test
// executable links the same core library and compiles this independently.

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/graph.hpp"
#include "forge/io.hpp"

namespace forge::test {

namespace fs = std::filesystem;

// FORGE_FIXTURE_DIR / FORGE_PROMPTS_DIR come in as compile definitions.
inline fs::path fixture_dir() { return fs::path(FORGE_FIXTURE_DIR); }
inline fs::path prompts_dir() { return fs::path(FORGE_PROMPTS_DIR); }

inline std::string read_prompt(const std::string& name) {
    return read_text_file(prompts_dir() / name);
}

// Fresh scratch directory, removed on destruction.
struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("forge-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    fs::path operator/(const std::string& name) const { return path / name; }
};

// A gateway over the mock backend, optionally preloaded with scripted
// replies. The 1ms retry backoff keeps transport-failure cases subsecond.
struct MockRig {
    std::shared_ptr<MockBackend> backend;
    std::shared_ptr<UsageLedger> ledger;
    ModelGateway gateway;

    explicit MockRig(std::size_t dim = 256, const Json& script = Json::object())
        : backend(make_backend(dim, script)),
          ledger(std::make_shared<UsageLedger>()),
          gateway(backend, ledger, RetryPolicy{3, 1}) {}

private:
    static std::shared_ptr<MockBackend> make_backend(std::size_t dim, const Json& script) {
        auto b = std::make_shared<MockBackend>(dim);
        if (!script.empty()) b->load_script(script);
        return b;
    }
};

// One-section document with controllable id/time, for corpus-level tests.
inline Document make_doc(const std::string& id, const std::string& submitted,
                         const std::string& body, const std::string& title = "") {
    Document d;
    d.id = id;
    d.title = title.empty() ? "Title of " + id : title;
    d.categories = {"cs.LG"};
    d.submitted_at = parse_rfc3339(submitted);
    d.sections.push_back({"body", body});
    return d;
}

// Entity/edge builders for graph-level tests. Provenance points at a
// nominal document so stores stay internally consistent.
inline ProvenanceRef ref(const std::string& doc_id, std::size_t start = 0,
                         std::size_t end = 10) {
    return ProvenanceRef{doc_id, "body", start, end};
}

inline Entity make_entity(const std::string& name, const std::string& type,
                          Timestamp first_seen, const std::string& doc_id) {
    Entity e;
    e.type_label = type;
    e.name = name;
    e.description = "description of " + name;
    e.provenance = {ref(doc_id)};
    e.first_seen = first_seen;
    return e;
}

inline RelationEdge make_edge(const std::string& subject_id, const std::string& predicate,
                              const std::string& object_id, Timestamp seen,
                              const std::string& doc_id) {
    RelationEdge e;
    e.subject_id = subject_id;
    e.object_id = object_id;
    e.predicate = predicate;
    e.evidence = {ref(doc_id)};
    e.frequency = 1;
    e.first_seen = seen;
    e.last_seen = seen;
    e.confidence = 0.5;
    return e;
}

} // namespace forge::test
