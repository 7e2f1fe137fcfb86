#pragma once

#include <filesystem>

#include "forge/alignment.hpp"
#include "forge/corpus.hpp"
#include "forge/eval_harness.hpp"
#include "forge/hnsw.hpp"
#include "forge/path_sampler.hpp"
#include "forge/qa_generator.hpp"

namespace forge {

// ---------------------------------------------------------------------------
// One JSON config drives every stage. Parsing is strict: unknown keys are
// rejected, every threshold is range-checked, and seeds are mandatory so a
// run can always be replayed. Relative paths resolve against the config
// file's directory.
// ---------------------------------------------------------------------------

struct BackendSettings {
    std::string kind = "mock"; // "mock" | "http"
    std::size_t embed_dim = 256;
    std::filesystem::path script_file; // optional scripted replies (mock)
    std::string chat_model = "default-chat";
    std::string embed_model = "default-embed";
    int timeout_sec = 30;
};

struct SeedSettings {
    std::uint64_t hnsw = 0;
    std::uint64_t paths = 0;
    std::uint64_t eval = 0;
};

struct AlignmentSettings {
    double tau = 0.85;
    double relation_threshold = 0.6;
    int ann_k = 8;
    std::filesystem::path schema_file;
    std::string prompt_version = "v1";
};

struct GenerationSettings {
    std::map<QuestionType, int> targets;
    std::filesystem::path exemplars_file;
    int exemplars_per_type = 2;
};

struct EvalSettings {
    std::vector<Method> methods;
    int runs = 1;
    MethodParams params;
    double recovery_threshold = 0.75;
    std::filesystem::path facts_file; // optional; enables the recovery metric
};

struct HnswSettings {
    int m = 16;
    int ef_construction = 200;
    int ef_search = 100;
};

struct PipelineConfig {
    std::filesystem::path base_dir; // config file's directory
    std::string domain_id;
    TimeWindow window;
    std::vector<std::string> categories;
    std::vector<std::string> keywords;
    std::filesystem::path source_dir;
    std::filesystem::path prompts_dir;
    BackendSettings backend;
    ChunkPolicy chunking;
    AlignmentSettings alignment;
    HnswSettings hnsw;
    SamplingPolicy sampling;
    GenerationSettings generation;
    double dedup_threshold = 0.92;
    EvalSettings eval;
    SeedSettings seeds;
    int workers = 0; // 0 = all available cores; 1 forces serial execution

    SelectionCriteria selection() const;
};

// Parses and validates; throws ConfigError naming the offending key.
PipelineConfig load_config(const std::filesystem::path& file);

} // namespace forge
