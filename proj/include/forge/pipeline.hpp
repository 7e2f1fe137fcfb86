#pragma once

#include "forge/config.hpp"

namespace forge {

inline constexpr const char* kPipelineVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Stage orchestration. Each stage reads declared upstream artifacts from
// the output directory, writes its own, and drops a manifest
// ("<stage>.manifest.json") recording the pipeline version, config hash,
// seed, and content hashes of everything read and written — enough to
// replay or audit the run. A missing upstream artifact fails fast with the
// file's name.
// ---------------------------------------------------------------------------

class Pipeline {
public:
    Pipeline(PipelineConfig cfg, std::filesystem::path config_file,
             std::filesystem::path out_dir);

    const std::filesystem::path& out_dir() const { return out_; }

    void ingest();       // -> documents.jsonl
    void build_kg();     // -> entities.jsonl relations.jsonl manifest.json usage.json
    void sample_paths(); // -> paths.jsonl plan.jsonl
    void gen_qa();       // -> qa.jsonl
    void qc();           // -> benchmark.jsonl qc_report.jsonl
    void eval();         // -> predictions.jsonl verdicts.jsonl report.json
    void stats();        // -> scaling.json

    // Runs the named stage ("ingest", "build-kg", ...).
    void run_stage(const std::string& name);

private:
    PipelineConfig cfg_;
    std::filesystem::path out_;
    std::string config_hash_;

    std::shared_ptr<ModelBackend> make_backend() const;
    std::filesystem::path artifact(const char* name) const { return out_ / name; }
    // Throws ConfigError naming the artifact and its producing stage.
    void require_artifact(const char* name, const char* producer) const;
    void write_stage_manifest(const std::string& stage, std::uint64_t seed,
                              const std::vector<std::filesystem::path>& inputs,
                              const std::vector<const char*>& outputs) const;

    std::vector<std::string> load_schema() const;
    std::string load_prompt(const std::string& filename) const;
    std::vector<Exemplar> load_exemplars() const;
};

// benchmark.jsonl starts with this header line; the remaining lines are
// QAPair records.
Json benchmark_header(const PipelineConfig& cfg);
bool is_benchmark_header(const Json& line);

} // namespace forge
