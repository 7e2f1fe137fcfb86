#include "forge/config.hpp"

#include <set>

#include "forge/io.hpp"

namespace forge {
namespace {

void expect_keys(const Json& j, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) {
            throw ConfigError("unknown key '" + key + "' in '" + where + "'");
        }
    }
}

void require(const Json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) {
        throw ConfigError("'" + where + "' is missing required key '" + key + "'");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <typename T>
T in_range(T value, T lo, T hi, const std::string& what) {
    if (value < lo || value > hi) {
        throw ConfigError("'" + what + "' out of range");
    }
    return value;
}

} // namespace

SelectionCriteria PipelineConfig::selection() const {
    SelectionCriteria criteria;
    criteria.domain_id = domain_id;
    criteria.categories = categories;
    criteria.keywords = keywords;
    criteria.window = window;
    return criteria;
}

PipelineConfig load_config(const std::filesystem::path& file) {
    Json j;
    try {
        j = read_json_file(file);
    } catch (const DataError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    expect_keys(j, "config",
                {"domain_id", "window", "categories", "keywords", "source_dir", "prompts_dir",
                 "backend", "chunking", "alignment", "hnsw", "sampling", "generation", "qc",
                 "eval", "seeds", "workers"});
    for (const char* key : {"domain_id", "window", "source_dir", "prompts_dir", "backend",
                            "alignment", "sampling", "generation", "eval", "seeds"}) {
        require(j, "config", key);
    }

    PipelineConfig cfg;
    cfg.base_dir = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
    cfg.domain_id = j.at("domain_id").get<std::string>();
    if (cfg.domain_id.empty()) throw ConfigError("'domain_id' must be non-empty");

    {
        const Json& w = j.at("window");
        expect_keys(w, "window", {"start", "end"});
        require(w, "window", "start");
        require(w, "window", "end");
        cfg.window.start = parse_rfc3339(w.at("start").get<std::string>());
        cfg.window.end = parse_rfc3339(w.at("end").get<std::string>());
        if (cfg.window.start > cfg.window.end) {
            throw ConfigError("'window.start' is after 'window.end'");
        }
    }

    cfg.categories = j.value("categories", std::vector<std::string>{});
    cfg.keywords = j.value("keywords", std::vector<std::string>{});
    if (cfg.categories.empty()) throw ConfigError("'categories' must list at least one category");
    cfg.source_dir = resolve(cfg.base_dir, j.at("source_dir").get<std::string>());
    cfg.prompts_dir = resolve(cfg.base_dir, j.at("prompts_dir").get<std::string>());

    {
        const Json& b = j.at("backend");
        expect_keys(b, "backend",
                    {"kind", "embed_dim", "script_file", "chat_model", "embed_model",
                     "timeout_sec"});
        cfg.backend.kind = b.value("kind", "mock");
        if (cfg.backend.kind != "mock" && cfg.backend.kind != "http") {
            throw ConfigError("'backend.kind' must be \"mock\" or \"http\"");
        }
        cfg.backend.embed_dim = b.value("embed_dim", std::size_t{256});
        if (cfg.backend.embed_dim == 0) throw ConfigError("'backend.embed_dim' must be positive");
        if (b.contains("script_file")) {
            cfg.backend.script_file = resolve(cfg.base_dir, b.at("script_file").get<std::string>());
        }
        cfg.backend.chat_model = b.value("chat_model", "default-chat");
        cfg.backend.embed_model = b.value("embed_model", "default-embed");
        cfg.backend.timeout_sec =
            in_range(b.value("timeout_sec", 30), 1, 600, "backend.timeout_sec");
    }

    if (j.contains("chunking")) {
        const Json& c = j.at("chunking");
        expect_keys(c, "chunking", {"limit", "overlap"});
        cfg.chunking.limit = c.value("limit", std::size_t{1000});
        cfg.chunking.overlap = c.value("overlap", std::size_t{100});
        if (cfg.chunking.limit == 0) throw ConfigError("'chunking.limit' must be positive");
        if (cfg.chunking.overlap >= cfg.chunking.limit) {
            throw ConfigError("'chunking.overlap' must be smaller than 'chunking.limit'");
        }
    }

    {
        const Json& a = j.at("alignment");
        expect_keys(a, "alignment",
                    {"tau", "relation_threshold", "ann_k", "schema_file", "prompt_version"});
        require(a, "alignment", "schema_file");
        cfg.alignment.tau = in_range(a.value("tau", 0.85), 0.0, 1.0, "alignment.tau");
        cfg.alignment.relation_threshold = in_range(a.value("relation_threshold", 0.6), 0.0, 1.0,
                                                    "alignment.relation_threshold");
        cfg.alignment.ann_k = in_range(a.value("ann_k", 8), 1, 1024, "alignment.ann_k");
        cfg.alignment.schema_file = resolve(cfg.base_dir, a.at("schema_file").get<std::string>());
        cfg.alignment.prompt_version = a.value("prompt_version", "v1");
    }

    if (j.contains("hnsw")) {
        const Json& h = j.at("hnsw");
        expect_keys(h, "hnsw", {"m", "ef_construction", "ef_search"});
        cfg.hnsw.m = in_range(h.value("m", 16), 2, 256, "hnsw.m");
        cfg.hnsw.ef_construction =
            in_range(h.value("ef_construction", 200), cfg.hnsw.m, 10000, "hnsw.ef_construction");
        cfg.hnsw.ef_search = in_range(h.value("ef_search", 100), 1, 10000, "hnsw.ef_search");
    }

    {
        const Json& s = j.at("sampling");
        expect_keys(s, "sampling", {"k_min", "k_max", "degree_percentile", "max_attempts"});
        cfg.sampling.k_min = s.value("k_min", 1);
        cfg.sampling.k_max = s.value("k_max", 3);
        if (cfg.sampling.k_min < 1) throw ConfigError("'sampling.k_min' must be >= 1");
        if (cfg.sampling.k_max < cfg.sampling.k_min) {
            throw ConfigError("'sampling.k_max' must be >= 'sampling.k_min'");
        }
        cfg.sampling.degree_percentile = s.value("degree_percentile", 0.9);
        if (cfg.sampling.degree_percentile <= 0.0 || cfg.sampling.degree_percentile >= 1.0) {
            throw ConfigError("'sampling.degree_percentile' must lie in (0, 1)");
        }
        cfg.sampling.max_attempts =
            in_range(s.value("max_attempts", 200), 1, 1000000, "sampling.max_attempts");
    }

    {
        const Json& g = j.at("generation");
        expect_keys(g, "generation", {"targets", "exemplars_file", "exemplars_per_type"});
        require(g, "generation", "targets");
        require(g, "generation", "exemplars_file");
        for (const auto& [name, count] : g.at("targets").items()) {
            const QuestionType qtype = question_type_from(name); // throws on unknown
            if (!count.is_number_integer() || count.get<int>() < 0) {
                throw ConfigError("'generation.targets." + name +
                                  "' must be a nonnegative integer");
            }
            cfg.generation.targets[qtype] = count.get<int>();
        }
        cfg.generation.exemplars_file =
            resolve(cfg.base_dir, g.at("exemplars_file").get<std::string>());
        cfg.generation.exemplars_per_type =
            in_range(g.value("exemplars_per_type", 2), 1, 16, "generation.exemplars_per_type");
    }

    if (j.contains("qc")) {
        const Json& q = j.at("qc");
        expect_keys(q, "qc", {"dedup_threshold"});
        cfg.dedup_threshold = q.value("dedup_threshold", 0.92);
        if (cfg.dedup_threshold <= 0.0 || cfg.dedup_threshold > 1.0) {
            throw ConfigError("'qc.dedup_threshold' must lie in (0, 1]");
        }
    }

    {
        const Json& e = j.at("eval");
        expect_keys(e, "eval",
                    {"methods", "runs", "top_k", "sc_samples", "link_threshold", "link_max",
                     "recovery_threshold", "facts_file"});
        require(e, "eval", "methods");
        for (const auto& name : e.at("methods")) {
            cfg.eval.methods.push_back(method_from(name.get<std::string>()));
        }
        if (cfg.eval.methods.empty()) throw ConfigError("'eval.methods' must be non-empty");
        cfg.eval.runs = in_range(e.value("runs", 1), 1, 1000, "eval.runs");
        cfg.eval.params.top_k = in_range(e.value("top_k", 5), 1, 1000, "eval.top_k");
        cfg.eval.params.sc_samples = in_range(e.value("sc_samples", 5), 1, 99, "eval.sc_samples");
        cfg.eval.params.link_threshold =
            in_range(e.value("link_threshold", 0.5), 0.0, 1.0, "eval.link_threshold");
        cfg.eval.params.link_max = in_range(e.value("link_max", 2), 1, 64, "eval.link_max");
        cfg.eval.recovery_threshold =
            in_range(e.value("recovery_threshold", 0.75), 0.0, 1.0, "eval.recovery_threshold");
        if (e.contains("facts_file")) {
            cfg.eval.facts_file = resolve(cfg.base_dir, e.at("facts_file").get<std::string>());
        }
    }

    {
        const Json& s = j.at("seeds");
        expect_keys(s, "seeds", {"hnsw", "paths", "eval"});
        for (const char* key : {"hnsw", "paths", "eval"}) require(s, "seeds", key);
        cfg.seeds.hnsw = s.at("hnsw").get<std::uint64_t>();
        cfg.seeds.paths = s.at("paths").get<std::uint64_t>();
        cfg.seeds.eval = s.at("eval").get<std::uint64_t>();
    }

    cfg.workers = in_range(j.value("workers", 0), 0, 4096, "workers");
    return cfg;
}

} // namespace forge
