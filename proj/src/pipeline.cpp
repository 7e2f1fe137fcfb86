#include "forge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include <spdlog/spdlog.h>

#include "forge/parallel.hpp"

namespace forge {
namespace {

std::string format_qa_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "qa%05zu", n);
    return buf;
}

Json perturbation_to_json(const std::optional<PerturbationDescriptor>& p) {
    if (!p) return nullptr;
    return {{"kind", p->kind},
            {"element_index", p->element_index},
            {"original", p->original},
            {"perturbed", p->perturbed},
            {"perturbed_entity_id", p->perturbed_entity_id}};
}

std::optional<PerturbationDescriptor> perturbation_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    PerturbationDescriptor p;
    try {
        p.kind = j.at("kind").get<std::string>();
        p.element_index = j.at("element_index").get<std::size_t>();
        p.original = j.at("original").get<std::string>();
        p.perturbed = j.at("perturbed").get<std::string>();
        p.perturbed_entity_id = j.value("perturbed_entity_id", "");
    } catch (const Json::exception& e) {
        throw DataError(std::string("bad perturbation record: ") + e.what());
    }
    return p;
}

} // namespace

Pipeline::Pipeline(PipelineConfig cfg, std::filesystem::path config_file,
                   std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
    config_hash_ = sha256_file(config_file);
    std::filesystem::create_directories(out_);
}

std::shared_ptr<ModelBackend> Pipeline::make_backend() const {
    if (cfg_.backend.kind == "mock") {
        auto backend = std::make_shared<MockBackend>(cfg_.backend.embed_dim);
        if (!cfg_.backend.script_file.empty()) {
            backend->load_script(read_json_file(cfg_.backend.script_file));
        }
        return backend;
    }
    const char* base_url = std::getenv("MODEL_BASE_URL");
    if (!base_url || !*base_url) {
        throw ConfigError("backend.kind is \"http\" but MODEL_BASE_URL is not set");
    }
    const char* api_key = std::getenv("MODEL_API_KEY");
    HttpBackendConfig hc;
    hc.base_url = base_url;
    hc.api_key = api_key ? api_key : "";
    hc.chat_model = cfg_.backend.chat_model;
    hc.embed_model = cfg_.backend.embed_model;
    hc.embed_dim = cfg_.backend.embed_dim;
    hc.timeout_sec = cfg_.backend.timeout_sec;
    return std::make_shared<HttpBackend>(hc);
}

void Pipeline::require_artifact(const char* name, const char* producer) const {
    if (!std::filesystem::exists(out_ / name)) {
        throw ConfigError("required artifact '" + std::string(name) + "' not found in " +
                          out_.string() + " — run '" + producer + "' first");
    }
}

void Pipeline::write_stage_manifest(const std::string& stage, std::uint64_t seed,
                                    const std::vector<std::filesystem::path>& inputs,
                                    const std::vector<const char*>& outputs) const {
    Json in = Json::object();
    for (const auto& path : inputs) in[path.filename().string()] = sha256_file(path);
    Json out = Json::object();
    for (const char* name : outputs) out[name] = sha256_file(out_ / name);
    write_json_file(out_ / (stage + ".manifest.json"),
                    {{"stage", stage},
                     {"pipeline_version", kPipelineVersion},
                     {"config_hash", config_hash_},
                     {"seed", seed},
                     {"inputs", in},
                     {"outputs", out}});
}

std::vector<std::string> Pipeline::load_schema() const {
    const Json j = read_json_file(cfg_.alignment.schema_file);
    if (!j.is_object() || !j.contains("predicates") || !j["predicates"].is_array()) {
        throw ConfigError("schema file must be an object with a 'predicates' array");
    }
    std::vector<std::string> predicates;
    for (const auto& p : j["predicates"]) {
        if (!p.is_string() || p.get<std::string>().empty()) {
            throw ConfigError("schema predicates must be non-empty strings");
        }
        predicates.push_back(p.get<std::string>());
    }
    if (predicates.empty()) throw ConfigError("schema lists no predicates");
    return predicates;
}

std::string Pipeline::load_prompt(const std::string& filename) const {
    return read_text_file(cfg_.prompts_dir / filename);
}

std::vector<Exemplar> Pipeline::load_exemplars() const {
    const Json j = read_json_file(cfg_.generation.exemplars_file);
    if (!j.is_array()) throw ConfigError("exemplars file must be a JSON array");
    std::vector<Exemplar> exemplars;
    for (const auto& row : j) exemplars.push_back(exemplar_from_json(row));
    return exemplars;
}

// --- stages -------------------------------------------------------------------

void Pipeline::ingest() {
    LocalDirSource source(cfg_.source_dir);
    CollectStats stats;
    const Corpus corpus = collect(source, cfg_.selection(), &stats);
    save_corpus(corpus, artifact("documents.jsonl"));

    std::vector<std::filesystem::path> inputs;
    for (const auto& entry : std::filesystem::directory_iterator(cfg_.source_dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".json" || ext == ".jsonl")) {
            inputs.push_back(entry.path());
        }
    }
    std::sort(inputs.begin(), inputs.end());
    write_stage_manifest("ingest", 0, inputs, {"documents.jsonl"});
    spdlog::info("ingest: scanned {} records, kept {} ({} filtered, {} malformed)",
                 stats.scanned, stats.kept, stats.filtered, stats.skipped_malformed);
}

void Pipeline::build_kg() {
    require_artifact("documents.jsonl", "ingest");
    const Corpus corpus = load_corpus(artifact("documents.jsonl"));

    auto ledger = std::make_shared<UsageLedger>();
    ModelGateway gateway(make_backend(), ledger);

    AlignmentOptions options;
    options.tau = cfg_.alignment.tau;
    options.relation_threshold = cfg_.alignment.relation_threshold;
    options.ann_k = cfg_.alignment.ann_k;
    options.schema = load_schema();
    options.prompt_template = load_prompt("extraction.txt");
    options.prompt_version = cfg_.alignment.prompt_version;
    AlignmentEngine engine(gateway, options);

    std::vector<std::variant<ExtractionBatch, ExtractionFailure>> results(
        corpus.documents.size(), ExtractionFailure{});
    parallel_for(corpus.documents.size(), static_cast<std::size_t>(cfg_.workers),
                 [&](std::size_t i) { results[i] = engine.extract_batch(corpus.documents[i]); });

    std::vector<ExtractionBatch> batches;
    for (auto& r : results) {
        if (auto* batch = std::get_if<ExtractionBatch>(&r)) {
            batches.push_back(std::move(*batch));
        } else {
            const auto& failure = std::get<ExtractionFailure>(r);
            spdlog::warn("extraction skipped {}: {}", failure.doc_id, failure.reason);
        }
    }

    KnowledgeGraph graph(cfg_.domain_id, cfg_.window);
    HnswParams params;
    params.dim = cfg_.backend.embed_dim;
    params.M = static_cast<std::size_t>(cfg_.hnsw.m);
    params.ef_construction = static_cast<std::size_t>(cfg_.hnsw.ef_construction);
    params.ef_search = static_cast<std::size_t>(cfg_.hnsw.ef_search);
    params.seed = cfg_.seeds.hnsw;
    AnnIndex index(params);

    const UpdateDelta delta = engine.apply_update(graph, index, std::move(batches));
    spdlog::info("build-kg: +{} entities ({} merged), +{} edges ({} reinforced), {} relations "
                 "rejected",
                 delta.entities_created, delta.entities_merged, delta.edges_created,
                 delta.edges_reinforced, delta.relations_rejected);

    persist_graph(graph, out_);
    write_json_file(artifact("usage.json"), ledger->to_json());
    write_stage_manifest("build-kg", cfg_.seeds.hnsw, {artifact("documents.jsonl")},
                         {"entities.jsonl", "relations.jsonl", "manifest.json", "usage.json"});
}

void Pipeline::sample_paths() {
    require_artifact("entities.jsonl", "build-kg");
    require_artifact("relations.jsonl", "build-kg");
    require_artifact("manifest.json", "build-kg");

    const KnowledgeGraph graph = load_graph(out_);
    const KGSnapshot snapshot = snapshot_at(graph, cfg_.window.end);

    Rng rng(cfg_.seeds.paths);
    const GenerationPlan plan =
        plan_generation(snapshot, cfg_.generation.targets, cfg_.sampling, load_schema(), rng);
    for (const auto& [qtype, missing] : plan.shortfall) {
        spdlog::warn("sample-paths: {} short {} paths", question_type_name(qtype), missing);
    }

    std::vector<Json> path_rows, plan_rows;
    for (const auto& entry : plan.entries) {
        path_rows.push_back(path_to_json(entry.path));
        plan_rows.push_back({{"path_id", entry.path.path_id},
                             {"qtype", question_type_name(entry.qtype)},
                             {"perturbation", perturbation_to_json(entry.perturbation)}});
    }
    write_jsonl(artifact("paths.jsonl"), path_rows);
    write_jsonl(artifact("plan.jsonl"), plan_rows);
    write_stage_manifest(
        "sample-paths", cfg_.seeds.paths,
        {artifact("entities.jsonl"), artifact("relations.jsonl"), artifact("manifest.json")},
        {"paths.jsonl", "plan.jsonl"});
    spdlog::info("sample-paths: {} paths planned", plan.entries.size());
}

void Pipeline::gen_qa() {
    require_artifact("paths.jsonl", "sample-paths");
    require_artifact("plan.jsonl", "sample-paths");
    require_artifact("entities.jsonl", "build-kg");
    require_artifact("documents.jsonl", "ingest");

    const Corpus corpus = load_corpus(artifact("documents.jsonl"));
    const KnowledgeGraph graph = load_graph(out_);
    const KGSnapshot snapshot = snapshot_at(graph, cfg_.window.end);

    std::vector<ReasoningPath> paths;
    for (const auto& row : read_jsonl(artifact("paths.jsonl"))) {
        paths.push_back(path_from_json(row));
    }
    std::map<std::string, std::pair<QuestionType, std::optional<PerturbationDescriptor>>> plan;
    for (const auto& row : read_jsonl(artifact("plan.jsonl"))) {
        plan[row.at("path_id").get<std::string>()] = {
            question_type_from(row.at("qtype").get<std::string>()),
            perturbation_from_json(row.at("perturbation"))};
    }

    ModelGateway gateway(make_backend(), std::make_shared<UsageLedger>());
    GenerationOptions options;
    for (QuestionType qtype : all_question_types()) {
        options.templates[qtype] = load_prompt("genqa_" + question_type_name(qtype) + ".txt");
    }
    options.exemplars = load_exemplars();
    options.exemplars_per_type = cfg_.generation.exemplars_per_type;
    QaGenerator generator(gateway, options);

    std::vector<std::optional<QAPair>> slots(paths.size());
    parallel_for(paths.size(), static_cast<std::size_t>(cfg_.workers), [&](std::size_t i) {
        const auto it = plan.find(paths[i].path_id);
        if (it == plan.end()) {
            throw DataError("path " + paths[i].path_id + " has no plan entry");
        }
        const auto& [qtype, perturbation] = it->second;
        auto outcome = generator.generate(paths[i], qtype, format_qa_id(i), snapshot, corpus,
                                          perturbation);
        if (auto* qa = std::get_if<QAPair>(&outcome)) {
            slots[i] = std::move(*qa);
        } else {
            spdlog::warn("gen-qa: {} ({}) abstained: {}", format_qa_id(i),
                         question_type_name(qtype), std::get<Abstention>(outcome).reason);
        }
    });

    std::vector<Json> rows;
    for (const auto& slot : slots) {
        if (slot) rows.push_back(qa_to_json(*slot));
    }
    write_jsonl(artifact("qa.jsonl"), rows);
    write_stage_manifest("gen-qa", 0,
                         {artifact("paths.jsonl"), artifact("plan.jsonl"),
                          artifact("documents.jsonl"), artifact("entities.jsonl"),
                          artifact("relations.jsonl")},
                         {"qa.jsonl"});
    spdlog::info("gen-qa: {} pairs generated, {} abstained", rows.size(),
                 paths.size() - rows.size());
}

void Pipeline::qc() {
    require_artifact("qa.jsonl", "gen-qa");
    require_artifact("documents.jsonl", "ingest");

    const Corpus corpus = load_corpus(artifact("documents.jsonl"));
    std::vector<QAPair> pairs;
    for (const auto& row : read_jsonl(artifact("qa.jsonl"))) pairs.push_back(qa_from_json(row));

    ModelGateway gateway(make_backend(), std::make_shared<UsageLedger>());
    QcOptions options;
    options.answerability_template = load_prompt("judge_answerability.txt");
    options.dedup_threshold = cfg_.dedup_threshold;
    QualityController controller(gateway, options);

    const QcResult result =
        controller.run(std::move(pairs), corpus, static_cast<std::size_t>(cfg_.workers));

    std::vector<Json> benchmark_rows = {benchmark_header(cfg_)};
    for (const auto& qa : result.kept) benchmark_rows.push_back(qa_to_json(qa));
    write_jsonl(artifact("benchmark.jsonl"), benchmark_rows);

    std::vector<Json> report_rows;
    for (const auto& v : result.verdicts) report_rows.push_back(qc_verdict_to_json(v));
    write_jsonl(artifact("qc_report.jsonl"), report_rows);

    write_stage_manifest("qc", 0, {artifact("qa.jsonl"), artifact("documents.jsonl")},
                         {"benchmark.jsonl", "qc_report.jsonl"});
    spdlog::info("qc: {} of {} pairs kept", result.kept.size(),
                 read_jsonl(artifact("qa.jsonl")).size());
}

void Pipeline::eval() {
    require_artifact("benchmark.jsonl", "qc");
    require_artifact("entities.jsonl", "build-kg");
    require_artifact("documents.jsonl", "ingest");

    const Corpus corpus = load_corpus(artifact("documents.jsonl"));
    const KnowledgeGraph graph = load_graph(out_);

    const std::vector<Json> lines = read_jsonl(artifact("benchmark.jsonl"));
    if (lines.empty() || !is_benchmark_header(lines.front())) {
        throw DataError("benchmark.jsonl lacks its provenance header");
    }
    std::vector<QAPair> pairs;
    for (std::size_t i = 1; i < lines.size(); ++i) pairs.push_back(qa_from_json(lines[i]));

    ModelGateway gateway(make_backend(), std::make_shared<UsageLedger>());
    ChunkIndex chunks(corpus, cfg_.chunking, gateway);
    EvalTemplates templates;
    templates.io = load_prompt("eval_io.txt");
    templates.cot = load_prompt("eval_cot.txt");
    templates.context = load_prompt("eval_context.txt");
    templates.judge = load_prompt("judge_answer.txt");
    EvalHarness harness(gateway, graph, chunks, templates, cfg_.eval.params);

    std::vector<Prediction> predictions;
    std::vector<VerdictRecord> verdicts;
    const Report report =
        harness.run_benchmark(cfg_.eval.methods, pairs, cfg_.eval.runs, &predictions, &verdicts);

    Json report_json = report.to_json();
    std::vector<std::filesystem::path> inputs = {artifact("benchmark.jsonl"),
                                                 artifact("documents.jsonl"),
                                                 artifact("entities.jsonl"),
                                                 artifact("relations.jsonl")};
    if (!cfg_.eval.facts_file.empty()) {
        std::vector<FactRecord> facts;
        for (const auto& row : read_jsonl(cfg_.eval.facts_file)) {
            facts.push_back(fact_record_from_json(row));
        }
        const double rate =
            fact_recovery_rate(graph, facts, gateway, cfg_.eval.recovery_threshold);
        report_json["fact_recovery"] = {{"rate", rate},
                                        {"threshold", cfg_.eval.recovery_threshold},
                                        {"fact_count", facts.size()}};
        inputs.push_back(cfg_.eval.facts_file);
    }

    std::vector<Json> pred_rows, verdict_rows;
    for (const auto& p : predictions) pred_rows.push_back(prediction_to_json(p));
    for (const auto& v : verdicts) verdict_rows.push_back(verdict_record_to_json(v));
    write_jsonl(artifact("predictions.jsonl"), pred_rows);
    write_jsonl(artifact("verdicts.jsonl"), verdict_rows);
    write_json_file(artifact("report.json"), report_json);

    write_stage_manifest("eval", cfg_.seeds.eval, inputs,
                         {"predictions.jsonl", "verdicts.jsonl", "report.json"});
    spdlog::info("eval: {} predictions over {} methods x {} runs", predictions.size(),
                 cfg_.eval.methods.size(), cfg_.eval.runs);
}

void Pipeline::stats() {
    require_artifact("usage.json", "build-kg");
    const UsageLedger ledger = UsageLedger::from_json(read_json_file(artifact("usage.json")));
    const ScalingReport report = report_usage(ledger);

    Json points = Json::array();
    for (const auto& p : report.points) {
        points.push_back({{"doc_id", p.doc_id},
                          {"chars", p.chars},
                          {"tokens", p.tokens},
                          {"wall_ms", p.wall_ms}});
    }
    write_json_file(artifact("scaling.json"), {{"token_slope", report.token_slope},
                                               {"token_intercept", report.token_intercept},
                                               {"points", points}});
    write_stage_manifest("stats", 0, {artifact("usage.json")}, {"scaling.json"});
    spdlog::info("stats: token scaling slope {:.4f} over {} documents", report.token_slope,
                 report.points.size());
}

void Pipeline::run_stage(const std::string& name) {
    if (name == "ingest") return ingest();
    if (name == "build-kg") return build_kg();
    if (name == "sample-paths") return sample_paths();
    if (name == "gen-qa") return gen_qa();
    if (name == "qc") return qc();
    if (name == "eval") return eval();
    if (name == "stats") return stats();
    throw ConfigError("unknown stage '" + name + "'");
}

Json benchmark_header(const PipelineConfig& cfg) {
    return {{"kind", "benchmark_header"},
            {"pipeline_version", kPipelineVersion},
            {"domain_id", cfg.domain_id},
            {"window",
             {{"start", format_rfc3339(cfg.window.start)},
              {"end", format_rfc3339(cfg.window.end)}}},
            {"seeds",
             {{"hnsw", cfg.seeds.hnsw}, {"paths", cfg.seeds.paths}, {"eval", cfg.seeds.eval}}},
            {"thresholds",
             {{"tau", cfg.alignment.tau},
              {"relation_threshold", cfg.alignment.relation_threshold},
              {"dedup", cfg.dedup_threshold},
              {"recovery", cfg.eval.recovery_threshold},
              {"link", cfg.eval.params.link_threshold}}}};
}

bool is_benchmark_header(const Json& line) {
    return line.is_object() && line.value("kind", "") == "benchmark_header";
}

} // namespace forge
