#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "forge/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"benchmark pipeline: evolving KG construction, path-grounded QA "
                 "generation, quality control, and method evaluation"};
    app.fallthrough(); // inherited by subcommands, so flags may follow the stage name
    app.require_subcommand(1);

    std::string config_file;
    std::string out_dir;
    int workers = -1;
    double tau = 0.0;
    int hnsw_m = 0;
    int ef_construction = 0;
    int ef_search = 0;

    app.add_option("--config", config_file, "pipeline config file (JSON)")->required();
    app.add_option("--out", out_dir, "artifact directory (default: <config dir>/out)");
    app.add_option("--workers", workers, "worker threads; 0 = all cores, 1 = serial");
    auto* tau_opt = app.add_option("--tau", tau, "entity-alignment threshold override");
    auto* m_opt = app.add_option("--hnsw-m", hnsw_m, "HNSW graph degree override");
    auto* efc_opt =
        app.add_option("--ef-construction", ef_construction, "HNSW build beam-width override");
    auto* efs_opt = app.add_option("--ef-search", ef_search, "HNSW query beam-width override");

    for (const char* stage :
         {"ingest", "build-kg", "sample-paths", "gen-qa", "qc", "eval", "stats"}) {
        app.add_subcommand(stage);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        forge::PipelineConfig cfg = forge::load_config(config_file);
        if (workers >= 0) cfg.workers = workers;
        if (*tau_opt) {
            if (tau <= 0.0 || tau > 1.0) throw forge::ConfigError("--tau must be in (0, 1]");
            cfg.alignment.tau = tau;
        }
        if (*m_opt) {
            if (hnsw_m < 2 || hnsw_m > 256) {
                throw forge::ConfigError("--hnsw-m must be in [2, 256]");
            }
            cfg.hnsw.m = hnsw_m;
        }
        if (*efc_opt) {
            if (ef_construction < cfg.hnsw.m || ef_construction > 10000) {
                throw forge::ConfigError("--ef-construction must be in [m, 10000]");
            }
            cfg.hnsw.ef_construction = ef_construction;
        }
        if (*efs_opt) {
            if (ef_search < 1 || ef_search > 10000) {
                throw forge::ConfigError("--ef-search must be in [1, 10000]");
            }
            cfg.hnsw.ef_search = ef_search;
        }

        const std::filesystem::path out =
            out_dir.empty() ? cfg.base_dir / "out" : std::filesystem::path(out_dir);
        forge::Pipeline pipeline(std::move(cfg), config_file, out);
        pipeline.run_stage(app.get_subcommands().front()->get_name());
        return kExitOk;
    } catch (const forge::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitError;
    }
}
