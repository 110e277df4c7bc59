// trendproxy command line: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 missing artifact,
// 1 anything else.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "trendproxy/pipeline.hpp"

namespace {

namespace tp = trendproxy;
namespace pl = trendproxy::pipeline;

int exit_code_for(const tp::Error& e) {
    switch (e.kind()) {
        case tp::ErrorKind::Config: return 2;
        case tp::ErrorKind::MissingArtifact: return 4;
        default: return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Building energy forecasting with search-trend proxies"};
    app.set_version_flag("--version", std::string(tp::kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::string> mode, group_by, out;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Pipeline config (JSON)")->required();
    app.add_option("--mode", mode, "baseline | proposed | both")->check(CLI::IsMember({"baseline", "proposed", "both"}));
    app.add_option("--group-by", group_by, "none | category")->check(CLI::IsMember({"none", "category"}));
    app.add_option("--seed", seed, "GBDT seed");
    app.add_option("--out", out, "Run directory (overrides output_dir)");

    auto* ingest = app.add_subcommand("ingest", "Load, validate and clean meter and weather data");
    auto* screen = app.add_subcommand("screen", "Calendar signals, topic screening and census");
    auto* train = app.add_subcommand("train", "Train baseline and/or proposed models");
    auto* evaluate = app.add_subcommand("evaluate", "Predict the validation year and write the report");
    auto* run_all = app.add_subcommand("run-all", "Run every stage");
    auto* chart = app.add_subcommand("chart", "Write SVG charts from screen and report outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto config = pl::load_config(config_path);
        if (mode) config.mode = pl::parse_mode(*mode);
        if (group_by) config.group_by = pl::parse_group_by(*group_by);
        if (seed) config.gbdt.seed = *seed;
        if (out) config.output_dir = std::filesystem::absolute(*out);
        pl::Pipeline pipeline(std::move(config));
        pl::RunLock lock(pipeline.config().output_dir);

        if (*ingest) {
            pipeline.ingest();
        } else if (*screen) {
            pipeline.screen();
        } else if (*train) {
            pipeline.train();
        } else if (*evaluate) {
            pipeline.evaluate();
        } else if (*run_all) {
            pipeline.run_all();
        } else if (*chart) {
            pipeline.chart();
        }
        return 0;
    } catch (const tp::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
