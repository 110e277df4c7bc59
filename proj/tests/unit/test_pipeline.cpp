#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <doctest.h>
#include <json.hpp>

#include "support.hpp"
#include "trendproxy/pipeline.hpp"

using namespace trendproxy;
using namespace trendproxy::pipeline;
using nlohmann::json;
using testsupport::TempDir;

namespace {

const char* kInputs[] = {"meters.csv",      "building_metadata.csv", "weather.csv", "trends.csv",
                         "topic_catalog.csv", "day_types.csv",        "site_geo.csv"};

// Copies the synthetic corpus into `dir` and returns a small, fast config.
json small_config(const std::filesystem::path& dir) {
    const auto src = testsupport::source_dir() / "data" / "synthetic";
    for (const char* f : kInputs) std::filesystem::copy_file(src / f, dir / f);
    return json{{"paths",
                 {{"meters", "meters.csv"},
                  {"metadata", "building_metadata.csv"},
                  {"weather", "weather.csv"},
                  {"trends", "trends.csv"},
                  {"topic_catalog", "topic_catalog.csv"},
                  {"day_types", "day_types.csv"},
                  {"site_geo", "site_geo.csv"}}},
                {"training_year", 2016},
                {"validation_year", 2017},
                {"gbdt", {{"n_trees", 8}, {"max_leaves", 8}}},
                {"output_dir", "run"}};
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j) {
    return testsupport::write_text(dir / "config.json", j.dump(2));
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TRENDPROXY_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("config: defaults, relative paths and CLI-style overrides") {
        TempDir dir;
        auto c = load_config(write_config(dir.path(), small_config(dir.path())));
        CHECK(c.paths.meters == (dir / "meters.csv").lexically_normal());
        CHECK(c.output_dir == (dir / "run").lexically_normal());
        CHECK(c.gbdt.n_trees == 8);
        CHECK(c.gbdt.learning_rate == 0.05);
        CHECK(c.screening.fair_threshold == 0.6);
        CHECK(c.screening.high_threshold == 0.8);
        CHECK(c.mode == ModeSelection::Both);
        CHECK(c.group_by == GroupBy::None);
        CHECK(c.to_json()["gbdt"]["n_trees"] == 8);
    }

    TEST_CASE("config errors are ConfigError") {
        TempDir dir;
        const auto base = small_config(dir.path());
        auto expect_error = [&](json j, const char* what) {
            CAPTURE(what);
            CHECK_THROWS_AS(load_config(write_config(dir.path(), j)), ConfigError);
        };
        auto j = base;
        j["training_year"] = 2017;
        expect_error(j, "same years");
        j = base;
        j["screening"] = {{"fair_threshold", 0.9}, {"high_threshold", 0.8}};
        expect_error(j, "fair above high");
        j = base;
        j["paths"]["meters"] = "absent.csv";
        expect_error(j, "missing file");
        j = base;
        j["gbdt"]["n_treez"] = 3;
        expect_error(j, "unknown key");
        j = base;
        j["gbdt"]["learning_rate"] = "fast";
        expect_error(j, "wrong type");
        j = base;
        j["mode"] = "everything";
        expect_error(j, "bad mode");
        j = base;
        j["paths"].erase("trends");
        expect_error(j, "no trends source");
        CHECK_THROWS_AS(load_config(dir / "nope.json"), ConfigError);
        testsupport::write_text(dir / "broken.json", "{ not json");
        CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
    }

    TEST_CASE("CLI exit codes: config error 2, evaluate before train 4") {
        TempDir dir;
        const auto cfg = write_config(dir.path(), small_config(dir.path()));
        CHECK(run_cli("evaluate --config " + cfg.string()) == 4);
        CHECK(run_cli("train --config " + cfg.string() + " --mode proposed") == 4);
        CHECK(run_cli("ingest --config " + (dir / "missing.json").string()) == 2);
        CHECK(run_cli("ingest --config " + cfg.string() + " --mode sideways") == 2);
        CHECK(run_cli("ingest --config " + cfg.string()) == 0);
    }

    TEST_CASE("CLI: broken input data exits 3") {
        TempDir dir;
        auto j = small_config(dir.path());
        testsupport::write_text(dir / "meters.csv",
                                "building_id,meter,timestamp,meter_reading\nb00,9,2016-01-01 00:00:00,1\n");
        CHECK(run_cli("ingest --config " + write_config(dir.path(), j).string()) == 3);
    }

    TEST_CASE("run lock rejects a second holder") {
        TempDir dir;
        RunLock first(dir.path());
        CHECK_THROWS_AS(RunLock(dir.path()), ConfigError);
    }

    TEST_CASE("stage cache: touch keeps it, a changed byte invalidates it") {
        TempDir dir;
        auto config = load_config(write_config(dir.path(), small_config(dir.path())));
        {
            Pipeline p(config);
            CHECK_FALSE(p.ingest().cached);
            CHECK(p.ingest().cached);
        }
        // Same bytes, new mtime.
        const auto weather = dir / "weather.csv";
        const auto bytes = testsupport::read_text(weather);
        testsupport::write_text(weather, bytes);
        std::filesystem::last_write_time(weather, std::filesystem::file_time_type::clock::now());
        {
            Pipeline p(config);
            CHECK(p.ingest().cached);
        }
        // One byte differs.
        auto changed = bytes;
        const auto pos = changed.find("\ns0,2016-01-01 00:00:00,0.5,");
        REQUIRE(pos != std::string::npos);
        changed[pos + 25] = '6';
        testsupport::write_text(weather, changed);
        {
            Pipeline p(config);
            CHECK_FALSE(p.ingest().cached);
        }
        const auto manifest = json::parse(testsupport::read_text(config.output_dir / "ingest" / "manifest.json"));
        CHECK(manifest["stage"] == "ingest");
        CHECK(manifest.contains("stage_key"));
        CHECK(manifest["inputs"].dump().find("weather") != std::string::npos);
    }

    TEST_CASE("run_all on the synthetic corpus emits every report table and charts") {
        TempDir dir;
        auto config = load_config(write_config(dir.path(), small_config(dir.path())));
        Pipeline p(config);
        auto outcomes = p.run_all();
        CHECK(outcomes.size() == 6);
        const auto report = config.output_dir / "report";
        for (const char* name : {"report.json", "table_overall.csv", "table_meter_type.csv", "table_category.csv",
                                 "table_topic.csv", "table_country.csv", "table_benchmark.csv", "weekly_errors.csv",
                                 "manifest.json"}) {
            CAPTURE(name);
            CHECK(std::filesystem::exists(report / name));
        }
        CHECK(std::filesystem::exists(config.output_dir / "charts" / "calendar_signals.svg"));
        CHECK(std::filesystem::exists(config.output_dir / "charts" / "weekly_rmsle.svg"));
        CHECK(std::filesystem::exists(config.output_dir / "train" / "baseline" / "model_all.tpgb"));

        // Everything cached on a second pass.
        Pipeline again(config);
        for (const auto& o : again.run_all()) CHECK(o.cached);

        // A different seed retrains but leaves ingest and screen cached.
        auto reseeded = config;
        reseeded.gbdt.seed = 7;
        Pipeline p3(reseeded);
        CHECK(p3.ingest().cached);
        CHECK(p3.screen().cached);
        for (const auto& o : p3.train()) CHECK_FALSE(o.cached);
    }
}
