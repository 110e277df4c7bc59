#pragma once

// Stage orchestration: ingest -> screen -> train -> evaluate (+ chart), each
// stage writing its outputs and a manifest.json under the run directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trendproxy/data_ingest.hpp"
#include "trendproxy/gbdt.hpp"
#include "trendproxy/screening.hpp"

namespace trendproxy::pipeline {

enum class ModeSelection { Baseline, Proposed, Both };
enum class GroupBy { None, Category };

ModeSelection parse_mode(std::string_view text);
GroupBy parse_group_by(std::string_view text);
std::string_view to_string(ModeSelection m);
std::string_view to_string(GroupBy g);

struct DataPaths {
    std::filesystem::path meters;
    std::filesystem::path metadata;
    std::filesystem::path weather;
    std::filesystem::path trends;  // optional when a gateway is configured
    std::filesystem::path topic_catalog;
    std::filesystem::path day_types;
    std::filesystem::path site_geo;
    std::filesystem::path benchmark;  // optional; built-in tiers otherwise
};

struct TrendsSource {
    std::string gateway_url;            // used when paths.trends is empty
    std::filesystem::path cache_dir;    // defaults to <out>/trends_cache
    int min_spacing_ms = 1000;
    int max_retries = 3;
};

struct PipelineConfig {
    std::filesystem::path source;  // config file, for error messages
    DataPaths paths;
    TrendsSource trends_source;
    int training_year = 2016;
    int validation_year = 2017;
    bool allow_partial_years = false;
    ingest::CleaningConfig cleaning;
    std::size_t max_interp_hours = 6;
    std::size_t min_valid_hours = 12;
    screening::ScreeningConfig screening;
    gbdt::GbdtParams gbdt;
    std::size_t min_meters = 3;
    ModeSelection mode = ModeSelection::Both;
    GroupBy group_by = GroupBy::None;
    std::filesystem::path output_dir;

    // Canonical JSON form (paths as given after resolution). Used for
    // manifests and cache keys.
    nlohmann::ordered_json to_json() const;
};

// Parses a JSON config; relative paths resolve against the file's directory.
// Throws ConfigError for unknown keys, bad values, or missing input files.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                            const std::filesystem::path& source = "<memory>");
// Re-checks invariants after CLI overrides.
void validate(const PipelineConfig& config);

struct StageOutcome {
    std::string stage;
    bool cached = false;
    std::filesystem::path dir;
};

// Holds <out>/.lock for the lifetime of the object. Throws ConfigError when
// another process owns the run directory.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    StageOutcome ingest();
    StageOutcome screen();
    // Trains the modes selected in the config.
    std::vector<StageOutcome> train();
    StageOutcome evaluate();
    StageOutcome chart();
    std::vector<StageOutcome> run_all();

    const PipelineConfig& config() const { return config_; }

private:
    PipelineConfig config_;
};

}  // namespace trendproxy::pipeline
