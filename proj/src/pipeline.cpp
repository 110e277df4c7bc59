#include "trendproxy/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "trendproxy/calendar.hpp"
#include "trendproxy/chart.hpp"
#include "trendproxy/csv.hpp"
#include "trendproxy/evaluation.hpp"
#include "trendproxy/features.hpp"
#include "trendproxy/hashing.hpp"
#include "trendproxy/trends.hpp"

namespace trendproxy::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
    fs::create_directories(run_dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST) {
            throw ConfigError(fmt::format("run directory '{}' is locked by another process (remove {} if stale)",
                                          run_dir.string(), path_.string()));
        }
        throw ConfigError(fmt::format("cannot create lock '{}': {}", path_.string(), std::strerror(errno)));
    }
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kStageKey = ".stage_key";

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", p.string()));
    out << text;
}

std::string upstream_key(const fs::path& dir, std::string_view stage) {
    const auto key_file = dir / kStageKey;
    if (!fs::is_regular_file(key_file) || !fs::is_regular_file(dir / kManifest)) {
        throw MissingArtifactError(
            fmt::format("stage '{}' has no completed outputs in '{}'; run it first", stage, dir.string()));
    }
    return read_text(key_file);
}

void require_artifact(const fs::path& p, std::string_view stage) {
    if (!fs::is_regular_file(p)) {
        throw MissingArtifactError(fmt::format("missing artifact '{}' (produced by stage '{}')", p.string(), stage));
    }
}

// One stage execution: decides whether cached outputs are reusable and
// writes manifest + key on success.
class StageRun {
public:
    StageRun(fs::path dir, std::string stage, const PipelineConfig& config)
        : dir_(std::move(dir)), stage_(std::move(stage)), config_(config), start_(Clock::now()) {
        key_material_["stage"] = stage_;
        key_material_["software_version"] = std::string(kVersion);
    }

    void key_value(const std::string& name, ojson value) { key_material_["values"][name] = std::move(value); }
    void input(const std::string& name, const fs::path& path) {
        const auto hash = file_sha256(path);
        key_material_["inputs"][name] = hash;
        inputs_[name] = {{"path", path.string()}, {"sha256", hash}};
    }
    void upstream(const std::string& name, const std::string& key) {
        key_material_["upstream"][name] = key;
        upstream_[name] = key;
    }
    void output(const std::string& file) { outputs_.push_back(file); }

    std::string key() const { return sha256_hex(key_material_.dump()); }

    bool cached() const {
        if (!fs::is_regular_file(dir_ / kStageKey) || !fs::is_regular_file(dir_ / kManifest)) return false;
        if (read_text(dir_ / kStageKey) != key()) return false;
        return std::all_of(outputs_.begin(), outputs_.end(),
                           [&](const std::string& f) { return fs::is_regular_file(dir_ / f); });
    }

    void begin() {
        fs::create_directories(dir_);
        std::error_code ec;
        fs::remove(dir_ / kStageKey, ec);
    }

    void timing(const std::string& name, Clock::time_point since) { timings_[name] = elapsed_ms(since); }
    ojson& counts() { return counts_; }

    void finish() {
        ojson m;
        m["stage"] = stage_;
        m["software_version"] = std::string(kVersion);
        m["stage_key"] = key();
        m["seed"] = config_.gbdt.seed;
        m["config"] = config_.to_json();
        m["inputs"] = inputs_.empty() ? ojson::object() : inputs_;
        m["upstream"] = upstream_.empty() ? ojson::object() : upstream_;
        m["outputs"] = outputs_;
        m["counts"] = counts_.empty() ? ojson::object() : counts_;
        timings_["total"] = elapsed_ms(start_);
        m["timings_ms"] = timings_;
        write_text(dir_ / kManifest, m.dump(2) + "\n");
        write_text(dir_ / kStageKey, key());
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::string stage_;
    const PipelineConfig& config_;
    Clock::time_point start_;
    ojson key_material_;
    ojson inputs_;
    ojson upstream_;
    ojson counts_;
    ojson timings_;
    std::vector<std::string> outputs_;
};

void log_stage(std::string_view stage, bool cached, const fs::path& dir) {
    fmt::print(stderr, "[{}] {} ({})\n", stage, cached ? "cached" : "done", dir.string());
}

DateRange study_range(const PipelineConfig& c) {
    return years_range(std::min(c.training_year, c.validation_year), std::max(c.training_year, c.validation_year));
}

std::map<std::string, std::string> load_site_geo(const fs::path& path) {
    auto table = csv::Table::read(path);
    const auto c_site = table.column("site_id");
    const auto c_geo = table.column("geo");
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < table.rows(); ++i) {
        const auto& row = table.row(i);
        if (row[c_geo].empty()) throw DataError(fmt::format("{}:{}: empty geo", path.string(), table.line_of(i)));
        if (!out.emplace(row[c_site], row[c_geo]).second) {
            throw DataError(fmt::format("{}:{}: duplicate site '{}'", path.string(), table.line_of(i), row[c_site]));
        }
    }
    return out;
}

struct Paths {
    fs::path ingest, screen, train, report, charts;
    explicit Paths(const fs::path& out)
        : ingest(out / "ingest"), screen(out / "screen"), train(out / "train"), report(out / "report"),
          charts(out / "charts") {}
    fs::path train_mode(features::Mode m) const { return train / std::string(features::to_string(m)); }
};

std::vector<ingest::MeterSeries> load_clean_meters(const PipelineConfig& c, const ingest::BuildingTable& meta) {
    const Paths p(c.output_dir);
    require_artifact(p.ingest / "meters.csv", "ingest");
    auto loaded = ingest::load_meter_readings(p.ingest / "meters.csv", {study_range(c)});
    ingest::attach_sites(loaded.series, meta);
    return std::move(loaded.series);
}

std::map<std::string, ingest::WeatherSeries> load_clean_weather(const PipelineConfig& c) {
    const Paths p(c.output_dir);
    require_artifact(p.ingest / "weather.csv", "ingest");
    return ingest::load_weather(p.ingest / "weather.csv", study_range(c)).sites;
}

std::vector<trends::TrendSeries> load_standardized_trends(const PipelineConfig& c) {
    const Paths p(c.output_dir);
    require_artifact(p.screen / "trends.csv", "screen");
    auto series = trends::load_trend_csv(p.screen / "trends.csv");
    for (auto& s : series) s = trends::standardize_by_year(std::move(s), {c.allow_partial_years});
    return series;
}

std::string row_key_hash(const features::FeatureMatrix& m) {
    Sha256 h;
    for (const auto& r : m.rows) {
        h.update(m.meter_ids[r.meter]);
        const auto t = r.timestamp.time_since_epoch().count();
        h.update_pod(std::span<const decltype(t)>(&t, 1));
    }
    return h.hex();
}

struct MeterGroup {
    std::string label;
    std::vector<ingest::MeterSeries> meters;
};

std::vector<MeterGroup> group_meters(std::vector<ingest::MeterSeries> meters, GroupBy group_by,
                                     const std::vector<screening::CensusEntry>& screening) {
    if (group_by == GroupBy::None) return {{"all", std::move(meters)}};
    std::map<std::string, screening::CorrelationCategory> category;
    for (const auto& e : screening) category[e.meter_id] = e.category();
    std::vector<MeterGroup> groups;
    for (auto c : {screening::CorrelationCategory::High, screening::CorrelationCategory::Fair,
                   screening::CorrelationCategory::Poor}) {
        MeterGroup g{std::string(screening::to_string(c)), {}};
        for (const auto& m : meters) {
            auto it = category.find(m.meter_id);
            if (it == category.end()) {
                throw DataError(fmt::format("meter '{}' missing from screening results", m.meter_id));
            }
            if (it->second == c) g.meters.push_back(m);
        }
        if (!g.meters.empty()) groups.push_back(std::move(g));
    }
    return groups;
}

fs::path model_file(const std::string& group) { return fs::path(fmt::format("model_{}.tpgb", group)); }

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) { validate(config_); }

StageOutcome Pipeline::ingest() {
    const auto& c = config_;
    const Paths p(c.output_dir);
    StageRun run(p.ingest, "ingest", c);
    run.input("meters", c.paths.meters);
    run.input("metadata", c.paths.metadata);
    run.input("weather", c.paths.weather);
    run.input("day_types", c.paths.day_types);
    run.input("site_geo", c.paths.site_geo);
    run.key_value("years", {c.training_year, c.validation_year});
    run.key_value("cleaning", c.to_json()["cleaning"]);
    for (const char* f : {"meters.csv", "weather.csv", "cleaning_report.csv"}) run.output(f);
    if (run.cached()) {
        log_stage("ingest", true, p.ingest);
        return {"ingest", true, p.ingest};
    }
    run.begin();
    const auto range = study_range(c);

    auto t0 = Clock::now();
    const auto meta = ingest::load_building_metadata(c.paths.metadata);
    auto loaded = ingest::load_meter_readings(c.paths.meters, {range});
    ingest::attach_sites(loaded.series, meta);
    if (loaded.series.empty()) throw DataError(fmt::format("'{}' holds no readings in range", c.paths.meters.string()));
    run.timing("load_meters", t0);

    const auto site_geo = load_site_geo(c.paths.site_geo);
    const auto day_types = ingest::load_daytype_calendar(c.paths.day_types, range);
    for (const auto& s : loaded.series) {
        if (!site_geo.count(s.site_id)) throw DataError(fmt::format("site '{}' has no geo in site_geo", s.site_id));
        if (!day_types.has_site(s.site_id)) {
            throw DataError(fmt::format("site '{}' has no day-type labels", s.site_id));
        }
    }

    t0 = Clock::now();
    std::vector<ingest::MeterSeries> cleaned;
    std::vector<ingest::CleaningReport> reports;
    std::size_t outliers = 0, constant = 0;
    for (const auto& s : loaded.series) {
        auto r = ingest::clean_meter_series(s, c.cleaning);
        outliers += r.report.removed_outlier_count;
        constant += r.report.removed_constant_run_count;
        cleaned.push_back(std::move(r.series));
        reports.push_back(std::move(r.report));
    }
    run.timing("clean", t0);

    t0 = Clock::now();
    auto weather = ingest::load_weather(c.paths.weather, range);
    std::map<std::string, ingest::WeatherSeries> imputed;
    std::set<std::string> sites;
    for (const auto& s : cleaned) sites.insert(s.site_id);
    for (const auto& site : sites) {
        auto it = weather.sites.find(site);
        if (it == weather.sites.end()) throw DataError(fmt::format("no weather rows for site '{}'", site));
        imputed.emplace(site, ingest::impute_weather(it->second, {c.max_interp_hours}));
    }
    run.timing("weather", t0);

    ingest::write_meter_readings(cleaned, p.ingest / "meters.csv");
    ingest::write_weather(imputed, p.ingest / "weather.csv");
    ingest::write_cleaning_reports(reports, p.ingest / "cleaning_report.csv");

    std::size_t valid_hours = 0;
    for (const auto& s : cleaned) valid_hours += s.valid_count();
    auto& counts = run.counts();
    counts["meters"] = cleaned.size();
    counts["sites"] = sites.size();
    counts["valid_hours"] = valid_hours;
    counts["duplicate_warnings"] = loaded.duplicate_warning_count;
    counts["negative_readings"] = loaded.negative_reading_count;
    counts["unparseable_readings"] = loaded.unparseable_reading_count;
    counts["removed_outliers"] = outliers;
    counts["removed_constant_runs"] = constant;
    counts["weather_warnings"] = weather.warning_count;
    run.finish();
    log_stage("ingest", false, p.ingest);
    return {"ingest", false, p.ingest};
}

StageOutcome Pipeline::screen() {
    const auto& c = config_;
    const Paths p(c.output_dir);
    StageRun run(p.screen, "screen", c);
    run.upstream("ingest", upstream_key(p.ingest, "ingest"));
    run.input("metadata", c.paths.metadata);
    run.input("topic_catalog", c.paths.topic_catalog);
    run.input("site_geo", c.paths.site_geo);
    if (!c.paths.trends.empty()) {
        run.input("trends", c.paths.trends);
    } else {
        run.key_value("gateway_url", c.trends_source.gateway_url);
    }
    run.key_value("training_year", c.training_year);
    run.key_value("years", {c.training_year, c.validation_year});
    run.key_value("allow_partial_years", c.allow_partial_years);
    run.key_value("calendar", c.to_json()["calendar"]);
    run.key_value("screening", c.to_json()["screening"]);
    for (const char* f : {"trends.csv", "calendar_signals.csv", "screening_results.csv", "census_meter_type.csv",
                          "census_primary_use.csv", "census_topic.csv"}) {
        run.output(f);
    }
    if (run.cached()) {
        log_stage("screen", true, p.screen);
        return {"screen", true, p.screen};
    }
    run.begin();

    const auto meta = ingest::load_building_metadata(c.paths.metadata);
    const auto meters = load_clean_meters(c, meta);
    const auto site_geo = load_site_geo(c.paths.site_geo);
    const auto catalog = trends::load_topic_catalog(c.paths.topic_catalog);
    std::set<std::string> geos;
    for (const auto& m : meters) geos.insert(site_geo.at(m.site_id));

    // Acquire raw series for catalog topics x geos in use.
    auto t0 = Clock::now();
    std::vector<trends::TrendSeries> raw;
    std::size_t missing_series = 0;
    if (!c.paths.trends.empty()) {
        auto all = trends::load_trend_csv(c.paths.trends);
        std::map<std::pair<std::string, std::string>, trends::TrendSeries*> index;
        for (auto& s : all) index[{s.topic_id, s.geo}] = &s;
        for (const auto& geo : geos) {
            for (const auto& t : catalog) {
                auto it = index.find({t.topic_id, geo});
                if (it == index.end()) {
                    ++missing_series;
                    continue;
                }
                raw.push_back(std::move(*it->second));
            }
        }
    } else {
        auto transport = trends::make_http_transport(c.trends_source.gateway_url);
        auto cache = c.trends_source.cache_dir.empty() ? c.output_dir / "trends_cache" : c.trends_source.cache_dir;
        trends::FetchOptions opts;
        opts.min_spacing = std::chrono::milliseconds(c.trends_source.min_spacing_ms);
        opts.max_retries = c.trends_source.max_retries;
        trends::TrendFetcher fetcher(cache, transport.get(), opts);
        for (const auto& geo : geos) {
            for (const auto& t : catalog) raw.push_back(fetcher.fetch(t.topic_id, geo, study_range(c)));
        }
        run.counts()["trend_requests"] = fetcher.requests_issued();
    }
    std::sort(raw.begin(), raw.end(),
              [](const auto& a, const auto& b) { return std::tie(a.topic_id, a.geo) < std::tie(b.topic_id, b.geo); });
    if (raw.empty()) throw DataError("no trend series match the topic catalog and site geos");
    trends::write_trend_csv(raw, p.screen / "trends.csv");
    std::vector<trends::TrendSeries> standardized;
    std::size_t degenerate = 0;
    for (const auto& s : raw) {
        standardized.push_back(trends::standardize_by_year(s, {c.allow_partial_years}));
        degenerate += standardized.back().degenerate_years.size();
    }
    run.timing("trends", t0);

    t0 = Clock::now();
    std::vector<calendar::CalendarSignal> signals;
    std::vector<screening::CensusEntry> entries;
    ojson unscreenable = ojson::object();
    std::size_t fallback = 0;
    for (const auto& m : meters) {
        screening::CensusEntry e;
        e.meter_id = m.meter_id;
        e.meter_type = m.type;
        e.primary_use = meta.at(m.building_id).primary_use;
        const auto& geo = site_geo.at(m.site_id);
        try {
            auto signal = calendar::extract_calendar(m, c.training_year, {c.min_valid_hours});
            if (signal.from_fallback) ++fallback;
            std::vector<trends::TrendSeries> candidates;
            for (const auto& s : standardized) {
                if (s.geo == geo) candidates.push_back(s);
            }
            signals.push_back(signal);
            e.result = screening::screen_meter(signal, candidates, c.training_year, c.screening);
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::InsufficientOverlap && err.kind() != ErrorKind::ConstantInput &&
                err.kind() != ErrorKind::ZeroVariance && err.kind() != ErrorKind::Data) {
                throw;
            }
            unscreenable[m.meter_id] = err.what();
        }
        entries.push_back(std::move(e));
    }
    run.timing("calendar_and_screening", t0);

    calendar::write_calendar_signals(signals, p.screen / "calendar_signals.csv");
    screening::write_screening_results(entries, p.screen / "screening_results.csv");
    const auto census = screening::screening_census(entries);
    screening::write_census_table(census.by_meter_type, p.screen / "census_meter_type.csv");
    screening::write_census_table(census.by_primary_use, p.screen / "census_primary_use.csv");
    screening::write_census_table(census.by_topic, p.screen / "census_topic.csv");

    auto& counts = run.counts();
    counts["meters"] = entries.size();
    counts["trend_series"] = raw.size();
    counts["missing_trend_series"] = missing_series;
    counts["degenerate_trend_years"] = degenerate;
    counts["calendar_fallbacks"] = fallback;
    counts["unscreenable"] = unscreenable;
    for (auto cat : screening::kCategories) {
        counts["category_" + std::string(screening::to_string(cat))] =
            std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.category() == cat; });
    }
    run.finish();
    log_stage("screen", false, p.screen);
    return {"screen", false, p.screen};
}

namespace {

struct TrainContext {
    ingest::BuildingTable meta;
    std::vector<ingest::MeterSeries> meters;
    std::map<std::string, ingest::WeatherSeries> weather;
    std::vector<trends::TrendSeries> trends;
    std::vector<screening::CensusEntry> screening;
};

bool needs_screen(features::Mode mode, GroupBy group_by) {
    return mode == features::Mode::Proposed || group_by == GroupBy::Category;
}

TrainContext load_train_context(const PipelineConfig& c, features::Mode mode) {
    TrainContext ctx;
    ctx.meta = ingest::load_building_metadata(c.paths.metadata);
    ctx.meters = load_clean_meters(c, ctx.meta);
    ctx.weather = load_clean_weather(c);
    if (needs_screen(mode, c.group_by)) {
        const Paths p(c.output_dir);
        require_artifact(p.screen / "screening_results.csv", "screen");
        ctx.screening = screening::read_screening_results(p.screen / "screening_results.csv");
        if (mode == features::Mode::Proposed) ctx.trends = load_standardized_trends(c);
    }
    return ctx;
}

features::Assembled assemble(const TrainContext& ctx, std::span<const ingest::MeterSeries> meters,
                             features::Mode mode, DateRange range) {
    features::AssemblyInputs in;
    in.meters = meters;
    in.metadata = &ctx.meta;
    in.weather = &ctx.weather;
    in.trends = ctx.trends;
    in.screening = ctx.screening;
    return features::build_feature_matrix(in, mode, range);
}

StageOutcome train_mode(const PipelineConfig& c, features::Mode mode) {
    const Paths p(c.output_dir);
    const auto dir = p.train_mode(mode);
    const std::string stage = fmt::format("train/{}", features::to_string(mode));
    StageRun run(dir, stage, c);
    run.upstream("ingest", upstream_key(p.ingest, "ingest"));
    if (needs_screen(mode, c.group_by)) run.upstream("screen", upstream_key(p.screen, "screen"));
    run.input("metadata", c.paths.metadata);
    run.key_value("mode", std::string(features::to_string(mode)));
    run.key_value("group_by", std::string(to_string(c.group_by)));
    run.key_value("training_year", c.training_year);
    run.key_value("allow_partial_years", c.allow_partial_years);
    run.key_value("gbdt", c.to_json()["gbdt"]);
    if (run.cached()) {
        log_stage(stage, true, dir);
        return {stage, true, dir};
    }
    run.begin();
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".tpgb") fs::remove(entry.path());
    }

    auto ctx = load_train_context(c, mode);
    auto groups = group_meters(ctx.meters, c.group_by, ctx.screening);
    ojson group_info = ojson::array();
    for (const auto& g : groups) {
        auto t0 = Clock::now();
        auto assembled = assemble(ctx, g.meters, mode, year_range(c.training_year));
        if (assembled.matrix.row_count() == 0) {
            throw DataError(fmt::format("group '{}' has no valid rows in {}", g.label, c.training_year));
        }
        auto encoded = features::encode_categoricals(std::move(assembled.matrix));
        auto bundle = gbdt::train(encoded.matrix, assembled.target, c.gbdt, encoded.dictionary);
        gbdt::save_bundle(bundle, dir / model_file(g.label));
        run.timing("train_" + g.label, t0);
        group_info.push_back({{"group", g.label},
                              {"model", model_file(g.label).string()},
                              {"meters", g.meters.size()},
                              {"rows", encoded.matrix.row_count()},
                              {"row_key_hash", row_key_hash(encoded.matrix)},
                              {"data_hash", bundle.meta.data_hash},
                              {"constant_target", bundle.meta.constant_target}});
        run.output(model_file(g.label).string());
    }
    run.counts()["groups"] = group_info;
    run.finish();
    log_stage(stage, false, dir);
    return {stage, false, dir};
}

ojson read_manifest(const fs::path& dir, std::string_view stage) {
    upstream_key(dir, stage);
    try {
        return ojson::parse(read_text(dir / kManifest));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("corrupt manifest in '{}': {}", dir.string(), e.what()));
    }
}

}  // namespace

std::vector<StageOutcome> Pipeline::train() {
    std::vector<StageOutcome> out;
    if (config_.mode != ModeSelection::Proposed) out.push_back(train_mode(config_, features::Mode::Baseline));
    if (config_.mode != ModeSelection::Baseline) out.push_back(train_mode(config_, features::Mode::Proposed));
    return out;
}

StageOutcome Pipeline::evaluate() {
    const auto& c = config_;
    const Paths p(c.output_dir);
    StageRun run(p.report, "evaluate", c);
    const auto base_dir = p.train_mode(features::Mode::Baseline);
    const auto prop_dir = p.train_mode(features::Mode::Proposed);
    run.upstream("train/baseline", upstream_key(base_dir, "train --mode baseline"));
    run.upstream("train/proposed", upstream_key(prop_dir, "train --mode proposed"));
    run.upstream("screen", upstream_key(p.screen, "screen"));
    run.upstream("ingest", upstream_key(p.ingest, "ingest"));
    run.input("metadata", c.paths.metadata);
    run.input("day_types", c.paths.day_types);
    run.input("site_geo", c.paths.site_geo);
    if (!c.paths.benchmark.empty()) run.input("benchmark", c.paths.benchmark);
    run.key_value("validation_year", c.validation_year);
    run.key_value("evaluation", c.to_json()["evaluation"]);
    for (const char* f : {"report.json", "table_meter_type.csv", "table_category.csv", "table_topic.csv",
                          "table_country.csv", "table_benchmark.csv", "weekly_errors.csv", "predictions_baseline.csv",
                          "predictions_proposed.csv", "table_census_meter_type.csv", "table_census_primary_use.csv",
                          "table_census_topic.csv", "benchmark.csv"}) {
        run.output(f);
    }
    if (run.cached()) {
        log_stage("evaluate", true, p.report);
        return {"evaluate", true, p.report};
    }

    // Paired comparison requires both models to have seen the same rows.
    const auto base_manifest = read_manifest(base_dir, "train --mode baseline");
    const auto prop_manifest = read_manifest(prop_dir, "train --mode proposed");
    const auto& base_groups = base_manifest["counts"]["groups"];
    const auto& prop_groups = prop_manifest["counts"]["groups"];
    if (base_groups.size() != prop_groups.size()) throw DataError("baseline and proposed models use different groups");
    for (std::size_t i = 0; i < base_groups.size(); ++i) {
        if (base_groups[i]["group"] != prop_groups[i]["group"] ||
            base_groups[i]["row_key_hash"] != prop_groups[i]["row_key_hash"]) {
            throw DataError(fmt::format("baseline and proposed models were trained on different row sets (group {})",
                                        base_groups[i]["group"].get<std::string>()));
        }
    }
    run.begin();

    const auto site_geo = load_site_geo(c.paths.site_geo);
    const auto day_types = ingest::load_daytype_calendar(c.paths.day_types, year_range(c.validation_year));
    const auto benchmark =
        c.paths.benchmark.empty() ? eval::BenchmarkTable::defaults() : eval::BenchmarkTable::load(c.paths.benchmark);

    std::map<features::Mode, std::vector<eval::PredictionRecord>> records;
    for (auto mode : {features::Mode::Baseline, features::Mode::Proposed}) {
        auto t0 = Clock::now();
        auto ctx = load_train_context(c, mode);
        if (ctx.screening.empty()) {
            require_artifact(p.screen / "screening_results.csv", "screen");
            ctx.screening = screening::read_screening_results(p.screen / "screening_results.csv");
        }
        std::map<std::string, const screening::CensusEntry*> entry_of;
        for (const auto& e : ctx.screening) entry_of[e.meter_id] = &e;
        const auto& manifest = mode == features::Mode::Baseline ? base_manifest : prop_manifest;
        const auto dir = p.train_mode(mode);
        auto groups = group_meters(ctx.meters, c.group_by, ctx.screening);
        if (groups.size() != manifest["counts"]["groups"].size()) {
            throw DataError("screening results changed since training; re-run train");
        }
        auto& out = records[mode];
        for (const auto& g : groups) {
            const auto model = dir / model_file(g.label);
            require_artifact(model, std::string("train --mode ") + std::string(features::to_string(mode)));
            const auto bundle = gbdt::load_bundle(model);
            auto assembled = assemble(ctx, g.meters, mode, year_range(c.validation_year));
            auto encoded = features::encode_categoricals(std::move(assembled.matrix), &bundle.dictionary);
            const auto pred = gbdt::predict(bundle, encoded.matrix);
            std::map<std::string_view, const ingest::MeterSeries*> series_of;
            for (const auto& m : g.meters) series_of[m.meter_id] = &m;
            for (std::size_t r = 0; r < encoded.matrix.row_count(); ++r) {
                const auto& key = encoded.matrix.rows[r];
                const auto& meter_id = encoded.matrix.meter_ids[key.meter];
                const auto* s = series_of.at(meter_id);
                eval::PredictionRecord rec;
                rec.meter_id = meter_id;
                rec.timestamp = key.timestamp;
                rec.actual = s->readings[*s->index_of(key.timestamp)];
                rec.predicted = pred[r];
                rec.site_id = s->site_id;
                rec.day_type = day_types.at(s->site_id, date_of(key.timestamp));
                rec.meter_type = s->type;
                rec.country = site_geo.at(s->site_id);
                auto e = entry_of.find(meter_id);
                if (e == entry_of.end()) throw DataError(fmt::format("meter '{}' missing from screening", meter_id));
                rec.category = e->second->category();
                if (e->second->result) rec.topic_id = e->second->result->best_topic_id;
                out.push_back(std::move(rec));
            }
        }
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            return std::tie(a.meter_id, a.timestamp) < std::tie(b.meter_id, b.timestamp);
        });
        run.timing(fmt::format("predict_{}", features::to_string(mode)), t0);
    }

    const auto& base = records[features::Mode::Baseline];
    const auto& prop = records[features::Mode::Proposed];
    eval::write_predictions(base, p.report / "predictions_baseline.csv");
    eval::write_predictions(prop, p.report / "predictions_proposed.csv");
    auto report = eval::evaluate(base, prop, {c.min_meters, year_range(c.validation_year)}, benchmark);
    eval::emit_report(report, p.report);
    benchmark.write(p.report / "benchmark.csv");

    const auto entries = screening::read_screening_results(p.screen / "screening_results.csv");
    const auto census = screening::screening_census(entries);
    screening::write_census_table(census.by_meter_type, p.report / "table_census_meter_type.csv");
    screening::write_census_table(census.by_primary_use, p.report / "table_census_primary_use.csv");
    screening::write_census_table(census.by_topic, p.report / "table_census_topic.csv");

    auto& counts = run.counts();
    counts["records"] = report.n_records;
    counts["meters"] = report.n_meters;
    counts["baseline_rmsle"] = report.baseline_rmsle;
    counts["proposed_rmsle"] = report.proposed_rmsle;
    run.finish();
    log_stage("evaluate", false, p.report);
    return {"evaluate", false, p.report};
}

StageOutcome Pipeline::chart() {
    const auto& c = config_;
    const Paths p(c.output_dir);
    StageRun run(p.charts, "chart", c);
    run.upstream("screen", upstream_key(p.screen, "screen"));
    run.upstream("evaluate", upstream_key(p.report, "evaluate"));
    run.output("weekly_rmsle.svg");
    run.output("calendar_signals.svg");
    if (run.cached()) {
        log_stage("chart", true, p.charts);
        return {"chart", true, p.charts};
    }
    run.begin();
    const auto n = chart::write_charts(p.screen, p.report, p.charts);
    run.counts()["charts"] = n;
    run.finish();
    log_stage("chart", false, p.charts);
    return {"chart", false, p.charts};
}

std::vector<StageOutcome> Pipeline::run_all() {
    std::vector<StageOutcome> out;
    out.push_back(ingest());
    out.push_back(screen());
    for (auto& s : train()) out.push_back(std::move(s));
    if (config_.mode == ModeSelection::Both) {
        out.push_back(evaluate());
        out.push_back(chart());
    } else {
        fmt::print(stderr, "[evaluate] skipped: needs --mode both\n");
    }
    return out;
}

}  // namespace trendproxy::pipeline
