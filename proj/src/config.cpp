#include <fstream>
#include <set>

#include <fmt/format.h>

#include "trendproxy/pipeline.hpp"

namespace trendproxy::pipeline {

using nlohmann::json;

ModeSelection parse_mode(std::string_view text) {
    if (text == "baseline") return ModeSelection::Baseline;
    if (text == "proposed") return ModeSelection::Proposed;
    if (text == "both") return ModeSelection::Both;
    throw ConfigError(fmt::format("mode must be baseline, proposed or both (got '{}')", text));
}

GroupBy parse_group_by(std::string_view text) {
    if (text == "none") return GroupBy::None;
    if (text == "category") return GroupBy::Category;
    throw ConfigError(fmt::format("group_by must be none or category (got '{}')", text));
}

std::string_view to_string(ModeSelection m) {
    switch (m) {
        case ModeSelection::Baseline: return "baseline";
        case ModeSelection::Proposed: return "proposed";
        case ModeSelection::Both: return "both";
    }
    return "both";
}

std::string_view to_string(GroupBy g) { return g == GroupBy::None ? "none" : "category"; }

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where_));
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    template <class T>
    std::optional<T> get(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) return std::nullopt;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (it->is_number_integer() && it->template get<long long>() < 0) throw ConfigError("");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError("");
            }
            return it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("{}.{}: wrong type", where_, key));
        }
    }

    template <class T>
    T require(const std::string& key) {
        auto v = get<T>(key);
        if (!v) throw ConfigError(fmt::format("{}.{}: required", where_, key));
        return *v;
    }

    ObjectReader child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        auto it = obj_.find(key);
        return ObjectReader(it == obj_.end() ? empty : *it, where_ + "." + key);
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, it.key()));
        }
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path.lexically_normal() : (base / path).lexically_normal();
}

}  // namespace

PipelineConfig parse_config(const json& doc, const std::filesystem::path& base_dir,
                            const std::filesystem::path& source) {
    PipelineConfig c;
    c.source = source;
    ObjectReader root(doc, "config");

    auto paths = root.child("paths");
    c.paths.meters = resolve(base_dir, paths.require<std::string>("meters"));
    c.paths.metadata = resolve(base_dir, paths.require<std::string>("metadata"));
    c.paths.weather = resolve(base_dir, paths.require<std::string>("weather"));
    c.paths.trends = resolve(base_dir, paths.get<std::string>("trends").value_or(""));
    c.paths.topic_catalog = resolve(base_dir, paths.require<std::string>("topic_catalog"));
    c.paths.day_types = resolve(base_dir, paths.require<std::string>("day_types"));
    c.paths.site_geo = resolve(base_dir, paths.require<std::string>("site_geo"));
    c.paths.benchmark = resolve(base_dir, paths.get<std::string>("benchmark").value_or(""));
    paths.finish();

    if (root.has("trends_source")) {
        auto ts = root.child("trends_source");
        c.trends_source.gateway_url = ts.get<std::string>("gateway_url").value_or("");
        c.trends_source.cache_dir = resolve(base_dir, ts.get<std::string>("cache_dir").value_or(""));
        c.trends_source.min_spacing_ms = ts.get<int>("min_spacing_ms").value_or(1000);
        c.trends_source.max_retries = ts.get<int>("max_retries").value_or(3);
        ts.finish();
    } else {
        root.child("trends_source");
    }

    c.training_year = root.get<int>("training_year").value_or(c.training_year);
    c.validation_year = root.get<int>("validation_year").value_or(c.validation_year);
    c.allow_partial_years = root.get<bool>("allow_partial_years").value_or(false);

    auto cleaning = root.child("cleaning");
    c.cleaning.z_threshold = cleaning.get<double>("z_threshold").value_or(c.cleaning.z_threshold);
    c.cleaning.min_constant_hours = cleaning.get<std::size_t>("min_constant_hours").value_or(c.cleaning.min_constant_hours);
    c.max_interp_hours = cleaning.get<std::size_t>("max_interp_hours").value_or(c.max_interp_hours);
    cleaning.finish();

    auto cal = root.child("calendar");
    c.min_valid_hours = cal.get<std::size_t>("min_valid_hours").value_or(c.min_valid_hours);
    cal.finish();

    auto scr = root.child("screening");
    c.screening.fair_threshold = scr.get<double>("fair_threshold").value_or(c.screening.fair_threshold);
    c.screening.high_threshold = scr.get<double>("high_threshold").value_or(c.screening.high_threshold);
    c.screening.min_overlap_days = scr.get<std::size_t>("min_overlap_days").value_or(c.screening.min_overlap_days);
    scr.finish();

    auto g = root.child("gbdt");
    c.gbdt.n_trees = g.get<int>("n_trees").value_or(c.gbdt.n_trees);
    c.gbdt.learning_rate = g.get<double>("learning_rate").value_or(c.gbdt.learning_rate);
    c.gbdt.max_leaves = g.get<int>("max_leaves").value_or(c.gbdt.max_leaves);
    c.gbdt.min_samples_leaf = g.get<int>("min_samples_leaf").value_or(c.gbdt.min_samples_leaf);
    c.gbdt.feature_fraction = g.get<double>("feature_fraction").value_or(c.gbdt.feature_fraction);
    c.gbdt.row_fraction = g.get<double>("row_fraction").value_or(c.gbdt.row_fraction);
    c.gbdt.n_bins = g.get<int>("n_bins").value_or(c.gbdt.n_bins);
    c.gbdt.seed = g.get<std::uint64_t>("seed").value_or(c.gbdt.seed);
    c.gbdt.n_folds = g.get<int>("n_folds").value_or(c.gbdt.n_folds);
    g.finish();

    auto ev = root.child("evaluation");
    c.min_meters = ev.get<std::size_t>("min_meters").value_or(c.min_meters);
    ev.finish();

    c.mode = parse_mode(root.get<std::string>("mode").value_or("both"));
    c.group_by = parse_group_by(root.get<std::string>("group_by").value_or("none"));
    c.output_dir = resolve(base_dir, root.get<std::string>("output_dir").value_or("runs/default"));
    root.get<std::string>("$schema");
    root.get<std::string>("description");
    root.finish();

    validate(c);
    return c;
}

void validate(const PipelineConfig& c) {
    if (c.training_year == c.validation_year) {
        throw ConfigError(fmt::format("training_year and validation_year must differ (both {})", c.training_year));
    }
    if (!(c.screening.fair_threshold > 0.0 && c.screening.fair_threshold < c.screening.high_threshold &&
          c.screening.high_threshold < 1.0)) {
        throw ConfigError("screening thresholds must satisfy 0 < fair < high < 1");
    }
    if (!(c.cleaning.z_threshold > 0.0)) throw ConfigError("cleaning.z_threshold must be positive");
    if (c.cleaning.min_constant_hours < 2) throw ConfigError("cleaning.min_constant_hours must be >= 2");
    if (c.min_valid_hours < 1 || c.min_valid_hours > 24) throw ConfigError("calendar.min_valid_hours must be in [1, 24]");
    if (c.min_meters < 1) throw ConfigError("evaluation.min_meters must be >= 1");
    c.gbdt.validate();
    if (c.paths.trends.empty() && c.trends_source.gateway_url.empty()) {
        throw ConfigError("either paths.trends or trends_source.gateway_url must be set");
    }
    auto must_exist = [&](const std::filesystem::path& p, std::string_view key) {
        if (!p.empty() && !std::filesystem::is_regular_file(p)) {
            throw ConfigError(fmt::format("paths.{}: file '{}' does not exist", key, p.string()));
        }
    };
    must_exist(c.paths.meters, "meters");
    must_exist(c.paths.metadata, "metadata");
    must_exist(c.paths.weather, "weather");
    must_exist(c.paths.trends, "trends");
    must_exist(c.paths.topic_catalog, "topic_catalog");
    must_exist(c.paths.day_types, "day_types");
    must_exist(c.paths.site_geo, "site_geo");
    must_exist(c.paths.benchmark, "benchmark");
    if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    auto base = std::filesystem::absolute(path).parent_path();
    return parse_config(doc, base, path);
}

nlohmann::ordered_json PipelineConfig::to_json() const {
    nlohmann::ordered_json j;
    j["paths"] = {{"meters", paths.meters.string()},
                  {"metadata", paths.metadata.string()},
                  {"weather", paths.weather.string()},
                  {"trends", paths.trends.string()},
                  {"topic_catalog", paths.topic_catalog.string()},
                  {"day_types", paths.day_types.string()},
                  {"site_geo", paths.site_geo.string()},
                  {"benchmark", paths.benchmark.string()}};
    j["trends_source"] = {{"gateway_url", trends_source.gateway_url},
                          {"cache_dir", trends_source.cache_dir.string()},
                          {"min_spacing_ms", trends_source.min_spacing_ms},
                          {"max_retries", trends_source.max_retries}};
    j["training_year"] = training_year;
    j["validation_year"] = validation_year;
    j["allow_partial_years"] = allow_partial_years;
    j["cleaning"] = {{"z_threshold", cleaning.z_threshold},
                     {"min_constant_hours", cleaning.min_constant_hours},
                     {"max_interp_hours", max_interp_hours}};
    j["calendar"] = {{"min_valid_hours", min_valid_hours}};
    j["screening"] = {{"fair_threshold", screening.fair_threshold},
                      {"high_threshold", screening.high_threshold},
                      {"min_overlap_days", screening.min_overlap_days}};
    j["gbdt"] = {{"n_trees", gbdt.n_trees},
                 {"learning_rate", gbdt.learning_rate},
                 {"max_leaves", gbdt.max_leaves},
                 {"min_samples_leaf", gbdt.min_samples_leaf},
                 {"feature_fraction", gbdt.feature_fraction},
                 {"row_fraction", gbdt.row_fraction},
                 {"n_bins", gbdt.n_bins},
                 {"seed", gbdt.seed},
                 {"n_folds", gbdt.n_folds}};
    j["evaluation"] = {{"min_meters", min_meters}};
    j["mode"] = std::string(to_string(mode));
    j["group_by"] = std::string(to_string(group_by));
    j["output_dir"] = output_dir.string();
    return j;
}

}  // namespace trendproxy::pipeline
