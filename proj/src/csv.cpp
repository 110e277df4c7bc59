#include "trendproxy/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "trendproxy/common.hpp"

namespace trendproxy::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

Table Table::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

Table Table::parse(std::string_view text, std::string source) {
    Table t;
    t.source_ = std::move(source);
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    std::size_t line = 1;
    std::size_t row_line = 1;
    bool have_header = false;

    auto finish_row = [&] {
        fields.push_back(std::move(field));
        field.clear();
        if (row_has_content) {
            for (auto& f : fields) {
                auto trimmed = trim(f);
                if (trimmed.size() != f.size()) f = std::string(trimmed);
            }
            if (!have_header) {
                t.header_ = std::move(fields);
                have_header = true;
            } else {
                if (fields.size() != t.header_.size()) {
                    throw DataError(fmt::format("{}:{}: expected {} fields, found {}", t.source_, row_line,
                                                t.header_.size(), fields.size()));
                }
                t.rows_.push_back(std::move(fields));
                t.lines_.push_back(row_line);
            }
        }
        fields.clear();
        row_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                row_has_content = true;
                break;
            case ',':
                fields.push_back(std::move(field));
                field.clear();
                row_has_content = true;
                break;
            case '\n':
                finish_row();
                ++line;
                row_line = line;
                break;
            case '\r':
                break;
            default:
                field.push_back(c);
                if (c != ' ' && c != '\t') row_has_content = true;
        }
    }
    if (in_quotes) {
        throw DataError(fmt::format("{}: unterminated quoted field", t.source_));
    }
    finish_row();
    if (!have_header) {
        throw DataError(fmt::format("{}: missing header row", t.source_));
    }
    return t;
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (header_[i] == name) return i;
    }
    return std::nullopt;
}

std::size_t Table::column(std::string_view name) const {
    if (auto idx = find_column(name)) return *idx;
    throw DataError(fmt::format("{}: missing required column '{}'", source_, name));
}

std::string quote(std::string_view field) {
    bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << quote(fields[i]);
    }
    out_ << '\n';
}

std::optional<double> parse_double(std::string_view text, bool* ok) {
    if (ok) *ok = true;
    text = trim(text);
    if (text.empty() || text == "NA" || text == "NaN" || text == "nan") return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
        if (ok) *ok = false;
        return std::nullopt;
    }
    return value;
}

std::optional<long long> parse_int(std::string_view text, bool* ok) {
    if (ok) *ok = true;
    text = trim(text);
    if (text.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc{} && ptr == text.data() + text.size()) return value;
    // Accept integral floats such as "1990.0" that pandas exports emit.
    bool dok = true;
    auto d = parse_double(text, &dok);
    if (d && std::floor(*d) == *d && std::abs(*d) < 9e15) return static_cast<long long>(*d);
    if (ok) *ok = false;
    return std::nullopt;
}

std::string format_double(double value) {
    if (std::isnan(value)) return {};
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

}  // namespace trendproxy::csv
