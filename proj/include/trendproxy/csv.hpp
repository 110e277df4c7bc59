#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace trendproxy::csv {

// Whole-file CSV reader. Header row is required; fields may be double-quoted
// with "" escapes. Blank lines are skipped.
class Table {
public:
    static Table read(const std::filesystem::path& path);
    static Table parse(std::string_view text, std::string source = "<memory>");

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
    const std::string& source() const { return source_; }

    std::optional<std::size_t> find_column(std::string_view name) const;
    // Throws DataError naming the file when the column is absent.
    std::size_t column(std::string_view name) const;
    // Line number of row i in the source file (1-based, header is line 1).
    std::size_t line_of(std::size_t i) const { return lines_[i]; }

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> lines_;
};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

std::string quote(std::string_view field);

// Empty or whitespace-only cells parse as nullopt; garbage returns nullopt
// with `ok` cleared.
std::optional<double> parse_double(std::string_view text, bool* ok = nullptr);
std::optional<long long> parse_int(std::string_view text, bool* ok = nullptr);

// Shortest decimal text that round-trips to the same double; NaN -> "".
std::string format_double(double value);

}  // namespace trendproxy::csv
