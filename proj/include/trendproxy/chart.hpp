#pragma once

// Static SVG charts for quick inspection. Layout is not contracted.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace trendproxy::chart {

struct Line {
    std::string label;
    std::string color;
    std::vector<double> y;  // NaN leaves a gap
};

struct Panel {
    std::string title;
    std::vector<Line> lines;
};

// Panels stacked vertically in one SVG document.
void write_svg(const std::filesystem::path& path, const std::string& title, const std::vector<Panel>& panels);

// Reads the screen and report stage outputs and writes calendar_signals.svg
// and weekly_rmsle.svg into `out_dir`. Returns the number of files written.
std::size_t write_charts(const std::filesystem::path& screen_dir, const std::filesystem::path& report_dir,
                         const std::filesystem::path& out_dir);

}  // namespace trendproxy::chart
