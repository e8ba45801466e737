#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nbv/benchmark.hpp"
#include "nbv/io.hpp"

namespace nbv {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json aggregate(const std::vector<double>& v) {
    if (v.empty()) return {{"count", 0}};
    double sum = 0.0, worst = v[0];
    for (double x : v) {
        sum += x;
        worst = std::max(worst, x);
    }
    return {{"count", v.size()},
            {"mean", sum / static_cast<double>(v.size())},
            {"median", median(v)},
            {"worst", worst}};
}

}  // namespace

std::string metrics_csv(const std::vector<SceneMetrics>& scenes) {
    std::string out = "scene_id,mpjpe_mm,pa_mpjpe_mm,pckh\n";
    for (const SceneMetrics& s : scenes)
        out += s.scene_id + "," + fmt(s.mpjpe_mm) + "," + fmt(s.pa_mpjpe_mm) + "," +
               fmt(s.pckh_frac) + "\n";
    return out;
}

std::vector<SceneMetrics> parse_metrics_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != "scene_id,mpjpe_mm,pa_mpjpe_mm,pckh")
        throw IoError("parse_metrics_csv: bad header");
    std::vector<SceneMetrics> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        SceneMetrics m;
        std::string field;
        if (!std::getline(row, m.scene_id, ',')) throw IoError("parse_metrics_csv: bad row");
        auto next = [&]() {
            if (!std::getline(row, field, ',')) throw IoError("parse_metrics_csv: bad row");
            return std::stod(field);
        };
        m.mpjpe_mm = next();
        m.pa_mpjpe_mm = next();
        m.pckh_frac = next();
        out.push_back(std::move(m));
    }
    return out;
}

std::string svg_heatmap(const std::vector<double>& values, int rows, int cols,
                        const std::string& title) {
    if (values.size() != static_cast<std::size_t>(rows) * cols)
        throw ShapeError("svg_heatmap: value grid shape mismatch");
    double lo = 0.0, hi = 1.0;
    if (!values.empty()) {
        lo = *std::min_element(values.begin(), values.end());
        hi = *std::max_element(values.begin(), values.end());
        if (hi <= lo) hi = lo + 1.0;
    }
    const int cell = 12, margin = 24;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell + 2 * margin
        << "\" height=\"" << rows * cell + 2 * margin + 16 << "\">\n";
    svg << "<text x=\"" << margin << "\" y=\"16\" font-size=\"12\">" << title << "</text>\n";
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double t = (values[static_cast<std::size_t>(r) * cols + c] - lo) / (hi - lo);
            int red = static_cast<int>(std::lround(255 * t));
            int blue = 255 - red;
            svg << "<rect x=\"" << margin + c * cell << "\" y=\"" << margin + r * cell + 16
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << red
                << ",64," << blue << ")\"/>\n";
        }
    svg << "</svg>\n";
    return svg.str();
}

void write_report(const std::string& dir, const std::vector<SceneMetrics>& scenes,
                  const std::vector<std::pair<std::string, OccSweepReport>>& sweeps) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("write_report: cannot create " + dir);

    std::vector<double> mp, pa, pk;
    nlohmann::json per_scene = nlohmann::json::array();
    for (const SceneMetrics& s : scenes) {
        mp.push_back(s.mpjpe_mm);
        pa.push_back(s.pa_mpjpe_mm);
        pk.push_back(s.pckh_frac);
        per_scene.push_back({{"scene_id", s.scene_id},
                             {"mpjpe_mm", s.mpjpe_mm},
                             {"pa_mpjpe_mm", s.pa_mpjpe_mm},
                             {"pckh", s.pckh_frac}});
    }
    nlohmann::json j;
    j["scenes"] = per_scene;
    j["aggregate"] = {{"mpjpe_mm", aggregate(mp)}, {"pa_mpjpe_mm", aggregate(pa)},
                      {"pckh", aggregate(pk)}};

    nlohmann::json manifest = nlohmann::json::array();
    manifest.push_back("report.json");
    manifest.push_back("report.csv");

    {
        std::ofstream csv(dir + "/report.csv");
        if (!csv) throw IoError("write_report: cannot write report.csv");
        csv << metrics_csv(scenes);
    }

    nlohmann::json sweep_json = nlohmann::json::array();
    for (const auto& [id, sweep] : sweeps) {
        std::vector<double> grid(static_cast<std::size_t>(sweep.grid_rows) * sweep.grid_cols, 0.0);
        std::string csv = "row0_px,col0_px,mpjpe_mm,pa_mpjpe_mm,pckh,included,excluded\n";
        for (int i = 0; i < static_cast<int>(sweep.placements.size()); ++i) {
            const PlacementResult& p = sweep.placements[static_cast<std::size_t>(i)];
            grid[static_cast<std::size_t>(i)] = p.mpjpe_mm;
            csv += std::to_string(p.row0_px) + "," + std::to_string(p.col0_px) + "," +
                   fmt(p.mpjpe_mm) + "," + fmt(p.pa_mpjpe_mm) + "," + fmt(p.pckh_frac) + "," +
                   std::to_string(p.included_joints) + "," + std::to_string(p.excluded_joints) +
                   "\n";
        }
        std::string csv_name = "sweep_" + id + ".csv";
        std::string svg_name = "sweep_" + id + ".svg";
        {
            std::ofstream out(dir + "/" + csv_name);
            if (!out) throw IoError("write_report: cannot write " + csv_name);
            out << csv;
        }
        {
            std::ofstream out(dir + "/" + svg_name);
            if (!out) throw IoError("write_report: cannot write " + svg_name);
            out << svg_heatmap(grid, sweep.grid_rows, sweep.grid_cols,
                               "worst-case MPJPE sweep " + id + " (patch " +
                                   std::to_string(sweep.patch_px) + ")");
        }
        manifest.push_back(csv_name);
        manifest.push_back(svg_name);
        sweep_json.push_back({{"id", id},
                              {"patch_px", sweep.patch_px},
                              {"stride_px", sweep.stride_px},
                              {"image_px", sweep.image_px},
                              {"grid_rows", sweep.grid_rows},
                              {"grid_cols", sweep.grid_cols},
                              {"worst_index", sweep.worst_index},
                              {"worst_mpjpe_mm", sweep.worst_mpjpe_mm},
                              {"unoccluded_mpjpe_mm", sweep.unoccluded_mpjpe_mm},
                              {"csv", csv_name},
                              {"svg", svg_name}});
    }
    j["sweeps"] = sweep_json;
    j["manifest"] = manifest;
    save_json(dir + "/report.json", j);
}

}  // namespace nbv
