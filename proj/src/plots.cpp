#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "prefagg/harness.hpp"

namespace prefagg {

namespace {

struct SeriesPoint {
    double x;
    double mean;
    double stderr_;
};

struct Chart {
    std::string title, x_label, y_label;
    bool log_x = false, log_y = false;
    std::map<std::string, std::vector<SeriesPoint>> series;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

double nice_tick_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10.0 * mag;
}

std::string fmt_tick(double v) {
    std::ostringstream os;
    if (std::abs(v) >= 1000.0 || (std::abs(v) < 0.01 && v != 0.0)) {
        os.precision(0);
        os << std::scientific << v;
        std::string s = os.str();
        // compact 1e+05 -> 1e5
        auto pos = s.find("e");
        if (pos != std::string::npos) {
            std::string mant = s.substr(0, pos);
            int exp = std::stoi(s.substr(pos + 1));
            return mant + "e" + std::to_string(exp);
        }
        return s;
    }
    os.precision(4);
    os << v;
    return os.str();
}

void render_chart(const Chart& chart, const std::filesystem::path& file) {
    const double W = 680, H = 460, L = 70, R = 24, T = 44, B = 56;
    const double pw = W - L - R, ph = H - T - B;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [name, pts] : chart.series) {
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.mean - p.stderr_);
            ymax = std::max(ymax, p.mean + p.stderr_);
        }
    }
    if (!(xmin <= xmax)) throw std::runtime_error("plot: no points");
    if (chart.log_y) ymin = std::max(ymin, 1e-6);
    if (!chart.log_y) {
        const double pad = 0.08 * std::max(1e-12, ymax - ymin);
        ymin = std::min(0.0, ymin - pad) == 0.0 && ymin >= 0 ? 0.0 : ymin - pad;
        ymax += pad;
    } else {
        ymin /= 1.4;
        ymax *= 1.4;
    }
    if (xmin == xmax) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymin == ymax) {
        ymin -= 0.5;
        ymax += 0.5;
    }

    auto tx = [&](double x) {
        const double u = chart.log_x ? (std::log10(x) - std::log10(xmin)) /
                                           (std::log10(xmax) - std::log10(xmin))
                                     : (x - xmin) / (xmax - xmin);
        return L + u * pw;
    };
    auto ty = [&](double y) {
        if (chart.log_y) y = std::max(y, ymin);
        const double u = chart.log_y ? (std::log10(y) - std::log10(ymin)) /
                                           (std::log10(ymax) - std::log10(ymin))
                                     : (y - ymin) / (ymax - ymin);
        return T + (1.0 - u) * ph;
    };

    std::ofstream out(file);
    if (!out) throw std::runtime_error("plot: cannot open " + file.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">"
        << chart.title << "</text>\n";

    // axes
    out << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph
        << "\" stroke=\"black\"/>\n";

    auto tick_label = [&](double px, double py, const std::string& s, bool x_axis) {
        out << "<text x=\"" << px << "\" y=\"" << py << "\" text-anchor=\""
            << (x_axis ? "middle" : "end") << "\" font-family=\"sans-serif\" font-size=\"11\">" << s
            << "</text>\n";
    };

    if (chart.log_x) {
        for (int e = static_cast<int>(std::floor(std::log10(xmin)));
             e <= static_cast<int>(std::ceil(std::log10(xmax))); ++e) {
            const double v = std::pow(10.0, e);
            if (v < xmin * 0.999 || v > xmax * 1.001) continue;
            const double px = tx(v);
            out << "<line x1=\"" << px << "\" y1=\"" << T + ph << "\" x2=\"" << px << "\" y2=\""
                << T + ph + 5 << "\" stroke=\"black\"/>\n";
            tick_label(px, T + ph + 20, "1e" + std::to_string(e), true);
        }
    } else {
        const double step = nice_tick_step(xmax - xmin);
        for (double v = std::ceil(xmin / step) * step; v <= xmax + 1e-9; v += step) {
            const double px = tx(v);
            out << "<line x1=\"" << px << "\" y1=\"" << T + ph << "\" x2=\"" << px << "\" y2=\""
                << T + ph + 5 << "\" stroke=\"black\"/>\n";
            tick_label(px, T + ph + 20, fmt_tick(v), true);
        }
    }
    if (chart.log_y) {
        for (int e = static_cast<int>(std::floor(std::log10(ymin)));
             e <= static_cast<int>(std::ceil(std::log10(ymax))); ++e) {
            const double v = std::pow(10.0, e);
            if (v < ymin * 0.999 || v > ymax * 1.001) continue;
            const double py = ty(v);
            out << "<line x1=\"" << L - 5 << "\" y1=\"" << py << "\" x2=\"" << L << "\" y2=\"" << py
                << "\" stroke=\"black\"/>\n";
            tick_label(L - 8, py + 4, "1e" + std::to_string(e), false);
        }
    } else {
        const double step = nice_tick_step(ymax - ymin);
        for (double v = std::ceil(ymin / step) * step; v <= ymax + 1e-9; v += step) {
            const double py = ty(v);
            out << "<line x1=\"" << L - 5 << "\" y1=\"" << py << "\" x2=\"" << L << "\" y2=\"" << py
                << "\" stroke=\"black\"/>\n";
            tick_label(L - 8, py + 4, fmt_tick(v), false);
        }
    }
    out << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 14
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << chart.x_label
        << "</text>\n";
    out << "<text x=\"18\" y=\"" << T + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 "
           "18 "
        << T + ph / 2 << ")\">" << chart.y_label << "</text>\n";

    int color_idx = 0;
    double legend_y = T + 10;
    for (const auto& [name, pts_in] : chart.series) {
        auto pts = pts_in;
        std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
        const char* color = kPalette[color_idx % 6];
        // error band
        if (pts.size() > 1) {
            std::ostringstream band;
            for (const auto& p : pts) band << tx(p.x) << "," << ty(p.mean + p.stderr_) << " ";
            for (auto it = pts.rbegin(); it != pts.rend(); ++it)
                band << tx(it->x) << "," << ty(std::max(it->mean - it->stderr_, chart.log_y ? 1e-9 : -1e300))
                     << " ";
            out << "<polygon points=\"" << band.str() << "\" fill=\"" << color
                << "\" opacity=\"0.15\" stroke=\"none\"/>\n";
        }
        std::ostringstream line;
        for (const auto& p : pts) line << tx(p.x) << "," << ty(p.mean) << " ";
        out << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        for (const auto& p : pts) {
            out << "<circle cx=\"" << tx(p.x) << "\" cy=\"" << ty(p.mean) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        }
        out << "<rect x=\"" << L + pw - 150 << "\" y=\"" << legend_y - 9
            << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << L + pw - 132 << "\" y=\"" << legend_y + 2
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << "</text>\n";
        legend_y += 18;
        ++color_idx;
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("plot: write failed for " + file.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                              const std::filesystem::path& out_dir) {
    const std::vector<RunRecord> rows = read_results_csv(results_csv);
    if (rows.empty()) throw std::runtime_error("emit_plots: results file has no data rows");
    const std::string experiment = rows.front().experiment;
    const bool by_scale = experiment == "scale_sweep";
    const bool log_log = experiment == "rate_sweep";

    // series name -> x -> (angles, disagreements)
    struct Cell {
        std::vector<double> angle, dis;
    };
    std::map<std::string, std::map<double, Cell>> grouped;
    for (const auto& r : rows) {
        if (!std::isfinite(r.angle_degrees)) continue;
        std::string name = r.estimator;
        if (r.k) name += " (K=" + std::to_string(*r.k) + ")";
        const double x = by_scale ? r.scale : static_cast<double>(r.n);
        auto& cell = grouped[name][x];
        cell.angle.push_back(r.angle_degrees);
        cell.dis.push_back(r.disagreement_rate);
    }
    if (grouped.empty()) throw std::runtime_error("emit_plots: no finite metric rows");

    auto build = [&](bool angle_chart) {
        Chart c;
        c.title = experiment + (angle_chart ? ": angular error" : ": disagreement rate");
        c.x_label = by_scale ? "heterogeneity scale" : "n";
        c.y_label = angle_chart ? "angle to mean direction (degrees)" : "disagreement rate";
        c.log_x = !by_scale;
        c.log_y = log_log && angle_chart;
        for (const auto& [name, cells] : grouped) {
            auto& series = c.series[name];
            for (const auto& [x, cell] : cells) {
                const auto& vals = angle_chart ? cell.angle : cell.dis;
                const double n = static_cast<double>(vals.size());
                const double mean = pairwise_sum(vals) / n;
                double var = 0.0;
                for (double v : vals) var += (v - mean) * (v - mean);
                const double se = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
                series.push_back({x, mean, se});
            }
        }
        return c;
    };

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> files;
    const auto angle_file = out_dir / (experiment + "_angle.svg");
    render_chart(build(true), angle_file);
    files.push_back(angle_file);
    const auto dis_file = out_dir / (experiment + "_disagreement.svg");
    render_chart(build(false), dis_file);
    files.push_back(dis_file);
    return files;
}

}  // namespace prefagg
