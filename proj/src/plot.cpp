#include "loralab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "loralab/error.hpp"
#include "loralab/experiments.hpp"

namespace loralab {

namespace {

constexpr double kWidth = 640.0, kHeight = 440.0;
constexpr double kLeft = 64.0, kRight = 24.0, kTop = 40.0, kBottom = 48.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct SeriesPoint {
    std::size_t n = 0;
    double median = 0.0, lo = 0.0, hi = 0.0;
};

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// n = 0 appears in forgetting curves, so positions use log10(n + 1).
double xpos(std::size_t n, double lo, double hi) {
    const double v = std::log10(static_cast<double>(n) + 1.0);
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return kLeft + t * (kWidth - kLeft - kRight);
}

}  // namespace

void emit_plot(const std::string& metrics_path, const std::string& metric,
               const std::string& out_path) {
    const std::vector<MetricsRecord> all = read_metrics_jsonl(metrics_path);
    std::map<std::string, std::map<std::size_t, std::vector<double>>> grouped;
    for (const auto& r : all) {
        if (r.metric != metric) continue;
        grouped[r.method + "/" + r.scheme][r.n].push_back(r.value);
    }
    if (grouped.empty()) {
        fail(ErrorKind::plot,
             "no records with metric '" + metric + "' in " + metrics_path);
    }

    std::vector<std::pair<std::string, std::vector<SeriesPoint>>> series;
    for (const auto& [key, by_n] : grouped) {
        if (by_n.size() < 2) {
            fail(ErrorKind::plot, "series '" + key + "' has " +
                                      std::to_string(by_n.size()) +
                                      " point(s); need at least 2");
        }
        std::vector<SeriesPoint> pts;
        for (const auto& [n, values] : by_n) {
            SeriesPoint p;
            p.n = n;
            p.median = median_of(values);
            p.lo = *std::min_element(values.begin(), values.end());
            p.hi = *std::max_element(values.begin(), values.end());
            pts.push_back(p);
        }
        series.emplace_back(key, std::move(pts));
    }

    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto& [key, pts] : series) {
        for (const auto& p : pts) {
            const double lx = std::log10(static_cast<double>(p.n) + 1.0);
            xlo = std::min(xlo, lx);
            xhi = std::max(xhi, lx);
            ylo = std::min(ylo, p.lo);
            yhi = std::max(yhi, p.hi);
        }
    }
    if (yhi <= ylo) {
        yhi = ylo + 1.0;
    }
    const double pad = 0.05 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;

    const auto ypos = [&](double v) {
        const double t = (v - ylo) / (yhi - ylo);
        return kHeight - kBottom - t * (kHeight - kTop - kBottom);
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth)
        << "\" height=\"" << fmt(kHeight) << "\" viewBox=\"0 0 "
        << fmt(kWidth) << " " << fmt(kHeight) << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << fmt(kLeft) << "\" y=\"24\" font-family=\"monospace\" "
           "font-size=\"14\">"
        << metric << " vs n</text>\n";

    // axes
    svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kHeight - kBottom)
        << "\" x2=\"" << fmt(kWidth - kRight) << "\" y2=\""
        << fmt(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\""
        << fmt(kLeft) << "\" y2=\"" << fmt(kHeight - kBottom)
        << "\" stroke=\"black\"/>\n";

    // x ticks at every distinct n
    std::vector<std::size_t> ticks;
    for (const auto& [key, pts] : series) {
        for (const auto& p : pts) ticks.push_back(p.n);
    }
    std::sort(ticks.begin(), ticks.end());
    ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    for (std::size_t n : ticks) {
        const double x = xpos(n, xlo, xhi);
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(kHeight - kBottom)
            << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(kHeight - kBottom + 5)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(kHeight - kBottom + 20)
            << "\" font-family=\"monospace\" font-size=\"11\" "
               "text-anchor=\"middle\">"
            << n << "</text>\n";
    }
    // y ticks
    for (int i = 0; i <= 4; ++i) {
        const double v = ylo + (yhi - ylo) * i / 4.0;
        const double y = ypos(v);
        svg << "<line x1=\"" << fmt(kLeft - 5) << "\" y1=\"" << fmt(y)
            << "\" x2=\"" << fmt(kLeft) << "\" y2=\"" << fmt(y)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(y + 4)
            << "\" font-family=\"monospace\" font-size=\"11\" "
               "text-anchor=\"end\">"
            << fmt(v) << "</text>\n";
    }

    std::size_t color = 0;
    for (const auto& [key, pts] : series) {
        const char* c = kPalette[color % (sizeof(kPalette) / sizeof(*kPalette))];
        // min-max band
        std::ostringstream band;
        for (const auto& p : pts) {
            band << fmt(xpos(p.n, xlo, xhi)) << "," << fmt(ypos(p.hi)) << " ";
        }
        for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
            band << fmt(xpos(it->n, xlo, xhi)) << "," << fmt(ypos(it->lo)) << " ";
        }
        svg << "<polygon points=\"" << band.str() << "\" fill=\"" << c
            << "\" opacity=\"0.15\"/>\n";
        // median line
        svg << "<polyline fill=\"none\" stroke=\"" << c
            << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : pts) {
            svg << fmt(xpos(p.n, xlo, xhi)) << "," << fmt(ypos(p.median)) << " ";
        }
        svg << "\"/>\n";
        // legend
        const double ly = kTop + 16.0 * static_cast<double>(color);
        svg << "<rect x=\"" << fmt(kWidth - kRight - 150) << "\" y=\""
            << fmt(ly - 9) << "\" width=\"10\" height=\"10\" fill=\"" << c
            << "\"/>\n";
        svg << "<text x=\"" << fmt(kWidth - kRight - 136) << "\" y=\"" << fmt(ly)
            << "\" font-family=\"monospace\" font-size=\"11\">" << key
            << "</text>\n";
        ++color;
    }
    svg << "</svg>\n";

    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + out_path + "' for write");
    }
    out << svg.str();
}

}  // namespace loralab
