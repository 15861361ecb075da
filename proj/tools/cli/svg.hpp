#pragma once

// Minimal standalone SVG charts: log-scale line plots and labelled dot plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace riccilab::cli {

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
    bool dots = false;
};

namespace svgdetail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

}  // namespace svgdetail

/// Plot of the series; with log_y the y values are shown as log10 and
/// non-positive samples are dropped.
inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            std::vector<Series> series, bool log_y) {
    using svgdetail::fmt;
    constexpr double W = 640, H = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    for (auto& s : series) {
        if (!log_y) continue;
        std::vector<double> x, y;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (s.y[i] > 0 && std::isfinite(s.y[i])) {
                x.push_back(s.x[i]);
                y.push_back(std::log10(s.y[i]));
            }
        s.x = std::move(x);
        s.y = std::move(y);
    }
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto Y = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << svgdetail::escape(title) << "</text>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        o << "<text x=\"" << X(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << fmt(xv)
          << "</text>\n";
        o << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv)
          << "</text>\n";
    }
    o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << svgdetail::escape(xlabel) << "</text>\n";
    o << "<text transform=\"translate(16," << (mt + H - mb) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << svgdetail::escape(log_y ? "log10 " + ylabel : ylabel) << "</text>\n";
    int row = 0;
    for (const auto& s : series) {
        if (s.dots) {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                o << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i]) << "\" r=\"3\" fill=\"" << s.color
                  << "\"/>\n";
        } else if (!s.x.empty()) {
            o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) o << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
            o << "\"/>\n";
        }
        o << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 14 * row++ << "\" text-anchor=\"end\" fill=\""
          << s.color << "\">" << svgdetail::escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline const char* palette(int i) {
    static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return c[i % 6];
}

}  // namespace riccilab::cli
