#pragma once
// Deterministic CSV and SVG emission for run telemetry.

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smallbatch/harness.hpp"

namespace smallbatch {

inline const char* kCsvHeader =
    "config_id,variant,B,T,accum_steps,lr,beta1,beta2,t1_tokens,t2_tokens,"
    "weight_decay,seed,step,tokens_seen,train_loss,eval_loss";

namespace detail {

// 9 significant digits, fixed schema requirement
inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline void emit_csv(const std::vector<RunResult>& results, std::ostream& os) {
    os << kCsvHeader << "\n";
    for (const auto& run : results) {
        const RunConfig& c = run.cfg;
        std::string prefix = c.config_id;
        prefix += ',';
        prefix += variant_name(c.opt.variant);
        prefix += ',' + std::to_string(c.batch_size);
        prefix += ',' + std::to_string(c.seq_len);
        prefix += ',' + std::to_string(c.accum_steps);
        prefix += ',' + detail::fmt9(c.opt.lr);
        prefix += ',' + detail::fmt9(c.opt.beta1);
        prefix += ',' + detail::fmt9(c.opt.beta2);
        prefix += ',' + detail::fmt9(c.t1_tokens.value_or(0.0));
        prefix += ',' + detail::fmt9(c.t2_tokens.value_or(0.0));
        prefix += ',' + detail::fmt9(c.opt.weight_decay);
        prefix += ',' + std::to_string(c.seed);
        for (const auto& rec : run.records) {
            os << prefix << ',' << rec.step << ',' << rec.tokens_seen << ','
               << detail::fmt9(rec.train_loss) << ',';
            if (rec.eval_loss) os << detail::fmt9(*rec.eval_loss);
            os << "\n";
        }
    }
}

inline void emit_csv(const std::vector<RunResult>& results, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write CSV file: " + path);
    emit_csv(results, os);
}

// ---------------------------------------------------------------------------
// Minimal self-contained SVG line charts

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct SvgAxes {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    int width = 800;
    int height = 500;
};

namespace detail {

inline std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace detail

inline void emit_svg_lines(const std::vector<SvgSeries>& series, const SvgAxes& axes,
                           std::ostream& os) {
    const double ml = 70, mr = 20, mt = 40, mb = 55;
    const double pw = axes.width - ml - mr;
    const double ph = axes.height - mt - mb;

    auto tx = [&](double v) { return axes.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return axes.log_y ? std::log10(v) : v; };

    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    bool any = false;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (axes.log_x && !(x > 0)) continue;
            if (axes.log_y && !(y > 0)) continue;
            const double u = tx(x), v = ty(y);
            if (!any) {
                x_lo = x_hi = u;
                y_lo = y_hi = v;
                any = true;
            } else {
                x_lo = std::min(x_lo, u);
                x_hi = std::max(x_hi, u);
                y_lo = std::min(y_lo, v);
                y_hi = std::max(y_hi, v);
            }
        }
    }
    if (x_hi - x_lo < 1e-12) { x_lo -= 0.5; x_hi += 0.5; }
    if (y_hi - y_lo < 1e-12) { y_lo -= 0.5; y_hi += 0.5; }

    auto px = [&](double x) { return ml + (tx(x) - x_lo) / (x_hi - x_lo) * pw; };
    auto py = [&](double y) { return mt + ph - (ty(y) - y_lo) / (y_hi - y_lo) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << axes.width << "\" height=\""
       << axes.height << "\" viewBox=\"0 0 " << axes.width << " " << axes.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << axes.width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"15\">" << axes.title << "</text>\n";

    // frame
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";

    // 5 ticks per axis
    for (int i = 0; i <= 4; ++i) {
        const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
        const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
        const double gx = ml + pw * i / 4.0;
        const double gy = mt + ph - ph * i / 4.0;
        const double x_val = axes.log_x ? std::pow(10.0, fx) : fx;
        const double y_val = axes.log_y ? std::pow(10.0, fy) : fy;
        os << "<line x1=\"" << gx << "\" y1=\"" << mt + ph << "\" x2=\"" << gx << "\" y2=\""
           << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << gx << "\" y=\"" << mt + ph + 20
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << detail::fmt_tick(x_val) << "</text>\n";
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << gy << "\" x2=\"" << ml << "\" y2=\"" << gy
           << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << detail::fmt_tick(y_val) << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << axes.height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << axes.x_label
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << axes.y_label << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = detail::kPalette[si % 8];
        const auto& s = series[si];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (axes.log_x && !(x > 0)) continue;
            if (axes.log_y && !(y > 0)) continue;
            os << detail::fmt_tick(px(x)) << "," << detail::fmt_tick(py(y)) << " ";
        }
        os << "\"/>\n";
        // legend
        const double ly = mt + 16 + 16 * static_cast<double>(si);
        os << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 130
           << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << ml + pw - 124 << "\" y=\"" << ly + 4
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
}

inline void emit_svg_lines(const std::vector<SvgSeries>& series, const SvgAxes& axes,
                           const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write SVG file: " + path);
    emit_svg_lines(series, axes, os);
}

}  // namespace smallbatch
