#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "prband/dataset.hpp"
#include "prband/ensemble.hpp"

namespace prband {

// Minimal SVG emitter. Coordinates are formatted with a fixed precision so
// identical inputs always produce identical bytes.

namespace svg_detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace svg_detail

class SvgDoc {
  public:
    SvgDoc(int width, int height) : width_(width), height_(height) {
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
             << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
             << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
             << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double stroke_width = 1.0) {
        using svg_detail::num;
        out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
             << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
             << num(stroke_width) << "\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill,
              double opacity = 1.0) {
        using svg_detail::num;
        out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
             << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\" fill-opacity=\""
             << num(opacity) << "\"/>\n";
    }

    void polyline(std::span<const double> xs, std::span<const double> ys,
                  const std::string& stroke, double stroke_width = 1.5) {
        out_ << "<polyline points=\"" << points(xs, ys) << "\" fill=\"none\" stroke=\"" << stroke
             << "\" stroke-width=\"" << svg_detail::num(stroke_width) << "\"/>\n";
    }

    void polygon(std::span<const double> xs, std::span<const double> ys, const std::string& fill,
                 double opacity) {
        out_ << "<polygon points=\"" << points(xs, ys) << "\" fill=\"" << fill
             << "\" fill-opacity=\"" << svg_detail::num(opacity) << "\" stroke=\"none\"/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& fill, double opacity = 1.0) {
        using svg_detail::num;
        out_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
             << "\" fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, int size = 12,
              const std::string& anchor = "start", const std::string& fill = "#333333") {
        out_ << "<text x=\"" << svg_detail::num(x) << "\" y=\"" << svg_detail::num(y)
             << "\" font-family=\"sans-serif\" font-size=\"" << size << "\" text-anchor=\""
             << anchor << "\" fill=\"" << fill << "\">" << s << "</text>\n";
    }

    std::string str() const { return out_.str() + "</svg>\n"; }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("SvgDoc::write: cannot open " + path.string());
        f << str();
        if (!f) throw std::runtime_error("SvgDoc::write: write failed for " + path.string());
    }

    int width() const { return width_; }
    int height() const { return height_; }

  private:
    std::string points(std::span<const double> xs, std::span<const double> ys) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) s += ' ';
            s += svg_detail::num(xs[i]);
            s += ',';
            s += svg_detail::num(ys[i]);
        }
        return s;
    }

    int width_, height_;
    std::ostringstream out_;
};

/// Affine map from data coordinates to pixel coordinates. Plot tests parse
/// emitted coordinates back through the same transform, so the margins are
/// part of the documented layout.
struct PlotFrame {
    int width = 640;
    int height = 480;
    double margin_left = 64;
    double margin_right = 24;
    double margin_top = 40;
    double margin_bottom = 52;
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;

    double px(double x) const {
        return margin_left + (x - x0) / (x1 - x0) * (width - margin_left - margin_right);
    }
    double py(double y) const {
        return height - margin_bottom -
               (y - y0) / (y1 - y0) * (height - margin_top - margin_bottom);
    }
    double y_from_px(double p) const {
        return y0 + (height - margin_bottom - p) / (height - margin_top - margin_bottom) * (y1 - y0);
    }
};

namespace svg_detail {

inline const char* kBlue = "#1f77b4";
inline const char* kGreen = "#2ca02c";
inline const char* kOrange = "#ff7f0e";
inline const char* kRed = "#d62728";
inline const char* kGray = "#7f7f7f";

inline void draw_axes(SvgDoc& doc, const PlotFrame& f, const std::string& x_label,
                      const std::string& y_label, const std::string& title) {
    doc.line(f.px(f.x0), f.py(f.y0), f.px(f.x1), f.py(f.y0), "#000000");
    doc.line(f.px(f.x0), f.py(f.y0), f.px(f.x0), f.py(f.y1), "#000000");
    for (int i = 0; i <= 4; ++i) {
        const double fx = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double fy = f.y0 + (f.y1 - f.y0) * i / 4.0;
        char label[32];
        doc.line(f.px(fx), f.py(f.y0), f.px(fx), f.py(f.y0) + 4, "#000000");
        std::snprintf(label, sizeof label, "%.2f", fx);
        doc.text(f.px(fx), f.py(f.y0) + 18, label, 11, "middle");
        doc.line(f.px(f.x0) - 4, f.py(fy), f.px(f.x0), f.py(fy), "#000000");
        std::snprintf(label, sizeof label, "%.2f", fy);
        doc.text(f.px(f.x0) - 8, f.py(fy) + 4, label, 11, "end");
    }
    doc.text((f.px(f.x0) + f.px(f.x1)) / 2, f.height - 12.0, x_label, 13, "middle");
    doc.text(18, (f.py(f.y0) + f.py(f.y1)) / 2, y_label, 13, "middle");
    if (!title.empty()) doc.text(f.width / 2.0, 24, title, 14, "middle");
}

inline void band_region(SvgDoc& doc, const PlotFrame& f, std::span<const double> grid,
                        std::span<const double> lo, std::span<const double> hi,
                        const std::string& color) {
    std::vector<double> xs, ys;
    xs.reserve(2 * grid.size());
    ys.reserve(2 * grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        xs.push_back(f.px(grid[i]));
        ys.push_back(f.py(hi[i]));
    }
    for (std::size_t i = grid.size(); i-- > 0;) {
        xs.push_back(f.px(grid[i]));
        ys.push_back(f.py(lo[i]));
    }
    doc.polygon(xs, ys, color, 0.30);
}

inline void mean_line(SvgDoc& doc, const PlotFrame& f, std::span<const double> grid,
                      std::span<const double> mean, const std::string& color) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        xs.push_back(f.px(grid[i]));
        ys.push_back(f.py(mean[i]));
    }
    doc.polyline(xs, ys, color, 2.0);
}

}  // namespace svg_detail

/// Mean PR curve plus the shaded quantile band on the unit square.
inline SvgDoc plot_band(const EnsembleBand& band, const std::string& title = "") {
    PlotFrame f;
    SvgDoc doc(f.width, f.height);
    svg_detail::draw_axes(doc, f, "recall", "precision", title);
    svg_detail::band_region(doc, f, band.grid.betas, band.q_lo, band.q_hi, svg_detail::kBlue);
    svg_detail::mean_line(doc, f, band.grid.betas, band.mean, svg_detail::kBlue);
    return doc;
}

/// Two overlaid bands; recall stretches where B significantly beats A are
/// shaded red.
inline SvgDoc plot_compare(const EnsembleBand& band_a, const EnsembleBand& band_b,
                           const SignificanceReport& sig, const std::string& label_a,
                           const std::string& label_b, const std::string& title = "") {
    if (band_a.grid.betas != sig.grid.betas || band_b.grid.betas != sig.grid.betas)
        throw std::invalid_argument("plot_compare: band and significance grids differ");
    PlotFrame f;
    SvgDoc doc(f.width, f.height);
    svg_detail::draw_axes(doc, f, "recall", "precision", title);

    // Merge consecutive significant grid points into intervals.
    const auto& betas = sig.grid.betas;
    std::size_t i = 0;
    while (i < sig.mask.size()) {
        if (!sig.mask[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < sig.mask.size() && sig.mask[j + 1]) ++j;
        const double lo = i == 0 ? betas[i] : 0.5 * (betas[i - 1] + betas[i]);
        const double hi = j + 1 == betas.size() ? betas[j] : 0.5 * (betas[j] + betas[j + 1]);
        doc.rect(f.px(lo), f.py(f.y1), f.px(hi) - f.px(lo), f.py(f.y0) - f.py(f.y1),
                 svg_detail::kRed, 0.18);
        i = j + 1;
    }

    svg_detail::band_region(doc, f, band_a.grid.betas, band_a.q_lo, band_a.q_hi, svg_detail::kBlue);
    svg_detail::mean_line(doc, f, band_a.grid.betas, band_a.mean, svg_detail::kBlue);
    svg_detail::band_region(doc, f, band_b.grid.betas, band_b.q_lo, band_b.q_hi, svg_detail::kGreen);
    svg_detail::mean_line(doc, f, band_b.grid.betas, band_b.mean, svg_detail::kGreen);

    doc.text(f.px(0.02), f.py(0.08), label_a, 12, "start", svg_detail::kBlue);
    doc.text(f.px(0.02), f.py(0.03), label_b, 12, "start", svg_detail::kGreen);
    char frac[64];
    std::snprintf(frac, sizeof frac, "significant fraction: %.3f", sig.fraction_significant);
    doc.text(f.px(0.98), f.py(0.03), frac, 12, "end", svg_detail::kRed);
    return doc;
}

/// Real samples overlaid with the generated sets of the best and worst
/// ensemble members, side by side.
inline SvgDoc plot_scatter(const SampleSet& real, const SampleSet& best, const SampleSet& worst,
                           const std::string& title = "") {
    const int panel = 420;
    SvgDoc doc(2 * panel, panel + 50);

    double extent = 1.0;
    auto grow = [&extent](const SampleSet& s) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            extent = std::max(extent, std::fabs(s.point(i)[0]));
            extent = std::max(extent, std::fabs(s.point(i)[1]));
        }
    };
    grow(real);
    grow(best);
    grow(worst);
    extent *= 1.05;

    auto draw_panel = [&](const SampleSet& gen, double x_off, const std::string& caption) {
        PlotFrame f;
        f.width = panel;
        f.height = panel;
        f.margin_left = 44;
        f.margin_right = 16;
        f.margin_top = 34;
        f.margin_bottom = 40;
        f.x0 = -extent;
        f.x1 = extent;
        f.y0 = -extent;
        f.y1 = extent;
        for (std::size_t i = 0; i < real.size(); ++i)
            doc.circle(x_off + f.px(real.point(i)[0]), f.py(real.point(i)[1]), 1.4,
                       svg_detail::kGray, 0.5);
        for (std::size_t i = 0; i < gen.size(); ++i)
            doc.circle(x_off + f.px(gen.point(i)[0]), f.py(gen.point(i)[1]), 1.4,
                       svg_detail::kOrange, 0.5);
        doc.rect(x_off + f.px(f.x0), f.py(f.y1), f.px(f.x1) - f.px(f.x0), f.py(f.y0) - f.py(f.y1),
                 "none", 0.0);
        doc.text(x_off + panel / 2.0, panel + 20.0, caption, 13, "middle");
    };
    draw_panel(best, 0, "best member (" + best.model_id + ")");
    draw_panel(worst, panel, "worst member (" + worst.model_id + ")");
    if (!title.empty()) doc.text(panel - 100.0, 18, title, 14, "middle");
    doc.text(10, 18, "real: gray, generated: orange", 11, "start");
    return doc;
}

/// Radial view: the quantile band at each slope, drawn in the PR plane, with
/// the ensemble's raw points overlaid every overlay_stride angles.
inline SvgDoc plot_radial(const RadialBand& band, const std::string& title = "") {
    PlotFrame f;
    SvgDoc doc(f.width, f.height);
    svg_detail::draw_axes(doc, f, "recall", "precision", title);

    const auto& lam = band.grid.lambdas;
    const std::size_t n = lam.size();
    std::vector<double> xs, ys;
    xs.reserve(2 * n);
    ys.reserve(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        xs.push_back(f.px(band.q_hi[k] / lam[k]));
        ys.push_back(f.py(band.q_hi[k]));
    }
    for (std::size_t k = n; k-- > 0;) {
        xs.push_back(f.px(band.q_lo[k] / lam[k]));
        ys.push_back(f.py(band.q_lo[k]));
    }
    doc.polygon(xs, ys, svg_detail::kBlue, 0.30);

    std::vector<double> mx, my;
    for (std::size_t k = 0; k < n; ++k) {
        mx.push_back(f.px(band.mean[k] / lam[k]));
        my.push_back(f.py(band.mean[k]));
    }
    doc.polyline(mx, my, svg_detail::kBlue, 2.0);

    const int stride = std::max(1, band.overlay_stride);
    for (std::size_t k = 0; k < n; k += static_cast<std::size_t>(stride)) {
        char color[16];
        const int hue = static_cast<int>(300.0 * static_cast<double>(k) / static_cast<double>(n));
        std::snprintf(color, sizeof color, "hsl(%d,70%%,45%%)", hue);
        for (const auto& member : band.member_alphas)
            doc.circle(f.px(member[k] / lam[k]), f.py(member[k]), 2.2, color, 0.85);
    }
    return doc;
}

}  // namespace prband
