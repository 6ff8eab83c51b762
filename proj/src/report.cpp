#include "sib/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sib {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[40];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

struct SvgCanvas {
    std::string body;
    int width, height;

    SvgCanvas(int w, int h) : width(w), height(h) {}

    void line(double x1, double y1, double x2, double y2, const char* color = "#888",
              double sw = 1.0) {
        body += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
                "\" y2=\"" + fmt(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + fmt(sw) +
                "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const char* color) {
        body += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
                "\" height=\"" + fmt(h) + "\" fill=\"" + color + "\"/>\n";
    }
    void circle(double x, double y, double r, const char* color) {
        body += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"" + fmt(r) +
                "\" fill=\"" + color + "\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 11,
              const char* anchor = "start") {
        body += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" +
                std::to_string(size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
                "\">" + s + "</text>\n";
    }
    void save(const std::string& path) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write figure '" + path + "'");
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body << "</svg>\n";
    }
};

}  // namespace

void svg_error_scatter(const std::string& path, const std::vector<SvgSeriesPoint>& pts,
                       const std::string& xlabel, const std::string& ylabel) {
    SvgCanvas svg(640, 420);
    const double L = 60, R = 620, T = 20, B = 370;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : pts) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y - p.yerr);
        ymax = std::max(ymax, p.y + p.yerr);
    }
    if (pts.empty()) xmin = ymin = 0, xmax = ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    const double ypad = std::max(0.02, (ymax - ymin) * 0.1);
    ymin -= ypad;
    ymax += ypad;
    auto X = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (R - L); };
    auto Y = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };
    svg.line(L, B, R, B, "#000");
    svg.line(L, B, L, T, "#000");
    for (int i = 0; i <= 4; ++i) {
        const double y = ymin + (ymax - ymin) * i / 4.0;
        svg.line(L - 3, Y(y), L, Y(y), "#000");
        svg.text(L - 6, Y(y) + 4, fmt(y, "%.3g"), 10, "end");
        const double x = xmin + (xmax - xmin) * i / 4.0;
        svg.line(X(x), B, X(x), B + 3, "#000");
        svg.text(X(x), B + 14, fmt(x, "%.3g"), 10, "middle");
    }
    for (const auto& p : pts) {
        svg.line(X(p.x), Y(p.y - p.yerr), X(p.x), Y(p.y + p.yerr), "#5a60bf", 1.5);
        svg.circle(X(p.x), Y(p.y), 3.5, "#5a60bf");
    }
    svg.text((L + R) / 2, 405, xlabel, 12, "middle");
    svg.text(14, (T + B) / 2, ylabel, 12, "middle");
    svg.save(path);
}

void svg_histogram(const std::string& path, const std::vector<double>& bin_edges,
                   const std::vector<long>& counts, const std::string& xlabel,
                   const std::string& ylabel) {
    SvgCanvas svg(640, 420);
    const double L = 60, R = 620, T = 20, B = 370;
    long cmax = 1;
    for (long c : counts) cmax = std::max(cmax, c);
    const double xmin = bin_edges.front(), xmax = bin_edges.back();
    auto X = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (R - L); };
    auto Y = [&](double c) { return B - c / static_cast<double>(cmax) * (B - T); };
    svg.line(L, B, R, B, "#000");
    svg.line(L, B, L, T, "#000");
    for (size_t i = 0; i < counts.size(); ++i) {
        const double x0 = X(bin_edges[i]), x1 = X(bin_edges[i + 1]);
        svg.rect(x0, Y(counts[i]), std::max(1.0, x1 - x0 - 1), B - Y(counts[i]), "#5a60bf");
    }
    for (int i = 0; i <= 4; ++i) {
        const double x = xmin + (xmax - xmin) * i / 4.0;
        svg.text(X(x), B + 14, fmt(x, "%.3g"), 10, "middle");
        const long c = static_cast<long>(std::llround(cmax * i / 4.0));
        svg.text(L - 6, Y(c) + 4, std::to_string(c), 10, "end");
    }
    svg.text((L + R) / 2, 405, xlabel, 12, "middle");
    svg.text(14, (T + B) / 2, ylabel, 12, "middle");
    svg.save(path);
}

void svg_waterfall(const std::string& path, double base_value, double fx,
                   const std::vector<WaterfallBar>& bars) {
    const int row_h = 26;
    const int height = 90 + row_h * static_cast<int>(bars.size());
    SvgCanvas svg(720, height);
    const double L = 300, R = 700;
    double lo = std::min(base_value, fx), hi = std::max(base_value, fx);
    double at = base_value;
    for (const auto& b : bars) {
        at += b.phi;
        lo = std::min(lo, at);
        hi = std::max(hi, at);
    }
    const double pad = std::max(0.02, (hi - lo) * 0.08);
    lo -= pad;
    hi += pad;
    auto X = [&](double v) { return L + (v - lo) / (hi - lo) * (R - L); };
    svg.line(X(base_value), 30, X(base_value), height - 40, "#aaa", 1.0);
    svg.text(X(base_value), 20, "base " + fmt(base_value, "%.3f"), 10, "middle");
    svg.text(X(fx), 20, "f(x) " + fmt(fx, "%.3f"), 10, "middle");
    double cursor = base_value;
    double y = 40;
    for (const auto& b : bars) {
        const double next = cursor + b.phi;
        const char* color = b.phi >= 0 ? "#c0392b" : "#2e5bba";
        svg.rect(std::min(X(cursor), X(next)), y, std::max(1.0, std::abs(X(next) - X(cursor))),
                 row_h - 8, color);
        std::string label = b.label;
        if (label.size() > 48) label = label.substr(0, 45) + "...";
        svg.text(L - 8, y + row_h / 2 + 2, label, 10, "end");
        svg.text(std::max(X(cursor), X(next)) + 4, y + row_h / 2 + 2,
                 (b.phi >= 0 ? "+" : "") + fmt(b.phi, "%.3f"), 10);
        cursor = next;
        y += row_h;
    }
    svg.line(X(fx), 30, X(fx), height - 40, "#444", 1.0);
    svg.save(path);
}

void write_eval_report_csv(const std::string& path,
                           const std::vector<std::pair<std::string, EvalReport>>& reports) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report csv '" + path + "'");
    out << "configuration,fold,tn,fp,fn,tp,balanced_accuracy,recall,precision,weighted_f1\n";
    for (const auto& [name, report] : reports) {
        for (size_t f = 0; f < report.folds.size(); ++f) {
            const MetricEntry& m = report.folds[f];
            out << name << ',' << f << ',' << m.counts.tn << ',' << m.counts.fp << ','
                << m.counts.fn << ',' << m.counts.tp << ',' << format_double(m.balanced_accuracy)
                << ',' << format_double(m.recall1) << ',';
            if (m.precision1) out << format_double(*m.precision1);
            out << ',' << format_double(m.weighted_f1) << "\n";
        }
    }
}

void write_predictions_csv(const std::string& path, const std::vector<PredictionRecord>& preds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write predictions csv '" + path + "'");
    out << "user,fold,label,pred,p_sib\n";
    for (const PredictionRecord& p : preds)
        out << p.user << ',' << p.fold << ',' << p.label << ',' << p.pred << ','
            << format_double(p.p_sib) << "\n";
}

void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sweep csv '" + path + "'");
    out << "N,balanced_accuracy_mean,balanced_accuracy_sd\n";
    for (const SweepPoint& p : points)
        out << p.n << ',' << format_double(p.balanced_accuracy.mean) << ','
            << format_double(p.balanced_accuracy.sd) << "\n";
}

}  // namespace sib
