#pragma once

#include <string>
#include <vector>

#include "sib/trainer.hpp"

namespace sib {

// Minimal static SVG emitters for the report figures.
struct SvgSeriesPoint {
    double x = 0, y = 0, yerr = 0;
};

void svg_error_scatter(const std::string& path, const std::vector<SvgSeriesPoint>& pts,
                       const std::string& xlabel, const std::string& ylabel);

void svg_histogram(const std::string& path, const std::vector<double>& bin_edges,
                   const std::vector<long>& counts, const std::string& xlabel,
                   const std::string& ylabel);

struct WaterfallBar {
    std::string label;
    double phi = 0;
};

void svg_waterfall(const std::string& path, double base_value, double fx,
                   const std::vector<WaterfallBar>& bars);

// One row per fold per configuration.
void write_eval_report_csv(const std::string& path,
                           const std::vector<std::pair<std::string, EvalReport>>& reports);

void write_predictions_csv(const std::string& path, const std::vector<PredictionRecord>& preds);

void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& points);

std::string format_double(double v);

}  // namespace sib
