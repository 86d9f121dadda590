#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfoa/eval/metrics.hpp"
#include "pfoa/eval/oof.hpp"

namespace pfoa::eval {

inline constexpr std::string_view kMetricsHeader = "model,group,AUC,AUC_lo,AUC_hi,AP,AP_lo,AP_hi,n,n_pos";

std::string format_metrics(std::span<const MetricsRow> rows);

// "x,y,threshold" rows.
std::string format_curve(std::span<const CurvePoint> points);

struct SvgCurve {
  std::string label;
  std::vector<CurvePoint> points;
};

// Line chart on the unit square. A dashed diagonal is drawn for ROC plots;
// for PR plots a dashed horizontal line marks the positive rate.
std::string render_curve_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                             std::span<const SvgCurve> curves, bool diagonal, double baseline = -1.0);

}  // namespace pfoa::eval
