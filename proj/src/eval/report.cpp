#include "pfoa/eval/report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "pfoa/datamodel.hpp"

namespace pfoa::eval {

namespace {

std::string fixed(double v, int digits = 4) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  return ec == std::errc() ? std::string(buf.data(), ptr) : std::string("nan");
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string format_metrics(std::span<const MetricsRow> rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.model << ',' << r.group << ',';
    if (r.computable) {
      os << data::format_double(r.auc) << ',' << data::format_double(r.auc_ci.lo) << ','
         << data::format_double(r.auc_ci.hi) << ',' << data::format_double(r.ap) << ','
         << data::format_double(r.ap_ci.lo) << ',' << data::format_double(r.ap_ci.hi);
    } else {
      os << "not computable,,,,,";
    }
    os << ',' << r.n << ',' << r.n_pos << '\n';
  }
  return os.str();
}

std::string format_curve(std::span<const CurvePoint> points) {
  std::ostringstream os;
  os << "x,y,threshold\n";
  for (const auto& p : points) {
    os << data::format_double(p.x) << ',' << data::format_double(p.y) << ',';
    if (std::isfinite(p.threshold)) os << data::format_double(p.threshold);
    else os << "inf";
    os << '\n';
  }
  return os.str();
}

std::string render_curve_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                             std::span<const SvgCurve> curves, bool diagonal, double baseline) {
  constexpr double kLeft = 60;
  constexpr double kTop = 40;
  constexpr double kSize = 360;
  static const std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                                     "#8c564b"};
  const auto px = [&](double x) { return fixed(kLeft + x * kSize, 2); };
  const auto py = [&](double y) { return fixed(kTop + (1.0 - y) * kSize, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"460\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n";
  os << "<rect width=\"640\" height=\"460\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(0.5) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
     << "</text>\n";
  os << "<rect x=\"" << px(0) << "\" y=\"" << py(1) << "\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    os << "<text x=\"" << px(v) << "\" y=\"" << py(0) << "\" dy=\"16\" text-anchor=\"middle\">" << fixed(v, 1)
       << "</text>\n";
    os << "<text x=\"" << px(0) << "\" y=\"" << py(v) << "\" dx=\"-6\" dy=\"4\" text-anchor=\"end\">" << fixed(v, 1)
       << "</text>\n";
  }
  os << "<text x=\"" << px(0.5) << "\" y=\"" << fixed(kTop + kSize + 36, 0) << "\" text-anchor=\"middle\">"
     << escape_xml(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << py(0.5) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << py(0.5)
     << ")\">" << escape_xml(y_label) << "</text>\n";
  if (diagonal) {
    os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
       << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  }
  if (baseline >= 0.0) {
    os << "<line x1=\"" << px(0) << "\" y1=\"" << py(baseline) << "\" x2=\"" << px(1) << "\" y2=\""
       << py(baseline) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  }
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % kColors.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < curves[c].points.size(); ++i) {
      if (i) os << ' ';
      os << px(curves[c].points[i].x) << ',' << py(curves[c].points[i].y);
    }
    os << "\"/>\n";
    const double ly = kTop + 16 + 18 * static_cast<double>(c);
    os << "<line x1=\"" << fixed(kLeft + kSize + 16, 0) << "\" y1=\"" << fixed(ly, 0) << "\" x2=\""
       << fixed(kLeft + kSize + 40, 0) << "\" y2=\"" << fixed(ly, 0) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fixed(kLeft + kSize + 46, 0) << "\" y=\"" << fixed(ly + 4, 0) << "\">"
       << escape_xml(curves[c].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace pfoa::eval
