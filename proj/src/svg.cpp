#include "explore_go/harness.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>

namespace explore_go {
namespace {

constexpr std::array<const char*, 6> kPalette{"#d62728", "#1f77b4", "#2ca02c",
                                              "#9467bd", "#ff7f0e", "#8c564b"};
constexpr double kPanelW = 420, kPanelH = 300, kMarginL = 55, kMarginT = 40, kGap = 60;

struct Panel {
  double x0;
  double max_step;

  double x(double step) const { return x0 + kMarginL + (max_step > 0 ? step / max_step : 0) * kPanelW; }
  static double y(double v) { return kMarginT + (1.0 - std::clamp(v, 0.0, 1.0)) * kPanelH; }
};

void axes(std::ostream& out, const Panel& p, const std::string& title) {
  const double left = p.x0 + kMarginL;
  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << left + kPanelW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << kMarginT << "\" width=\"" << kPanelW
      << "\" height=\"" << kPanelH << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << Panel::y(v) + 4
        << "\" text-anchor=\"end\">" << v << "</text>\n";
    out << "<line x1=\"" << left << "\" x2=\"" << left + kPanelW << "\" y1=\"" << Panel::y(v)
        << "\" y2=\"" << Panel::y(v) << "\" stroke=\"#ddd\"/>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double s = p.max_step * i / 4.0;
    out << "<text x=\"" << p.x(s) << "\" y=\"" << kMarginT + kPanelH + 16
        << "\" text-anchor=\"middle\">" << static_cast<long>(s) << "</text>\n";
  }
  out << "<text x=\"" << left + kPanelW / 2 << "\" y=\"" << kMarginT + kPanelH + 34
      << "\" text-anchor=\"middle\">environment steps</text>\n";
  out << "</g>\n";
}

template <typename Get>
void curve(std::ostream& out, const Panel& p, const LabeledAggregate& s, const char* color,
           Get get) {
  const bool band = std::all_of(s.rows.begin(), s.rows.end(),
                                [&](const AggregateRow& r) { return get(r).half_width.has_value(); });
  if (band && !s.rows.empty()) {
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& r : s.rows) out << p.x(r.step) << "," << Panel::y(get(r).mean + *get(r).half_width) << " ";
    for (auto it = s.rows.rbegin(); it != s.rows.rend(); ++it) {
      out << p.x(it->step) << "," << Panel::y(get(*it).mean - *get(*it).half_width) << " ";
    }
    out << "\"/>\n";
  }
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  for (const auto& r : s.rows) out << p.x(r.step) << "," << Panel::y(get(r).mean) << " ";
  out << "\"/>\n";
}

}  // namespace

void write_curves_svg(const std::filesystem::path& path, std::span<const LabeledAggregate> series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::fixed << std::setprecision(2);

  double max_step = 0;
  for (const auto& s : series) {
    for (const auto& r : s.rows) max_step = std::max(max_step, static_cast<double>(r.step));
  }
  const double width = 2 * (kMarginL + kPanelW) + kGap + 20;
  const double height = kMarginT + kPanelH + 50 + 20.0 * static_cast<double>(series.size());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const Panel train{0, max_step};
  const Panel test{kMarginL + kPanelW + kGap, max_step};
  axes(out, train, "Training tasks: mean return");
  axes(out, test, "Unreachable test tasks: mean return");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPalette.size()];
    curve(out, train, series[i], color, [](const AggregateRow& r) { return r.train; });
    curve(out, test, series[i], color, [](const AggregateRow& r) { return r.test; });
    const double ly = kMarginT + kPanelH + 50 + 20.0 * static_cast<double>(i);
    out << "<rect x=\"" << kMarginL << "\" y=\"" << ly - 10 << "\" width=\"14\" height=\"10\" fill=\""
        << color << "\"/>\n";
    out << "<text x=\"" << kMarginL + 20 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace explore_go
