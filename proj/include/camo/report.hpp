#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "camo/evaluator.hpp"

namespace camo {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("write_eval_csv: cannot open '" + path + "'");
  os << "class,precision,recall,f1,sigma,tp,fp,fn\n";
  os << std::setprecision(10);
  for (const auto& s : report.per_class)
    os << s.name << ',' << s.precision << ',' << s.recall << ',' << s.f1 << ','
       << s.sigma << ',' << s.tp << ',' << s.fp << ',' << s.fn << '\n';
  os << "mean,,," << report.mf1 << ',' << report.mf1_sigma << ",,,\n";
}

inline void write_loss_csv(const std::string& path,
                           const std::vector<double>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("write_loss_csv: cannot open '" + path + "'");
  os << "epoch,loss\n" << std::setprecision(10);
  for (std::size_t i = 0; i < history.size(); ++i)
    os << i << ',' << history[i] << '\n';
}

inline void write_sweep_csv(const std::string& path, const SweepReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("write_sweep_csv: cannot open '" + path + "'");
  os << "name,size_fraction,alpha,mf1_camo,f1_patch,detection_score,"
        "mf1_reduction_pct,baseline_mf1\n";
  os << std::setprecision(10);
  for (const auto& r : report.rows)
    os << r.name << ',' << r.size_fraction << ',' << r.alpha << ','
       << r.mf1_camo << ',' << r.f1_patch << ',' << r.detection_score << ','
       << r.mf1_reduction_pct << ',' << report.baseline_mf1 << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_csv_double(const std::string& tok, const std::string& path,
                               int lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + " line " + std::to_string(lineno) +
                     ": expected a number, got '" + tok + "'");
  }
}

}  // namespace detail

// Reads back a sweep CSV; Pearson columns are recomputed from the rows.
inline SweepReport read_sweep_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_sweep_csv: cannot open '" + path + "'");
  SweepReport report;
  std::string line;
  int lineno = 0;
  bool header = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("name,", 0) != 0)
        throw ParseError(path + " line 1: missing sweep CSV header");
      continue;
    }
    auto tok = detail::split_csv_line(line);
    if (tok.size() != 8)
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": expected 8 columns, got " +
                       std::to_string(tok.size()));
    SweepRow r;
    r.name = tok[0];
    r.size_fraction = detail::parse_csv_double(tok[1], path, lineno);
    r.alpha = detail::parse_csv_double(tok[2], path, lineno);
    r.mf1_camo = detail::parse_csv_double(tok[3], path, lineno);
    r.f1_patch = detail::parse_csv_double(tok[4], path, lineno);
    r.detection_score = detail::parse_csv_double(tok[5], path, lineno);
    r.mf1_reduction_pct = detail::parse_csv_double(tok[6], path, lineno);
    report.baseline_mf1 = detail::parse_csv_double(tok[7], path, lineno);
    report.rows.push_back(std::move(r));
  }
  auto safe_pearson = [](const std::vector<double>& x,
                         const std::vector<double>& y) {
    try {
      return pearson(x, y);
    } catch (const Error&) {
      return std::nan("");
    }
  };
  std::vector<double> sizes, alphas, reductions, scores;
  for (const auto& r : report.rows) {
    sizes.push_back(r.size_fraction);
    alphas.push_back(r.alpha);
    reductions.push_back(r.mf1_reduction_pct);
    scores.push_back(r.detection_score);
  }
  if (report.rows.size() >= 2) {
    report.pearson_reduction_size = safe_pearson(sizes, reductions);
    report.pearson_reduction_alpha = safe_pearson(alphas, reductions);
    report.pearson_score_size = safe_pearson(sizes, scores);
    report.pearson_score_alpha = safe_pearson(alphas, scores);
  }
  return report;
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

namespace detail {

inline std::string svg_header(int w, int h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  return os.str();
}

}  // namespace detail

// Grouped bar chart: per patch one blue bar (vehicle mF1 under camouflage)
// and one orange bar (patch-detection F1), with a green baseline line for
// the clean-detector mF1.
inline std::string sweep_bar_chart_svg(const SweepReport& report) {
  const int bar_w = 14, gap = 10, group = 2 * bar_w + gap;
  const int margin_l = 50, margin_b = 90, margin_t = 20;
  const int plot_h = 240;
  const int width =
      margin_l + static_cast<int>(report.rows.size()) * group + 20;
  const int height = margin_t + plot_h + margin_b;

  std::ostringstream os;
  os << detail::svg_header(width, height);
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  auto ybar = [&](double v) { return margin_t + plot_h * (1.0 - v); };
  // axis
  os << "<line x1=\"" << margin_l - 6 << "\" y1=\"" << ybar(0) << "\" x2=\""
     << width - 10 << "\" y2=\"" << ybar(0)
     << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0})
    os << "<text x=\"6\" y=\"" << ybar(tick) + 4
       << "\" font-size=\"10\">" << tick << "</text>\n";

  int x = margin_l;
  for (const auto& r : report.rows) {
    os << "<g class=\"patch-group\">\n";
    os << "  <rect x=\"" << x << "\" y=\"" << ybar(r.mf1_camo)
       << "\" width=\"" << bar_w << "\" height=\""
       << plot_h * r.mf1_camo << "\" fill=\"#1f77b4\"/>\n";
    os << "  <rect x=\"" << x + bar_w << "\" y=\"" << ybar(r.f1_patch)
       << "\" width=\"" << bar_w << "\" height=\""
       << plot_h * r.f1_patch << "\" fill=\"#ff7f0e\"/>\n";
    os << "  <text x=\"" << x + bar_w << "\" y=\"" << margin_t + plot_h + 10
       << "\" font-size=\"8\" transform=\"rotate(60 " << x + bar_w << ' '
       << margin_t + plot_h + 10 << ")\">" << r.name << "</text>\n";
    os << "</g>\n";
    x += group;
  }
  // baseline line in green
  os << "<line class=\"baseline\" x1=\"" << margin_l - 6 << "\" y1=\""
     << ybar(report.baseline_mf1) << "\" x2=\"" << width - 10 << "\" y2=\""
     << ybar(report.baseline_mf1)
     << "\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"6,3\"/>\n";
  os << "</svg>\n";
  return os.str();
}

// Scatter of a sweep column against size or alpha, annotated with Pearson.
inline std::string sweep_scatter_svg(const SweepReport& report, bool x_is_size,
                                     bool y_is_score) {
  const int margin = 40, plot = 240;
  const int width = plot + 2 * margin, height = plot + 2 * margin;
  std::vector<double> xs, ys;
  for (const auto& r : report.rows) {
    xs.push_back(x_is_size ? r.size_fraction : r.alpha);
    ys.push_back(y_is_score ? r.detection_score : r.mf1_reduction_pct);
  }
  double xmin = 0.0, xmax = 1.0;
  double ymin = 0.0, ymax = y_is_score ? 1.0 : 100.0;
  for (double y : ys) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  auto px = [&](double v) {
    return margin + plot * (v - xmin) / (xmax - xmin);
  };
  auto py = [&](double v) {
    return margin + plot * (1.0 - (v - ymin) / (ymax - ymin));
  };

  std::ostringstream os;
  os << detail::svg_header(width, height);
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << margin + plot << "\" x2=\""
     << margin + plot << "\" y2=\"" << margin + plot
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
     << "\" y2=\"" << margin + plot << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i)
    os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
       << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
  double r = std::nan("");
  if (x_is_size)
    r = y_is_score ? report.pearson_score_size : report.pearson_reduction_size;
  else
    r = y_is_score ? report.pearson_score_alpha : report.pearson_reduction_alpha;
  os << "<text x=\"" << margin << "\" y=\"" << margin - 8
     << "\" font-size=\"12\">" << (y_is_score ? "detection score" : "mF1 reduction %")
     << " vs " << (x_is_size ? "size" : "alpha") << ", pearson=";
  if (std::isnan(r))
    os << "n/a";
  else
    os << std::fixed << std::setprecision(3) << r;
  os << "</text>\n</svg>\n";
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("write_text_file: cannot open '" + path + "'");
  os << text;
}

}  // namespace camo
