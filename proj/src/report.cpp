#include "gamessl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <sstream>

#include "gamessl/error.hpp"

namespace gamessl::report {

namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void require_same_variables(const probe::ProbeReport& base, const probe::ProbeReport& r) {
  if (base.variable_names != r.variable_names) {
    throw ConfigError("baseline '" + base.label + "' has different state variables than '" + r.label + "'");
  }
}

json aggregates(const probe::ProbeReport& r) {
  return {{"min", number(r.min())}, {"avg", number(r.avg())}, {"max", number(r.max())}};
}

json summary(const probe::ProbeReport& r, const probe::ProbeReport* baseline) {
  json j;
  j["label"] = r.label;
  j["env"] = r.env;
  j["num_variables"] = r.r2.size();
  j["r2"] = aggregates(r);
  json vars = json::array();
  for (std::size_t i = 0; i < r.r2.size(); ++i) {
    vars.push_back({{"name", r.variable_names[i]},
                    {"n_valid", r.n_valid[i]},
                    {"r2", number(r.r2[i])},
                    {"note", r.notes[i]}});
  }
  j["variables"] = vars;
  json groups = json::array();
  for (const auto& g : r.groups) groups.push_back({{"name", g.name}, {"indices", g.indices}, {"r2", number(g.r2)}});
  j["groups"] = groups;
  if (baseline != nullptr) {
    require_same_variables(*baseline, r);
    j["baseline"] = {{"label", baseline->label}, {"r2", aggregates(*baseline)}};
    json per = json::array();
    for (std::size_t i = 0; i < r.r2.size(); ++i) per.push_back(number(probe::improvement(baseline->r2[i], r.r2[i])));
    j["improvement_pct"] = {{"formula", "100 * (r2 - r2_baseline) / r2_baseline"},
                            {"min", number(probe::improvement(baseline->min(), r.min()))},
                            {"avg", number(probe::improvement(baseline->avg(), r.avg()))},
                            {"max", number(probe::improvement(baseline->max(), r.max()))},
                            {"per_variable", per}};
  }
  return j;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

void write_per_variable_csv(const std::filesystem::path& path, const probe::ProbeReport& report) {
  std::ostringstream out;
  out << "variable_name,n_valid,r2\n";
  char buf[64];
  for (std::size_t i = 0; i < report.r2.size(); ++i) {
    if (std::isnan(report.r2[i])) {
      std::snprintf(buf, sizeof buf, "nan");
    } else {
      std::snprintf(buf, sizeof buf, "%.17g", report.r2[i]);
    }
    out << report.variable_names[i] << ',' << report.n_valid[i] << ',' << buf << '\n';
  }
  write_text(path, out.str());
}

std::string summary_json(const probe::ProbeReport& report, const probe::ProbeReport* baseline) {
  return summary(report, baseline).dump(2) + "\n";
}

void write_summary_json(const std::filesystem::path& path, const probe::ProbeReport& report,
                        const probe::ProbeReport* baseline) {
  write_text(path, summary_json(report, baseline));
}

probe::ProbeReport read_summary_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  probe::ProbeReport r;
  try {
    const auto j = json::parse(in);
    r.label = j.at("label").get<std::string>();
    r.env = j.at("env").get<std::string>();
    for (const auto& v : j.at("variables")) {
      r.variable_names.push_back(v.at("name").get<std::string>());
      r.n_valid.push_back(v.at("n_valid").get<std::size_t>());
      r.r2.push_back(read_number(v.at("r2")));
      r.notes.push_back(v.value("note", ""));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": not a probe summary (" + e.what() + ")");
  }
  return r;
}

std::string matrix_json(const probe::ProbeReport& baseline, const std::vector<probe::ProbeReport>& methods) {
  json j;
  j["baseline"] = summary(baseline, nullptr);
  json per_method = json::object();
  const probe::ProbeReport* best = nullptr;
  double mean_avg = 0;
  for (const auto& m : methods) {
    per_method[m.label] = summary(m, &baseline);
    if (best == nullptr || m.avg() > best->avg()) best = &m;
    mean_avg += m.avg();
  }
  j["methods"] = per_method;
  if (best != nullptr) {
    mean_avg /= static_cast<double>(methods.size());
    j["best_method"] = {{"label", best->label},
                        {"avg_r2", number(best->avg())},
                        {"improvement_pct", number(probe::improvement(baseline.avg(), best->avg()))}};
    j["mean_of_methods"] = {{"avg_r2", number(mean_avg)},
                            {"improvement_pct", number(probe::improvement(baseline.avg(), mean_avg))}};
  }
  return j.dump(2) + "\n";
}

std::vector<Series> improvement_series(const probe::ProbeReport& baseline,
                                       const std::vector<probe::ProbeReport>& methods) {
  std::vector<Series> out;
  for (const auto& m : methods) {
    require_same_variables(baseline, m);
    Series s{m.label, {}};
    for (std::size_t i = 0; i < m.r2.size(); ++i) s.values.push_back(probe::improvement(baseline.r2[i], m.r2[i]));
    out.push_back(std::move(s));
  }
  return out;
}

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& categories, const std::vector<Series>& series,
                         const std::string& y_label) {
  static const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};
  const double left = 70, right = 20, top = 40, bottom = 110, plot_h = 300;
  const double group_w = std::max(24.0, 10.0 * static_cast<double>(series.size()) + 8);
  const double width = left + right + group_w * static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  const double height = top + plot_h + bottom;

  double lo = 0, hi = 0;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (hi - lo < 1e-12) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  lo -= lo < 0 ? pad : 0;
  hi += pad;
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n",
                width, height);
  svg << buf;
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"20\" font-size=\"14\">", left);
  svg << buf << escape_xml(title) << "</text>\n";
  // Axis ticks.
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n",
                  left, y_of(v), width - right, y_of(v), left - 4, y_of(v) + 4, v);
    svg << buf;
  }
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left,
                y_of(0), width - right, y_of(0));
  svg << buf;
  std::snprintf(buf, sizeof buf, "<text transform=\"translate(16,%.1f) rotate(-90)\" text-anchor=\"middle\">",
                top + plot_h / 2);
  svg << buf << escape_xml(y_label) << "</text>\n";

  const double bar_w = (group_w - 8) / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double x0 = left + group_w * static_cast<double>(c) + 4;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() ? series[s].values[c] : std::nan("");
      if (!std::isfinite(v)) continue;
      const double y = std::min(y_of(v), y_of(0)), h = std::abs(y_of(v) - y_of(0));
      std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                    x0 + bar_w * static_cast<double>(s), y, bar_w, h, kColors[s % 5]);
      svg << buf;
    }
    std::snprintf(buf, sizeof buf, "<text transform=\"translate(%.1f,%.1f) rotate(-60)\" text-anchor=\"end\">",
                  x0 + group_w / 2, top + plot_h + 14);
    svg << buf << escape_xml(categories[c]) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double lx = left + 110 * static_cast<double>(s);
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/><text x=\"%.1f\" y=\"%.1f\">",
                  lx, height - 18, kColors[s % 5], lx + 14, height - 9);
    svg << buf << escape_xml(series[s].label) << "</text>\n";
  }
  svg << "</svg>\n";
  write_text(path, svg.str());
}

std::string format_table(const std::vector<probe::ProbeReport>& reports) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-5s", "R2");
  out << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, " %10s", r.label.c_str());
    out << buf;
  }
  out << '\n';
  const char* rows[] = {"min", "avg", "max"};
  for (int k = 0; k < 3; ++k) {
    std::snprintf(buf, sizeof buf, "%-5s", rows[k]);
    out << buf;
    for (const auto& r : reports) {
      const double v = k == 0 ? r.min() : (k == 1 ? r.avg() : r.max());
      std::snprintf(buf, sizeof buf, " %10.3f", v);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace gamessl::report
