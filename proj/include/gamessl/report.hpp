#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gamessl/probe.hpp"

namespace gamessl::report {

// variable_name,n_valid,r2 (r2 written as "nan" when undefined).
void write_per_variable_csv(const std::filesystem::path& path, const probe::ProbeReport& report);

// Summary JSON for one probed encoder. With a baseline it also carries
// improvement percentages 100 * (r2 - r2_base) / r2_base for the aggregates
// and per variable. Variable names must match the baseline's.
std::string summary_json(const probe::ProbeReport& report, const probe::ProbeReport* baseline = nullptr);
void write_summary_json(const std::filesystem::path& path, const probe::ProbeReport& report,
                        const probe::ProbeReport* baseline = nullptr);
// Reads the per-variable part of a summary written above.
probe::ProbeReport read_summary_json(const std::filesystem::path& path);

// Combined report for a baseline and several methods: per-method summaries,
// improvement of each method's average R² over the baseline average, and the
// improvement of the best method's average (labelled separately).
std::string matrix_json(const probe::ProbeReport& baseline, const std::vector<probe::ProbeReport>& methods);

struct Series {
  std::string label;
  std::vector<double> values;
};

// Grouped bar chart, one group per variable and one bar per series.
void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& categories, const std::vector<Series>& series,
                         const std::string& y_label);

// Per-variable improvement of each method over the baseline.
std::vector<Series> improvement_series(const probe::ProbeReport& baseline,
                                       const std::vector<probe::ProbeReport>& methods);

// Rows min/avg/max, one column per report, three decimals.
std::string format_table(const std::vector<probe::ProbeReport>& reports);

}  // namespace gamessl::report
