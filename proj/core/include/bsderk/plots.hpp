#pragma once

#include <string>
#include <vector>

namespace bsderk {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart with log2-scaled axes and a legend. Throws
/// InvalidParameter without writing when a series is empty or has
/// non-positive values.
void write_loglog_svg(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                      const std::string& ylabel, const std::string& path);

/// Renders the charts available from the given study CSVs into `out_dir`:
/// error_vs_steps.svg from errors.csv, time_vs_steps.svg and
/// error_vs_time.svg when timing.csv is given, error_vs_balance.svg from a
/// balance sweep. Empty paths are skipped. Returns the written files.
std::vector<std::string> emit_plots(const std::string& errors_csv, const std::string& timing_csv,
                                    const std::string& balance_csv, const std::string& out_dir);

}  // namespace bsderk
