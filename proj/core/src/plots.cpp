#include "bsderk/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bsderk/csv.hpp"
#include "bsderk/errors.hpp"

namespace bsderk {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 160, kTop = 40, kBottom = 55;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0, hi = 0;
};

Range log_range(const std::vector<Series>& series, bool use_x) {
  Range r{1e300, -1e300};
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      r.lo = std::min(r.lo, std::log2(v));
      r.hi = std::max(r.hi, std::log2(v));
    }
  }
  r.lo = std::floor(r.lo);
  r.hi = std::ceil(r.hi);
  if (r.hi - r.lo < 1) r.hi = r.lo + 1;
  return r;
}

// Group rows of `table` by the string column `key`, keeping first-seen order.
template <class F>
std::vector<Series> group(const CsvTable& t, const std::string& key, F&& point) {
  std::vector<Series> out;
  std::map<std::string, std::size_t> index;
  const auto kc = t.column(key);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& name = t.rows[r][kc];
    auto it = index.find(name);
    if (it == index.end()) {
      it = index.emplace(name, out.size()).first;
      out.push_back({name, {}, {}});
    }
    const auto [x, y] = point(r);
    out[it->second].x.push_back(x);
    out[it->second].y.push_back(y);
  }
  return out;
}

}  // namespace

void write_loglog_svg(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                      const std::string& ylabel, const std::string& path) {
  if (series.empty()) throw InvalidParameter("no data series to plot");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw InvalidParameter("empty or ragged data series '" + s.name + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0) || !(s.y[i] > 0) || !std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw InvalidParameter("series '" + s.name + "' has values unusable on a log axis");
      }
    }
  }
  const Range rx = log_range(series, true), ry = log_range(series, false);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (std::log2(v) - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double v) { return kTop + (ry.hi - std::log2(v)) / (ry.hi - ry.lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(rx.lo); e <= static_cast<int>(rx.hi); ++e) {
    const double x = kLeft + (e - rx.lo) / (rx.hi - rx.lo) * pw;
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << kTop + ph
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << x << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << e << "</text>\n";
  }
  for (int e = static_cast<int>(ry.lo); e <= static_cast<int>(ry.hi); ++e) {
    const double y = kTop + (ry.hi - e) / (ry.hi - ry.lo) * ph;
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kLeft + pw << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << e
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">log2 "
      << escape(xlabel) << "</text>\n"
      << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">log2 "
      << escape(ylabel) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % (sizeof(kColors) / sizeof(kColors[0]))];
    std::vector<std::size_t> order(s.x.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto k : order) svg << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
    svg << "\"/>\n";
    for (auto k : order) {
      svg << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(i);
    svg << "<line x1=\"" << kWidth - kRight + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 32
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n<text x=\""
        << kWidth - kRight + 38 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw InvalidParameter("cannot write " + path);
  out << svg.str();
}

std::vector<std::string> emit_plots(const std::string& errors_csv, const std::string& timing_csv,
                                    const std::string& balance_csv, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  auto target = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  std::map<std::pair<std::string, double>, double> eps;
  if (!errors_csv.empty()) {
    const auto t = read_csv(errors_csv);
    const auto cn = t.column("N"), ce = t.column("epsilon"), cs = t.column("scheme");
    for (std::size_t r = 0; r < t.rows.size(); ++r) eps[{t.rows[r][cs], t.number(r, cn)}] = t.number(r, ce);
    const auto series = group(t, "scheme", [&](std::size_t r) { return std::pair{t.number(r, cn), t.number(r, ce)}; });
    write_loglog_svg(series, "Error against time steps", "N", "error", target("error_vs_steps.svg"));
    written.push_back(target("error_vs_steps.svg"));
  }
  if (!timing_csv.empty()) {
    const auto t = read_csv(timing_csv);
    const auto cn = t.column("N"), ct = t.column("seconds"), cs = t.column("scheme");
    std::map<std::pair<std::string, double>, std::pair<double, int>> acc;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto& a = acc[{t.rows[r][cs], t.number(r, cn)}];
      a.first += t.number(r, ct);
      a.second += 1;
      if (std::find(order.begin(), order.end(), t.rows[r][cs]) == order.end()) order.push_back(t.rows[r][cs]);
    }
    std::vector<Series> time_series, err_series;
    for (const auto& name : order) {
      Series ts{name, {}, {}}, es{name, {}, {}};
      for (const auto& [key, v] : acc) {
        if (key.first != name) continue;
        const double mean = v.first / v.second;
        ts.x.push_back(key.second);
        ts.y.push_back(mean);
        if (auto it = eps.find(key); it != eps.end()) {
          es.x.push_back(mean);
          es.y.push_back(it->second);
        }
      }
      time_series.push_back(std::move(ts));
      if (!es.x.empty()) err_series.push_back(std::move(es));
    }
    write_loglog_svg(time_series, "Time cost against time steps", "N", "seconds", target("time_vs_steps.svg"));
    written.push_back(target("time_vs_steps.svg"));
    if (!err_series.empty()) {
      write_loglog_svg(err_series, "Error against time cost", "seconds", "error", target("error_vs_time.svg"));
      written.push_back(target("error_vs_time.svg"));
    }
  }
  if (!balance_csv.empty()) {
    const auto t = read_csv(balance_csv);
    const auto cb = t.column("balance"), ce = t.column("epsilon");
    const auto series = group(t, "N", [&](std::size_t r) { return std::pair{t.number(r, cb), t.number(r, ce)}; });
    std::vector<Series> named;
    for (auto s : series) {
      s.name = "N=" + s.name;
      named.push_back(std::move(s));
    }
    write_loglog_svg(named, "Error against balance number", "balance", "error", target("error_vs_balance.svg"));
    written.push_back(target("error_vs_balance.svg"));
  }
  if (written.empty()) throw InvalidParameter("no input CSV given");
  return written;
}

}  // namespace bsderk
