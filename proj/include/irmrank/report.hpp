#pragma once

// CSV, plain-text tables and SVG charts for training and evaluation runs.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/evaluate.hpp"
#include "irmrank/train.hpp"
#include "irmrank/variant.hpp"

namespace irm {

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return x;
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Epoch logs

inline constexpr const char* kEpochHeader = "epoch,objective,wall_seconds,tuples,sampled_loss";

inline std::string epochs_csv(const std::vector<EpochLog>& logs) {
  std::ostringstream out;
  out << kEpochHeader << '\n';
  for (const auto& l : logs)
    out << l.epoch << ',' << fmt_double(l.objective) << ',' << fmt_double(l.wall_seconds) << ',' << l.tuples << ','
        << fmt_double(l.sampled_loss) << '\n';
  return out.str();
}

inline void write_epochs_csv(const std::filesystem::path& path, const std::vector<EpochLog>& logs) {
  detail::open_out(path) << epochs_csv(logs);
}

inline std::vector<EpochLog> read_epochs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kEpochHeader) throw FormatError(path.string() + ": unexpected header");
  std::vector<EpochLog> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 5) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      out.push_back({std::stoul(c[0]), parse_double(c[1]), parse_double(c[2]), std::stoul(c[3]), parse_double(c[4])});
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad integer");
    }
  }
  return out;
}

/// Trailing window mean: s_e = mean(o_{e-w+1..e}), shorter at the start.
inline std::vector<double> smooth(const std::vector<double>& xs, std::size_t window = 3) {
  if (window == 0) throw ParameterError("smooth: window must be positive");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += xs[k];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation reports

inline std::string eval_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& [k, v] : r.precision) out << "precision_at_" << k << ',' << fmt_double(v) << '\n';
  out << "auc," << fmt_double(r.auc) << '\n';
  out << "users," << r.users.size() << '\n';
  std::ostringstream hash;
  hash << std::hex << r.split_hash;
  out << "split_hash," << hash.str() << '\n';
  return out.str();
}

inline std::string eval_users_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "user,positives,candidates,precision_at_1,precision_at_3,auc\n";
  for (const auto& u : r.users)
    out << u.user << ',' << u.positives << ',' << u.candidates << ',' << fmt_double(u.precision_at_1) << ','
        << fmt_double(u.precision_at_3) << ',' << fmt_double(u.auc) << '\n';
  return out.str();
}

inline std::string eval_table(const EvalReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "metric" << "value\n";
  out << std::fixed << std::setprecision(5);
  for (const auto& [k, v] : r.precision) out << std::setw(16) << ("Precision@" + std::to_string(k)) << v << '\n';
  out << std::setw(16) << "AUC" << r.auc << '\n';
  out << std::setw(16) << "users" << r.users.size() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Ablation tables

inline constexpr const char* kAblationHeader = "variant,precision_at_1,precision_at_3,auc,runs,succeeded";

inline std::string ablation_csv(const AblationTable& t) {
  std::ostringstream out;
  out << kAblationHeader << '\n';
  for (const auto& row : t.rows)
    out << variant_name(row.variant) << ',' << fmt_double(row.precision_at_1) << ',' << fmt_double(row.precision_at_3)
        << ',' << fmt_double(row.auc) << ',' << row.runs.size() << ',' << row.succeeded << '\n';
  return out.str();
}

inline std::string ablation_runs_csv(const AblationTable& t) {
  std::ostringstream out;
  out << "variant,seed,split_hash,precision_at_1,precision_at_3,auc,error\n";
  for (const auto& row : t.rows)
    for (const auto& run : row.runs) {
      out << variant_name(row.variant) << ',' << run.seed << ',';
      if (run.report) {
        std::ostringstream hash;
        hash << std::hex << run.report->split_hash;
        out << hash.str() << ',' << fmt_double(run.report->precision_at_1) << ','
            << fmt_double(run.report->precision_at_3) << ',' << fmt_double(run.report->auc) << ",\n";
      } else {
        std::string err = run.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ",,,," << err << '\n';
      }
    }
  return out.str();
}

inline std::string ablation_table(const AblationTable& t) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "variant" << std::setw(14) << "Precision@1" << std::setw(14) << "Precision@3"
      << "AUC\n"
      << std::fixed << std::setprecision(5);
  for (const auto& row : t.rows) {
    out << std::setw(14) << variant_name(row.variant);
    if (row.succeeded == 0) {
      out << "failed\n";
      continue;
    }
    out << std::setw(14) << row.precision_at_1 << std::setw(14) << row.precision_at_3 << row.auc << '\n';
  }
  return out.str();
}

struct AblationSummaryRow {
  std::string variant;
  double precision_at_1 = 0.0, precision_at_3 = 0.0, auc = 0.0;
  std::size_t runs = 0, succeeded = 0;
};

inline std::vector<AblationSummaryRow> read_ablation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kAblationHeader) throw FormatError(path.string() + ": unexpected header");
  std::vector<AblationSummaryRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 6) throw FormatError(path.string() + ": expected 6 columns");
    try {
      out.push_back({c[0], parse_double(c[1]), parse_double(c[2]), parse_double(c[3]), std::stoul(c[4]),
                     std::stoul(c[5])});
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad integer");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {
inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}
}  // namespace detail

/// Objective against epoch as a polyline, one vertex per epoch.
inline std::string objective_chart_svg(const std::vector<EpochLog>& logs) {
  if (logs.empty()) throw InputError("objective chart: no epochs");
  const double W = 640, H = 400, L = 70, R = 20, T = 30, B = 50;
  double lo = logs[0].objective, hi = logs[0].objective;
  for (const auto& l : logs) lo = std::min(lo, l.objective), hi = std::max(hi, l.objective);
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const std::size_t n = logs.size();
  auto x = [&](std::size_t i) { return L + (n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1)) * (W - L - R); };
  auto y = [&](double v) { return T + (hi - v) / (hi - lo) * (H - T - B); };
  std::ostringstream s;
  s << std::setprecision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" data-epochs=\"" << n
    << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">training objective</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << hi << "</text>\n";
  s << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">" << lo << "</text>\n";
  s << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" font-size=\"11\">" << logs.front().epoch << "</text>\n";
  s << "<text x=\"" << W - R << "\" y=\"" << H - B + 18 << "\" text-anchor=\"end\" font-size=\"11\">"
    << logs.back().epoch << "</text>\n";
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < n; ++i) s << (i ? " " : "") << x(i) << ',' << y(logs[i].objective);
  s << "\"/>\n</svg>\n";
  return s.str();
}

/// Bars of median AUC per variant, tallest first.
inline std::string ablation_chart_svg(std::vector<AblationSummaryRow> rows) {
  if (rows.empty()) throw InputError("ablation chart: no rows");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.auc > b.auc; });
  const double W = 120.0 * static_cast<double>(rows.size()) + 80, H = 360, L = 50, T = 30, B = 60;
  std::ostringstream s;
  s << std::setprecision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" data-bars=\""
    << rows.size() << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">median AUC by variant</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - 20 << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double h = std::clamp(rows[i].auc, 0.0, 1.0) * (H - T - B);
    const double x = L + 20 + 120.0 * static_cast<double>(i);
    s << "<rect class=\"bar\" data-variant=\"" << detail::svg_escape(rows[i].variant) << "\" data-auc=\""
      << fmt_double(rows[i].auc) << "\" x=\"" << x << "\" y=\"" << H - B - h << "\" width=\"80\" height=\"" << h
      << "\" fill=\"steelblue\"/>\n";
    s << "<text x=\"" << x + 40 << "\" y=\"" << H - B - h - 4 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << std::fixed << std::setprecision(4) << rows[i].auc << std::defaultfloat << std::setprecision(6) << "</text>\n";
    s << "<text x=\"" << x + 40 << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << detail::svg_escape(rows[i].variant) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace irm
