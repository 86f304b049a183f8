#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "vadcal/harness.hpp"

namespace vadcal::harness {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

bool is_percent_metric(const std::string& metric) {
  return metric == "calibration_error" || metric == "log_loss_reduction";
}

std::string render(const ReportRow& row) {
  if (row.reps == 0) return "n/a";
  if (is_percent_metric(row.metric)) return format_percent(row.mean, row.std_err);
  const std::string m = fmt("%.4f", row.mean);
  return std::isnan(row.std_err) ? m : m + "±" + fmt("%.4f", row.std_err);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError("report line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

std::string format_percent(double mean, double se) {
  const std::string m = fmt("%.2f%%", 100.0 * mean);
  return std::isnan(se) ? m : m + "±" + fmt("%.2f%%", 100.0 * se);
}

ReportFormat report_format_from_name(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw ConfigError("unknown report format '" + std::string(name) + "' (expected csv|markdown)");
}

void emit_csv(const ReportTable& table, std::ostream& out) {
  out << "method,mode,alpha,metric,mean,std_err,reps\n";
  for (const auto& r : table.rows) {
    out << r.method << ',' << r.mode << ',' << data::format_double(r.alpha) << ',' << r.metric << ','
        << data::format_double(r.mean) << ',' << data::format_double(r.std_err) << ',' << r.reps << '\n';
  }
}

void emit_markdown(const ReportTable& table, std::ostream& out) {
  std::vector<std::string> metrics_seen, labels_seen;
  std::vector<double> alphas_seen;
  auto add = [](auto& list, const auto& v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  auto label = [](const ReportRow& r) { return r.mode == "original" ? r.method : r.method + "+" + r.mode; };
  for (const auto& r : table.rows) {
    add(metrics_seen, r.metric);
    add(labels_seen, label(r));
    add(alphas_seen, r.alpha);
  }
  bool first = true;
  for (const auto& metric : metrics_seen) {
    if (!first) out << '\n';
    first = false;
    out << "### " << metric << "\n\n| method |";
    for (double a : alphas_seen) out << " α=" << fmt("%g", 100.0 * a) << "% |";
    out << "\n|---|";
    for (std::size_t i = 0; i < alphas_seen.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& l : labels_seen) {
      out << "| " << l << " |";
      for (double a : alphas_seen) {
        const ReportRow* row = nullptr;
        for (const auto& r : table.rows) {
          if (r.metric == metric && label(r) == l && r.alpha == a) row = &r;
        }
        out << ' ' << (row ? render(*row) : std::string("n/a")) << " |";
      }
      out << '\n';
    }
  }
}

void emit(const ReportTable& table, ReportFormat format, const std::filesystem::path& path) {
  if (table.rows.empty()) throw InputError("refusing to emit an empty report");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report to " + path.string());
  if (format == ReportFormat::Csv) {
    emit_csv(table, out);
  } else {
    emit_markdown(table, out);
  }
  out.flush();
  if (!out) throw DataError("failed writing report to " + path.string());
}

ReportTable parse_csv_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "method,mode,alpha,metric,mean,std_err,reps") {
    throw DataError("report header must be method,mode,alpha,metric,mean,std_err,reps");
  }
  ReportTable table;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 7) throw DataError("report line " + std::to_string(n) + " needs 7 columns");
    ReportRow r;
    r.method = cells[0];
    r.mode = cells[1];
    r.alpha = parse_number(cells[2], n);
    r.metric = cells[3];
    r.mean = parse_number(cells[4], n);
    r.std_err = parse_number(cells[5], n);
    r.reps = static_cast<std::size_t>(parse_number(cells[6], n));
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace vadcal::harness
