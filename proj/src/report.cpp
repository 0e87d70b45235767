// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/report.hpp"

#include <cstdio>

#include "eciwb/error.hpp"

namespace eciwb {

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::vector<TableRow> report_rows(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw DataError("report: at least one evaluation report is required");
  std::vector<TableRow> rows;
  for (const auto& r : reports) {
    if (r.columns != reports.front().columns)
      throw DataError("report: evaluation reports have conflicting column sets");
    if (r.columns != kReportColumns) throw DataError("report: unsupported column set");
    for (const auto& m : r.modes) {
      const bool text = m.mode == EvalMode::kFreetext;
      TableRow row;
      row.push_back(r.config.method + (text ? " (free text)" : " (ECI)"));
      row.push_back(r.config.size);
      row.push_back(r.config.quantization ? "yes" : "no");
      row.push_back(r.config.fine_tuned ? "yes" : "no");
      row.push_back(text && r.metrics ? number(r.metrics->bleu4) : kMissingCell);
      row.push_back(text && r.metrics ? number(r.metrics->rouge1) : kMissingCell);
      row.push_back(number(m.accuracy));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string render_markdown(const std::vector<EvalReport>& reports) {
  const auto rows = report_rows(reports);
  const auto& cols = reports.front().columns;
  std::string out = "|";
  for (const auto& c : cols) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
  out += "\n";
  for (const auto& row : rows) {
    out += "|";
    for (const auto& cell : row) out += " " + md_cell(cell) + " |";
    out += "\n";
  }
  return out;
}

std::string render_csv(const std::vector<EvalReport>& reports) {
  const auto rows = report_rows(reports);
  std::string out;
  const auto& cols = reports.front().columns;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_cell(cols[i]);
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_cell(row[i]);
    out += "\n";
  }
  return out;
}

}  // namespace eciwb
