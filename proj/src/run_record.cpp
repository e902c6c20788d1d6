#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "axlab/experiment.hpp"

namespace axlab {

namespace {

using Field = std::optional<double> RunRecord::*;

struct Column {
  const char* name;
  Field field;  // nullptr for the step column
};

constexpr Column kColumns[] = {
    {"step", nullptr},
    {"iteration", nullptr},
    {"train_loss", &RunRecord::train_loss},
    {"val_loss", &RunRecord::val_loss},
    {"val_accuracy", &RunRecord::val_accuracy},
    {"max_residual", &RunRecord::max_residual},
    {"oracle_distance", &RunRecord::oracle_distance},
    {"wall_ms", &RunRecord::wall_ms},
};

const Column& column(const std::string& name) {
  for (const auto& c : kColumns)
    if (name == c.name) return c;
  throw FormatError("csv: unknown column '" + name + "'");
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::vector<std::string> csv_columns(Mode mode, bool timing) {
  std::vector<std::string> cols;
  switch (mode) {
    case Mode::train_lm: cols = {"step", "train_loss", "val_loss"}; break;
    case Mode::train_cls: cols = {"step", "train_loss", "val_accuracy"}; break;
    case Mode::pdmm: cols = {"iteration", "max_residual", "oracle_distance"}; break;
  }
  if (timing) cols.emplace_back("wall_ms");
  return cols;
}

std::optional<double> csv_value(const RunRecord& record, const std::string& name) {
  const Column& c = column(name);
  if (c.field == nullptr) return std::nullopt;
  return record.*(c.field);
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> columns) : out_(out), columns_(std::move(columns)) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    column(columns_[i]);
    out_ << (i ? "," : "") << columns_[i];
  }
  out_ << '\n';
}

void CsvWriter::write(const RunRecord& record) {
  if (last_step_ && record.step <= *last_step_) {
    throw PreconditionError("csv: step " + std::to_string(record.step) + " does not follow " +
                            std::to_string(*last_step_));
  }
  last_step_ = record.step;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) out_ << ',';
    const Column& c = column(columns_[i]);
    if (c.field == nullptr) {
      out_ << record.step;
    } else if (const auto& v = record.*(c.field)) {
      out_ << format_real(*v);
    }
  }
  out_ << '\n';
  out_.flush();
  if (!out_) throw IoError("csv: write failed");
}

std::vector<RunRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: missing header");
  std::vector<const Column*> header;
  for (const auto& name : split_line(line)) header.push_back(&column(name));

  std::vector<RunRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    RunRecord r;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string& cell = cells[i];
      if (header[i]->field == nullptr) {
        char* end = nullptr;
        r.step = std::strtoll(cell.c_str(), &end, 10);
        if (cell.empty() || *end != '\0') throw FormatError("csv: bad step on line " + std::to_string(line_no));
      } else if (!cell.empty()) {
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (*end != '\0') throw FormatError("csv: bad number '" + cell + "' on line " + std::to_string(line_no));
        r.*(header[i]->field) = v;
      }
    }
    if (!rows.empty() && r.step <= rows.back().step) {
      throw FormatError("csv: steps not strictly increasing at line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace axlab
