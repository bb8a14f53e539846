#include "mftp/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "mftp/config.hpp"
#include "mftp/error.hpp"

namespace mftp::cli {

namespace {

constexpr double kMinutesPerDay = 1440.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void header_error(const std::string& source, std::size_t line, const std::string& message) {
  throw Error(ErrorCategory::validation, source + ":" + std::to_string(line) + ": " + message);
}

double parse_cell(const std::string& cell) {
  const std::string s = trim(cell);
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::numeric_limits<double>::quiet_NaN();
  return x;
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::string format_clock(double minutes) {
  const long total = std::lround(minutes);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%02ld:%02ld", total / 60, total % 60);
  return buf;
}

Dataset parse_dataset_csv(std::istream& in, const std::string& source, std::optional<OutcomeKind> outcome_kind) {
  bool clock = false;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  std::size_t header_line = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      std::string d = trim(t.substr(1));
      if (d.rfind("time_units=", 0) == 0) {
        const std::string units = trim(d.substr(11));
        if (units == "clock") {
          clock = true;
        } else if (units != "normalized") {
          header_error(source, lineno, "unknown time_units '" + units + "'");
        }
      }
      continue;
    }
    header = split_csv_line(t);
    header_line = lineno;
    break;
  }
  if (header.empty()) header_error(source, lineno, "no header line");
  if (header.size() < 3 || header[0] != "id" || header[1] != "Y") {
    header_error(source, header_line, "header must start with id,Y");
  }

  std::size_t p = 0;
  std::size_t col = 2;
  while (col < header.size() && header[col].rfind("X_", 0) == 0) {
    if (header[col] != "X_" + std::to_string(p + 1)) {
      header_error(source, header_line, "expected column X_" + std::to_string(p + 1) + ", found " + header[col]);
    }
    ++p;
    ++col;
  }
  std::vector<double> times;
  for (; col < header.size(); ++col) {
    const std::string& h = header[col];
    if (h.rfind("A@", 0) != 0) header_error(source, header_line, "expected an A@<time> column, found " + h);
    const std::string t = h.substr(2);
    if (clock) {
      try {
        times.push_back(parse_clock(t) * 60.0);
      } catch (const Error&) {
        header_error(source, header_line, "bad clock time in column " + h);
      }
    } else {
      const double x = parse_cell(t);
      if (!std::isfinite(x)) header_error(source, header_line, "bad time in column " + h);
      times.push_back(x);
    }
  }
  if (times.size() < 2) header_error(source, header_line, "need at least two A@<time> columns");

  auto make_grid = [&]() {
    try {
      if (clock) return TimeGrid(times, 0.0, kMinutesPerDay);
      const bool unit = times.front() >= 0.0 && times.back() <= 1.0;
      return unit ? TimeGrid(times, 0.0, 1.0) : TimeGrid(times);
    } catch (const Error& e) {
      header_error(source, header_line, e.what());
    }
  };
  const TimeGrid grid = make_grid();

  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = split_csv_line(t);
    RawRow r;
    r.line = lineno;
    r.id = cells[0];
    r.outcome = cells.size() > 1 ? parse_cell(cells[1]) : std::numeric_limits<double>::quiet_NaN();
    for (std::size_t c = 2; c < cells.size(); ++c) {
      if (c < 2 + p) {
        r.covariates.push_back(parse_cell(cells[c]));
      } else {
        r.values.push_back(parse_cell(cells[c]));
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error(ErrorCategory::insufficient_data, source + ": no data rows");
  try {
    return validate_dataset(grid, rows, outcome_kind);
  } catch (const ValidationError& e) {
    throw Error(ErrorCategory::validation, source + ": " + e.what());
  }
}

Dataset read_dataset_csv(const std::string& path, std::optional<OutcomeKind> outcome_kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open input file " + path);
  return parse_dataset_csv(in, path, outcome_kind);
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  const TimeGrid& grid = data.grid();
  const bool clock = grid.domain_lo() == 0.0 && grid.domain_hi() == kMinutesPerDay;
  if (clock) out << "# time_units=clock\n";
  out << "id,Y";
  for (std::size_t k = 0; k < data.p(); ++k) out << ",X_" << k + 1;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    out << ",A@" << (clock ? format_clock(grid.original()[j]) : format_double(grid.points()[j]));
  }
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << (data.ids().empty() ? std::to_string(i + 1) : data.ids()[i]) << ','
        << format_double(data.outcomes()(static_cast<Eigen::Index>(i)));
    for (std::size_t k = 0; k < data.p(); ++k) {
      out << ',' << format_double(data.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
    for (double v : data.curve(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace mftp::cli
