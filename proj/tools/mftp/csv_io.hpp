#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mftp/fgrid.hpp"

namespace mftp::cli {

/// Subject-per-row CSV: `id,Y,X_1..X_p,A@t_1..A@t_T`.
///
/// Grid times in the header are normalized time (A@0.25) unless a
/// `# time_units=clock` line precedes the header, in which case they are
/// clock times (A@06:30) and the grid domain is one day, [0, 1440] minutes.
/// Other `#` lines are comments. Empty or unparseable cells are read as NaN
/// and reported by validation together with their row.
Dataset parse_dataset_csv(std::istream& in, const std::string& source,
                          std::optional<OutcomeKind> outcome_kind = std::nullopt);
Dataset read_dataset_csv(const std::string& path, std::optional<OutcomeKind> outcome_kind = std::nullopt);

/// Writes the same layout; clock headers when the grid domain is [0, 1440].
void write_dataset_csv(const Dataset& data, std::ostream& out);

/// Shortest text that reads back to the same double.
std::string format_double(double x);

/// "HH:MM" for minutes after midnight.
std::string format_clock(double minutes);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace mftp::cli
