#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trapsim/atom_dynamics.hpp"
#include "trapsim/loading_model.hpp"

namespace trapsim {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// t_ms,counts,phase. `t0_ms` is the time stamp of the first bin.
void write_trace_csv(const TraceRecord& trace, std::ostream& os, double t0_ms = 0.0);

/// Reads t_ms,counts[,phase]. A missing phase column means every bin is a
/// probe bin. The bin width is taken from the time stamps (or
/// `fallback_bin_ms` for a single row). Throws DataError naming the line of
/// the first malformed row.
TraceRecord read_trace_csv(std::istream& is, double fallback_bin_ms = 50.0);

/// power_mW,probability[,stderr]; an empty stderr field means unweighted.
std::vector<LoadingCurvePoint> read_loading_csv(std::istream& is);

/// Split a CSV line on commas, trimming surrounding whitespace.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict numeric parse of the whole string. Throws std::invalid_argument.
double parse_double(const std::string& text);
long long parse_int(const std::string& text);

}  // namespace trapsim
