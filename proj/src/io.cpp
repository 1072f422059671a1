#include "trapsim/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "trapsim/error.hpp"

namespace trapsim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int column_of(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ": " + msg);
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

long long parse_int(const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw std::invalid_argument("not an integer: '" + text + "'");
  return v;
}

void write_trace_csv(const TraceRecord& trace, std::ostream& os, double t0_ms) {
  os << "t_ms,counts,phase\n";
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    const Phase ph = i < trace.phases.size() ? trace.phases[i] : Phase::probe;
    os << format_double(t0_ms + trace.bin_width_ms * static_cast<double>(i)) << ',' << trace.counts[i] << ','
       << to_string(ph) << '\n';
  }
}

TraceRecord read_trace_csv(std::istream& is, double fallback_bin_ms) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("trace file is empty");
  const int t_col = column_of(header, "t_ms");
  const int c_col = column_of(header, "counts");
  const int p_col = column_of(header, "phase");
  if (t_col < 0 || c_col < 0) fail_line(line_no, "header must name t_ms and counts columns");

  TraceRecord trace;
  std::vector<double> times;
  bool any_phase = p_col >= 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail_line(line_no, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    try {
      times.push_back(parse_double(fields[static_cast<std::size_t>(t_col)]));
      const long long c = parse_int(fields[static_cast<std::size_t>(c_col)]);
      if (c < 0) fail_line(line_no, "negative count");
      trace.counts.push_back(c);
      trace.phases.push_back(any_phase ? phase_from_string(fields[static_cast<std::size_t>(p_col)]) : Phase::probe);
    } catch (const std::invalid_argument& e) {
      fail_line(line_no, e.what());
    }
  }
  if (trace.counts.empty()) throw DataError("trace file has no data rows");

  trace.bin_width_ms = fallback_bin_ms;
  if (times.size() >= 2) {
    const double bw = times[1] - times[0];
    if (!(bw > 0.0)) throw DataError("time stamps must increase");
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double step = times[i] - times[i - 1];
      if (std::abs(step - bw) > 1e-6 * bw) throw DataError("time stamps must be evenly spaced (row " + std::to_string(i + 1) + ")");
    }
    trace.bin_width_ms = bw;
  }
  return trace;
}

std::vector<LoadingCurvePoint> read_loading_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("loading-curve file is empty");
  const int p_col = column_of(header, "power_mW");
  const int y_col = column_of(header, "probability");
  const int s_col = column_of(header, "stderr");
  if (p_col < 0 || y_col < 0) fail_line(line_no, "header must name power_mW and probability columns");

  std::vector<LoadingCurvePoint> points;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail_line(line_no, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    try {
      LoadingCurvePoint pt;
      pt.power_mw = parse_double(fields[static_cast<std::size_t>(p_col)]);
      pt.probability = parse_double(fields[static_cast<std::size_t>(y_col)]);
      if (s_col >= 0 && !fields[static_cast<std::size_t>(s_col)].empty())
        pt.stderr_prob = parse_double(fields[static_cast<std::size_t>(s_col)]);
      points.push_back(pt);
    } catch (const std::invalid_argument& e) {
      fail_line(line_no, e.what());
    }
  }
  return points;
}

}  // namespace trapsim
