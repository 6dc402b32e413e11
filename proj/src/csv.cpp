#include "cace/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>

#include "cace/errors.hpp"

namespace cace {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

uint8_t parse_bit(std::string_view field, const char* what, long line_no) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw data_format_error(std::string(what) + " must be 0 or 1, got '" + std::string(field) + "'",
                          line_no);
}

double parse_outcome(std::string_view field, long line_no) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v))
    throw data_format_error("y must be a finite number, got '" + std::string(field) + "'",
                            line_no);
  return v;
}

}  // namespace

std::vector<ObservedRecord> read_records_csv(std::istream& in) {
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) throw data_format_error("empty input", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "z,d,y,r")
    throw data_format_error("expected header 'z,d,y,r', got '" + line + "'", line_no);

  std::vector<ObservedRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const auto fields = split_fields(line);
    if (fields.size() != 4)
      throw data_format_error("expected 4 fields, got " + std::to_string(fields.size()), line_no);

    const uint8_t z = parse_bit(fields[0], "z", line_no);
    const uint8_t d = parse_bit(fields[1], "d", line_no);
    const uint8_t r = parse_bit(fields[3], "r", line_no);
    if (r == 0) {
      if (!fields[2].empty() && fields[2] != "NA")
        throw data_format_error("y must be empty or NA when r = 0, got '" +
                                    std::string(fields[2]) + "'",
                                line_no);
      records.push_back(ObservedRecord::missing(z, d));
    } else {
      records.push_back(ObservedRecord::observed(z, d, parse_outcome(fields[2], line_no)));
    }
  }
  if (records.empty()) throw data_format_error("no data rows after the header", line_no);
  return records;
}

std::vector<ObservedRecord> read_records_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open input file: " + path);
  return read_records_csv(in);
}

void write_records_csv(std::ostream& out, std::span<const ObservedRecord> records) {
  out << "z,d,y,r\n";
  for (const auto& rec : records) {
    out << int(rec.z) << ',' << int(rec.d) << ',';
    if (rec.r) out << format_double(rec.y);
    out << ',' << int(rec.r) << '\n';
  }
}

void write_records_csv_file(const std::string& path, std::span<const ObservedRecord> records) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open output file: " + path);
  write_records_csv(out, records);
  if (!out) throw config_error("write failed: " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char trial[40];
    std::snprintf(trial, sizeof(trial), "%.*g", prec, v);
    double back = 0;
    std::sscanf(trial, "%lf", &back);
    if (back == v) return trial;
  }
  return buf;
}

}  // namespace cace
