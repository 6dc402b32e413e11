#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cace/records.hpp"

namespace cace {

// Reader for the analysis input layout: header line "z,d,y,r", then one
// record per line. z, d, r must be 0 or 1; y is a finite number when r = 1
// and empty or NA when r = 0. Violations raise data_format_error with the
// 1-based line number.
std::vector<ObservedRecord> read_records_csv(std::istream& in);
std::vector<ObservedRecord> read_records_csv_file(const std::string& path);

void write_records_csv(std::ostream& out, std::span<const ObservedRecord> records);
void write_records_csv_file(const std::string& path, std::span<const ObservedRecord> records);

// Shortest round-trip formatting used for every numeric CSV field.
std::string format_double(double v);

}  // namespace cace
