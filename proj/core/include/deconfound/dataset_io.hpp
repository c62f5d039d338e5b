#pragma once

// CSV schemas for datasets.
//   observational: x,u,t1..tK,y1..yK   (u optional on read)
//   trial:         x,t,y
// Headers are required; '.' is the decimal separator.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "deconfound/core_model.hpp"

namespace deconfound {

/// Shortest round-trip representation of a double ("nan", "inf" for
/// non-finite values).
std::string format_double(double value);

/// Parses a double; throws ParseError carrying row/column on failure.
double parse_double(std::string_view token, std::size_t row, std::size_t column);

/// Splits one CSV line on commas (no quoting; the schemas never need it).
std::vector<std::string_view> split_csv_line(std::string_view line);

void write_observational_csv(std::ostream& out, const ObservationalDataset& data,
                             bool include_u = true);
ObservationalDataset read_observational_csv(std::istream& in);

void write_rct_csv(std::ostream& out, const RctDataset& data);
RctDataset read_rct_csv(std::istream& in, std::size_t trial_id);

void write_observational_csv(const std::string& path, const ObservationalDataset& data,
                             bool include_u = true);
ObservationalDataset read_observational_csv(const std::string& path);
void write_rct_csv(const std::string& path, const RctDataset& data);
RctDataset read_rct_csv(const std::string& path, std::size_t trial_id);

}  // namespace deconfound
