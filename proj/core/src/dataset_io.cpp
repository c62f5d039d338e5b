#include "deconfound/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "deconfound/errors.hpp"

namespace deconfound {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("to_chars failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view token, std::size_t row, std::size_t column) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r')) {
    token.remove_suffix(1);
  }
  if (token == "nan") return std::nan("");
  if (token == "inf") return HUGE_VAL;
  if (token == "-inf") return -HUGE_VAL;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("expected a number, got '" + std::string(token) + "'", row, column);
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

namespace {

std::uint8_t parse_binary(std::string_view token, std::size_t row, std::size_t column) {
  double v = parse_double(token, row, column);
  if (v != 0.0 && v != 1.0) throw ParseError("expected 0 or 1", row, column);
  return static_cast<std::uint8_t>(v);
}

bool next_data_line(std::istream& in, std::string& line, std::size_t& row) {
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    return true;
  }
  return false;
}

std::unordered_map<std::string, std::size_t> header_index(const std::string& header) {
  std::unordered_map<std::string, std::size_t> index;
  auto names = split_csv_line(header);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string name(names[i]);
    while (!name.empty() && name.back() == ' ') name.pop_back();
    while (!name.empty() && name.front() == ' ') name.erase(name.begin());
    if (!index.emplace(name, i).second) throw ParseError("duplicate column '" + name + "'", 1);
  }
  return index;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& index,
                           const std::string& name, std::size_t header_row) {
  auto it = index.find(name);
  if (it == index.end()) throw ParseError("missing column '" + name + "'", header_row);
  return it->second;
}

}  // namespace

void write_observational_csv(std::ostream& out, const ObservationalDataset& data, bool include_u) {
  include_u = include_u && data.has_oracle_u();
  const std::size_t k_count = data.k_trials();
  out << "x";
  if (include_u) out << ",u";
  for (std::size_t k = 1; k <= k_count; ++k) out << ",t" << k;
  for (std::size_t k = 1; k <= k_count; ++k) out << ",y" << k;
  out << '\n';
  const auto x = data.x();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(x[i]);
    if (include_u) out << ',' << static_cast<int>(data.oracle_u()[i]);
    for (std::size_t k = 1; k <= k_count; ++k) out << ',' << static_cast<int>(data.t(k)[i]);
    for (std::size_t k = 1; k <= k_count; ++k) out << ',' << format_double(data.y(k)[i]);
    out << '\n';
  }
}

ObservationalDataset read_observational_csv(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  if (!next_data_line(in, line, row)) throw ParseError("empty observational CSV");
  const std::size_t header_row = row;
  const auto index = header_index(line);

  std::size_t k_count = 0;
  while (index.count("t" + std::to_string(k_count + 1))) ++k_count;
  if (k_count == 0) throw ParseError("observational CSV needs columns t1..tK", header_row);

  const std::size_t x_col = require_column(index, "x", header_row);
  std::vector<std::size_t> t_cols, y_cols;
  for (std::size_t k = 1; k <= k_count; ++k) {
    t_cols.push_back(require_column(index, "t" + std::to_string(k), header_row));
    y_cols.push_back(require_column(index, "y" + std::to_string(k), header_row));
  }
  const auto u_it = index.find("u");
  const bool has_u = u_it != index.end();

  std::vector<double> x;
  std::vector<std::vector<std::uint8_t>> t(k_count);
  std::vector<std::vector<double>> y(k_count);
  std::vector<std::uint8_t> u;
  while (next_data_line(in, line, row)) {
    auto fields = split_csv_line(line);
    if (fields.size() != index.size()) {
      throw ParseError("expected " + std::to_string(index.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       row);
    }
    x.push_back(parse_double(fields[x_col], row, x_col + 1));
    for (std::size_t k = 0; k < k_count; ++k) {
      t[k].push_back(parse_binary(fields[t_cols[k]], row, t_cols[k] + 1));
      y[k].push_back(parse_double(fields[y_cols[k]], row, y_cols[k] + 1));
    }
    if (has_u) u.push_back(parse_binary(fields[u_it->second], row, u_it->second + 1));
  }
  std::optional<std::vector<std::uint8_t>> oracle_u;
  if (has_u) oracle_u = std::move(u);
  return ObservationalDataset(std::move(x), std::move(t), std::move(y), std::move(oracle_u));
}

void write_rct_csv(std::ostream& out, const RctDataset& data) {
  out << "x,t,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.x[i]) << ',' << static_cast<int>(data.t[i]) << ','
        << format_double(data.y[i]) << '\n';
  }
}

RctDataset read_rct_csv(std::istream& in, std::size_t trial_id) {
  std::string line;
  std::size_t row = 0;
  if (!next_data_line(in, line, row)) throw ParseError("empty trial CSV");
  const std::size_t header_row = row;
  const auto index = header_index(line);
  if (index.count("u")) throw ParseError("trial CSV must not carry a confounder column", header_row);
  const std::size_t x_col = require_column(index, "x", header_row);
  const std::size_t t_col = require_column(index, "t", header_row);
  const std::size_t y_col = require_column(index, "y", header_row);

  RctDataset data;
  data.trial_id = trial_id;
  while (next_data_line(in, line, row)) {
    auto fields = split_csv_line(line);
    if (fields.size() != index.size()) {
      throw ParseError("expected " + std::to_string(index.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       row);
    }
    data.x.push_back(parse_double(fields[x_col], row, x_col + 1));
    data.t.push_back(parse_binary(fields[t_col], row, t_col + 1));
    data.y.push_back(parse_double(fields[y_col], row, y_col + 1));
  }
  return data;
}

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_observational_csv(const std::string& path, const ObservationalDataset& data,
                             bool include_u) {
  auto out = open_out(path);
  write_observational_csv(out, data, include_u);
  if (!out) throw IoError("write failed for '" + path + "'");
}

ObservationalDataset read_observational_csv(const std::string& path) {
  auto in = open_in(path);
  return read_observational_csv(in);
}

void write_rct_csv(const std::string& path, const RctDataset& data) {
  auto out = open_out(path);
  write_rct_csv(out, data);
  if (!out) throw IoError("write failed for '" + path + "'");
}

RctDataset read_rct_csv(const std::string& path, std::size_t trial_id) {
  auto in = open_in(path);
  return read_rct_csv(in, trial_id);
}

}  // namespace deconfound
