#pragma once

// CSV readers and writers for binary data, parameter matrices, chain samples
// and traces. Doubles are written in shortest round-trip form.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pmising/errors.hpp"
#include "pmising/ising.hpp"
#include "pmising/samplers.hpp"

namespace pmising {

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(where + ": '" + std::string(s) + "' is not a number");
  return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

/// Parses a comma-separated 0/1 matrix. The column count comes from the first
/// data row; errors name the 1-based data row and column.
inline BinaryDataset parse_binary_csv(std::istream& in, bool has_header) {
  std::string line;
  std::size_t line_no = 0;
  if (has_header) {
    std::getline(in, line);
    ++line_no;
  }
  std::vector<std::uint8_t> bits;
  std::size_t p = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    ++rows;
    if (rows == 1) p = fields.size();
    if (fields.size() != p)
      throw ParseError("row " + std::to_string(rows) + " (line " + std::to_string(line_no) + ") has " +
                       std::to_string(fields.size()) + " columns, expected " + std::to_string(p));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      std::string_view f = fields[c];
      while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
      while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
      if (f != "0" && f != "1")
        throw ParseError("row " + std::to_string(rows) + ", column " + std::to_string(c + 1) + " (line " +
                         std::to_string(line_no) + "): entry '" + std::string(f) + "' is not 0 or 1");
      bits.push_back(f == "1" ? 1 : 0);
    }
  }
  if (rows == 0) throw ParseError("binary matrix has no data rows");
  return BinaryDataset(rows, p, std::move(bits));
}

inline BinaryDataset load_binary_csv(const std::filesystem::path& path, bool has_header) {
  auto in = detail::open_in(path);
  try {
    return parse_binary_csv(in, has_header);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_binary_csv(std::ostream& out, const BinaryDataset& data) {
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.p(); ++j) {
      if (j) out << ',';
      out << static_cast<int>(data(i, j));
    }
    out << '\n';
  }
}

inline void save_binary_csv(const std::filesystem::path& path, const BinaryDataset& data) {
  auto out = detail::open_out(path);
  write_binary_csv(out, data);
}

/// Full p x p matrix, one row per line.
inline void save_theta_csv(const std::filesystem::path& path, const IsingParams& theta) {
  auto out = detail::open_out(path);
  for (std::size_t j = 0; j < theta.p(); ++j) {
    for (std::size_t k = 0; k < theta.p(); ++k) {
      if (k) out << ',';
      out << detail::format_double(theta(j, k));
    }
    out << '\n';
  }
}

inline IsingParams load_theta_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    detail::strip_cr(line);
    if (line.empty()) continue;
    std::vector<double> row;
    for (auto f : detail::split_commas(line))
      row.push_back(detail::parse_double(f, path.string() + " row " + std::to_string(rows.size() + 1)));
    rows.push_back(std::move(row));
  }
  const auto p = static_cast<Eigen::Index>(rows.size());
  Matrix m(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)].size()) != p)
      throw ParseError(path.string() + ": parameter matrix is not square");
    for (Eigen::Index k = 0; k < p; ++k) m(j, k) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
  }
  return IsingParams(m);
}

/// Header `iter,sign,theta_1_1,theta_1_2,...` (1-based, upper triangle row-major).
inline std::string samples_header(std::size_t p) {
  std::string h = "iter,sign";
  for (std::size_t j = 1; j <= p; ++j)
    for (std::size_t k = j; k <= p; ++k) h += ",theta_" + std::to_string(j) + "_" + std::to_string(k);
  return h;
}

/// Writes retained samples; `first_iter` labels the first row.
inline void write_samples_csv(std::ostream& out, const ChainOutput& chain, std::size_t first_iter) {
  out << samples_header(chain.p) << '\n';
  for (std::size_t t = 0; t < chain.size(); ++t) {
    out << (first_iter + t) << ',' << chain.signs[t];
    for (Eigen::Index c = 0; c < chain.samples.cols(); ++c)
      out << ',' << detail::format_double(chain.samples(static_cast<Eigen::Index>(t), c));
    out << '\n';
  }
}

struct SamplesFile {
  std::size_t p = 0;
  std::vector<std::size_t> iters;
  ChainOutput chain;  // samples and signs populated
};

inline SamplesFile read_samples_csv(std::istream& in, const std::string& name = "samples") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": empty samples file");
  detail::strip_cr(line);
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[0] != "iter" || header[1] != "sign")
    throw ParseError(name + ": header must start with iter,sign");
  const std::size_t free = header.size() - 2;
  std::size_t p = 1;
  while (num_free(p) < free) ++p;
  if (num_free(p) != free) throw ParseError(name + ": column count is not p(p+1)/2 + 2");
  if (std::string(line) != samples_header(p)) throw ParseError(name + ": unexpected column names");

  SamplesFile out;
  out.p = p;
  out.chain.p = p;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    const std::string where = name + " line " + std::to_string(line_no);
    if (fields.size() != free + 2) throw ParseError(where + ": wrong number of columns");
    out.iters.push_back(static_cast<std::size_t>(detail::parse_double(fields[0], where)));
    const double s = detail::parse_double(fields[1], where);
    if (s != 1.0 && s != -1.0 && s != 0.0) throw ParseError(where + ": sign must be -1, 0 or 1");
    out.chain.signs.push_back(static_cast<int>(s));
    std::vector<double> row(free);
    for (std::size_t c = 0; c < free; ++c) row[c] = detail::parse_double(fields[c + 2], where);
    rows.push_back(std::move(row));
  }
  out.chain.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(free));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < free; ++c)
      out.chain.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

inline SamplesFile load_samples_csv(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_samples_csv(in, path.string());
}

inline void write_trace_csv(std::ostream& out, const ChainOutput& chain, std::size_t first_iter) {
  out << "iter,log_post,accepted\n";
  for (std::size_t t = 0; t < chain.size(); ++t)
    out << (first_iter + t) << ',' << detail::format_double(chain.log_post_trace[t]) << ','
        << static_cast<int>(chain.accepted[t]) << '\n';
}

}  // namespace pmising
