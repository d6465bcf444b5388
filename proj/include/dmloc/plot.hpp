#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace dmloc {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(const std::string &name) const;
  double number(std::size_t row, const std::string &name) const;
  const std::string &text(std::size_t row, const std::string &name) const;
};

/// RFC 4180 reader (quoted fields, doubled quotes, CRLF or LF).
CsvTable read_csv(std::istream &in);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Band {
  std::vector<double> x;
  std::vector<double> lo;
  std::vector<double> hi;
};

std::string svg_line_chart(const std::string &title, const std::string &x_label,
                           const std::string &y_label, const std::vector<Series> &series,
                           const std::optional<Band> &band = std::nullopt);

/// Grouped bars: one group per category, one bar per series (y indexed like
/// the categories).
std::string svg_bar_chart(const std::string &title, const std::string &x_label,
                          const std::string &y_label, const std::vector<std::string> &categories,
                          const std::vector<Series> &series);

/// Picks the plots that fit the CSV's columns (error band over time, sweep
/// table, latency grid) and writes them to out_dir. Returns the written
/// paths. Throws std::runtime_error on an empty or unrecognized CSV.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path &csv,
                                                const std::filesystem::path &out_dir);

}  // namespace dmloc
