#include "dmloc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>

namespace dmloc {

int CsvTable::column(const std::string &name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

const std::string &CsvTable::text(std::size_t row, const std::string &name) const {
  const int c = column(name);
  if (c < 0) throw std::runtime_error("CSV has no column " + name);
  return rows.at(row).at(static_cast<std::size_t>(c));
}

double CsvTable::number(std::size_t row, const std::string &name) const {
  const std::string &s = text(row, name);
  try {
    return std::stod(s);
  } catch (const std::exception &) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

CsvTable read_csv(std::istream &in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (any) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  CsvTable t;
  if (records.empty()) return t;
  t.header = std::move(records.front());
  t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return t;
}

namespace {

constexpr double kW = 720, kH = 440, kL = 80, kR = 170, kT = 50, kB = 60;
const char *const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string esc(const std::string &s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2;
  }
};

Axis padded(double lo, double hi, bool from_zero) {
  if (from_zero) lo = std::min(lo, 0.0);
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi + 0.05 * (hi - lo)};
}

std::string header(const std::string &title, const std::string &x_label,
                   const std::string &y_label) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH, kW, kH);
  s += fmt::format("<text x=\"{}\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                   (kL + kW - kR) / 2, esc(title));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (kL + kW - kR) / 2,
                   kH - 15, esc(x_label));
  s += fmt::format(
      "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
      (kT + kH - kB) / 2, (kT + kH - kB) / 2, esc(y_label));
  return s;
}

std::string y_axis(const Axis &ya) {
  std::string s = fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{2}\" x2=\"{3}\" y2=\"{2}\" stroke=\"black\"/>\n",
      kL, kT, kH - kB, kW - kR);
  for (int i = 0; i <= 5; ++i) {
    const double v = ya.lo + (ya.hi - ya.lo) * i / 5.0;
    const double y = ya.map(v, kH - kB, kT);
    s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kL,
                     y, kW - kR, y);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kL - 5,
                     y + 4, v);
  }
  return s;
}

std::string legend(const std::vector<std::string> &labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kT + 10 + 18.0 * static_cast<double>(i);
    s += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>"
        "<text x=\"{}\" y=\"{}\">{}</text>\n",
        kW - kR + 15, y - 10, kPalette[i % 8], kW - kR + 32, y, esc(labels[i]));
  }
  return s;
}

}  // namespace

std::string svg_line_chart(const std::string &title, const std::string &x_label,
                           const std::string &y_label, const std::vector<Series> &series,
                           const std::optional<Band> &band) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto extend = [&](const std::vector<double> &xs, const std::vector<double> &ys) {
    for (double v : xs)
      if (std::isfinite(v)) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : ys)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  };
  for (const Series &s : series) extend(s.x, s.y);
  if (band) extend(band->x, band->lo), extend(band->x, band->hi);
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const Axis xa{x0, x1 > x0 ? x1 : x0 + 1};
  const Axis ya = padded(y0, y1, true);

  std::string s = header(title, x_label, y_label) + y_axis(ya);
  for (int i = 0; i <= 5; ++i) {
    const double v = xa.lo + (xa.hi - xa.lo) * i / 5.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n",
                     xa.map(v, kL, kW - kR), kH - kB + 18, v);
  }
  if (band && !band->x.empty()) {
    std::string pts;
    for (std::size_t i = 0; i < band->x.size(); ++i)
      pts += fmt::format("{:.2f},{:.2f} ", xa.map(band->x[i], kL, kW - kR),
                         ya.map(band->hi[i], kH - kB, kT));
    for (std::size_t i = band->x.size(); i-- > 0;)
      pts += fmt::format("{:.2f},{:.2f} ", xa.map(band->x[i], kL, kW - kR),
                         ya.map(band->lo[i], kH - kB, kT));
    s += "<polygon class=\"band\" points=\"" + pts + "\" fill=\"#1f77b4\" fill-opacity=\"0.25\"/>\n";
  }
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series &ser = series[k];
    labels.push_back(ser.label);
    std::string pts;
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i)
      pts += fmt::format("{:.2f},{:.2f} ", xa.map(ser.x[i], kL, kW - kR),
                         ya.map(ser.y[i], kH - kB, kT));
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                     pts, kPalette[k % 8]);
    for (std::size_t i = 0; i < ser.x.size() && i < ser.y.size(); ++i)
      s += fmt::format("<circle class=\"mark\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                       xa.map(ser.x[i], kL, kW - kR), ya.map(ser.y[i], kH - kB, kT),
                       kPalette[k % 8]);
  }
  return s + legend(labels) + "</svg>\n";
}

std::string svg_bar_chart(const std::string &title, const std::string &x_label,
                          const std::string &y_label, const std::vector<std::string> &categories,
                          const std::vector<Series> &series) {
  double y1 = 0.0;
  for (const Series &ser : series)
    for (double v : ser.y)
      if (std::isfinite(v)) y1 = std::max(y1, v);
  const Axis ya = padded(0.0, y1, true);
  std::string s = header(title, x_label, y_label) + y_axis(ya);
  const double group_w = (kW - kR - kL) / std::max<double>(1.0, static_cast<double>(categories.size()));
  const double bar_w = 0.8 * group_w / std::max<double>(1.0, static_cast<double>(series.size()));
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kL + group_w * static_cast<double>(c);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     gx + group_w / 2, kH - kB + 18, esc(categories[c]));
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (c >= series[k].y.size() || !std::isfinite(series[k].y[c])) continue;
      const double top = ya.map(series[k].y[c], kH - kB, kT);
      s += fmt::format(
          "<rect class=\"mark\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
          "fill=\"{}\"/>\n",
          gx + 0.1 * group_w + bar_w * static_cast<double>(k), top, bar_w, (kH - kB) - top,
          kPalette[k % 8]);
    }
  }
  for (const Series &ser : series) labels.push_back(ser.label);
  return s + legend(labels) + "</svg>\n";
}

namespace {

void write_file(const std::filesystem::path &p, const std::string &content,
                std::vector<std::filesystem::path> &written) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  written.push_back(p);
}

// Rows grouped by `key`, each group ordered by `x`.
std::map<std::string, Series> group_series(const CsvTable &t, const std::string &key,
                                           const std::string &x, const std::string &y,
                                           const std::string &prefix) {
  std::map<std::string, Series> groups;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Series &s = groups[t.text(r, key)];
    s.label = prefix + t.text(r, key);
    s.x.push_back(t.number(r, x));
    s.y.push_back(t.number(r, y));
  }
  for (auto &[k, s] : groups) {
    std::vector<std::size_t> idx(s.x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
    Series sorted{s.label, {}, {}};
    for (std::size_t i : idx) sorted.x.push_back(s.x[i]), sorted.y.push_back(s.y[i]);
    s = std::move(sorted);
  }
  return groups;
}

std::vector<Series> values(std::map<std::string, Series> m) {
  std::vector<Series> out;
  for (auto &[k, s] : m) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::vector<std::filesystem::path> render_plots(const std::filesystem::path &csv,
                                                const std::filesystem::path &out_dir) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  const CsvTable t = read_csv(in);
  if (t.header.empty() || t.rows.empty()) throw std::runtime_error("empty CSV: " + csv.string());
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const std::string stem = csv.stem().string();

  if (t.column("time") >= 0 && t.column("q10") >= 0 && t.column("rmse") >= 0) {
    Series s{"RMSE", {}, {}};
    Band b;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.number(r, "time"));
      s.y.push_back(t.number(r, "rmse"));
      b.x.push_back(s.x.back());
      b.lo.push_back(t.number(r, "q10"));
      b.hi.push_back(t.number(r, "q90"));
    }
    write_file(out_dir / (stem + "_band.svg"),
               svg_line_chart("Position RMSE over time (10-90 % band)", "time step",
                              "position error [m]", {s}, b),
               written);
  } else if (t.column("mode") >= 0 && t.column("rmse") >= 0 && t.column("J") >= 0) {
    write_file(out_dir / (stem + "_rmse_vs_J.svg"),
               svg_line_chart("RMSE vs number of panels", "panels J", "RMSE [m]",
                              values(group_series(t, "N_p", "J", "rmse", "N_p = ")), std::nullopt),
               written);
    std::set<std::string> modes;
    for (std::size_t r = 0; r < t.rows.size(); ++r) modes.insert(t.text(r, "mode"));
    if (modes.size() > 1) {
      std::vector<std::string> cats;
      std::map<std::string, std::size_t> cat_idx;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string c = "J=" + t.text(r, "J");
        if (cat_idx.emplace(c, cats.size()).second) cats.push_back(c);
      }
      std::vector<Series> bars;
      for (const std::string &m : modes) {
        Series s{m, {}, std::vector<double>(cats.size(), std::numeric_limits<double>::quiet_NaN())};
        for (std::size_t r = 0; r < t.rows.size(); ++r)
          if (t.text(r, "mode") == m) s.y[cat_idx["J=" + t.text(r, "J")]] = t.number(r, "rmse");
        bars.push_back(std::move(s));
      }
      write_file(out_dir / (stem + "_los_vs_mpc.svg"),
                 svg_bar_chart("LoS-only vs multipath-aided", "configuration", "RMSE [m]", cats,
                               bars),
                 written);
    }
    write_file(out_dir / (stem + "_latency_vs_Np.svg"),
               svg_line_chart("Chain latency vs particles", "particles N_p",
                              "latency per time step [s]",
                              values(group_series(t, "J", "N_p", "mean_chain_latency_s", "J = ")),
                              std::nullopt),
               written);
  } else if (t.column("total_s") >= 0 && t.column("N_p") >= 0 && t.column("J") >= 0) {
    write_file(out_dir / (stem + "_latency_vs_Np.svg"),
               svg_line_chart("Chain latency vs particles", "particles N_p",
                              "latency per time step [s]",
                              values(group_series(t, "J", "N_p", "total_s", "J = ")), std::nullopt),
               written);
  } else {
    throw std::runtime_error("unrecognized CSV columns in " + csv.string());
  }
  return written;
}

}  // namespace dmloc
