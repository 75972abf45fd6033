#pragma once

// Plain-text formats: CSV tables, panel ingestion, membership files and the
// chain trace.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spfc/graph.hpp"
#include "spfc/lgm.hpp"
#include "spfc/sampler.hpp"

namespace spfc {

/// Header plus rows of string cells. Lines starting with '#' are comments.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  }

  std::size_t require(const std::string& name, const std::string& what) const {
    auto c = column(name);
    if (!c) throw Error(ErrorKind::InvalidConfig, what + ": missing column '" + name + "'");
    return *c;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(trim(cell));
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& what) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line.substr(1));
      continue;
    }
    auto cells = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::InvalidConfig, what + ": row " + std::to_string(t.rows.size() + 1) +
                                                " has " + std::to_string(cells.size()) + " cells, expected " +
                                                std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw Error(ErrorKind::InvalidConfig, what + ": empty file");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  return out;
}

/// Edge list with region ids: columns from,to and an optional weight.
struct EdgeList {
  std::vector<std::string> region_ids;  ///< order of first appearance
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<double>> weights;
};

inline EdgeList parse_edges(const CsvTable& t, const std::string& what = "edges") {
  EdgeList out;
  const std::size_t cf = t.require("from", what), ct = t.require("to", what);
  auto cw = t.column("weight");
  std::map<std::string, int> index;
  auto id_of = [&](const std::string& s) {
    auto [it, fresh] = index.emplace(s, static_cast<int>(out.region_ids.size()));
    if (fresh) out.region_ids.push_back(s);
    return it->second;
  };
  if (cw) out.weights.emplace();
  for (const auto& row : t.rows) {
    // sequenced so ids follow the file order
    const int from = id_of(row[cf]);
    const int to = id_of(row[ct]);
    out.edges.emplace_back(from, to);
    if (cw) {
      auto w = detail::parse_double(row[*cw]);
      if (!w || !std::isfinite(*w)) throw Error(ErrorKind::InvalidConfig, what + ": bad weight '" + row[*cw] + "'");
      out.weights->push_back(*w);
    }
  }
  return out;
}

/// Everything needed to fit: graph, aligned panel and the exposure used for
/// offsets (population or expected counts; ones when absent).
struct IngestedData {
  std::shared_ptr<const SpatialGraph> graph;
  Panel panel;
  std::vector<std::string> times;
  Eigen::MatrixXd exposure;
  bool has_exposure = false;
  std::optional<EdgeWeights> initial_weights;

  const std::vector<std::string>& region_ids() const { return graph->region_ids(); }
};

inline IngestedData ingest_panel(const CsvTable& panel_csv, const CsvTable& edges_csv, Family family) {
  EdgeList el = parse_edges(edges_csv);
  IngestedData out;
  out.graph = std::make_shared<const SpatialGraph>(
      build_graph(static_cast<int>(el.region_ids.size()), el.edges, el.region_ids));
  if (el.weights) {
    // weights follow the file's edge order; map them onto the sorted graph edges
    std::map<Edge, double> wm;
    for (std::size_t k = 0; k < el.edges.size(); ++k)
      wm[Edge(el.edges[k].first, el.edges[k].second)] = (*el.weights)[k];
    out.initial_weights = EdgeWeights::from_map(*out.graph, wm);
  }
  std::map<std::string, int> region_index;
  for (std::size_t i = 0; i < el.region_ids.size(); ++i) region_index[el.region_ids[i]] = static_cast<int>(i);

  const std::size_t cr = panel_csv.require("region", "panel"), ct = panel_csv.require("time", "panel"),
                    cy = panel_csv.require("y", "panel");
  auto cexp = panel_csv.column("population");
  if (!cexp) cexp = panel_csv.column("expected");
  out.has_exposure = cexp.has_value();

  // densely index times, numerically when every label is a number
  std::vector<std::string> labels;
  for (const auto& row : panel_csv.rows) labels.push_back(row[ct]);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  bool numeric = std::all_of(labels.begin(), labels.end(),
                             [](const std::string& s) { return detail::parse_double(s).has_value(); });
  if (numeric)
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return *detail::parse_double(a) < *detail::parse_double(b);
    });
  out.times = labels;
  std::map<std::string, int> time_index;
  for (std::size_t k = 0; k < labels.size(); ++k) time_index[labels[k]] = static_cast<int>(k);

  const int n = out.graph->n_regions(), T = static_cast<int>(labels.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.panel.y = Eigen::MatrixXd::Constant(n, T, nan);
  out.exposure = Eigen::MatrixXd::Ones(n, T);
  for (const auto& row : panel_csv.rows) {
    auto rit = region_index.find(row[cr]);
    if (rit == region_index.end())
      throw Error(ErrorKind::UnknownRegion, "panel region '" + row[cr] + "' is not in the edge list");
    const int i = rit->second, t = time_index.at(row[ct]);
    if (!std::isnan(out.panel.y(i, t)))
      throw Error(ErrorKind::InvalidConfig, "duplicate panel cell (" + row[cr] + ", " + row[ct] + ")");
    auto y = detail::parse_double(row[cy]);
    if (!y || !std::isfinite(*y))
      throw Error(ErrorKind::InvalidConfig, "bad y '" + row[cy] + "' at (" + row[cr] + ", " + row[ct] + ")");
    if (family == Family::Poisson) {
      if (*y < 0) throw Error(ErrorKind::NegativeCount, "negative count at (" + row[cr] + ", " + row[ct] + ")");
      if (*y != std::floor(*y))
        throw Error(ErrorKind::NonIntegerCount, "non-integer count at (" + row[cr] + ", " + row[ct] + ")");
    }
    out.panel.y(i, t) = *y;
    if (cexp) {
      auto e = detail::parse_double(row[*cexp]);
      if (!e || !(*e > 0))
        throw Error(ErrorKind::InvalidConfig, "exposure must be positive at (" + row[cr] + ", " + row[ct] + ")");
      out.exposure(i, t) = *e;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      if (std::isnan(out.panel.y(i, t)))
        throw Error(ErrorKind::MissingCell,
                    "missing panel cell (" + el.region_ids[i] + ", " + (T ? labels[t] : "") + ")");
  out.panel.offset = out.exposure.array().log().matrix();
  return out;
}

inline IngestedData ingest_panel(const std::string& panel_path, const std::string& edges_path, Family family) {
  return ingest_panel(read_csv(panel_path), read_csv(edges_path), family);
}

/// Replaces counts by log(max(y, 0.5) / exposure) for a gaussian fit on the
/// log-rate scale; offsets become zero.
inline Panel log_rate_panel(const IngestedData& data) {
  Panel p;
  p.y = (data.panel.y.array().max(0.5) / data.exposure.array()).log().matrix();
  p.offset = Eigen::MatrixXd::Zero(p.y.rows(), p.y.cols());
  return p;
}

/// Writes `region,<label_column>` rows in region order.
inline void write_membership(std::ostream& out, const std::vector<std::string>& region_ids, const Membership& m,
                             const std::string& label_column = "cluster") {
  out << "region," << label_column << "\n";
  for (std::size_t i = 0; i < m.size(); ++i) out << region_ids[i] << "," << m[i] << "\n";
}

/// Reads a two-column membership file keyed by region id.
inline std::map<std::string, int> read_membership(const std::string& path) {
  CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header[0] != "region")
    throw Error(ErrorKind::InvalidConfig, path + ": expected columns region,<label>");
  std::map<std::string, int> out;
  for (const auto& row : t.rows) {
    auto v = detail::parse_double(row[1]);
    if (!v || *v != std::floor(*v) || *v < 0)
      throw Error(ErrorKind::InvalidConfig, path + ": bad cluster label '" + row[1] + "'");
    if (!out.emplace(row[0], static_cast<int>(*v)).second)
      throw Error(ErrorKind::InvalidConfig, path + ": duplicate region '" + row[0] + "'");
  }
  return out;
}

inline const char* kTraceHeader = "iter,move,accepted,C,log_marginal,membership_rle";

inline std::string format_trace_record(const TraceRecord& r) {
  std::string s = std::to_string(r.iter) + "," + to_string(r.move) + "," + (r.accepted ? "1" : "0") + "," +
                  std::to_string(r.n_clusters) + "," + detail::format_double(r.log_marginal) + "," +
                  encode_membership(r.membership);
  return s;
}

/// Parses a trace file; every record must decode to a membership of length n
/// (when n > 0) whose cluster count matches column C.
inline std::vector<TraceRecord> read_trace(std::istream& in, int n = 0) {
  std::vector<TraceRecord> out;
  std::string line;
  bool header = false;
  long lineno = 0;
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorKind::TraceCorrupt, "trace line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kTraceHeader) throw corrupt("unexpected header");
      header = true;
      continue;
    }
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 6) throw corrupt("expected 6 fields");
    TraceRecord r;
    try {
      r.iter = std::stol(cells[0]);
      r.move = move_kind_from_string(cells[1]);
      if (cells[2] != "0" && cells[2] != "1") throw corrupt("bad accepted flag");
      r.accepted = cells[2] == "1";
      r.n_clusters = std::stoi(cells[3]);
    } catch (const std::logic_error&) {
      throw corrupt("bad field");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::TraceCorrupt) throw;
      throw corrupt(e.what());
    }
    auto lm = detail::parse_double(cells[4]);
    if (!lm) throw corrupt("bad log marginal");
    r.log_marginal = *lm;
    r.membership = decode_membership(cells[5]);
    if (n > 0 && static_cast<int>(r.membership.size()) != n) throw corrupt("membership has wrong length");
    if (detail::count_labels(r.membership) != r.n_clusters) throw corrupt("cluster count disagrees with membership");
    out.push_back(std::move(r));
  }
  if (!header) throw Error(ErrorKind::TraceCorrupt, "trace has no header");
  return out;
}

inline std::vector<TraceRecord> read_trace(const std::string& path, int n = 0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return read_trace(in, n);
}

}  // namespace spfc
