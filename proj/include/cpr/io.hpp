#pragma once

// Dataset readers (CSV vectors, IDX tensors, edge lists) and the CSV and
// key=value sidecar writers used by the command-line tool.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "cpr/continuum.hpp"
#include "cpr/depth.hpp"
#include "cpr/error.hpp"
#include "cpr/graph.hpp"
#include "cpr/pagerank.hpp"

namespace cpr {

struct LabeledVectors {
  VectorSet vectors;
  std::optional<std::vector<long>> labels;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  return out;
}

}  // namespace detail

/// Comma-separated rows of reals; with `labels`, the last column is an integer
/// class label. Blank lines are skipped.
inline LabeledVectors read_vectors_csv(std::istream& in, bool labels, const std::string& name = "<stream>") {
  LabeledVectors out;
  if (labels) out.labels.emplace();
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto cells = detail::split_commas(body);
    const std::size_t cols = cells.size() - (labels ? 1 : 0);
    if (cols == 0) throw ParseError(name + ":" + std::to_string(lineno) + ": row has no vector entries");
    if (width == 0) {
      width = cols;
      out.vectors.dim = cols;
    } else if (cols != width) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(width + (labels ? 1 : 0)) +
                       " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double x = 0.0;
      if (!detail::parse_double(cells[c], x) || !std::isfinite(x)) {
        throw ParseError(name + ":" + std::to_string(lineno) + ": cannot parse '" + std::string(cells[c]) +
                         "' as a real number");
      }
      out.vectors.data.push_back(x);
    }
    if (labels) {
      long lab = 0;
      if (!detail::parse_int(cells.back(), lab)) {
        throw ParseError(name + ":" + std::to_string(lineno) + ": cannot parse label '" + std::string(cells.back()) +
                         "'");
      }
      out.labels->push_back(lab);
    }
  }
  if (width == 0) throw ParseError(name + ": no data rows");
  return out;
}

inline LabeledVectors read_vectors_csv(const std::string& path, bool labels) {
  auto in = detail::open_in(path);
  return read_vectors_csv(in, labels, path);
}

/// IDX tensor with its element type code and dimensions; values widened to double.
struct IdxTensor {
  std::uint8_t type = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t rows() const { return dims.empty() ? 0 : dims[0]; }
  /// Elements per leading index (784 for n x 28 x 28 images).
  std::size_t row_length() const {
    std::size_t s = 1;
    for (std::size_t i = 1; i < dims.size(); ++i) s *= dims[i];
    return s;
  }
  VectorSet as_vectors() const { return VectorSet{row_length(), values}; }
  std::vector<long> as_labels() const {
    std::vector<long> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(static_cast<long>(v));
    return out;
  }
};

namespace detail {

inline std::size_t idx_element_size(std::uint8_t type) {
  switch (type) {
    case 0x08:
    case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C:
    case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

inline std::uint64_t read_be(const unsigned char* p, std::size_t bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

/// Parses an IDX buffer: bytes 0,0, a type code, a dimension count, then
/// big-endian 32-bit sizes and the big-endian payload.
inline IdxTensor parse_idx(const std::vector<unsigned char>& buf, const std::string& name = "<buffer>") {
  if (buf.size() < 4) throw ParseError(name + ": IDX header needs 4 bytes, found " + std::to_string(buf.size()));
  if (buf[0] != 0 || buf[1] != 0) throw ParseError(name + ": bad IDX magic (first two bytes must be zero)");
  IdxTensor t;
  t.type = buf[2];
  const std::size_t esize = detail::idx_element_size(t.type);
  if (esize == 0) {
    std::ostringstream os;
    os << name << ": unknown IDX type code 0x" << std::hex << static_cast<int>(t.type);
    throw ParseError(os.str());
  }
  const std::size_t ndim = buf[3];
  const std::size_t header = 4 + 4 * ndim;
  if (buf.size() < header) {
    throw ParseError(name + ": IDX header expects " + std::to_string(header) + " bytes, found " +
                     std::to_string(buf.size()));
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    t.dims.push_back(static_cast<std::uint32_t>(detail::read_be(buf.data() + 4 + 4 * i, 4)));
    count *= t.dims.back();
  }
  const std::size_t expected = header + count * esize;
  if (buf.size() != expected) {
    throw ParseError(name + ": IDX payload expects " + std::to_string(count * esize) + " bytes, found " +
                     std::to_string(buf.size() > header ? buf.size() - header : 0));
  }
  t.values.resize(count);
  const unsigned char* p = buf.data() + header;
  for (std::size_t i = 0; i < count; ++i, p += esize) {
    const std::uint64_t raw = detail::read_be(p, esize);
    switch (t.type) {
      case 0x08: t.values[i] = static_cast<double>(static_cast<std::uint8_t>(raw)); break;
      case 0x09: t.values[i] = static_cast<double>(static_cast<std::int8_t>(raw)); break;
      case 0x0B: t.values[i] = static_cast<double>(static_cast<std::int16_t>(raw)); break;
      case 0x0C: t.values[i] = static_cast<double>(static_cast<std::int32_t>(raw)); break;
      case 0x0D: {
        const auto bits = static_cast<std::uint32_t>(raw);
        float f;
        std::memcpy(&f, &bits, 4);
        t.values[i] = f;
        break;
      }
      case 0x0E: {
        double dv;
        std::memcpy(&dv, &raw, 8);
        t.values[i] = dv;
        break;
      }
    }
  }
  return t;
}

inline IdxTensor read_idx(const std::string& path) {
  auto in = detail::open_in(path, std::ios::binary);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(buf, path);
}

// ---------------------------------------------------------------------------
// Writers

/// Ordered key=value metadata written next to every output file.
class Sidecar {
 public:
  template <class T>
  Sidecar& set(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    put(key, os.str());
    return *this;
  }
  Sidecar& set(const std::string& key, const std::string& value) {
    put(key, value);
    return *this;
  }
  Sidecar& set(const std::string& key, const char* value) { return set(key, std::string(value)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return std::nullopt;
  }

  void write(const std::string& path) const {
    auto out = detail::open_out(path);
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

  static Sidecar read(const std::string& path) {
    auto in = detail::open_in(path);
    Sidecar s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto body = detail::trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError(path + ":" + std::to_string(lineno) + ": expected key=value");
      s.put(std::string(detail::trim(body.substr(0, eq))), std::string(detail::trim(body.substr(eq + 1))));
    }
    return s;
  }

  static std::string path_for(const std::string& output) { return output + ".meta"; }

 private:
  void put(const std::string& key, std::string value) {
    for (char& c : value)
      if (c == '\n' || c == '\r') c = ' ';
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    entries_.emplace_back(key, std::move(value));
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

/// `src,dst,weight` with a header line.
inline void write_edges_csv(const DirectedGraph& g, const std::string& path) {
  auto out = detail::open_out(path);
  out << "src,dst,weight\n";
  for (std::size_t x = 0; x < g.size(); ++x) {
    const auto t = g.out_targets(x);
    const auto w = g.out_weights(x);
    for (std::size_t e = 0; e < t.size(); ++e) out << x << ',' << t[e] << ',' << w[e] << '\n';
  }
}

/// Reads an edge list written by write_edges_csv. `n` defaults to one past the
/// largest node index.
inline DirectedGraph read_edges_csv(const std::string& path, std::optional<std::size_t> n = std::nullopt,
                                    GraphParams params = {}) {
  auto in = detail::open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Edge> edges;
  std::size_t max_index = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    if (lineno == 1 && body == "src,dst,weight") continue;
    const auto cells = detail::split_commas(body);
    std::uint32_t s = 0, t = 0;
    double w = 0.0;
    if (cells.size() != 3 || !detail::parse_int(cells[0], s) || !detail::parse_int(cells[1], t) ||
        !detail::parse_double(cells[2], w)) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected src,dst,weight");
    }
    max_index = std::max<std::size_t>(max_index, std::max(s, t));
    edges.push_back({s, t, w});
  }
  if (edges.empty()) throw ParseError(path + ": no edges");
  const std::size_t nodes = n ? *n : max_index + 1;
  return DirectedGraph::from_edges(nodes, std::move(edges), std::move(params));
}

/// Point coordinates, one row per point.
inline void write_points_csv(const PointCloud& pts, const std::string& path) {
  auto out = detail::open_out(path);
  for (int a = 0; a < pts.dim(); ++a) out << (a ? "," : "") << 'x' << (a + 1);
  out << '\n';
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const CSpan x = pts[i];
    for (std::size_t a = 0; a < x.size(); ++a) out << (a ? "," : "") << x[a];
    out << '\n';
  }
}

/// `node,r,u` with a header line.
inline void write_rank_csv(const RankResult& res, const std::string& path) {
  auto out = detail::open_out(path);
  out << "node,r,u\n";
  for (std::size_t i = 0; i < res.r.size(); ++i) out << i << ',' << res.r[i] << ',' << res.u[i] << '\n';
}

/// `i1,...,id,value` with a header line.
inline void write_grid_csv(const GridField& f, const std::string& path) {
  auto out = detail::open_out(path);
  for (int a = 0; a < f.dim(); ++a) out << 'i' << (a + 1) << ',';
  out << "value\n";
  for (std::size_t j = 0; j < f.size(); ++j) {
    for (int a = 0; a < f.dim(); ++a) out << f.index_along(j, a) << ',';
    out << f[j] << '\n';
  }
}

/// `class,rank,node_index,score`, the top members of each class.
inline void write_depth_csv(const DepthResult& res, const std::string& path) {
  auto out = detail::open_out(path);
  out << "class,rank,node_index,score\n";
  for (const auto& c : res.classes) {
    for (std::size_t i = 0; i < c.top.size(); ++i) {
      out << c.label << ',' << (i + 1) << ',' << c.top[i] << ',' << c.r[c.top[i]] << '\n';
    }
  }
}

/// Generic table with a header row.
inline void write_table_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                            const std::string& path) {
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

inline std::string format_real(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace cpr
