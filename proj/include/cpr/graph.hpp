#pragma once

// Sparse directed weighted graphs: random directed geometric graphs on the
// torus (cell-list search) and k-nearest-neighbor graphs on vector data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/geometry.hpp"
#include "cpr/kernel.hpp"

namespace cpr {

/// Row-major set of vectors of uniform dimension.
struct VectorSet {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
  CSpan operator[](std::size_t i) const { return CSpan(data.data() + i * dim, dim); }
};

enum class GraphKind { rdgg, knn, custom };

inline const char* to_string(GraphKind k) {
  switch (k) {
    case GraphKind::rdgg:
      return "rdgg";
    case GraphKind::knn:
      return "knn";
    case GraphKind::custom:
      return "custom";
  }
  return "custom";
}

struct GraphParams {
  GraphKind kind = GraphKind::custom;
  int dim = 0;
  double h = 0.0;
  double eps = 0.0;
  std::size_t k = 0;
  std::string kernel;
  std::uint64_t seed = 0;
};

struct Edge {
  std::uint32_t src;
  std::uint32_t dst;
  double weight;
};

/// Immutable directed graph stored as compressed out-rows plus the materialized
/// transpose (in-rows). Self-loops are ordinary edges.
class DirectedGraph {
 public:
  DirectedGraph() = default;

  /// Takes ownership of CSR rows. Rows must list each target at most once.
  static DirectedGraph from_rows(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::uint32_t> targets,
                                 std::vector<double> weights, GraphParams params,
                                 std::optional<PointCloud> points = std::nullopt) {
    if (row_ptr.size() != n + 1 || targets.size() != weights.size() || row_ptr.back() != targets.size()) {
      throw InvalidArgument("DirectedGraph: inconsistent CSR arrays");
    }
    DirectedGraph g;
    g.n_ = n;
    g.out_ptr_ = std::move(row_ptr);
    g.out_dst_ = std::move(targets);
    g.out_w_ = std::move(weights);
    g.params_ = std::move(params);
    g.points_ = std::move(points);
    g.finish();
    return g;
  }

  /// Builds from an unordered edge list; duplicate (src, dst) pairs are summed.
  static DirectedGraph from_edges(std::size_t n, std::vector<Edge> edges, GraphParams params = {}) {
    for (const auto& e : edges) {
      if (e.src >= n || e.dst >= n) throw InvalidArgument("DirectedGraph: edge endpoint out of range");
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
    std::vector<std::size_t> ptr(n + 1, 0);
    std::vector<std::uint32_t> dst;
    std::vector<double> w;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (i > 0 && edges[i].src == edges[i - 1].src && edges[i].dst == edges[i - 1].dst) {
        w.back() += edges[i].weight;
        continue;
      }
      dst.push_back(edges[i].dst);
      w.push_back(edges[i].weight);
      ++ptr[edges[i].src + 1];
    }
    std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
    return from_rows(n, std::move(ptr), std::move(dst), std::move(w), std::move(params));
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return out_dst_.size(); }
  const GraphParams& params() const noexcept { return params_; }
  const PointCloud* points() const noexcept { return points_ ? &*points_ : nullptr; }

  std::span<const std::uint32_t> out_targets(std::size_t i) const {
    return {out_dst_.data() + out_ptr_[i], out_ptr_[i + 1] - out_ptr_[i]};
  }
  std::span<const double> out_weights(std::size_t i) const {
    return {out_w_.data() + out_ptr_[i], out_ptr_[i + 1] - out_ptr_[i]};
  }
  std::span<const std::uint32_t> in_sources(std::size_t i) const {
    return {in_src_.data() + in_ptr_[i], in_ptr_[i + 1] - in_ptr_[i]};
  }
  std::span<const double> in_weights(std::size_t i) const {
    return {in_w_.data() + in_ptr_[i], in_ptr_[i + 1] - in_ptr_[i]};
  }

  /// Out-degrees d(x) = sum_y w(x, y).
  const std::vector<double>& degrees() const noexcept { return degrees_; }

  /// Weight of x -> y, zero if absent.
  double weight(std::size_t x, std::size_t y) const {
    const auto t = out_targets(x);
    const auto it = std::lower_bound(t.begin(), t.end(), static_cast<std::uint32_t>(y));
    if (it == t.end() || *it != y) return 0.0;
    return out_weights(x)[static_cast<std::size_t>(it - t.begin())];
  }

  /// Scale in u = scale * r / d: n h^d for geometric graphs, the mean degree otherwise.
  double normalization() const noexcept { return normalization_; }

 private:
  void finish() {
    for (std::size_t i = 0; i < n_; ++i) {
      const auto t = out_targets(i);
      if (!std::is_sorted(t.begin(), t.end()) || std::adjacent_find(t.begin(), t.end()) != t.end()) {
        throw InvalidArgument("DirectedGraph: row targets must be strictly increasing");
      }
    }
    degrees_.assign(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (double w : out_weights(i)) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("DirectedGraph: weights must be finite and >= 0");
        s += w;
      }
      if (!(s > 0.0)) throw DegenerateGraphError("node " + std::to_string(i) + " has zero degree");
      degrees_[i] = s;
    }
    // Transpose by counting sort on the target; sources stay ascending within each in-row.
    in_ptr_.assign(n_ + 1, 0);
    for (auto t : out_dst_) ++in_ptr_[t + 1];
    std::partial_sum(in_ptr_.begin(), in_ptr_.end(), in_ptr_.begin());
    in_src_.resize(out_dst_.size());
    in_w_.resize(out_dst_.size());
    std::vector<std::size_t> cursor(in_ptr_.begin(), in_ptr_.end() - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t e = out_ptr_[i]; e < out_ptr_[i + 1]; ++e) {
        const std::size_t pos = cursor[out_dst_[e]]++;
        in_src_[pos] = static_cast<std::uint32_t>(i);
        in_w_[pos] = out_w_[e];
      }
    }
    if (params_.kind == GraphKind::rdgg) {
      normalization_ = static_cast<double>(n_) * std::pow(params_.h, params_.dim);
    } else {
      normalization_ = std::accumulate(degrees_.begin(), degrees_.end(), 0.0) / static_cast<double>(n_);
    }
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> out_ptr_{0};
  std::vector<std::uint32_t> out_dst_;
  std::vector<double> out_w_;
  std::vector<std::size_t> in_ptr_{0};
  std::vector<std::uint32_t> in_src_;
  std::vector<double> in_w_;
  std::vector<double> degrees_;
  GraphParams params_;
  std::optional<PointCloud> points_;
  double normalization_ = 1.0;
};

inline const std::vector<double>& degrees(const DirectedGraph& g) { return g.degrees(); }

namespace detail {

/// Uniform cell grid on [0,1)^d with at least `radius` cell width per axis.
class TorusCells {
 public:
  TorusCells(const PointCloud& pts, double radius) : dim_(pts.dim()) {
    per_axis_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(1.0 / radius)));
    // Keep the grid no larger than the point count times a small factor.
    while (per_axis_ > 1 && std::pow(static_cast<double>(per_axis_), dim_) > 4.0 * pts.size() + 64.0) --per_axis_;
    std::size_t cells = 1;
    for (int i = 0; i < dim_; ++i) cells *= per_axis_;
    start_.assign(cells + 1, 0);
    cell_of_.resize(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) {
      cell_of_[p] = cell_index(pts[p]);
      ++start_[cell_of_[p] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    members_.resize(pts.size());
    std::vector<std::size_t> cursor(start_.begin(), start_.end() - 1);
    for (std::size_t p = 0; p < pts.size(); ++p) members_[cursor[cell_of_[p]]++] = static_cast<std::uint32_t>(p);
    // Neighbor offsets per axis, deduplicated for small grids.
    if (per_axis_ >= 3) {
      axis_offsets_ = {-1, 0, 1};
    } else {
      for (std::size_t o = 0; o < per_axis_; ++o) axis_offsets_.push_back(static_cast<long>(o));
    }
  }

  std::size_t cell_count() const noexcept { return start_.size() - 1; }
  std::size_t cell_of(std::size_t p) const { return cell_of_[p]; }

  std::span<const std::uint32_t> members(std::size_t cell) const {
    return {members_.data() + start_[cell], start_[cell + 1] - start_[cell]};
  }

  /// Cells adjacent to `cell` (including itself), each listed once.
  void neighbor_cells(std::size_t cell, std::vector<std::size_t>& out) const {
    out.clear();
    std::vector<long> coord(static_cast<std::size_t>(dim_));
    std::size_t rem = cell;
    for (int a = 0; a < dim_; ++a) {
      coord[static_cast<std::size_t>(a)] = static_cast<long>(rem % per_axis_);
      rem /= per_axis_;
    }
    const std::size_t combos = static_cast<std::size_t>(std::pow(axis_offsets_.size(), dim_) + 0.5);
    const auto m = static_cast<long>(per_axis_);
    for (std::size_t c = 0; c < combos; ++c) {
      std::size_t r = c;
      std::size_t idx = 0;
      std::size_t stride = 1;
      for (int a = 0; a < dim_; ++a) {
        const long off = axis_offsets_[r % axis_offsets_.size()];
        r /= axis_offsets_.size();
        const long q = per_axis_ >= 3 ? ((coord[static_cast<std::size_t>(a)] + off) % m + m) % m : off;
        idx += static_cast<std::size_t>(q) * stride;
        stride *= per_axis_;
      }
      out.push_back(idx);
    }
  }

 private:
  std::size_t cell_index(CSpan x) const {
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (int a = 0; a < dim_; ++a) {
      auto c = static_cast<std::size_t>(x[static_cast<std::size_t>(a)] * static_cast<double>(per_axis_));
      c = std::min(c, per_axis_ - 1);
      idx += c * stride;
      stride *= per_axis_;
    }
    return idx;
  }

  int dim_;
  std::size_t per_axis_ = 1;
  std::vector<std::size_t> start_;
  std::vector<std::size_t> cell_of_;
  std::vector<std::uint32_t> members_;
  std::vector<long> axis_offsets_;
};

}  // namespace detail

/// Random directed geometric graph over `points`: edge x -> y carries
/// Phi(|B(x)(y - x - eps b(x))| / h) whenever that is positive.
inline DirectedGraph build_rdgg(const PointCloud& points, const KernelSpec& kernel, const DriftSpec& drift, double h,
                                double eps, std::uint64_t seed = 0) {
  const int d = points.dim();
  if (points.empty()) throw InvalidArgument("build_rdgg: empty point cloud");
  if (kernel.dim() != d || drift.dim() != d) throw InvalidArgument("build_rdgg: dimension mismatch");
  detail::check_radius(drift, h, eps);
  const std::size_t n = points.size();
  if (n > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("build_rdgg: too many points");
  const auto du = static_cast<std::size_t>(d);

  // Per-source shift eps*b(x) and matrix B(x).
  std::vector<double> shift(n * du, 0.0);
  std::vector<double> mats;
  const bool identity = drift.identity_matrix();
  if (!identity) mats.resize(n * du * du);
  for (std::size_t i = 0; i < n; ++i) {
    if (eps != 0.0) {
      std::span<double> s(shift.data() + i * du, du);
      drift.b().eval(points[i], s);
      for (auto& v : s) v *= eps;
    }
    if (!identity) drift.matrix(points[i], std::span<double>(mats.data() + i * du * du, du * du));
  }

  const double radius = drift.interaction_radius(kernel.support_radius(), h, eps);
  const detail::TorusCells cells(points, radius);

  auto for_each_edge = [&](std::size_t i, auto&& emit) {
    thread_local std::vector<std::size_t> nbr;
    thread_local std::vector<std::pair<std::uint32_t, double>> found;
    found.clear();
    cells.neighbor_cells(cells.cell_of(i), nbr);
    const CSpan x = points[i];
    const CSpan sh(shift.data() + i * du, du);
    const CSpan m = identity ? CSpan{} : CSpan(mats.data() + i * du * du, du * du);
    double disp[8];
    std::vector<double> disp_big(du > 8 ? du : 0);
    double* dp = du > 8 ? disp_big.data() : disp;
    for (std::size_t c : nbr) {
      for (std::uint32_t j : cells.members(c)) {
        const CSpan y = points[j];
        for (std::size_t a = 0; a < du; ++a) dp[a] = min_image(y[a] - x[a]);
        const double w = detail::weight_from_displacement(kernel, CSpan(dp, du), sh, m, h);
        if (w > 0.0) found.emplace_back(j, w);
      }
    }
    std::sort(found.begin(), found.end());
    for (const auto& [j, w] : found) emit(j, w);
  };

  // Two passes (count, then fill) keep peak memory at the size of the result.
  std::vector<std::size_t> ptr(n + 1, 0);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    std::size_t count = 0;
    for_each_edge(static_cast<std::size_t>(ii), [&](std::uint32_t, double) { ++count; });
    ptr[static_cast<std::size_t>(ii) + 1] = count;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ptr[i + 1] == 0) throw DegenerateGraphError("build_rdgg: node " + std::to_string(i) + " has zero degree");
  }
  std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
  std::vector<std::uint32_t> dst(ptr.back());
  std::vector<double> wts(ptr.back());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::size_t pos = ptr[i];
    for_each_edge(i, [&](std::uint32_t j, double w) {
      dst[pos] = j;
      wts[pos] = w;
      ++pos;
    });
  }

  GraphParams params{GraphKind::rdgg, d, h, eps, 0, kernel.name(), seed};
  return DirectedGraph::from_rows(n, std::move(ptr), std::move(dst), std::move(wts), std::move(params), points);
}

namespace detail {

/// Candidate neighbor ordered by (squared distance, index).
struct Neighbor {
  double dist2;
  std::uint32_t index;
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  }
};

inline double squared_distance(CSpan a, CSpan b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

/// Keeps the k smallest candidates in a max-heap.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }
  void offer(Neighbor c) {
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }
  bool full() const noexcept { return heap_.size() == k_; }
  double worst() const { return heap_.front().dist2; }
  std::vector<Neighbor> sorted() {
    std::sort_heap(heap_.begin(), heap_.end());
    return heap_;
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

/// Exact k nearest neighbors (self excluded) of every vector, via a uniform grid
/// over the bounding box with expanding shells. Intended for d <= 3.
inline std::vector<std::vector<Neighbor>> knn_cells(const VectorSet& vs, std::size_t k) {
  const std::size_t n = vs.size();
  const std::size_t d = vs.dim;
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], vs[i][a]);
      hi[a] = std::max(hi[a], vs[i][a]);
    }
  double volume = 1.0;
  double max_extent = 0.0;
  for (std::size_t a = 0; a < d; ++a) max_extent = std::max(max_extent, hi[a] - lo[a]);
  if (max_extent == 0.0) max_extent = 1.0;
  for (std::size_t a = 0; a < d; ++a) volume *= std::max(hi[a] - lo[a], 1e-9 * max_extent);
  const double cell = std::pow(volume * static_cast<double>(std::max<std::size_t>(k, 2)) / static_cast<double>(n),
                               1.0 / static_cast<double>(d));
  std::vector<long> per_axis(d);
  std::size_t total = 1;
  for (std::size_t a = 0; a < d; ++a) {
    per_axis[a] = std::max<long>(1, std::min<long>(1 << 20, static_cast<long>(std::ceil((hi[a] - lo[a]) / cell))));
    total *= static_cast<std::size_t>(per_axis[a]);
  }
  auto coord_of = [&](CSpan x, std::size_t a) {
    const long c = static_cast<long>((x[a] - lo[a]) / cell);
    return std::clamp<long>(c, 0, per_axis[a] - 1);
  };
  std::vector<std::size_t> start(total + 1, 0);
  std::vector<std::size_t> cell_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (std::size_t a = 0; a < d; ++a) {
      idx += static_cast<std::size_t>(coord_of(vs[i], a)) * stride;
      stride *= static_cast<std::size_t>(per_axis[a]);
    }
    cell_of[i] = idx;
    ++start[idx + 1];
  }
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<std::uint32_t> members(n);
  {
    std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) members[cursor[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }
  const long max_ring = *std::max_element(per_axis.begin(), per_axis.end());

  std::vector<std::vector<Neighbor>> result(n);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const CSpan x = vs[i];
    std::vector<long> home(d);
    for (std::size_t a = 0; a < d; ++a) home[a] = coord_of(x, a);
    TopK top(k);
    std::vector<long> off(d);
    for (long ring = 0; ring <= max_ring; ++ring) {
      // Enumerate offsets in [-ring, ring]^d with Chebyshev norm exactly `ring`.
      const long side = 2 * ring + 1;
      std::size_t combos = 1;
      for (std::size_t a = 0; a < d; ++a) combos *= static_cast<std::size_t>(side);
      for (std::size_t c = 0; c < combos; ++c) {
        std::size_t r = c;
        long cheb = 0;
        bool inside = true;
        std::size_t idx = 0;
        std::size_t stride = 1;
        for (std::size_t a = 0; a < d; ++a) {
          off[a] = static_cast<long>(r % static_cast<std::size_t>(side)) - ring;
          r /= static_cast<std::size_t>(side);
          cheb = std::max(cheb, std::abs(off[a]));
          const long q = home[a] + off[a];
          if (q < 0 || q >= per_axis[a]) inside = false;
          idx += static_cast<std::size_t>(std::max<long>(q, 0)) * stride;
          stride *= static_cast<std::size_t>(per_axis[a]);
        }
        if (cheb != ring || !inside) continue;
        for (std::size_t p = start[idx]; p < start[idx + 1]; ++p) {
          const std::uint32_t j = members[p];
          if (j == i) continue;
          top.offer(Neighbor{squared_distance(x, vs[j]), j});
        }
      }
      // Points in shells beyond `ring` are at least ring*cell away.
      if (top.full()) {
        const double reach = static_cast<double>(ring) * cell;
        if (top.worst() < reach * reach) break;
      }
    }
    result[i] = top.sorted();
  }
  return result;
}

inline std::vector<std::vector<Neighbor>> knn_brute_force(const VectorSet& vs, std::size_t k) {
  const std::size_t n = vs.size();
  std::vector<std::vector<Neighbor>> result(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    TopK top(k);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      top.offer(Neighbor{squared_distance(vs[i], vs[j]), static_cast<std::uint32_t>(j)});
    }
    result[i] = top.sorted();
  }
  return result;
}

}  // namespace detail

/// k-nearest-neighbor graph: i -> j for the k nearest j != i, with weight
/// exp(-4 |x_i - x_j|^2 / d_k(x_i)^2). Ties in distance go to the lower index.
inline DirectedGraph build_knn_graph(const VectorSet& vectors, std::size_t k) {
  const std::size_t n = vectors.size();
  if (k < 1) throw InvalidArgument("build_knn_graph: k must be at least 1");
  if (n < k + 1) {
    throw InvalidArgument("build_knn_graph: need at least k+1 = " + std::to_string(k + 1) + " vectors, got " +
                          std::to_string(n));
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("build_knn_graph: too many vectors");
  for (double v : vectors.data) {
    if (!std::isfinite(v)) throw InvalidArgument("build_knn_graph: non-finite coordinate");
  }
  const auto nbrs = vectors.dim <= 3 ? detail::knn_cells(vectors, k) : detail::knn_brute_force(vectors, k);

  std::vector<std::size_t> ptr(n + 1);
  std::vector<std::uint32_t> dst(n * k);
  std::vector<double> wts(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    ptr[i + 1] = (i + 1) * k;
    const double dk2 = nbrs[i].back().dist2;
    if (!(dk2 > 0.0)) {
      throw DegenerateGraphError("build_knn_graph: vector " + std::to_string(i) +
                                 " has zero distance to its k-th nearest neighbor (duplicates)");
    }
    std::vector<std::pair<std::uint32_t, double>> row;
    row.reserve(k);
    for (const auto& nb : nbrs[i]) row.emplace_back(nb.index, std::exp(-4.0 * nb.dist2 / dk2));
    std::sort(row.begin(), row.end());
    for (std::size_t e = 0; e < k; ++e) {
      dst[i * k + e] = row[e].first;
      wts[i * k + e] = row[e].second;
    }
  }
  GraphParams params{GraphKind::knn, static_cast<int>(vectors.dim), 0.0, 0.0, k, "knn-gaussian", 0};
  return DirectedGraph::from_rows(n, std::move(ptr), std::move(dst), std::move(wts), std::move(params));
}

}  // namespace cpr
