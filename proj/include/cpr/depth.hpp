#pragma once

// In-class data depth by localized PageRank on a k-NN graph.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpr/error.hpp"
#include "cpr/graph.hpp"
#include "cpr/pagerank.hpp"

namespace cpr {

struct ClassDepth {
  long label = 0;
  std::size_t members = 0;
  /// All node indices by descending r, ties by ascending index.
  std::vector<std::size_t> order;
  /// The first `top` members of the class in `order`.
  std::vector<std::size_t> top;
  std::vector<double> r;
};

struct DepthResult {
  std::vector<ClassDepth> classes;
  std::vector<std::string> warnings;
};

inline std::vector<std::size_t> rank_order(std::span<const double> r) {
  std::vector<std::size_t> idx(r.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return r[a] > r[b]; });
  return idx;
}

/// Localized-PageRank depth of every class on an existing graph.
inline DepthResult depth_ranking(const DirectedGraph& g, std::span<const long> labels, double alpha,
                                 std::size_t top = 11, std::span<const long> classes = {}) {
  if (labels.size() != g.size()) throw InvalidArgument("depth_ranking: one label per node required");
  std::map<long, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  std::vector<long> wanted(classes.begin(), classes.end());
  if (wanted.empty())
    for (const auto& [lab, idx] : members) wanted.push_back(lab);

  DepthResult out;
  for (long lab : wanted) {
    const auto it = members.find(lab);
    if (it == members.end() || it->second.empty()) {
      out.warnings.push_back("class " + std::to_string(lab) + " has no members; skipped");
      continue;
    }
    const RankResult res = localized_pagerank(g, alpha, it->second);
    ClassDepth cd;
    cd.label = lab;
    cd.members = it->second.size();
    cd.order = rank_order(res.r);
    for (std::size_t i : cd.order) {
      if (cd.top.size() >= top) break;
      if (labels[i] == lab) cd.top.push_back(i);
    }
    cd.r = res.r;
    out.classes.push_back(std::move(cd));
  }
  return out;
}

/// Builds the k-NN graph once and runs localized PageRank for each class with
/// teleportation uniform on that class. `classes` selects which labels to rank
/// (all distinct labels, ascending, when empty); labels with no members are
/// skipped with a warning.
inline DepthResult depth_ranking(const VectorSet& vectors, std::span<const long> labels, std::size_t k, double alpha,
                                 std::size_t top = 11, std::span<const long> classes = {}) {
  if (labels.size() != vectors.size()) throw InvalidArgument("depth_ranking: one label per vector required");
  if (labels.empty()) throw InvalidArgument("depth_ranking: no labeled vectors");
  const DirectedGraph g = build_knn_graph(vectors, k);
  return depth_ranking(g, labels, alpha, top, classes);
}

}  // namespace cpr
