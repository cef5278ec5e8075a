#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "protograph/errors.hpp"
#include "protograph/types.hpp"

namespace protograph {

/// A rooted class hierarchy. parent[i] is the parent index, -1 at the root.
struct Taxonomy {
  std::vector<int> parent;
  std::vector<int> depth;

  Index n() const { return static_cast<Index>(parent.size()); }
};

/// Validates the parent vector (single root, indices in range, acyclic)
/// and computes depths.
inline Taxonomy make_taxonomy(std::vector<int> parent) {
  const int n = static_cast<int>(parent.size());
  if (n < 1) throw InputError("taxonomy: empty node set");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (parent[i] < 0) {
      ++roots;
    } else if (parent[i] >= n) {
      throw InputError("taxonomy: parent index out of range at node " + std::to_string(i));
    }
  }
  if (roots != 1) throw InputError("taxonomy: expected exactly one root, found " + std::to_string(roots));

  Taxonomy t;
  t.parent = std::move(parent);
  t.depth.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    // Walk to the nearest node of known depth; more than n hops means a cycle.
    std::vector<int> chain;
    int node = i;
    while (node >= 0 && t.depth[static_cast<std::size_t>(node)] < 0) {
      chain.push_back(node);
      if (static_cast<int>(chain.size()) > n) throw InputError("taxonomy: cycle detected at node " + std::to_string(i));
      node = t.parent[static_cast<std::size_t>(node)];
    }
    int d = node < 0 ? -1 : t.depth[static_cast<std::size_t>(node)];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      t.depth[static_cast<std::size_t>(*it)] = ++d;
    }
  }
  return t;
}

enum class TaxonomyDistance {
  PathLength,     // tree distance via the lowest common ancestor
  AncestorCount,  // complemented count of shared ancestors (self inclusive)
};

namespace detail {

inline int lca(const Taxonomy& t, int a, int b) {
  while (t.depth[static_cast<std::size_t>(a)] > t.depth[static_cast<std::size_t>(b)]) a = t.parent[static_cast<std::size_t>(a)];
  while (t.depth[static_cast<std::size_t>(b)] > t.depth[static_cast<std::size_t>(a)]) b = t.parent[static_cast<std::size_t>(b)];
  while (a != b) {
    a = t.parent[static_cast<std::size_t>(a)];
    b = t.parent[static_cast<std::size_t>(b)];
  }
  return a;
}

}  // namespace detail

/// Pairwise class distances over the hierarchy. PathLength is the edge count
/// of the tree path. AncestorCount counts ancestors shared by the two nodes
/// (both paths root..node inclusive, so |shared| = depth(lca)+1) and
/// complements against the maximum over all pairs, turning shared ancestry
/// into a distance. Diagonal is zero in both modes.
template <typename Scalar = double>
DistanceMatrix<Scalar> taxonomy_distance(const Taxonomy& t, TaxonomyDistance mode) {
  const int n = static_cast<int>(t.n());
  if (n < 2) throw InputError("taxonomy_distance: need at least 2 nodes");
  Matrix<int> common(n, n);
  DistanceMatrix<Scalar> d = DistanceMatrix<Scalar>::Zero(n, n);
  int max_common = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int anc = detail::lca(t, i, j);
      const int anc_depth = t.depth[static_cast<std::size_t>(anc)];
      common(i, j) = anc_depth + 1;
      max_common = std::max(max_common, common(i, j));
      if (mode == TaxonomyDistance::PathLength) {
        const Scalar dist = static_cast<Scalar>(t.depth[static_cast<std::size_t>(i)] +
                                                t.depth[static_cast<std::size_t>(j)] - 2 * anc_depth);
        d(i, j) = dist;
        d(j, i) = dist;
      }
    }
  }
  if (mode == TaxonomyDistance::AncestorCount) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const Scalar dist = static_cast<Scalar>(max_common - common(i, j));
        d(i, j) = dist;
        d(j, i) = dist;
      }
    }
  }
  return d;
}

struct NamedTaxonomy {
  Taxonomy tree;
  std::vector<std::string> names;
};

/// Parses one node per line: "<node_id>\t<parent_id|ROOT>". Node order in the
/// file fixes the class index order.
inline NamedTaxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  std::vector<std::string> names;
  std::vector<std::string> parent_names;
  std::unordered_map<std::string, int> index_of;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError(path + ": expected '<node>\\t<parent|ROOT>', got: " + line);
    std::string node = line.substr(0, tab);
    std::string parent = line.substr(tab + 1);
    if (!parent.empty() && parent.back() == '\r') parent.pop_back();
    if (index_of.count(node)) throw InputError(path + ": duplicate node id " + node);
    index_of[node] = static_cast<int>(names.size());
    names.push_back(std::move(node));
    parent_names.push_back(std::move(parent));
  }
  std::vector<int> parent(names.size(), -1);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (parent_names[i] == "ROOT") continue;
    const auto it = index_of.find(parent_names[i]);
    if (it == index_of.end()) throw InputError(path + ": unknown parent id " + parent_names[i]);
    parent[i] = it->second;
  }
  return {make_taxonomy(std::move(parent)), std::move(names)};
}

}  // namespace protograph
