#pragma once

// Class-correlation graphs: pairwise distances, the decay-exponential
// transform a_ij = decay^(d_ij - min_{k != i} d_ik) with unit diagonal,
// additive symmetrization, descriptive statistics, Mantel permutation
// tests, and uniform/random baseline graphs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "protograph/errors.hpp"
#include "protograph/rng.hpp"
#include "protograph/types.hpp"

namespace protograph {

/// One class-correlation matrix. `decay` records the transform base
/// (0 when the entries were not produced by kg_transform).
template <typename Scalar>
struct CorrelationGraph {
  Matrix<Scalar> a;
  Scalar decay{0};
  bool symmetrized = false;

  Index n() const { return a.rows(); }
};

struct GraphStats {
  double min = 0;
  double avg = 0;
  double max = 0;
  double stddev = 0;  // population
};

struct MantelResult {
  double r = 0;
  double p = 1;
  int n_permutations = 0;
  std::uint64_t seed = 0;
};

enum class BaselineKind { Uniform, Random };

template <typename Derived>
void validate_embeddings(const Eigen::MatrixBase<Derived>& e) {
  if (e.rows() < 2) throw InputError("embeddings: need at least 2 classes, got " + std::to_string(e.rows()));
  if (e.cols() < 1) throw InputError("embeddings: need at least 1 dimension");
  if (!e.allFinite()) throw InputError("embeddings: non-finite value");
}

template <typename Derived>
void validate_distance_matrix(const Eigen::MatrixBase<Derived>& d) {
  using Scalar = typename Derived::Scalar;
  if (d.rows() != d.cols()) throw InputError("distance matrix: not square");
  if (!d.allFinite()) throw InputError("distance matrix: non-finite value");
  for (Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != Scalar(0)) throw InputError("distance matrix: nonzero diagonal at " + std::to_string(i));
    for (Index j = 0; j < d.cols(); ++j) {
      if (d(i, j) < Scalar(0)) throw InputError("distance matrix: negative entry");
      if (d(i, j) != d(j, i)) throw InputError("distance matrix: asymmetric entry");
    }
  }
}

/// d_ij = ||E_i - E_j||_2 over embedding rows.
template <typename Derived>
DistanceMatrix<typename Derived::Scalar> pairwise_euclidean(const Eigen::MatrixBase<Derived>& embeddings) {
  using Scalar = typename Derived::Scalar;
  validate_embeddings(embeddings);
  const Matrix<Scalar> e = embeddings;
  const Index n = e.rows();
  DistanceMatrix<Scalar> d = DistanceMatrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Scalar dist = (e.row(i) - e.row(j)).norm();
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

/// Decay-exponential correlation transform. Row-wise: the exponent is the
/// distance in excess of the row's nearest off-diagonal neighbor, so the
/// nearest neighbor maps to exactly 1 and correlations decrease strictly
/// with distance. The result is asymmetric in general; see symmetrize().
/// Underflowed powers are clamped to the smallest positive normal value so
/// off-diagonals stay in (0, 1].
template <typename Derived, typename DecayT>
CorrelationGraph<typename Derived::Scalar> kg_transform(const Eigen::MatrixBase<Derived>& distances,
                                                        DecayT decay_in) {
  using Scalar = typename Derived::Scalar;
  const Scalar decay = static_cast<Scalar>(decay_in);
  if (!(decay > Scalar(0) && decay < Scalar(1))) {
    throw ConfigError("kg_transform: decay must lie in (0,1), got " + std::to_string(static_cast<double>(decay)));
  }
  const Matrix<Scalar> d = distances;
  const Index n = d.rows();
  if (n < 2) throw InputError("kg_transform: need at least 2 classes");
  validate_distance_matrix(d);

  CorrelationGraph<Scalar> g;
  g.a.resize(n, n);
  g.decay = decay;
  g.symmetrized = false;
  for (Index i = 0; i < n; ++i) {
    Scalar row_min = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < n; ++k) {
      if (k != i) row_min = std::min(row_min, d(i, k));
    }
    for (Index j = 0; j < n; ++j) {
      if (j == i) {
        g.a(i, j) = Scalar(1);
        continue;
      }
      const Scalar value = std::pow(decay, d(i, j) - row_min);
      g.a(i, j) = std::max(value, std::numeric_limits<Scalar>::min());
    }
  }
  return g;
}

/// Additive symmetrization a'_ij = a_ij + a_ji off the diagonal, diagonal
/// reset to 1. The globally closest pair is mutually nearest, so the
/// symmetrized maximum reaches exactly 2.
template <typename Scalar>
CorrelationGraph<Scalar> symmetrize(const CorrelationGraph<Scalar>& g) {
  if (g.symmetrized) throw InputError("symmetrize: graph already symmetrized");
  CorrelationGraph<Scalar> out;
  out.a = g.a + g.a.transpose();
  out.a.diagonal().setConstant(Scalar(1));
  out.decay = g.decay;
  out.symmetrized = true;
  return out;
}

/// min/avg/max and population standard deviation, by default over the
/// off-diagonal entries only (the diagonal is a convention, not data).
template <typename Derived>
GraphStats matrix_stats(const Eigen::MatrixBase<Derived>& m, bool include_diagonal = false) {
  const Index n = m.rows();
  if (n < 2 || m.cols() != n) throw InputError("matrix_stats: need a square matrix with n >= 2");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j && !include_diagonal) continue;
      values.push_back(static_cast<double>(m(i, j)));
    }
  }
  GraphStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  if (s.min == s.max) {  // exact: constant entries have zero spread
    s.avg = s.min;
    s.stddev = 0.0;
    return s;
  }
  double sum = 0;
  for (double v : values) sum += v;
  s.avg = sum / static_cast<double>(values.size());
  double sq = 0;
  for (double v : values) sq += (v - s.avg) * (v - s.avg);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

namespace detail {

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw InputError("mantel: constant off-diagonal entries, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

/// One-sided (greater) Mantel permutation test between two distance
/// matrices: r is the Pearson correlation of the strict upper triangles,
/// p = (#{r_perm >= r_obs} + 1) / (n_perm + 1) under random relabelings of
/// the second matrix (rows and columns permuted jointly). The identity
/// permutation is redrawn, so the p floor of 1/(n_perm+1) is attained
/// exactly on identical automorphism-free inputs.
template <typename D1, typename D2>
MantelResult mantel(const Eigen::MatrixBase<D1>& d1_in, const Eigen::MatrixBase<D2>& d2_in,
                    int n_permutations, std::uint64_t seed) {
  if (d1_in.rows() != d2_in.rows() || d1_in.cols() != d2_in.cols()) {
    throw InputError("mantel: size mismatch");
  }
  if (n_permutations < 1) throw InputError("mantel: need at least 1 permutation");
  const Matrixd d1 = d1_in.template cast<double>();
  const Matrixd d2 = d2_in.template cast<double>();
  validate_distance_matrix(d1);
  validate_distance_matrix(d2);
  const Index n = d1.rows();
  if (n < 3) throw InputError("mantel: need at least 3 nodes");

  std::vector<double> v1, v2;
  v1.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  v2.reserve(v1.capacity());
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      v1.push_back(d1(i, j));
      v2.push_back(d2(i, j));
    }
  }
  const double r_obs = detail::pearson(v1, v2);

  Rng rng(seed);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::vector<double> v2p(v2.size());
  int at_least = 0;
  for (int t = 0; t < n_permutations; ++t) {
    bool identity = true;
    while (identity) {
      for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
      rng.shuffle(perm);
      for (Index i = 0; i < n; ++i) {
        if (perm[static_cast<std::size_t>(i)] != i) {
          identity = false;
          break;
        }
      }
    }
    std::size_t idx = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        v2p[idx++] = d2(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      }
    }
    if (detail::pearson(v1, v2p) >= r_obs) ++at_least;
  }

  MantelResult res;
  res.r = r_obs;
  res.p = static_cast<double>(at_least + 1) / static_cast<double>(n_permutations + 1);
  res.n_permutations = n_permutations;
  res.seed = seed;
  return res;
}

/// Reference graphs for ablations: uniform sets every entry (diagonal
/// included) to 1/n; random draws every entry i.i.d. from U(0,1).
template <typename Scalar = double>
CorrelationGraph<Scalar> baseline_graph(Index n, BaselineKind kind, std::uint64_t seed = 0) {
  if (n < 2) throw InputError("baseline_graph: need at least 2 classes");
  CorrelationGraph<Scalar> g;
  g.symmetrized = false;
  if (kind == BaselineKind::Uniform) {
    g.a = Matrix<Scalar>::Constant(n, n, Scalar(1) / static_cast<Scalar>(n));
  } else {
    Rng rng(seed);
    g.a.resize(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) g.a(i, j) = static_cast<Scalar>(rng.uniform());
    }
  }
  return g;
}

/// Adds symmetric Gaussian noise to a distance matrix (clamped at zero,
/// diagonal untouched). Used to build degraded knowledge sources for
/// ensemble experiments.
template <typename Derived>
DistanceMatrix<typename Derived::Scalar> perturb_distances(const Eigen::MatrixBase<Derived>& distances,
                                                           double noise_std, std::uint64_t seed) {
  using Scalar = typename Derived::Scalar;
  DistanceMatrix<Scalar> d = distances;
  validate_distance_matrix(d);
  Rng rng(seed);
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = i + 1; j < d.cols(); ++j) {
      const Scalar noisy = std::max(Scalar(0), d(i, j) + static_cast<Scalar>(noise_std * rng.gaussian()));
      d(i, j) = noisy;
      d(j, i) = noisy;
    }
  }
  return d;
}

}  // namespace protograph
