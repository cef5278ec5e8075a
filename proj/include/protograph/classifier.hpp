#pragma once

// Prototype scoring: per-graph similarity between a query and each class
// prototype, ensemble combination across graphs, softmax probabilities,
// and deterministic top-n prediction. Similarity gradients are with
// respect to the prototype row; queries are fixed features.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "protograph/errors.hpp"
#include "protograph/types.hpp"

namespace protograph {

enum class Similarity { Inner, Cosine, Pearson };
enum class Ensemble { Mean, Max, None };

inline Similarity similarity_from_string(const std::string& s) {
  if (s == "inner") return Similarity::Inner;
  if (s == "cosine") return Similarity::Cosine;
  if (s == "pearson") return Similarity::Pearson;
  throw ConfigError("unknown similarity '" + s + "' (expected inner|cosine|pearson)");
}

inline std::string to_string(Similarity s) {
  switch (s) {
    case Similarity::Inner: return "inner";
    case Similarity::Cosine: return "cosine";
    default: return "pearson";
  }
}

inline Ensemble ensemble_from_string(const std::string& s) {
  if (s == "mean") return Ensemble::Mean;
  if (s == "max") return Ensemble::Max;
  if (s == "none") return Ensemble::None;
  throw ConfigError("unknown ensemble '" + s + "' (expected mean|max|none)");
}

inline std::string to_string(Ensemble e) {
  switch (e) {
    case Ensemble::Mean: return "mean";
    case Ensemble::Max: return "max";
    default: return "none";
  }
}

struct ClassifierConfig {
  Similarity similarity = Similarity::Cosine;
  Ensemble ensemble = Ensemble::Mean;
};

namespace detail {

// Cosine of two vectors with the zero-norm convention: score 0, flagged.
template <typename Scalar>
Scalar cosine_score(const Vector<Scalar>& a, const Vector<Scalar>& b, bool* degenerate) {
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) {
    if (degenerate) *degenerate = true;
    return Scalar(0);
  }
  return a.dot(b) / (na * nb);
}

// d cos(a,b) / d b at fixed a; zero when either norm vanishes.
template <typename Scalar>
Vector<Scalar> cosine_grad(const Vector<Scalar>& a, const Vector<Scalar>& b) {
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) return Vector<Scalar>::Zero(b.size());
  const Scalar s = a.dot(b) / (na * nb);
  return a / (na * nb) - (s / (nb * nb)) * b;
}

}  // namespace detail

/// Score of prototype w for query x. Degenerate inputs (zero vector for
/// cosine, constant vector for pearson) score 0 by convention and set
/// *degenerate when a flag is supplied.
template <typename Scalar>
Scalar similarity_score(const Vector<Scalar>& x, const Vector<Scalar>& w, Similarity kind,
                        bool* degenerate = nullptr) {
  if (x.size() != w.size()) throw InputError("similarity: dimension mismatch");
  if (x.size() == 0) throw InputError("similarity: empty vectors");
  switch (kind) {
    case Similarity::Inner:
      return x.dot(w);
    case Similarity::Cosine:
      return detail::cosine_score<Scalar>(x, w, degenerate);
    default: {
      const Vector<Scalar> xc = x.array() - x.mean();
      const Vector<Scalar> wc = w.array() - w.mean();
      return detail::cosine_score<Scalar>(xc, wc, degenerate);
    }
  }
}

/// Gradient of similarity_score with respect to w (zero on degenerate
/// inputs, matching the score-0 convention).
template <typename Scalar>
Vector<Scalar> similarity_grad(const Vector<Scalar>& x, const Vector<Scalar>& w, Similarity kind) {
  if (x.size() != w.size()) throw InputError("similarity: dimension mismatch");
  if (x.size() == 0) throw InputError("similarity: empty vectors");
  switch (kind) {
    case Similarity::Inner:
      return x;
    case Similarity::Cosine:
      return detail::cosine_grad<Scalar>(x, w);
    default: {
      // w enters through the centering projector P = I - 11^T/F, which is
      // symmetric, so the chain rule subtracts the mean of the inner grad.
      const Vector<Scalar> xc = x.array() - x.mean();
      const Vector<Scalar> wc = w.array() - w.mean();
      Vector<Scalar> g = detail::cosine_grad<Scalar>(xc, wc);
      return g.array() - g.mean();
    }
  }
}

/// Per-graph and combined scores for one query against M prototype sets.
template <typename Scalar>
struct ScoreBreakdown {
  Matrix<Scalar> per_graph;   // M x K
  Vector<Scalar> combined;    // K
  std::vector<Index> winner;  // K entries, Max ensemble only: graph index that won each class
  Index degenerate = 0;       // count of zero-norm score evaluations
};

/// Scores every prototype row of every graph against the query and
/// combines across graphs: mean averages, max keeps the per-class maximum
/// (ties to the lowest graph index), none passes the single graph through.
template <typename Scalar>
ScoreBreakdown<Scalar> score_query(const std::vector<PrototypeSet<Scalar>>& prototypes,
                                   const Vector<Scalar>& x, const ClassifierConfig& cfg) {
  const Index m_count = static_cast<Index>(prototypes.size());
  if (m_count == 0) throw InputError("score_query: no prototype sets");
  if (cfg.ensemble == Ensemble::None && m_count != 1) {
    throw ConfigError("ensemble 'none' requires exactly 1 graph, got " + std::to_string(m_count));
  }
  const Index k_count = prototypes.front().rows();
  const Index f = prototypes.front().cols();
  if (x.size() != f) throw InputError("score_query: query dimension mismatch");

  ScoreBreakdown<Scalar> out;
  out.per_graph.resize(m_count, k_count);
  for (Index m = 0; m < m_count; ++m) {
    const PrototypeSet<Scalar>& w = prototypes[static_cast<std::size_t>(m)];
    if (w.rows() != k_count || w.cols() != f) throw InputError("score_query: prototype set shape mismatch");
    for (Index k = 0; k < k_count; ++k) {
      bool degenerate = false;
      const Vector<Scalar> row = w.row(k).transpose();
      out.per_graph(m, k) = similarity_score<Scalar>(x, row, cfg.similarity, &degenerate);
      if (degenerate) ++out.degenerate;
    }
  }

  switch (cfg.ensemble) {
    case Ensemble::Mean:
      out.combined = out.per_graph.colwise().mean().transpose();
      break;
    case Ensemble::Max: {
      out.combined.resize(k_count);
      out.winner.assign(static_cast<std::size_t>(k_count), 0);
      for (Index k = 0; k < k_count; ++k) {
        Index best = 0;
        for (Index m = 1; m < m_count; ++m) {
          if (out.per_graph(m, k) > out.per_graph(best, k)) best = m;
        }
        out.winner[static_cast<std::size_t>(k)] = best;
        out.combined(k) = out.per_graph(best, k);
      }
      break;
    }
    default:
      out.combined = out.per_graph.row(0).transpose();
      break;
  }
  return out;
}

/// Routes dL/d(combined score) back to per-graph prototype gradients.
/// Mean splits the signal 1/M to every graph; max sends it only to the
/// graph that won each class (the subgradient at the selected branch).
template <typename Scalar>
std::vector<Matrix<Scalar>> score_backward(const std::vector<PrototypeSet<Scalar>>& prototypes,
                                           const Vector<Scalar>& x,
                                           const ScoreBreakdown<Scalar>& fwd,
                                           const Vector<Scalar>& dcombined,
                                           const ClassifierConfig& cfg) {
  const Index m_count = static_cast<Index>(prototypes.size());
  const Index k_count = fwd.per_graph.cols();
  if (dcombined.size() != k_count) throw InputError("score_backward: gradient size mismatch");

  std::vector<Matrix<Scalar>> dproto;
  dproto.reserve(static_cast<std::size_t>(m_count));
  for (Index m = 0; m < m_count; ++m) {
    dproto.push_back(Matrix<Scalar>::Zero(k_count, prototypes.front().cols()));
  }
  for (Index k = 0; k < k_count; ++k) {
    if (dcombined(k) == Scalar(0)) continue;
    if (cfg.ensemble == Ensemble::Max) {
      const Index m = fwd.winner[static_cast<std::size_t>(k)];
      const Vector<Scalar> row = prototypes[static_cast<std::size_t>(m)].row(k).transpose();
      dproto[static_cast<std::size_t>(m)].row(k) =
          dcombined(k) * similarity_grad<Scalar>(x, row, cfg.similarity).transpose();
    } else {
      const Scalar scale = (cfg.ensemble == Ensemble::Mean)
                               ? dcombined(k) / static_cast<Scalar>(m_count)
                               : dcombined(k);
      for (Index m = 0; m < m_count; ++m) {
        const Vector<Scalar> row = prototypes[static_cast<std::size_t>(m)].row(k).transpose();
        dproto[static_cast<std::size_t>(m)].row(k) =
            scale * similarity_grad<Scalar>(x, row, cfg.similarity).transpose();
      }
    }
  }
  return dproto;
}

/// Numerically stable softmax.
template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& scores) {
  if (scores.size() == 0) throw InputError("softmax: empty input");
  Vector<Scalar> p = (scores.array() - scores.maxCoeff()).exp();
  return p / p.sum();
}

/// Indices of the n largest scores, best first; equal scores keep index
/// order so results are deterministic.
template <typename Scalar>
std::vector<Index> top_n(const Vector<Scalar>& scores, Index n) {
  if (n < 1 || n > scores.size()) throw InputError("top_n: n out of range");
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  order.resize(static_cast<std::size_t>(n));
  return order;
}

template <typename Scalar>
Index predict(const Vector<Scalar>& scores) {
  return top_n(scores, 1)[0];
}

}  // namespace protograph
