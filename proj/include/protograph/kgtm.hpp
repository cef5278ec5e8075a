#pragma once

// Gated graph propagation of per-class hidden states over one correlation
// graph. Forward runs T rounds of neighbor aggregation + GRU gating and
// maps [h_T, h_0] through an affine output layer to class prototypes.
// Backward is exact reverse-mode differentiation of that map, written by
// hand; the adjacency matrix is a constant (no gradient to the graph).

#include <cstdint>
#include <string>
#include <vector>

#include "protograph/errors.hpp"
#include "protograph/graph.hpp"
#include "protograph/rng.hpp"
#include "protograph/types.hpp"

namespace protograph {

struct KgtmConfig {
  Index n_classes = 0;   // K
  Index hidden_dim = 0;  // d; 0 resolves to feature_dim
  Index feature_dim = 0;
  Index steps = 2;  // T
  std::uint64_t init_seed = 0;
  double init_scale = -1;  // < 0 resolves to 1/sqrt(d)
};

/// Fills in the dependent defaults and validates ranges.
inline KgtmConfig resolved(KgtmConfig cfg) {
  if (cfg.n_classes < 2) throw ConfigError("kgtm: n_classes must be >= 2");
  if (cfg.feature_dim < 1) throw ConfigError("kgtm: feature_dim must be >= 1");
  if (cfg.steps < 1) throw ConfigError("kgtm: steps must be >= 1");
  if (cfg.hidden_dim == 0) cfg.hidden_dim = cfg.feature_dim;
  if (cfg.hidden_dim < 1) throw ConfigError("kgtm: hidden_dim must be >= 1");
  if (cfg.init_scale < 0) cfg.init_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  return cfg;
}

/// Learnable tensors. The gate weights act on the 2d aggregation vector
/// (wz/wr/w) and the previous hidden state (uz/ur/u); o plus the ob bias
/// map [h_T, h_0] to feature space; hinit holds the trainable initial
/// states. ob is stored as an F x 1 matrix so every tensor shares one
/// shape type (uniform optimizer/checkpoint handling).
template <typename Scalar>
struct KgtmParams {
  Matrix<Scalar> wz, wr, w;  // d x 2d
  Matrix<Scalar> uz, ur, u;  // d x d
  Matrix<Scalar> o;          // F x 2d
  Matrix<Scalar> ob;         // F x 1
  Matrix<Scalar> hinit;      // K x d
};

/// Gradient container: shapes mirror the parameters exactly.
template <typename Scalar>
using KgtmGrads = KgtmParams<Scalar>;

/// Applies fn(name, tensor) to every parameter tensor in a fixed order.
/// The order is part of the determinism contract (initialization,
/// optimizer traversal, and checkpoints all rely on it).
template <typename Scalar, typename Fn>
void visit_tensors(KgtmParams<Scalar>& p, Fn&& fn) {
  fn("wz", p.wz);
  fn("wr", p.wr);
  fn("w", p.w);
  fn("uz", p.uz);
  fn("ur", p.ur);
  fn("u", p.u);
  fn("o", p.o);
  fn("ob", p.ob);
  fn("hinit", p.hinit);
}

template <typename Scalar, typename Fn>
void visit_tensors(const KgtmParams<Scalar>& p, Fn&& fn) {
  fn("wz", p.wz);
  fn("wr", p.wr);
  fn("w", p.w);
  fn("uz", p.uz);
  fn("ur", p.ur);
  fn("u", p.u);
  fn("o", p.o);
  fn("ob", p.ob);
  fn("hinit", p.hinit);
}

template <typename Scalar>
KgtmParams<Scalar> zeros_like(const KgtmParams<Scalar>& p) {
  KgtmParams<Scalar> z;
  visit_tensors(p, [&](const char* name, const Matrix<Scalar>& t) {
    visit_tensors(z, [&](const char* zname, Matrix<Scalar>& zt) {
      if (std::string(zname) == name) zt = Matrix<Scalar>::Zero(t.rows(), t.cols());
    });
  });
  return z;
}

/// Weight tensors and hinit drawn i.i.d. Gaussian(0, init_scale^2) in a
/// fixed tensor and row-major entry order; the output bias starts at zero.
template <typename Scalar = double>
KgtmParams<Scalar> init_params(const KgtmConfig& cfg_in) {
  const KgtmConfig cfg = resolved(cfg_in);
  const Index k = cfg.n_classes;
  const Index d = cfg.hidden_dim;
  const Index f = cfg.feature_dim;

  KgtmParams<Scalar> p;
  p.wz.resize(d, 2 * d);
  p.wr.resize(d, 2 * d);
  p.w.resize(d, 2 * d);
  p.uz.resize(d, d);
  p.ur.resize(d, d);
  p.u.resize(d, d);
  p.o.resize(f, 2 * d);
  p.ob = Matrix<Scalar>::Zero(f, 1);
  p.hinit.resize(k, d);

  Rng rng(cfg.init_seed);
  const Scalar scale = static_cast<Scalar>(cfg.init_scale);
  visit_tensors(p, [&](const char* name, Matrix<Scalar>& t) {
    if (std::string(name) == "ob") return;
    for (Index i = 0; i < t.rows(); ++i) {
      for (Index j = 0; j < t.cols(); ++j) t(i, j) = scale * static_cast<Scalar>(rng.gaussian());
    }
  });
  return p;
}

/// Neighbor aggregation: row k concatenates the out-neighbor mix
/// sum_k' a[k][k'] h_k' with the in-neighbor mix sum_k' a[k'][k] h_k'.
template <typename Scalar>
Matrix<Scalar> aggregate(const CorrelationGraph<Scalar>& graph, const Matrix<Scalar>& h) {
  if (graph.n() != h.rows()) throw InputError("aggregate: graph size does not match state rows");
  const Index k = h.rows();
  const Index d = h.cols();
  Matrix<Scalar> out(k, 2 * d);
  out.leftCols(d) = graph.a * h;
  out.rightCols(d) = graph.a.transpose() * h;
  return out;
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& x) {
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

// One gated update with the gate activations exposed for backward.
template <typename Scalar>
struct GruStep {
  Matrix<Scalar> z, r, c, h;  // each K x d
};

template <typename Scalar>
GruStep<Scalar> gru_gates(const KgtmParams<Scalar>& p, const Matrix<Scalar>& agg,
                          const Matrix<Scalar>& h_prev) {
  GruStep<Scalar> s;
  s.z = sigmoid<Scalar>(agg * p.wz.transpose() + h_prev * p.uz.transpose());
  s.r = sigmoid<Scalar>(agg * p.wr.transpose() + h_prev * p.ur.transpose());
  s.c = (agg * p.w.transpose() + (s.r.array() * h_prev.array()).matrix() * p.u.transpose())
            .array()
            .tanh()
            .matrix();
  s.h = ((Scalar(1) - s.z.array()) * h_prev.array() + s.z.array() * s.c.array()).matrix();
  return s;
}

}  // namespace detail

/// One GRU-gated state update:
///   z = sigma(Wz a + Uz h), r = sigma(Wr a + Ur h),
///   c = tanh(W a + U (r .* h)), h' = (1-z) .* h + z .* c.
template <typename Scalar>
Matrix<Scalar> gru_step(const KgtmParams<Scalar>& p, const Matrix<Scalar>& agg,
                        const Matrix<Scalar>& h_prev) {
  if (agg.rows() != h_prev.rows() || agg.cols() != 2 * h_prev.cols()) {
    throw InputError("gru_step: aggregation shape does not match state");
  }
  return detail::gru_gates<Scalar>(p, agg, h_prev).h;
}

/// Everything backward needs: states h^0..h^T, per-step aggregations and
/// gate activations, and the resulting prototypes.
template <typename Scalar>
struct Trajectory {
  std::vector<Matrix<Scalar>> h;                 // T+1 entries, K x d
  std::vector<Matrix<Scalar>> agg;               // T entries, K x 2d
  std::vector<detail::GruStep<Scalar>> gates;    // T entries
  PrototypeSet<Scalar> wstar;                    // K x F
};

/// T rounds of aggregate + gru_step from h^0 = hinit, then
/// w*_k = O [h_k^T, h_k^0] + ob.
template <typename Scalar>
Trajectory<Scalar> forward(const KgtmConfig& cfg_in, const KgtmParams<Scalar>& p,
                           const CorrelationGraph<Scalar>& graph) {
  const KgtmConfig cfg = resolved(cfg_in);
  if (graph.n() != cfg.n_classes) throw InputError("forward: graph size does not match n_classes");
  if (p.hinit.rows() != cfg.n_classes || p.hinit.cols() != cfg.hidden_dim) {
    throw InputError("forward: hinit shape does not match config");
  }

  Trajectory<Scalar> traj;
  traj.h.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  traj.h.push_back(p.hinit);
  for (Index t = 1; t <= cfg.steps; ++t) {
    traj.agg.push_back(aggregate<Scalar>(graph, traj.h.back()));
    traj.gates.push_back(detail::gru_gates<Scalar>(p, traj.agg.back(), traj.h.back()));
    traj.h.push_back(traj.gates.back().h);
    if (!traj.h.back().allFinite()) {
      throw DivergenceError("forward: non-finite hidden state at step " + std::to_string(t));
    }
  }

  const Index k = cfg.n_classes;
  const Index d = cfg.hidden_dim;
  Matrix<Scalar> cat(k, 2 * d);
  cat.leftCols(d) = traj.h.back();
  cat.rightCols(d) = traj.h.front();
  traj.wstar = cat * p.o.transpose();
  traj.wstar.rowwise() += p.ob.col(0).transpose();
  if (!traj.wstar.allFinite()) throw DivergenceError("forward: non-finite prototypes");
  return traj;
}

/// Exact reverse-mode gradients of forward for every parameter tensor,
/// given dL/dW* and the forward trajectory. Unrolls the T steps in
/// reverse; within each step the chain runs candidate, then reset gate,
/// then update gate, then the aggregation back to the previous state.
template <typename Scalar>
KgtmGrads<Scalar> backward(const KgtmConfig& cfg_in, const KgtmParams<Scalar>& p,
                           const CorrelationGraph<Scalar>& graph, const Trajectory<Scalar>& traj,
                           const Matrix<Scalar>& dwstar) {
  const KgtmConfig cfg = resolved(cfg_in);
  const Index k = cfg.n_classes;
  const Index d = cfg.hidden_dim;
  const Index f = cfg.feature_dim;
  const std::size_t t_steps = static_cast<std::size_t>(cfg.steps);
  if (traj.h.size() != t_steps + 1 || traj.agg.size() != t_steps || traj.gates.size() != t_steps ||
      traj.h.front().rows() != k || traj.h.front().cols() != d || graph.n() != k) {
    throw InputError("backward: trajectory does not match config/graph");
  }
  if (dwstar.rows() != k || dwstar.cols() != f) throw InputError("backward: dL/dW* shape mismatch");

  KgtmGrads<Scalar> g = zeros_like(p);

  Matrix<Scalar> cat(k, 2 * d);
  cat.leftCols(d) = traj.h.back();
  cat.rightCols(d) = traj.h.front();
  g.o = dwstar.transpose() * cat;
  g.ob = dwstar.colwise().sum().transpose();

  const Matrix<Scalar> dcat = dwstar * p.o;
  Matrix<Scalar> dh = dcat.leftCols(d);              // flows into h^T
  const Matrix<Scalar> dh0_direct = dcat.rightCols(d);  // direct output-layer path to h^0

  for (std::size_t t = t_steps; t >= 1; --t) {
    const Matrix<Scalar>& h_prev = traj.h[t - 1];
    const Matrix<Scalar>& agg = traj.agg[t - 1];
    const detail::GruStep<Scalar>& s = traj.gates[t - 1];

    const Matrix<Scalar> dz = (dh.array() * (s.c.array() - h_prev.array())).matrix();
    const Matrix<Scalar> dc = (dh.array() * s.z.array()).matrix();
    Matrix<Scalar> dh_prev = (dh.array() * (Scalar(1) - s.z.array())).matrix();

    // candidate: c = tanh(agg W^T + (r .* h_prev) U^T)
    const Matrix<Scalar> dsc = (dc.array() * (Scalar(1) - s.c.array().square())).matrix();
    g.w += dsc.transpose() * agg;
    g.u += dsc.transpose() * (s.r.array() * h_prev.array()).matrix();
    Matrix<Scalar> dagg = dsc * p.w;
    const Matrix<Scalar> drh = dsc * p.u;
    const Matrix<Scalar> dr = (drh.array() * h_prev.array()).matrix();
    dh_prev += (drh.array() * s.r.array()).matrix();

    // reset gate: r = sigma(agg Wr^T + h_prev Ur^T)
    const Matrix<Scalar> dsr = (dr.array() * s.r.array() * (Scalar(1) - s.r.array())).matrix();
    g.wr += dsr.transpose() * agg;
    g.ur += dsr.transpose() * h_prev;
    dagg += dsr * p.wr;
    dh_prev += dsr * p.ur;

    // update gate: z = sigma(agg Wz^T + h_prev Uz^T)
    const Matrix<Scalar> dsz = (dz.array() * s.z.array() * (Scalar(1) - s.z.array())).matrix();
    g.wz += dsz.transpose() * agg;
    g.uz += dsz.transpose() * h_prev;
    dagg += dsz * p.wz;
    dh_prev += dsz * p.uz;

    // aggregation: agg = [A h_prev, A^T h_prev]
    dh_prev += graph.a.transpose() * dagg.leftCols(d) + graph.a * dagg.rightCols(d);

    dh = dh_prev;
  }

  g.hinit = dh + dh0_direct;
  return g;
}

}  // namespace protograph
