#pragma once

// Training losses. Stage 1: cross-entropy plus the squared-gradient-
// magnitude term on a linear head over base classes. Stage 2: cross-
// entropy of the ensembled prototype scores plus a prototype-norm
// regularizer, differentiated end to end through every graph's
// propagation module.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "protograph/classifier.hpp"
#include "protograph/errors.hpp"
#include "protograph/kgtm.hpp"
#include "protograph/types.hpp"

namespace protograph {

enum class SgmForm { Squared, PaperLiteral };

inline SgmForm sgm_form_from_string(const std::string& s) {
  if (s == "squared") return SgmForm::Squared;
  if (s == "paper_literal") return SgmForm::PaperLiteral;
  throw ConfigError("unknown sgm form '" + s + "' (expected squared|paper_literal)");
}

inline std::string to_string(SgmForm f) {
  return f == SgmForm::Squared ? "squared" : "paper_literal";
}

/// -log p_y with p_y floored at the smallest positive normal value, so a
/// collapsed probability yields a large finite loss instead of inf.
template <typename Scalar>
Scalar cross_entropy(const Vector<Scalar>& p, Index y) {
  if (y < 0 || y >= p.size()) throw InputError("cross_entropy: label out of range");
  return -std::log(std::max(p(y), std::numeric_limits<Scalar>::min()));
}

/// Squared-gradient-magnitude regularizer. The squared form is
/// ||x||^2 sum_k (p_k - 1[k=y])^2. The literal form multiplies ||x||^2 by
/// sum_k (p_k - 1[k=y]), which telescopes to exactly 0 for every
/// probability vector (sum p = 1), so it is returned as exact 0 rather
/// than a rounding-noise sum.
template <typename Scalar>
Scalar sgm_loss(const Vector<Scalar>& p, Index y, const Vector<Scalar>& x, SgmForm form) {
  if (y < 0 || y >= p.size()) throw InputError("sgm_loss: label out of range");
  if (form == SgmForm::PaperLiteral) return Scalar(0);
  Vector<Scalar> q = p;
  q(y) -= Scalar(1);
  return x.squaredNorm() * q.squaredNorm();
}

/// d(cross_entropy(softmax(s), y))/ds = p - onehot(y).
template <typename Scalar>
Vector<Scalar> ce_score_grad(const Vector<Scalar>& p, Index y) {
  Vector<Scalar> g = p;
  g(y) -= Scalar(1);
  return g;
}

/// d(sgm_loss(softmax(s), y, x, form))/ds. With q = p - onehot(y):
/// dL/dp = 2||x||^2 q, and through the softmax Jacobian
/// dL/ds_j = 2||x||^2 p_j (q_j - sum_k p_k q_k). The literal form is
/// constant in s, so its gradient is exactly zero.
template <typename Scalar>
Vector<Scalar> sgm_score_grad(const Vector<Scalar>& p, Index y, const Vector<Scalar>& x,
                              SgmForm form) {
  if (form == SgmForm::PaperLiteral) return Vector<Scalar>::Zero(p.size());
  Vector<Scalar> q = p;
  q(y) -= Scalar(1);
  const Scalar inner = p.dot(q);
  return (Scalar(2) * x.squaredNorm()) * (p.array() * (q.array() - inner)).matrix();
}

/// Linear classifier head for stage 1: one weight row per base class,
/// class_ids mapping rows back to global class indices (ascending).
template <typename Scalar>
struct Stage1Head {
  Matrix<Scalar> w;              // K_base x D
  std::vector<Index> class_ids;  // global id of each row
};

template <typename Scalar>
struct Stage1Result {
  Scalar loss_ce = 0;
  Scalar loss_sgm = 0;
  Scalar total = 0;
  Matrix<Scalar> dhead;
};

/// Batch loss L1 = mean CE + lambda * mean SGM over base-class samples,
/// scored as s = head * x, with the exact head gradient. A label outside
/// the head's class list is a protocol violation.
template <typename Scalar>
Stage1Result<Scalar> loss_stage1(const Matrix<Scalar>& features, const std::vector<Index>& labels,
                                 const Stage1Head<Scalar>& head, Scalar lambda_sgm, SgmForm form) {
  const Index n = features.rows();
  if (n == 0) throw InputError("loss_stage1: empty batch");
  if (static_cast<Index>(labels.size()) != n) throw InputError("loss_stage1: label count mismatch");
  if (head.w.cols() != features.cols()) throw InputError("loss_stage1: head dimension mismatch");
  if (head.w.rows() != static_cast<Index>(head.class_ids.size())) {
    throw InputError("loss_stage1: head row/class_ids mismatch");
  }

  Stage1Result<Scalar> res;
  res.dhead = Matrix<Scalar>::Zero(head.w.rows(), head.w.cols());
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  for (Index i = 0; i < n; ++i) {
    Index local = -1;
    for (Index r = 0; r < static_cast<Index>(head.class_ids.size()); ++r) {
      if (head.class_ids[static_cast<std::size_t>(r)] == labels[static_cast<std::size_t>(i)]) {
        local = r;
        break;
      }
    }
    if (local < 0) {
      throw InputError("loss_stage1: batch contains a non-base class label " +
                       std::to_string(labels[static_cast<std::size_t>(i)]));
    }
    const Vector<Scalar> x = features.row(i).transpose();
    const Vector<Scalar> s = head.w * x;
    const Vector<Scalar> p = softmax<Scalar>(s);
    res.loss_ce += inv_n * cross_entropy<Scalar>(p, local);
    res.loss_sgm += inv_n * sgm_loss<Scalar>(p, local, x, form);
    const Vector<Scalar> ds =
        inv_n * (ce_score_grad<Scalar>(p, local) +
                 lambda_sgm * sgm_score_grad<Scalar>(p, local, x, form));
    res.dhead += ds * x.transpose();
  }
  res.total = res.loss_ce + lambda_sgm * res.loss_sgm;
  return res;
}

template <typename Scalar>
struct Stage2Result {
  Scalar loss_ce = 0;
  Scalar loss_reg = 0;
  Scalar total = 0;
  std::vector<KgtmGrads<Scalar>> grads;  // one per graph
  Index degenerate = 0;                  // zero-norm similarity evaluations
};

/// Batch loss L2 over all K classes. Joint mode (ensemble_in_loss):
/// mean CE of the ensembled softmax plus eta/M * sum of squared prototype
/// norms over all graphs; the 1/M keeps the loss equal to the single-graph
/// case when all graphs coincide. Independent mode: each graph carries its
/// own CE + eta * norm term and the per-graph losses are summed; since
/// parameters are disjoint this trains each module exactly as if alone.
/// Gradients reach every parameter through softmax, ensembling,
/// similarity, and each graph's propagation backward.
template <typename Scalar>
Stage2Result<Scalar> loss_stage2(const Matrix<Scalar>& features, const std::vector<Index>& labels,
                                 const std::vector<CorrelationGraph<Scalar>>& graphs,
                                 const std::vector<KgtmConfig>& cfgs,
                                 const std::vector<KgtmParams<Scalar>>& params,
                                 const ClassifierConfig& ccfg, Scalar eta,
                                 bool ensemble_in_loss = true) {
  const Index n = features.rows();
  const Index m_count = static_cast<Index>(graphs.size());
  if (n == 0) throw InputError("loss_stage2: empty batch");
  if (static_cast<Index>(labels.size()) != n) throw InputError("loss_stage2: label count mismatch");
  if (m_count == 0) throw InputError("loss_stage2: no graphs");
  if (cfgs.size() != graphs.size() || params.size() != graphs.size()) {
    throw InputError("loss_stage2: graphs/configs/params count mismatch");
  }

  std::vector<Trajectory<Scalar>> trajs;
  std::vector<PrototypeSet<Scalar>> prototypes;
  trajs.reserve(graphs.size());
  prototypes.reserve(graphs.size());
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    trajs.push_back(forward<Scalar>(cfgs[m], params[m], graphs[m]));
    prototypes.push_back(trajs.back().wstar);
  }

  Stage2Result<Scalar> res;
  std::vector<Matrix<Scalar>> dproto;
  dproto.reserve(graphs.size());
  for (const auto& w : prototypes) dproto.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));

  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  if (ensemble_in_loss) {
    for (Index i = 0; i < n; ++i) {
      const Vector<Scalar> x = features.row(i).transpose();
      const Index y = labels[static_cast<std::size_t>(i)];
      const ScoreBreakdown<Scalar> fwd = score_query<Scalar>(prototypes, x, ccfg);
      res.degenerate += fwd.degenerate;
      const Vector<Scalar> p = softmax<Scalar>(fwd.combined);
      res.loss_ce += inv_n * cross_entropy<Scalar>(p, y);
      const Vector<Scalar> ds = inv_n * ce_score_grad<Scalar>(p, y);
      const std::vector<Matrix<Scalar>> dw = score_backward<Scalar>(prototypes, x, fwd, ds, ccfg);
      for (std::size_t m = 0; m < dproto.size(); ++m) dproto[m] += dw[m];
    }
    const Scalar reg_scale = eta / static_cast<Scalar>(m_count);
    for (std::size_t m = 0; m < prototypes.size(); ++m) {
      res.loss_reg += reg_scale * prototypes[m].squaredNorm();
      dproto[m] += (Scalar(2) * reg_scale) * prototypes[m];
    }
    res.total = res.loss_ce + res.loss_reg;
  } else {
    ClassifierConfig single = ccfg;
    single.ensemble = Ensemble::None;
    for (std::size_t m = 0; m < prototypes.size(); ++m) {
      const std::vector<PrototypeSet<Scalar>> one{prototypes[m]};
      for (Index i = 0; i < n; ++i) {
        const Vector<Scalar> x = features.row(i).transpose();
        const Index y = labels[static_cast<std::size_t>(i)];
        const ScoreBreakdown<Scalar> fwd = score_query<Scalar>(one, x, single);
        res.degenerate += fwd.degenerate;
        const Vector<Scalar> p = softmax<Scalar>(fwd.combined);
        res.loss_ce += inv_n * cross_entropy<Scalar>(p, y);
        const Vector<Scalar> ds = inv_n * ce_score_grad<Scalar>(p, y);
        dproto[m] += score_backward<Scalar>(one, x, fwd, ds, single)[0];
      }
      res.loss_reg += eta * prototypes[m].squaredNorm();
      dproto[m] += (Scalar(2) * eta) * prototypes[m];
    }
    res.total = res.loss_ce + res.loss_reg;
  }

  if (!std::isfinite(static_cast<double>(res.total))) {
    throw DivergenceError("loss_stage2: non-finite loss");
  }

  res.grads.reserve(graphs.size());
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    res.grads.push_back(backward<Scalar>(cfgs[m], params[m], graphs[m], trajs[m], dproto[m]));
  }
  return res;
}

}  // namespace protograph
