#pragma once

// Finite-difference verification of every analytic gradient path. Each
// preset builds a small fixed instance, computes analytic gradients, and
// compares every parameter entry against a central difference at 64-bit.
// rel = |analytic - numeric| / max(1, |analytic|, |numeric|), pass iff
// max rel <= 1e-5.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "protograph/graph.hpp"
#include "protograph/kgtm.hpp"
#include "protograph/loss.hpp"
#include "protograph/rng.hpp"
#include "protograph/types.hpp"

namespace protograph {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTol = 1e-5;

struct GradcheckWorst {
  std::string tensor;
  Index row = 0;
  Index col = 0;
  double analytic = 0;
  double numeric = 0;
  double rel = 0;
};

struct GradcheckReport {
  std::string preset;
  bool pass = false;
  double max_rel = 0;
  std::map<std::string, double> per_tensor;  // max rel per tensor
  GradcheckWorst worst;
};

namespace detail {

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Sweeps one tensor: central difference on every entry via the loss
// closure, comparing against the analytic gradient tensor.
inline void check_tensor(const std::string& name, Matrix<double>& param,
                         const Matrix<double>& analytic, const std::function<double()>& loss,
                         GradcheckReport& report) {
  double& tensor_max = report.per_tensor[name];
  for (Index i = 0; i < param.rows(); ++i) {
    for (Index j = 0; j < param.cols(); ++j) {
      const double orig = param(i, j);
      param(i, j) = orig + kGradcheckStep;
      const double up = loss();
      param(i, j) = orig - kGradcheckStep;
      const double down = loss();
      param(i, j) = orig;
      const double numeric = (up - down) / (2 * kGradcheckStep);
      const double rel = relative_error(analytic(i, j), numeric);
      if (rel > tensor_max) tensor_max = rel;
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = {name, i, j, analytic(i, j), numeric, rel};
      }
    }
  }
}

inline Matrixd random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrixd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
  }
  return m;
}

inline CorrelationGraph<double> random_graph(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrixd points = random_matrix(n, 3, rng, 2.0);
  return symmetrize(kg_transform(pairwise_euclidean(points), 0.4));
}

// Propagation backward against a linear functional of the prototypes:
// L = sum_ij C_ij W*_ij, so dL/dW* = C exercises the whole backward.
inline void preset_kgtm(GradcheckReport& report, bool tamper) {
  KgtmConfig cfg;
  cfg.n_classes = 5;
  cfg.hidden_dim = 3;
  cfg.feature_dim = 4;
  cfg.steps = 2;
  cfg.init_seed = 7;
  cfg = resolved(cfg);

  const CorrelationGraph<double> graph = random_graph(cfg.n_classes, 11);
  KgtmParams<double> params = init_params<double>(cfg);
  Rng rng(13);
  const Matrixd c = random_matrix(cfg.n_classes, cfg.feature_dim, rng);

  const Trajectory<double> traj = forward<double>(cfg, params, graph);
  KgtmGrads<double> analytic = backward<double>(cfg, params, graph, traj, c);
  if (tamper) analytic.w(0, 0) += 1e-3;

  const std::function<double()> loss = [&]() {
    return (forward<double>(cfg, params, graph).wstar.array() * c.array()).sum();
  };
  visit_tensors(params, [&](const char* name, Matrix<double>& t) {
    const Matrix<double>* g = nullptr;
    visit_tensors(analytic, [&](const char* gname, const Matrix<double>& gt) {
      if (std::string(gname) == name) g = &gt;
    });
    check_tensor(name, t, *g, loss, report);
  });
}

// Linear-head loss L1 = CE + lambda * SGM over an 8-sample batch.
inline void preset_stage1(GradcheckReport& report, bool tamper) {
  const Index k = 5, d = 4, n = 8;
  Rng rng(17);
  const Matrixd features = random_matrix(n, d, rng);
  std::vector<Index> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(static_cast<Index>(rng.bounded(k)));

  Stage1Head<double> head;
  head.w = random_matrix(k, d, rng, 0.5);
  for (Index c = 0; c < k; ++c) head.class_ids.push_back(c);
  const double lambda = 0.7;

  Matrixd analytic =
      loss_stage1<double>(features, labels, head, lambda, SgmForm::Squared).dhead;
  if (tamper) analytic(0, 0) += 1e-3;

  const std::function<double()> loss = [&]() {
    return loss_stage1<double>(features, labels, head, lambda, SgmForm::Squared).total;
  };
  check_tensor("head", head.w, analytic, loss, report);
}

// Full stage-2 path (forward, similarity, ensembling, softmax, CE,
// prototype-norm term) for every ensemble x similarity combination.
inline void preset_stage2(GradcheckReport& report, bool tamper) {
  const Index k = 6, n = 4;
  KgtmConfig base;
  base.n_classes = k;
  base.hidden_dim = 3;
  base.feature_dim = 4;
  base.steps = 2;

  std::vector<CorrelationGraph<double>> graphs{random_graph(k, 21), random_graph(k, 22)};
  std::vector<KgtmConfig> cfgs;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    KgtmConfig c = base;
    c.init_seed = 31 + m;
    cfgs.push_back(resolved(c));
  }

  Rng rng(37);
  const Matrixd features = random_matrix(n, base.feature_dim, rng);
  std::vector<Index> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(static_cast<Index>(rng.bounded(k)));
  const double eta = 0.01;

  bool first_combo = true;
  for (Ensemble ens : {Ensemble::Mean, Ensemble::Max}) {
    for (Similarity sim : {Similarity::Inner, Similarity::Cosine, Similarity::Pearson}) {
      ClassifierConfig ccfg{sim, ens};
      std::vector<KgtmParams<double>> params;
      for (const KgtmConfig& c : cfgs) params.push_back(init_params<double>(c));

      std::vector<KgtmGrads<double>> analytic =
          loss_stage2<double>(features, labels, graphs, cfgs, params, ccfg, eta).grads;
      if (tamper && first_combo) analytic[0].w(0, 0) += 1e-3;
      first_combo = false;

      const std::function<double()> loss = [&]() {
        return loss_stage2<double>(features, labels, graphs, cfgs, params, ccfg, eta).total;
      };
      const std::string prefix = to_string(ens) + "/" + to_string(sim) + ":";
      for (std::size_t m = 0; m < params.size(); ++m) {
        visit_tensors(params[m], [&](const char* name, Matrix<double>& t) {
          const Matrix<double>* g = nullptr;
          visit_tensors(analytic[m], [&](const char* gname, const Matrix<double>& gt) {
            if (std::string(gname) == name) g = &gt;
          });
          check_tensor(prefix + "g" + std::to_string(m) + "." + name, t, *g, loss, report);
        });
      }
    }
  }
}

}  // namespace detail

/// Runs one preset. `tamper` injects a deliberate error into one analytic
/// gradient entry to exercise the failure path.
inline GradcheckReport run_gradcheck(const std::string& preset, bool tamper = false) {
  GradcheckReport report;
  report.preset = preset;
  if (preset == "kgtm") {
    detail::preset_kgtm(report, tamper);
  } else if (preset == "stage1") {
    detail::preset_stage1(report, tamper);
  } else if (preset == "stage2") {
    detail::preset_stage2(report, tamper);
  } else {
    throw ConfigError("unknown gradcheck preset '" + preset + "' (expected kgtm|stage1|stage2)");
  }
  report.pass = report.max_rel <= kGradcheckTol;
  return report;
}

}  // namespace protograph
