#pragma once

// Training loops for both stages, balanced batch sampling, and the
// per-epoch log. Everything downstream of the configured seed is
// deterministic at one thread.

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protograph/data.hpp"
#include "protograph/loss.hpp"
#include "protograph/optim.hpp"
#include "protograph/rng.hpp"
#include "protograph/types.hpp"

namespace protograph {

struct TrainLogEntry {
  Index epoch = 0;
  double loss_ce = 0;
  double loss_aux = 0;  // stage 1: weighted SGM term; stage 2: prototype-norm term
  double total = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainLog {
  std::vector<TrainLogEntry> epochs;
};

/// One JSON object per epoch, one line each.
inline void write_jsonl(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("train log: cannot write '" + path + "'");
  for (const TrainLogEntry& e : log.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["loss_ce"] = e.loss_ce;
    j["loss_aux"] = e.loss_aux;
    j["total"] = e.total;
    j["lr"] = e.lr;
    j["seconds"] = e.seconds;
    out << j.dump() << '\n';
  }
}

/// Half the batch from base-class train samples, half from novel-class
/// train samples; a pool smaller than its half is drawn with replacement,
/// otherwise without. The caller's Rng carries the draw counter, so
/// successive calls advance deterministically.
inline std::vector<Index> balanced_batch(const FewShotDataset& ds, Index batch_size, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("balanced_batch: batch_size must be even and >= 2");
  }
  const std::vector<Index> base_pool = sample_pool(ds, SampleSplit::Train, ClassRole::Base);
  const std::vector<Index> novel_pool = sample_pool(ds, SampleSplit::Train, ClassRole::Novel);
  if (base_pool.empty()) throw InputError("balanced_batch: no base-class train samples");
  if (novel_pool.empty()) throw InputError("balanced_batch: no novel-class train samples");

  const std::size_t half = static_cast<std::size_t>(batch_size / 2);
  std::vector<Index> batch;
  batch.reserve(2 * half);
  for (const std::vector<Index>* pool : {&base_pool, &novel_pool}) {
    if (pool->size() >= half) {
      for (std::size_t pick : rng.sample_without_replacement(pool->size(), half)) {
        batch.push_back((*pool)[pick]);
      }
    } else {
      for (std::size_t i = 0; i < half; ++i) {
        batch.push_back((*pool)[static_cast<std::size_t>(rng.bounded(pool->size()))]);
      }
    }
  }
  return batch;
}

namespace detail {

inline Matrixd gather_rows(const Matrixd& m, const std::vector<Index>& rows) {
  Matrixd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline std::vector<Index> gather_labels(const std::vector<Index>& labels,
                                        const std::vector<Index>& rows) {
  std::vector<Index> out;
  out.reserve(rows.size());
  for (Index i : rows) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

struct Stage1TrainResult {
  Stage1Head<double> head;
  TrainLog log;
};

/// Stage 1: a linear head over the base classes, trained on base-class
/// train samples with L1 = CE + lambda * SGM. Each epoch shuffles the
/// base train pool and walks it in batch_size slices (the final partial
/// slice included).
inline Stage1TrainResult train_stage1(const FewShotDataset& ds, const TrainConfig& tcfg) {
  validate(tcfg);
  validate(ds);
  const std::vector<Index> pool = sample_pool(ds, SampleSplit::Train, ClassRole::Base);
  if (pool.empty()) throw InputError("train_stage1: no base-class train samples");

  Stage1TrainResult res;
  for (Index c = 0; c < ds.n_classes(); ++c) {
    if (ds.class_role[static_cast<std::size_t>(c)] == ClassRole::Base) res.head.class_ids.push_back(c);
  }
  const Index k_base = static_cast<Index>(res.head.class_ids.size());
  Rng rng(tcfg.seed);
  res.head.w.resize(k_base, ds.dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(ds.dim()));
  for (Index i = 0; i < k_base; ++i) {
    for (Index j = 0; j < ds.dim(); ++j) res.head.w(i, j) = scale * rng.gaussian();
  }

  Matrixd velocity = Matrixd::Zero(k_base, ds.dim());
  std::vector<Index> order = pool;
  for (Index epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, tcfg);
    double sum_ce = 0, sum_sgm = 0, sum_total = 0;
    Index batches = 0;
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(tcfg.batch_size));
      const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(at),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const Stage1Result<double> loss =
          loss_stage1<double>(detail::gather_rows(ds.features, rows),
                              detail::gather_labels(ds.labels, rows), res.head, tcfg.sgm_weight,
                              tcfg.sgm_form);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("train_stage1: non-finite loss at epoch " + std::to_string(epoch));
      }
      sgd_step<double>(res.head.w, loss.dhead, velocity, lr, tcfg.momentum, tcfg.weight_decay);
      sum_ce += loss.loss_ce;
      sum_sgm += tcfg.sgm_weight * loss.loss_sgm;
      sum_total += loss.total;
      ++batches;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double inv = batches > 0 ? 1.0 / static_cast<double>(batches) : 0.0;
    res.log.epochs.push_back(
        {epoch, sum_ce * inv, sum_sgm * inv, sum_total * inv, lr, seconds});
  }
  return res;
}

struct Stage2TrainResult {
  std::vector<KgtmParams<double>> params;
  TrainLog log;
};

/// Stage 2: joint SGD over every propagation module's tensors, driven by
/// balanced batches and loss_stage2. Epoch length is the train-sample
/// count divided by the batch size (rounded up, at least 1). Divergence
/// aborts with the epoch and step in the message.
inline Stage2TrainResult train_stage2(const FewShotDataset& ds,
                                      const std::vector<CorrelationGraph<double>>& graphs,
                                      const std::vector<KgtmConfig>& cfgs,
                                      const ClassifierConfig& ccfg, const TrainConfig& tcfg) {
  validate(tcfg);
  validate(ds);
  if (graphs.empty()) throw InputError("train_stage2: no graphs");
  if (cfgs.size() != graphs.size()) throw InputError("train_stage2: config count does not match graphs");

  Stage2TrainResult res;
  std::vector<KgtmParams<double>> velocity;
  for (const KgtmConfig& cfg : cfgs) {
    res.params.push_back(init_params<double>(cfg));
    velocity.push_back(zeros_like(res.params.back()));
  }

  Index n_train = 0;
  for (SampleSplit s : ds.sample_split) {
    if (s == SampleSplit::Train) ++n_train;
  }
  const Index steps_per_epoch = std::max<Index>(1, (n_train + tcfg.batch_size - 1) / tcfg.batch_size);

  Rng rng(tcfg.seed);
  for (Index epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, tcfg);
    double sum_ce = 0, sum_reg = 0, sum_total = 0;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      const std::vector<Index> rows = balanced_batch(ds, tcfg.batch_size, rng);
      Stage2Result<double> loss;
      try {
        loss = loss_stage2<double>(detail::gather_rows(ds.features, rows),
                                   detail::gather_labels(ds.labels, rows), graphs, cfgs,
                                   res.params, ccfg, tcfg.proto_reg, tcfg.ensemble_in_loss);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step) + ")");
      }
      for (std::size_t m = 0; m < res.params.size(); ++m) {
        sgd_step<double>(res.params[m], loss.grads[m], velocity[m], lr, tcfg.momentum,
                         tcfg.weight_decay, tcfg.freeze_hinit);
      }
      sum_ce += loss.loss_ce;
      sum_reg += loss.loss_reg;
      sum_total += loss.total;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    res.log.epochs.push_back(
        {epoch, sum_ce * inv, sum_reg * inv, sum_total * inv, lr, seconds});
  }
  return res;
}

}  // namespace protograph
