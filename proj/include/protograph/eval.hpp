#pragma once

// Evaluation: top-k accuracy over the novel / base / all test subsets and
// the repeated-run experiment harness (per-repeat k-shot resampling and
// re-initialization, mean and population std across repeats).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "protograph/classifier.hpp"
#include "protograph/data.hpp"
#include "protograph/train.hpp"
#include "protograph/types.hpp"

namespace protograph {

enum class EvalSubset { Novel, Base, All };

inline std::string to_string(EvalSubset s) {
  switch (s) {
    case EvalSubset::Novel: return "novel";
    case EvalSubset::Base: return "base";
    default: return "all";
  }
}

/// Percent of selected samples whose true label lands in the top k
/// scores of its row. The filter selects samples by their class's role.
template <typename Scalar>
double topk_accuracy(const Matrix<Scalar>& scores, const std::vector<Index>& labels, Index k,
                     const std::vector<ClassRole>& class_role, EvalSubset subset) {
  if (static_cast<Index>(labels.size()) != scores.rows()) {
    throw InputError("topk_accuracy: label count does not match score rows");
  }
  if (k < 1 || k > scores.cols()) throw InputError("topk_accuracy: k out of range");
  Index selected = 0;
  Index hits = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= static_cast<Index>(class_role.size())) {
      throw InputError("topk_accuracy: label out of range");
    }
    const ClassRole role = class_role[static_cast<std::size_t>(y)];
    if (subset == EvalSubset::Novel && role != ClassRole::Novel) continue;
    if (subset == EvalSubset::Base && role != ClassRole::Base) continue;
    ++selected;
    const Vector<Scalar> row = scores.row(i).transpose();
    for (Index j : top_n<Scalar>(row, k)) {
      if (j == y) {
        ++hits;
        break;
      }
    }
  }
  if (selected == 0) throw InputError("topk_accuracy: no samples match the subset filter");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(selected);
}

/// Scores of every test-split sample against the ensembled prototypes.
struct TestScores {
  Matrixd scores;              // n_test x K
  std::vector<Index> labels;   // n_test
};

inline TestScores score_test_set(const FewShotDataset& ds,
                                 const std::vector<PrototypeSet<double>>& prototypes,
                                 const ClassifierConfig& ccfg) {
  std::vector<Index> rows;
  for (Index i = 0; i < ds.n(); ++i) {
    if (ds.sample_split[static_cast<std::size_t>(i)] == SampleSplit::Test) rows.push_back(i);
  }
  if (rows.empty()) throw InputError("score_test_set: no test samples");
  TestScores out;
  out.scores.resize(static_cast<Index>(rows.size()), ds.n_classes());
  out.labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector<double> x = ds.features.row(rows[r]).transpose();
    out.scores.row(static_cast<Index>(r)) = score_query<double>(prototypes, x, ccfg).combined.transpose();
    out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[r])]);
  }
  return out;
}

struct EvalCell {
  double mean = 0;
  double stddev = 0;  // population
  std::vector<double> values;
};

struct EvalReport {
  std::vector<int> k_shots;
  Index top_k = 5;
  int repeats = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds;
  int threads = 1;
  // results[subset name][k_shot] -> accuracy cell
  std::map<std::string, std::map<int, EvalCell>> results;
};

struct ExperimentConfig {
  TrainConfig train;
  ClassifierConfig classifier;
  KgtmConfig kgtm;  // template; n_classes / feature_dim / init_seed are set per run
  std::vector<int> k_shots{1, 2, 5, 10};
  Index top_k = 5;
  int repeats = 5;
  std::uint64_t base_seed = 0;
  int threads = 1;
};

struct ExperimentResult {
  EvalReport report;
  // State of the last trained repeat, for checkpointing.
  std::vector<KgtmConfig> final_cfgs;
  std::vector<KgtmParams<double>> final_params;
  TrainLog final_log;
};

namespace detail {

inline void aggregate_cell(EvalCell& cell) {
  double sum = 0;
  for (double v : cell.values) sum += v;
  cell.mean = sum / static_cast<double>(cell.values.size());
  double sq = 0;
  for (double v : cell.values) sq += (v - cell.mean) * (v - cell.mean);
  cell.stddev = std::sqrt(sq / static_cast<double>(cell.values.size()));
}

}  // namespace detail

/// For each repeat r: reseed the k-shot subsample and every module init
/// from base_seed + r, train stage 2, and measure top-k accuracy on the
/// novel and all test subsets; aggregate mean and population std per
/// (subset, k). Substreams: stream 0 of the repeat seed drives batching,
/// stream 1+m the init of module m.
inline ExperimentResult run_experiment(const FewShotDataset& ds,
                                       const std::vector<CorrelationGraph<double>>& graphs,
                                       const ExperimentConfig& cfg) {
  if (cfg.repeats < 1) throw ConfigError("run_experiment: repeats must be >= 1");
  if (cfg.k_shots.empty()) throw ConfigError("run_experiment: k_shots must be non-empty");
  validate(ds);

  ExperimentResult out;
  out.report.k_shots = cfg.k_shots;
  out.report.top_k = cfg.top_k;
  out.report.repeats = cfg.repeats;
  out.report.base_seed = cfg.base_seed;
  out.report.threads = cfg.threads;
  for (int r = 0; r < cfg.repeats; ++r) out.report.seeds.push_back(cfg.base_seed + static_cast<std::uint64_t>(r));

  for (int k : cfg.k_shots) {
    for (int r = 0; r < cfg.repeats; ++r) {
      const std::uint64_t seed_r = cfg.base_seed + static_cast<std::uint64_t>(r);
      try {
        const FewShotDataset dsk = ksample(ds, k, seed_r);

        std::vector<KgtmConfig> cfgs;
        for (std::size_t m = 0; m < graphs.size(); ++m) {
          KgtmConfig kc = cfg.kgtm;
          kc.n_classes = ds.n_classes();
          kc.feature_dim = ds.dim();
          kc.init_seed = Rng::derive(seed_r, 1 + static_cast<std::uint64_t>(m));
          cfgs.push_back(resolved(kc));
        }
        TrainConfig tc = cfg.train;
        tc.seed = Rng::derive(seed_r, 0);

        Stage2TrainResult trained = train_stage2(dsk, graphs, cfgs, cfg.classifier, tc);

        std::vector<PrototypeSet<double>> prototypes;
        for (std::size_t m = 0; m < graphs.size(); ++m) {
          prototypes.push_back(forward<double>(cfgs[m], trained.params[m], graphs[m]).wstar);
        }
        const TestScores ts = score_test_set(dsk, prototypes, cfg.classifier);
        for (EvalSubset subset : {EvalSubset::Novel, EvalSubset::All}) {
          const double acc =
              topk_accuracy<double>(ts.scores, ts.labels, cfg.top_k, dsk.class_role, subset);
          out.report.results[to_string(subset)][k].values.push_back(acc);
        }

        out.final_cfgs = cfgs;
        out.final_params = std::move(trained.params);
        out.final_log = std::move(trained.log);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " [repeat " + std::to_string(r) + "]");
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " [repeat " + std::to_string(r) + "]");
      } catch (const InputError& e) {
        throw InputError(std::string(e.what()) + " [repeat " + std::to_string(r) + "]");
      }
    }
  }

  for (auto& [subset, by_k] : out.report.results) {
    for (auto& [k, cell] : by_k) detail::aggregate_cell(cell);
  }
  return out;
}

/// JSON form with lexicographically sorted keys; serialization is
/// byte-stable for identical inputs.
inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["base_seed"] = rep.base_seed;
  j["k_shots"] = rep.k_shots;
  j["metric"] = "top" + std::to_string(rep.top_k) + "_accuracy_percent";
  j["repeats"] = rep.repeats;
  j["seeds"] = rep.seeds;
  j["std_kind"] = "population";
  j["threads"] = rep.threads;
  for (const auto& [subset, by_k] : rep.results) {
    for (const auto& [k, cell] : by_k) {
      nlohmann::json c;
      c["mean"] = cell.mean;
      c["std"] = cell.stddev;
      c["values"] = cell.values;
      j["results"][subset][std::to_string(k)] = c;
    }
  }
  return j;
}

inline void write_report_json(const EvalReport& rep, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("eval report: cannot write '" + path + "'");
  out << to_json(rep).dump(2) << '\n';
}

/// One row per report: novel columns first, then all, one per k.
inline void write_report_tsv(const EvalReport& rep, const std::string& path,
                             const std::string& row_label) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("eval report: cannot write '" + path + "'");
  out << "config";
  for (const char* subset : {"novel", "all"}) {
    for (int k : rep.k_shots) out << '\t' << subset << '-' << k;
  }
  out << '\n' << row_label;
  for (const char* subset : {"novel", "all"}) {
    for (int k : rep.k_shots) {
      const auto& cell = rep.results.at(subset).at(k);
      out << '\t' << cell.mean;
    }
  }
  out << '\n';
}

}  // namespace protograph
