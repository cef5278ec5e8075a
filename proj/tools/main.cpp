// Command-line front end: graph construction and analysis, synthetic data
// generation, two-stage training, evaluation, end-to-end experiment runs,
// and finite-difference gradient self-checks.
//
// Exit codes: 0 ok, 2 input error, 3 config error, 4 training divergence,
// 5 gradient-check failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <protograph/protograph.hpp>

namespace pg = protograph;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  std::string config;
};

json stats_json(const pg::GraphStats& s) {
  return json{{"min", s.min}, {"avg", s.avg}, {"max", s.max}, {"std", s.stddev}};
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw pg::ConfigError(std::string("config: field '") + key + "' has the wrong type");
  }
}

pg::CorrelationGraph<double> load_graph(const std::string& path) {
  pg::CorrelationGraph<double> g;
  g.a = pg::load_matrix<double>(path);
  if (g.a.rows() != g.a.cols()) throw pg::InputError("graph '" + path + "': matrix is not square");
  return g;
}

// ---------------------------------------------------------------- build-graph

struct BuildGraphArgs {
  std::string embeddings, taxonomy, distances;
  double decay = 0.4;
  bool no_symmetrize = false;
  std::string taxonomy_distance = "path_length";
};

int cmd_build_graph(const BuildGraphArgs& a, const Common& common) {
  const int sources = (!a.embeddings.empty()) + (!a.taxonomy.empty()) + (!a.distances.empty());
  if (sources != 1) {
    throw pg::ConfigError("build-graph: give exactly one of --embeddings, --taxonomy, --distances");
  }

  pg::DistanceMatrix<double> d;
  if (!a.embeddings.empty()) {
    d = pg::pairwise_euclidean(pg::load_matrix<double>(a.embeddings));
  } else if (!a.taxonomy.empty()) {
    const pg::NamedTaxonomy tax = pg::load_taxonomy(a.taxonomy);
    const pg::TaxonomyDistance kind = a.taxonomy_distance == "ancestor_count"
                                          ? pg::TaxonomyDistance::AncestorCount
                                          : pg::TaxonomyDistance::PathLength;
    if (a.taxonomy_distance != "path_length" && a.taxonomy_distance != "ancestor_count") {
      throw pg::ConfigError("build-graph: --taxonomy-distance must be path_length|ancestor_count");
    }
    d = pg::taxonomy_distance<double>(tax.tree, kind);
  } else {
    d = pg::load_matrix<double>(a.distances);
    pg::validate_distance_matrix(d);
  }

  pg::CorrelationGraph<double> g = pg::kg_transform(d, a.decay);
  if (!a.no_symmetrize) g = pg::symmetrize(g);
  pg::write_kgem(common.out, g.a.cast<float>());

  json out;
  out["out"] = common.out;
  out["n"] = g.n();
  out["decay"] = a.decay;
  out["symmetrized"] = g.symmetrized;
  out["stats"] = stats_json(pg::matrix_stats(g.a));
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------- stats

int cmd_stats(const std::string& file, bool include_diagonal) {
  const pg::Matrixd m = pg::load_matrix<double>(file);
  json out;
  out["file"] = file;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  out["stats"] = stats_json(pg::matrix_stats(m, include_diagonal));
  std::cout << out.dump(2) << '\n';
  return 0;
}

// --------------------------------------------------------------------- mantel

int cmd_mantel(const std::string& file1, const std::string& file2, int permutations,
               const Common& common) {
  const pg::MantelResult res = pg::mantel(pg::load_matrix<double>(file1),
                                          pg::load_matrix<double>(file2), permutations, common.seed);
  json out;
  out["r"] = res.r;
  out["p"] = res.p;
  out["n_permutations"] = res.n_permutations;
  out["seed"] = res.seed;
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------- synth

struct SynthArgs {
  pg::SyntheticSpec spec;
};

int cmd_synth(SynthArgs& a, const Common& common) {
  a.spec.seed = common.seed;
  const pg::SynthData data = pg::synth_generate(a.spec);
  std::filesystem::create_directories(common.out);
  const std::filesystem::path dir(common.out);
  pg::save_dataset(data.dataset, (dir / "dataset.json").string(), "features.kgem");
  pg::write_kgem((dir / "means.kgem").string(), data.means.cast<float>());
  pg::write_kgem((dir / "oracle_distances.kgem").string(), data.oracle.cast<float>());

  json out;
  out["manifest"] = (dir / "dataset.json").string();
  out["means"] = (dir / "means.kgem").string();
  out["oracle_distances"] = (dir / "oracle_distances.kgem").string();
  out["n_samples"] = data.dataset.n();
  out["n_classes"] = data.dataset.n_classes();
  out["dim"] = data.dataset.dim();
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------- shared parsing

pg::TrainConfig train_from_json(const json& j) {
  pg::TrainConfig t;
  t.lr0 = get_or(j, "lr0", t.lr0);
  t.momentum = get_or(j, "momentum", t.momentum);
  t.weight_decay = get_or(j, "weight_decay", t.weight_decay);
  t.batch_size = get_or(j, "batch_size", t.batch_size);
  t.epochs = get_or(j, "epochs", t.epochs);
  t.lr_decay_factor = get_or(j, "lr_decay_factor", t.lr_decay_factor);
  t.lr_decay_interval = get_or(j, "lr_decay_interval", t.lr_decay_interval);
  t.sgm_weight = get_or(j, "sgm_weight", t.sgm_weight);
  t.proto_reg = get_or(j, "proto_reg", t.proto_reg);
  t.sgm_form = pg::sgm_form_from_string(get_or<std::string>(j, "sgm_form", to_string(t.sgm_form)));
  t.ensemble_in_loss = get_or(j, "ensemble_in_loss", t.ensemble_in_loss);
  t.freeze_hinit = get_or(j, "freeze_hinit", t.freeze_hinit);
  return t;
}

struct GraphSourceSpec {
  std::string source;  // oracle | noisy_oracle | uniform | random | file
  double decay = 0.4;
  bool symmetrize = true;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  std::string path;
};

GraphSourceSpec graph_source_from_json(const json& j) {
  GraphSourceSpec s;
  s.source = get_or<std::string>(j, "source", "");
  s.decay = get_or(j, "decay", s.decay);
  s.symmetrize = get_or(j, "symmetrize", s.symmetrize);
  s.noise_std = get_or(j, "noise_std", s.noise_std);
  s.seed = get_or(j, "seed", s.seed);
  s.path = get_or<std::string>(j, "path", s.path);
  if (s.source.empty()) throw pg::ConfigError("config: graph entry is missing 'source'");
  return s;
}

pg::CorrelationGraph<double> realize_graph(const GraphSourceSpec& s, pg::Index n_classes,
                                           const pg::DistanceMatrix<double>* oracle,
                                           const std::string& manifest_dir) {
  const auto need_oracle = [&]() -> const pg::DistanceMatrix<double>& {
    if (oracle == nullptr) {
      throw pg::ConfigError("graph source '" + s.source + "' requires synthetic data (true-mean distances)");
    }
    return *oracle;
  };
  if (s.source == "oracle") {
    pg::CorrelationGraph<double> g = pg::kg_transform(need_oracle(), s.decay);
    return s.symmetrize ? pg::symmetrize(g) : g;
  }
  if (s.source == "noisy_oracle") {
    pg::CorrelationGraph<double> g =
        pg::kg_transform(pg::perturb_distances(need_oracle(), s.noise_std, s.seed), s.decay);
    return s.symmetrize ? pg::symmetrize(g) : g;
  }
  if (s.source == "uniform") return pg::baseline_graph<double>(n_classes, pg::BaselineKind::Uniform);
  if (s.source == "random") {
    return pg::baseline_graph<double>(n_classes, pg::BaselineKind::Random, s.seed);
  }
  if (s.source == "file") {
    if (s.path.empty()) throw pg::ConfigError("graph source 'file' requires 'path'");
    const std::filesystem::path p(s.path);
    pg::CorrelationGraph<double> g =
        load_graph(p.is_absolute() ? s.path : (std::filesystem::path(manifest_dir) / p).string());
    if (g.n() != n_classes) {
      throw pg::InputError("graph '" + s.path + "': size " + std::to_string(g.n()) +
                           " does not match class count " + std::to_string(n_classes));
    }
    return g;
  }
  throw pg::ConfigError("unknown graph source '" + s.source +
                        "' (expected oracle|noisy_oracle|uniform|random|file)");
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  int stage = 2;
  std::string data;
  std::vector<std::string> graphs;
  int k_shot = 0;  // 0 = no subsampling
  pg::Index steps = 2;
  pg::Index hidden_dim = 0;
  double init_scale = -1;
  std::string similarity = "cosine";
  std::string ensemble = "mean";
  pg::TrainConfig tcfg;
  std::string sgm_form = "squared";
};

int cmd_train(TrainArgs& a, const Common& common) {
  a.tcfg.sgm_form = pg::sgm_form_from_string(a.sgm_form);
  a.tcfg.seed = common.seed;
  pg::FewShotDataset ds = pg::load_dataset(a.data);
  if (a.k_shot > 0) ds = pg::ksample(ds, a.k_shot, common.seed);
  std::filesystem::create_directories(common.out);
  const std::filesystem::path dir(common.out);

  json out;
  out["stage"] = a.stage;
  if (a.stage == 1) {
    const pg::Stage1TrainResult res = pg::train_stage1(ds, a.tcfg);
    pg::write_kgem((dir / "head.kgem").string(), res.head.w.cast<float>());
    pg::write_jsonl(res.log, (dir / "trainlog.jsonl").string());
    out["head"] = (dir / "head.kgem").string();
    if (!res.log.epochs.empty()) {
      out["final_loss"] = res.log.epochs.back().total;
      out["final_ce"] = res.log.epochs.back().loss_ce;
    }
  } else if (a.stage == 2) {
    if (a.graphs.empty()) throw pg::ConfigError("train --stage 2 requires --graphs");
    std::vector<pg::CorrelationGraph<double>> graphs;
    std::vector<pg::KgtmConfig> cfgs;
    for (std::size_t m = 0; m < a.graphs.size(); ++m) {
      graphs.push_back(load_graph(a.graphs[m]));
      if (graphs.back().n() != ds.n_classes()) {
        throw pg::InputError("graph '" + a.graphs[m] + "' does not match dataset class count");
      }
      pg::KgtmConfig kc;
      kc.n_classes = ds.n_classes();
      kc.feature_dim = ds.dim();
      kc.hidden_dim = a.hidden_dim;
      kc.steps = a.steps;
      kc.init_scale = a.init_scale;
      kc.init_seed = pg::Rng::derive(common.seed, 1 + static_cast<std::uint64_t>(m));
      cfgs.push_back(pg::resolved(kc));
    }
    pg::ClassifierConfig ccfg{pg::similarity_from_string(a.similarity),
                              pg::ensemble_from_string(a.ensemble)};
    const pg::Stage2TrainResult res = pg::train_stage2(ds, graphs, cfgs, ccfg, a.tcfg);
    pg::save_checkpoint((dir / "checkpoint").string(), cfgs, res.params);
    pg::write_jsonl(res.log, (dir / "trainlog.jsonl").string());
    out["checkpoint"] = (dir / "checkpoint").string();
    if (!res.log.epochs.empty()) {
      out["final_loss"] = res.log.epochs.back().total;
      out["final_ce"] = res.log.epochs.back().loss_ce;
    }
  } else {
    throw pg::ConfigError("train: --stage must be 1 or 2");
  }
  out["trainlog"] = (dir / "trainlog.jsonl").string();
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::vector<std::string> graphs;
  int k_shot = 0;
  pg::Index top_k = 5;
  std::string similarity = "cosine";
  std::string ensemble = "mean";
};

int cmd_eval(const EvalArgs& a, const Common& common) {
  pg::FewShotDataset ds = pg::load_dataset(a.data);
  if (a.k_shot > 0) ds = pg::ksample(ds, a.k_shot, common.seed);
  auto [cfgs, params] = pg::load_checkpoint(a.checkpoint);
  if (a.graphs.size() != cfgs.size()) {
    throw pg::InputError("eval: got " + std::to_string(a.graphs.size()) + " graphs for a checkpoint with " +
                         std::to_string(cfgs.size()));
  }
  const pg::ClassifierConfig ccfg{pg::similarity_from_string(a.similarity),
                                  pg::ensemble_from_string(a.ensemble)};
  std::vector<pg::PrototypeSet<double>> prototypes;
  for (std::size_t m = 0; m < cfgs.size(); ++m) {
    pg::CorrelationGraph<double> g = load_graph(a.graphs[m]);
    prototypes.push_back(pg::forward<double>(cfgs[m], params[m], g).wstar);
  }
  const pg::TestScores ts = pg::score_test_set(ds, prototypes, ccfg);

  json out;
  out["top_k"] = a.top_k;
  out["n_test"] = ts.scores.rows();
  for (pg::EvalSubset subset : {pg::EvalSubset::Novel, pg::EvalSubset::Base, pg::EvalSubset::All}) {
    out[pg::to_string(subset)] =
        pg::topk_accuracy<double>(ts.scores, ts.labels, a.top_k, ds.class_role, subset);
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------------ run

struct RunArgs {
  std::vector<std::string> graphs;  // file override
  std::string similarity, ensemble;
  int repeats = -1;
  pg::Index epochs = -1;
  bool seed_given = false;
};

int cmd_run(const RunArgs& a, const Common& common) {
  if (common.config.empty()) throw pg::ConfigError("run: --config is required");
  const json cfg = pg::detail::load_json_file(common.config, "run config");
  const std::string cfg_dir = std::filesystem::path(common.config).parent_path().string();

  // Data: in-process synthetic generation or a manifest on disk.
  pg::FewShotDataset ds;
  pg::DistanceMatrix<double> oracle;
  bool have_oracle = false;
  if (cfg.contains("data") && cfg.at("data").contains("synth")) {
    const json& sj = cfg.at("data").at("synth");
    pg::SyntheticSpec spec;
    spec.k_base = get_or(sj, "k_base", spec.k_base);
    spec.k_novel = get_or(sj, "k_novel", spec.k_novel);
    spec.dim = get_or(sj, "dim", spec.dim);
    spec.train_per_class = get_or(sj, "train_per_class", spec.train_per_class);
    spec.test_per_class = get_or(sj, "test_per_class", spec.test_per_class);
    spec.cluster_std = get_or(sj, "cluster_std", spec.cluster_std);
    spec.mean_scale = get_or(sj, "mean_scale", spec.mean_scale);
    spec.seed = get_or(sj, "seed", spec.seed);
    pg::SynthData data = pg::synth_generate(spec);
    ds = std::move(data.dataset);
    oracle = std::move(data.oracle);
    have_oracle = true;
  } else if (cfg.contains("data") && cfg.at("data").contains("manifest")) {
    const std::filesystem::path p(cfg.at("data").at("manifest").get<std::string>());
    ds = pg::load_dataset(p.is_absolute() ? p.string()
                                          : (std::filesystem::path(cfg_dir) / p).string());
  } else {
    throw pg::ConfigError("run config: 'data' must contain 'synth' or 'manifest'");
  }

  // Graphs: --graphs files override the config list.
  std::vector<pg::CorrelationGraph<double>> graphs;
  if (!a.graphs.empty()) {
    for (const std::string& path : a.graphs) {
      graphs.push_back(load_graph(path));
      if (graphs.back().n() != ds.n_classes()) {
        throw pg::InputError("graph '" + path + "' does not match dataset class count");
      }
    }
  } else {
    if (!cfg.contains("graphs") || !cfg.at("graphs").is_array() || cfg.at("graphs").empty()) {
      throw pg::ConfigError("run config: 'graphs' must be a non-empty array");
    }
    for (const json& gj : cfg.at("graphs")) {
      graphs.push_back(realize_graph(graph_source_from_json(gj), ds.n_classes(),
                                     have_oracle ? &oracle : nullptr, cfg_dir));
    }
  }

  // Experiment configuration: flags over config file over defaults.
  pg::ExperimentConfig ecfg;
  ecfg.train = train_from_json(cfg.contains("train") ? cfg.at("train") : json::object());
  if (cfg.contains("classifier")) {
    ecfg.classifier.similarity =
        pg::similarity_from_string(get_or<std::string>(cfg.at("classifier"), "similarity", "cosine"));
    ecfg.classifier.ensemble =
        pg::ensemble_from_string(get_or<std::string>(cfg.at("classifier"), "ensemble", "mean"));
  }
  if (cfg.contains("kgtm")) {
    const json& kj = cfg.at("kgtm");
    ecfg.kgtm.steps = get_or(kj, "steps", ecfg.kgtm.steps);
    ecfg.kgtm.hidden_dim = get_or(kj, "hidden_dim", ecfg.kgtm.hidden_dim);
    ecfg.kgtm.init_scale = get_or(kj, "init_scale", ecfg.kgtm.init_scale);
  }
  if (cfg.contains("eval")) {
    const json& ej = cfg.at("eval");
    ecfg.k_shots = get_or(ej, "k_shots", ecfg.k_shots);
    ecfg.top_k = get_or(ej, "top_k", ecfg.top_k);
    ecfg.repeats = get_or(ej, "repeats", ecfg.repeats);
    ecfg.base_seed = get_or(ej, "base_seed", ecfg.base_seed);
  }
  if (!a.similarity.empty()) ecfg.classifier.similarity = pg::similarity_from_string(a.similarity);
  if (!a.ensemble.empty()) ecfg.classifier.ensemble = pg::ensemble_from_string(a.ensemble);
  if (a.repeats > 0) ecfg.repeats = a.repeats;
  if (a.epochs >= 0) ecfg.train.epochs = a.epochs;
  if (a.seed_given) ecfg.base_seed = common.seed;
  ecfg.threads = common.threads;

  if ((ecfg.classifier.ensemble == pg::Ensemble::None) != (graphs.size() == 1)) {
    throw pg::ConfigError("run: ensemble 'none' is for exactly one graph and required when only one graph is given");
  }

  const pg::ExperimentResult res = pg::run_experiment(ds, graphs, ecfg);

  std::filesystem::create_directories(common.out);
  const std::filesystem::path dir(common.out);
  pg::write_report_json(res.report, (dir / "report.json").string());
  pg::write_report_tsv(res.report, (dir / "report.tsv").string(),
                       pg::to_string(ecfg.classifier.ensemble) + "/" +
                           pg::to_string(ecfg.classifier.similarity));
  pg::save_checkpoint((dir / "checkpoint").string(), res.final_cfgs, res.final_params);
  pg::write_jsonl(res.final_log, (dir / "trainlog.jsonl").string());

  std::cout << pg::to_json(res.report).dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------ gradcheck

json gradcheck_json(const pg::GradcheckReport& rep) {
  json out;
  out["preset"] = rep.preset;
  out["pass"] = rep.pass;
  out["max_rel_error"] = rep.max_rel;
  out["tolerance"] = pg::kGradcheckTol;
  json per = json::object();
  for (const auto& [name, rel] : rep.per_tensor) per[name] = rel;
  out["per_tensor_max_rel"] = per;
  out["worst"] = {{"tensor", rep.worst.tensor}, {"row", rep.worst.row},
                  {"col", rep.worst.col},       {"analytic", rep.worst.analytic},
                  {"numeric", rep.worst.numeric}, {"rel", rep.worst.rel}};
  return out;
}

int cmd_gradcheck(const std::string& preset, bool tamper) {
  std::vector<std::string> presets;
  if (preset.empty()) {
    presets = {"kgtm", "stage1", "stage2"};
  } else {
    presets = {preset};
  }
  json out = json::array();
  bool all_pass = true;
  for (const std::string& p : presets) {
    const pg::GradcheckReport rep = pg::run_gradcheck(p, tamper);
    out.push_back(gradcheck_json(rep));
    all_pass = all_pass && rep.pass;
    if (!rep.pass) {
      std::cerr << "gradcheck " << p << " FAILED: tensor " << rep.worst.tensor << " ("
                << rep.worst.row << "," << rep.worst.col << ") analytic " << rep.worst.analytic
                << " vs numeric " << rep.worst.numeric << " rel " << rep.worst.rel << '\n';
    }
  }
  std::cout << out.dump(2) << '\n';
  return all_pass ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-gated prototype learner: class-correlation graphs, gated propagation, "
               "ensembled few-shot classification"};
  app.require_subcommand(1);

  Common common;
  app.add_option("--seed", common.seed, "Master random seed")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker thread count (recorded in reports)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", common.out, "Output file (build-graph) or directory (other commands)")
      ->capture_default_str();
  app.add_option("--config", common.config, "JSON config file (run)");

  BuildGraphArgs bg;
  CLI::App* build = app.add_subcommand("build-graph", "Distance matrix to correlation graph");
  build->fallthrough();
  build->add_option("--embeddings", bg.embeddings, "Class-embedding matrix file (rows = classes)");
  build->add_option("--taxonomy", bg.taxonomy, "Taxonomy file: lines of <node>\\t<parent|ROOT>");
  build->add_option("--distances", bg.distances, "Precomputed class-distance matrix file");
  build->add_option("--decay", bg.decay, "Exponential decay base in (0,1)")->capture_default_str();
  build->add_flag("--no-symmetrize", bg.no_symmetrize, "Keep the asymmetric row-wise transform");
  build->add_option("--taxonomy-distance", bg.taxonomy_distance,
                    "path_length|ancestor_count")->capture_default_str();

  std::string stats_file;
  bool stats_diag = false;
  CLI::App* stats = app.add_subcommand("stats", "Descriptive statistics of a matrix file");
  stats->fallthrough();
  stats->add_option("file", stats_file, "Matrix file (binary or TSV)")->required();
  stats->add_flag("--include-diagonal", stats_diag, "Include diagonal entries");

  std::string mantel_a, mantel_b;
  int mantel_perms = 999;
  CLI::App* mantel_cmd = app.add_subcommand("mantel", "Permutation test between two distance matrices");
  mantel_cmd->fallthrough();
  mantel_cmd->add_option("file1", mantel_a, "First distance matrix")->required();
  mantel_cmd->add_option("file2", mantel_b, "Second distance matrix")->required();
  mantel_cmd->add_option("--permutations", mantel_perms, "Permutation count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SynthArgs sy;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic few-shot dataset");
  synth->fallthrough();
  synth->add_option("--k-base", sy.spec.k_base, "Base class count")->capture_default_str();
  synth->add_option("--k-novel", sy.spec.k_novel, "Novel class count")->capture_default_str();
  synth->add_option("--dim", sy.spec.dim, "Feature dimension")->capture_default_str();
  synth->add_option("--train-per-class", sy.spec.train_per_class, "Train samples per class")
      ->capture_default_str();
  synth->add_option("--test-per-class", sy.spec.test_per_class, "Test samples per class")
      ->capture_default_str();
  synth->add_option("--cluster-std", sy.spec.cluster_std, "Within-class sample std")
      ->capture_default_str();
  synth->add_option("--mean-scale", sy.spec.mean_scale, "Class-mean scale")->capture_default_str();

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train stage 1 (linear head) or stage 2 (graph modules)");
  train->fallthrough();
  train->add_option("--stage", tr.stage, "1|2")->capture_default_str();
  train->add_option("--data", tr.data, "Dataset manifest JSON")->required();
  train->add_option("--graphs", tr.graphs, "Correlation graph files (stage 2)")->delimiter(',');
  train->add_option("--k-shot", tr.k_shot, "Subsample novel train pools to k before training");
  train->add_option("--steps", tr.steps, "Propagation steps T")->capture_default_str();
  train->add_option("--hidden-dim", tr.hidden_dim, "Hidden dim d (0 = feature dim)")
      ->capture_default_str();
  train->add_option("--init-scale", tr.init_scale, "Init std (negative = 1/sqrt(d))")
      ->capture_default_str();
  train->add_option("--similarity", tr.similarity, "inner|cosine|pearson")->capture_default_str();
  train->add_option("--ensemble", tr.ensemble, "mean|max|none")->capture_default_str();
  train->add_option("--lr0", tr.tcfg.lr0, "Initial learning rate")->capture_default_str();
  train->add_option("--momentum", tr.tcfg.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--weight-decay", tr.tcfg.weight_decay, "L2 weight decay")->capture_default_str();
  train->add_option("--batch-size", tr.tcfg.batch_size, "Balanced batch size (even)")
      ->capture_default_str();
  train->add_option("--epochs", tr.tcfg.epochs, "Epoch count")->capture_default_str();
  train->add_option("--lr-decay-factor", tr.tcfg.lr_decay_factor, "LR divisor per interval")
      ->capture_default_str();
  train->add_option("--lr-decay-interval", tr.tcfg.lr_decay_interval, "Epochs per LR drop")
      ->capture_default_str();
  train->add_option("--sgm-weight", tr.tcfg.sgm_weight, "Stage-1 SGM loss weight")
      ->capture_default_str();
  train->add_option("--proto-reg", tr.tcfg.proto_reg, "Stage-2 prototype-norm weight")
      ->capture_default_str();
  train->add_option("--sgm-form", tr.sgm_form, "squared|paper_literal")->capture_default_str();
  train->add_flag("--independent-modules", [&tr](std::int64_t) { tr.tcfg.ensemble_in_loss = false; },
                  "Train each graph module on its own loss (ensemble only at inference)");
  train->add_flag("--freeze-hinit", tr.tcfg.freeze_hinit, "Do not train the initial hidden states");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--data", ev.data, "Dataset manifest JSON")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--graphs", ev.graphs, "Correlation graph files (one per module)")
      ->delimiter(',')
      ->required();
  eval_cmd->add_option("--k-shot", ev.k_shot, "Subsample novel train pools before evaluating");
  eval_cmd->add_option("--top-k", ev.top_k, "Accuracy cutoff")->capture_default_str();
  eval_cmd->add_option("--similarity", ev.similarity, "inner|cosine|pearson")->capture_default_str();
  eval_cmd->add_option("--ensemble", ev.ensemble, "mean|max|none")->capture_default_str();

  RunArgs rn;
  CLI::App* run = app.add_subcommand("run", "End-to-end experiment from a JSON config");
  run->fallthrough();
  run->add_option("--graphs", rn.graphs, "Override: correlation graph files")->delimiter(',');
  run->add_option("--similarity", rn.similarity, "Override: inner|cosine|pearson");
  run->add_option("--ensemble", rn.ensemble, "Override: mean|max|none");
  run->add_option("--repeats", rn.repeats, "Override: repeat count");
  run->add_option("--epochs", rn.epochs, "Override: epoch count");

  std::string gc_preset;
  bool gc_tamper = false;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck->fallthrough();
  gradcheck->add_option("--preset", gc_preset, "kgtm|stage1|stage2 (default: all)");
  gradcheck->add_flag("--tamper", gc_tamper, "Corrupt one analytic gradient entry")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  // --seed on the run subcommand switches the report seed; detect presence.
  rn.seed_given = app.count("--seed") > 0;

  try {
    if (*build) return cmd_build_graph(bg, common);
    if (*stats) return cmd_stats(stats_file, stats_diag);
    if (*mantel_cmd) return cmd_mantel(mantel_a, mantel_b, mantel_perms, common);
    if (*synth) return cmd_synth(sy, common);
    if (*train) return cmd_train(tr, common);
    if (*eval_cmd) return cmd_eval(ev, common);
    if (*run) return cmd_run(rn, common);
    if (*gradcheck) return cmd_gradcheck(gc_preset, gc_tamper);
  } catch (const pg::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const pg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const pg::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
