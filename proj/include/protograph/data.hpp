#pragma once

// Few-shot dataset model: base/novel class roles, train/test sample
// split, k-shot subsampling of novel-class train pools, a JSON-manifest
// loader for externally produced features, and a synthetic Gaussian
// cluster generator with a ground-truth class-distance oracle.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protograph/errors.hpp"
#include "protograph/graph.hpp"
#include "protograph/matrix_io.hpp"
#include "protograph/rng.hpp"
#include "protograph/types.hpp"

namespace protograph {

enum class ClassRole { Base, Novel };
enum class SampleSplit { Train, Test };

struct FewShotDataset {
  Matrixd features;                       // N x D
  std::vector<Index> labels;              // N entries in [0, K)
  std::vector<ClassRole> class_role;      // K entries
  std::vector<SampleSplit> sample_split;  // N entries
  std::optional<int> k_shot;              // set once subsampling was applied
  std::vector<int> fold;                  // optional per-class fold ids; empty when unused

  Index n() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  Index n_classes() const { return static_cast<Index>(class_role.size()); }
};

/// Indices of all samples with the given split whose class has the given
/// role. The core sampling pools: (Train, Base) and (Train, Novel).
inline std::vector<Index> sample_pool(const FewShotDataset& ds, SampleSplit split, ClassRole role) {
  std::vector<Index> pool;
  for (Index i = 0; i < ds.n(); ++i) {
    if (ds.sample_split[static_cast<std::size_t>(i)] != split) continue;
    if (ds.class_role[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] != role) continue;
    pool.push_back(i);
  }
  return pool;
}

inline void validate(const FewShotDataset& ds) {
  const Index n = ds.features.rows();
  const Index k = ds.n_classes();
  if (n == 0) throw InputError("dataset: no samples");
  if (k < 2) throw InputError("dataset: class_role must list at least 2 classes");
  if (static_cast<Index>(ds.labels.size()) != n) {
    throw InputError("dataset: labels length does not match feature rows");
  }
  if (static_cast<Index>(ds.sample_split.size()) != n) {
    throw InputError("dataset: sample_split length does not match feature rows");
  }
  if (!ds.fold.empty() && static_cast<Index>(ds.fold.size()) != k) {
    throw InputError("dataset: fold length does not match class count");
  }
  if (!ds.features.allFinite()) throw InputError("dataset: non-finite feature value");
  std::vector<int> test_count(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < n; ++i) {
    const Index y = ds.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw InputError("dataset: labels contains out-of-range class " + std::to_string(y));
    }
    if (ds.sample_split[static_cast<std::size_t>(i)] == SampleSplit::Test) {
      ++test_count[static_cast<std::size_t>(y)];
    }
  }
  for (Index c = 0; c < k; ++c) {
    if (test_count[static_cast<std::size_t>(c)] == 0) {
      throw InputError("dataset: class " + std::to_string(c) + " has no test sample");
    }
  }
}

struct SyntheticSpec {
  Index k_base = 20;
  Index k_novel = 20;
  Index dim = 32;
  Index train_per_class = 30;
  Index test_per_class = 10;
  double cluster_std = 1.75;
  double mean_scale = 2.0;
  std::uint64_t seed = 0;
};

struct SynthData {
  FewShotDataset dataset;
  Matrixd means;                  // K x dim true class means
  DistanceMatrix<double> oracle;  // pairwise Euclidean over true means
};

/// Gaussian clusters: class means ~ N(0, mean_scale^2 I), samples
/// ~ N(mean_c, cluster_std^2 I). Every class (base and novel alike) gets
/// a full train pool; k-shot subsampling later trims the novel pools. The
/// oracle distance matrix over true means is what an ideal knowledge
/// source would report.
inline SynthData synth_generate(const SyntheticSpec& spec) {
  if (spec.k_base < 1 || spec.k_novel < 1) throw ConfigError("synth: k_base and k_novel must be >= 1");
  if (spec.dim < 1) throw ConfigError("synth: dim must be >= 1");
  if (spec.train_per_class < 1 || spec.test_per_class < 1) {
    throw ConfigError("synth: per-class sample counts must be >= 1");
  }
  if (spec.cluster_std < 0 || spec.mean_scale < 0) {
    throw ConfigError("synth: cluster_std and mean_scale must be >= 0");
  }

  const Index k = spec.k_base + spec.k_novel;
  const Index per_class = spec.train_per_class + spec.test_per_class;
  Rng rng(spec.seed);

  SynthData out;
  out.means.resize(k, spec.dim);
  for (Index c = 0; c < k; ++c) {
    for (Index j = 0; j < spec.dim; ++j) out.means(c, j) = spec.mean_scale * rng.gaussian();
  }

  FewShotDataset& ds = out.dataset;
  ds.features.resize(k * per_class, spec.dim);
  ds.labels.reserve(static_cast<std::size_t>(k * per_class));
  ds.sample_split.reserve(static_cast<std::size_t>(k * per_class));
  Index row = 0;
  for (Index c = 0; c < k; ++c) {
    for (Index s = 0; s < per_class; ++s, ++row) {
      for (Index j = 0; j < spec.dim; ++j) {
        ds.features(row, j) = out.means(c, j) + spec.cluster_std * rng.gaussian();
      }
      ds.labels.push_back(c);
      ds.sample_split.push_back(s < spec.train_per_class ? SampleSplit::Train : SampleSplit::Test);
    }
  }
  ds.class_role.assign(static_cast<std::size_t>(k), ClassRole::Base);
  for (Index c = spec.k_base; c < k; ++c) ds.class_role[static_cast<std::size_t>(c)] = ClassRole::Novel;

  out.oracle = pairwise_euclidean(out.means);
  validate(ds);
  return out;
}

/// Keeps k uniformly chosen train samples per novel class (all when fewer
/// are available); base-class train samples and all test samples pass
/// through. Dropped rows are removed, so reapplying with the same k is a
/// no-op.
inline FewShotDataset ksample(const FewShotDataset& ds, int k, std::uint64_t seed) {
  if (k < 1) throw InputError("ksample: k must be >= 1");
  validate(ds);

  std::vector<char> keep(static_cast<std::size_t>(ds.n()), 1);
  Rng rng(seed);
  for (Index c = 0; c < ds.n_classes(); ++c) {
    if (ds.class_role[static_cast<std::size_t>(c)] != ClassRole::Novel) continue;
    std::vector<Index> pool;
    for (Index i = 0; i < ds.n(); ++i) {
      if (ds.labels[static_cast<std::size_t>(i)] == c &&
          ds.sample_split[static_cast<std::size_t>(i)] == SampleSplit::Train) {
        pool.push_back(i);
      }
    }
    if (static_cast<int>(pool.size()) <= k) continue;
    for (Index i : pool) keep[static_cast<std::size_t>(i)] = 0;
    for (std::size_t pick : rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(k))) {
      keep[static_cast<std::size_t>(pool[pick])] = 1;
    }
  }

  FewShotDataset out;
  const Index kept = static_cast<Index>(std::count(keep.begin(), keep.end(), 1));
  out.features.resize(kept, ds.dim());
  out.labels.reserve(static_cast<std::size_t>(kept));
  out.sample_split.reserve(static_cast<std::size_t>(kept));
  Index row = 0;
  for (Index i = 0; i < ds.n(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    out.features.row(row++) = ds.features.row(i);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    out.sample_split.push_back(ds.sample_split[static_cast<std::size_t>(i)]);
  }
  out.class_role = ds.class_role;
  out.fold = ds.fold;
  out.k_shot = k;
  validate(out);
  return out;
}

namespace detail {

inline nlohmann::json load_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw InputError(what + ": cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(what + ": invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

}  // namespace detail

inline constexpr int kDatasetManifestVersion = 1;

/// Reads a dataset manifest (JSON) plus its referenced feature matrix.
/// The feature_file path is resolved relative to the manifest's
/// directory. Every dataset invariant is enforced, naming the offending
/// field.
inline FewShotDataset load_dataset(const std::string& manifest_path) {
  const nlohmann::json j = detail::load_json_file(manifest_path, "dataset manifest");
  for (const char* field : {"version", "feature_file", "labels", "class_role", "sample_split"}) {
    if (!j.contains(field)) throw InputError("dataset manifest: missing field '" + std::string(field) + "'");
  }
  if (j["version"].get<int>() != kDatasetManifestVersion) {
    throw InputError("dataset manifest: unsupported version");
  }

  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  const std::string feature_file = (base / j["feature_file"].get<std::string>()).string();

  FewShotDataset ds;
  ds.features = load_matrix<double>(feature_file);
  try {
    ds.labels = j["labels"].get<std::vector<Index>>();
  } catch (const nlohmann::json::exception&) {
    throw InputError("dataset manifest: field 'labels' must be an integer array");
  }
  for (const auto& role : j["class_role"]) {
    const std::string s = role.get<std::string>();
    if (s == "base") {
      ds.class_role.push_back(ClassRole::Base);
    } else if (s == "novel") {
      ds.class_role.push_back(ClassRole::Novel);
    } else {
      throw InputError("dataset manifest: class_role entry '" + s + "' is not base|novel");
    }
  }
  for (const auto& split : j["sample_split"]) {
    const std::string s = split.get<std::string>();
    if (s == "train") {
      ds.sample_split.push_back(SampleSplit::Train);
    } else if (s == "test") {
      ds.sample_split.push_back(SampleSplit::Test);
    } else {
      throw InputError("dataset manifest: sample_split entry '" + s + "' is not train|test");
    }
  }
  if (j.contains("fold")) ds.fold = j["fold"].get<std::vector<int>>();
  if (j.contains("k_shot") && !j["k_shot"].is_null()) ds.k_shot = j["k_shot"].get<int>();
  validate(ds);
  return ds;
}

/// Writes the feature matrix (KGEM, next to the manifest) and the JSON
/// manifest. load_dataset(save_dataset(ds)) reproduces every field.
inline void save_dataset(const FewShotDataset& ds, const std::string& manifest_path,
                         const std::string& feature_file_name) {
  validate(ds);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  write_kgem((base / feature_file_name).string(), ds.features.cast<float>());

  nlohmann::json j;
  j["version"] = kDatasetManifestVersion;
  j["feature_file"] = feature_file_name;
  j["labels"] = ds.labels;
  std::vector<std::string> roles;
  for (ClassRole r : ds.class_role) roles.push_back(r == ClassRole::Base ? "base" : "novel");
  j["class_role"] = roles;
  std::vector<std::string> splits;
  for (SampleSplit s : ds.sample_split) splits.push_back(s == SampleSplit::Train ? "train" : "test");
  j["sample_split"] = splits;
  if (!ds.fold.empty()) j["fold"] = ds.fold;
  if (ds.k_shot) j["k_shot"] = *ds.k_shot;

  std::ofstream out(manifest_path);
  if (!out) throw InputError("dataset manifest: cannot write '" + manifest_path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace protograph
