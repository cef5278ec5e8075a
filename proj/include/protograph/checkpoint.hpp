#pragma once

// Parameter checkpoints: one KGEM matrix file per tensor plus a JSON
// manifest carrying tensor names, shapes, per-module config, and the
// format version. Tensors round-trip through binary32 (the KGEM payload
// type); the manifest records the stored shapes for validation on load.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "protograph/data.hpp"
#include "protograph/errors.hpp"
#include "protograph/kgtm.hpp"
#include "protograph/matrix_io.hpp"

namespace protograph {

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& dir, const std::vector<KgtmConfig>& cfgs,
                            const std::vector<KgtmParams<double>>& params) {
  if (cfgs.size() != params.size()) throw InputError("checkpoint: config/params count mismatch");
  if (cfgs.empty()) throw InputError("checkpoint: nothing to save");
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["n_graphs"] = cfgs.size();
  nlohmann::json graphs = nlohmann::json::array();
  for (std::size_t m = 0; m < cfgs.size(); ++m) {
    const KgtmConfig& cfg = cfgs[m];
    nlohmann::json g;
    g["config"] = {{"n_classes", cfg.n_classes},     {"hidden_dim", cfg.hidden_dim},
                   {"feature_dim", cfg.feature_dim}, {"steps", cfg.steps},
                   {"init_seed", cfg.init_seed},     {"init_scale", cfg.init_scale}};
    nlohmann::json tensors;
    visit_tensors(params[m], [&](const char* name, const Matrix<double>& t) {
      const std::string file = "g" + std::to_string(m) + "_" + name + ".kgem";
      write_kgem((std::filesystem::path(dir) / file).string(), t.cast<float>());
      tensors[name] = {{"file", file}, {"rows", t.rows()}, {"cols", t.cols()}};
    });
    g["tensors"] = tensors;
    graphs.push_back(g);
  }
  manifest["graphs"] = graphs;

  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) throw InputError("checkpoint: cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
}

inline std::pair<std::vector<KgtmConfig>, std::vector<KgtmParams<double>>> load_checkpoint(
    const std::string& dir) {
  const nlohmann::json manifest =
      detail::load_json_file((std::filesystem::path(dir) / "manifest.json").string(),
                             "checkpoint manifest");
  if (!manifest.contains("version") || manifest["version"].get<int>() != kCheckpointVersion) {
    throw InputError("checkpoint manifest: missing or unsupported version");
  }
  if (!manifest.contains("graphs") || !manifest["graphs"].is_array()) {
    throw InputError("checkpoint manifest: missing graphs array");
  }

  std::vector<KgtmConfig> cfgs;
  std::vector<KgtmParams<double>> params;
  for (const auto& g : manifest["graphs"]) {
    KgtmConfig cfg;
    const auto& c = g.at("config");
    cfg.n_classes = c.at("n_classes").get<Index>();
    cfg.hidden_dim = c.at("hidden_dim").get<Index>();
    cfg.feature_dim = c.at("feature_dim").get<Index>();
    cfg.steps = c.at("steps").get<Index>();
    cfg.init_seed = c.at("init_seed").get<std::uint64_t>();
    cfg.init_scale = c.at("init_scale").get<double>();
    cfg = resolved(cfg);

    KgtmParams<double> p = init_params<double>(cfg);  // correct shapes, then overwritten
    visit_tensors(p, [&](const char* name, Matrix<double>& t) {
      if (!g.at("tensors").contains(name)) {
        throw InputError("checkpoint manifest: missing tensor '" + std::string(name) + "'");
      }
      const auto& entry = g.at("tensors").at(name);
      const std::string file =
          (std::filesystem::path(dir) / entry.at("file").get<std::string>()).string();
      Matrix<double> loaded = load_matrix<double>(file);
      if (loaded.rows() != entry.at("rows").get<Index>() ||
          loaded.cols() != entry.at("cols").get<Index>() || loaded.rows() != t.rows() ||
          loaded.cols() != t.cols()) {
        throw InputError("checkpoint: tensor '" + std::string(name) + "' shape mismatch in '" +
                         file + "'");
      }
      t = std::move(loaded);
    });
    cfgs.push_back(cfg);
    params.push_back(std::move(p));
  }
  if (cfgs.empty()) throw InputError("checkpoint: manifest lists no graphs");
  return {std::move(cfgs), std::move(params)};
}

}  // namespace protograph
