#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/graph.hpp"

namespace irm {

inline constexpr const char* kManifestFormat = "irm-manifest-1";

/// Dataset manifest: graph file, three feature files, optional ground-truth
/// latents, and the declared sizes. Paths are relative to the manifest.
struct Manifest {
  std::filesystem::path dir;
  std::size_t tweets = 0;
  std::size_t users = 0;
  std::string graph = "graph.txt";
  std::string global = "global.irmf";
  std::string conv = "conv.irmf";
  std::string text = "text.irmf";
  std::optional<std::string> latents;
  FeatureDims dims;
  nlohmann::json generator;  // echo of the generator config, if any

  std::vector<std::string> files() const {
    std::vector<std::string> out{graph, global, conv, text};
    if (latents) out.push_back(*latents);
    return out;
  }

  std::filesystem::path path_of(const std::string& f) const { return dir / f; }
};

inline nlohmann::json manifest_json(const Manifest& m) {
  nlohmann::json j = {{"format", kManifestFormat},
                      {"tweets", m.tweets},
                      {"users", m.users},
                      {"graph", m.graph},
                      {"features", {{"global", m.global}, {"conv", m.conv}, {"text", m.text}}},
                      {"dims", dims_json(m.dims)},
                      {"files", m.files()}};
  if (m.latents) j["latents"] = *m.latents;
  if (!m.generator.is_null()) j["generator"] = m.generator;
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << manifest_json(m).dump(2) << '\n';
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != kManifestFormat)
      throw FormatError("manifest " + path.string() + ": unsupported format");
    m.dir = path.parent_path();
    m.tweets = j.at("tweets").get<std::size_t>();
    m.users = j.at("users").get<std::size_t>();
    m.graph = j.at("graph").get<std::string>();
    m.global = j.at("features").at("global").get<std::string>();
    m.conv = j.at("features").at("conv").get<std::string>();
    m.text = j.at("features").at("text").get<std::string>();
    if (j.contains("latents")) m.latents = j.at("latents").get<std::string>();
    m.dims = dims_from_json(j.at("dims"));
    if (j.contains("generator")) m.generator = j.at("generator");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

struct Dataset {
  Manifest manifest;
  IRMNetwork net;
  FeatureStore features;
  ValidationReport report;
};

inline IRMNetwork read_graph_file(const std::filesystem::path& path, std::size_t tweets, std::size_t users) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open graph " + path.string());
  const GraphEdges e = read_graph_text(in);
  return build_graph(tweets, users, e.retweets, e.follows);
}

/// Loads and validates every file the manifest names.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const Manifest& m = ds.manifest;
  ds.net = read_graph_file(m.path_of(m.graph), m.tweets, m.users);
  const FeatureBlock g = read_features(m.path_of(m.global), FeatureKind::Global);
  const FeatureBlock c = read_features(m.path_of(m.conv), FeatureKind::Conv);
  const FeatureBlock t = read_features(m.path_of(m.text), FeatureKind::Text);
  ds.report = validate_dataset(ds.net, g, c, t);
  ds.features = make_feature_store(m.tweets, g, c, t);
  if (!(ds.features.dims() == m.dims)) throw ValidationError("feature file dims disagree with manifest dims");
  return ds;
}

}  // namespace irm
