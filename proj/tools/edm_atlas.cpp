// Command line front end: fixtures, extract, cluster, sweep, profile, plot.

#include "edm_atlas/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Flags {
  std::optional<std::string> config, manifest, out, features, embeddings, labels, profile_map, method;
  std::optional<std::uint64_t> seed;
  std::optional<int> k, k_min, k_max, restarts, bootstrap;
  std::optional<std::size_t> top_k, workers;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value config file; flags override it");
  cmd->add_option("--manifest", f.manifest, "track manifest CSV");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--workers", f.workers, "worker threads (0 = all cores)");
}

void add_model(CLI::App* cmd, Flags& f) {
  cmd->add_option("--features", f.features, "feature matrix CSV (default <out>/features.csv)");
  cmd->add_option("--embeddings", f.embeddings, "embedding CSV clustered without selection");
  cmd->add_option("--top-k", f.top_k, "features kept by selection");
  cmd->add_option("--method", f.method, "kmeans, divisive or both");
  cmd->add_option("--restarts", f.restarts, "k-means restarts");
}

edm_atlas::RunConfig resolve(const Flags& f) {
  edm_atlas::RunConfig c;
  if (f.config) c = edm_atlas::load_config_file(*f.config);
  auto set = [&](const char* key, const auto& v) {
    if (!v) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) edm_atlas::apply_setting(c, key, *v);
    else edm_atlas::apply_setting(c, key, std::to_string(*v));
  };
  set("manifest", f.manifest);
  set("out", f.out);
  set("features", f.features);
  set("embeddings", f.embeddings);
  set("labels", f.labels);
  set("profile_map", f.profile_map);
  set("method", f.method);
  set("seed", f.seed);
  set("k", f.k);
  set("k_min", f.k_min);
  set("k_max", f.k_max);
  set("restarts", f.restarts);
  set("bootstrap", f.bootstrap);
  set("top_k", f.top_k);
  set("workers", f.workers);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  edm_atlas::configure_logging_from_env();
  CLI::App app{"Acoustic feature extraction and clustering for electronic music catalogs"};
  app.require_subcommand(1);
  Flags f;

  auto* fixtures = app.add_subcommand("fixtures", "write the synthetic 40-track fixture set and manifest");
  add_common(fixtures, f);
  int per_genre = 10;
  double duration = 12.0;
  fixtures->add_option("--tracks-per-genre", per_genre, "tracks per genre");
  fixtures->add_option("--duration", duration, "seconds per track");

  auto* extract = app.add_subcommand("extract", "extract features for every manifest track");
  add_common(extract, f);

  auto* cluster = app.add_subcommand("cluster", "select features, cluster at fixed k and evaluate");
  add_common(cluster, f);
  add_model(cluster, f);
  cluster->add_option("--k", f.k, "cluster count");
  cluster->add_option("--bootstrap", f.bootstrap, "bootstrap rounds for the stability metric");

  auto* sweep = app.add_subcommand("sweep", "choose k by consensus over a range");
  add_common(sweep, f);
  add_model(sweep, f);
  sweep->add_option("--k-min", f.k_min, "smallest k");
  sweep->add_option("--k-max", f.k_max, "largest k");

  auto* profile = app.add_subcommand("profile", "six-dimension cluster profiles and radar plots");
  add_common(profile, f);
  profile->add_option("--features", f.features, "feature matrix CSV (default <out>/features.csv)");
  profile->add_option("--embeddings", f.embeddings, "embedding CSV");
  profile->add_option("--labels", f.labels, "labels CSV (default <out>/labels_<method>.csv)");
  profile->add_option("--method", f.method, "method whose labels are profiled");
  profile->add_option("--profile-map", f.profile_map, "dimension mapping CSV");

  auto* plot = app.add_subcommand("plot", "PCA scatter of the clustered matrix");
  add_common(plot, f);
  add_model(plot, f);
  plot->add_option("--labels", f.labels, "labels CSV (default <out>/labels_<method>.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    const edm_atlas::RunConfig cfg = resolve(f);
    if (fixtures->parsed()) {
      edm_atlas::FixtureSpec spec;
      spec.tracks_per_genre = per_genre;
      spec.duration = duration;
      return edm_atlas::cmd_fixtures(cfg.out_dir, cfg.seed, spec);
    }
    if (extract->parsed()) return edm_atlas::cmd_extract(cfg);
    if (cluster->parsed()) return edm_atlas::cmd_cluster(cfg);
    if (sweep->parsed()) return edm_atlas::cmd_sweep(cfg);
    if (profile->parsed()) return edm_atlas::cmd_profile(cfg);
    if (plot->parsed()) return edm_atlas::cmd_plot(cfg);
  } catch (const edm_atlas::ConfigError& e) {
    spdlog::error("{}", e.what());
    return edm_atlas::kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return edm_atlas::kExitFatal;
  }
  return edm_atlas::kExitOk;
}
