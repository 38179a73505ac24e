#include "edm_atlas/pipeline.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

using namespace edm_atlas;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / "edm_atlas_pipeline_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

FixtureSpec small_spec(int per_genre) {
  FixtureSpec s;
  s.tracks_per_genre = per_genre;
  s.duration = 10.0;
  return s;
}

// Tag balance and attribute quoting; enough to catch broken markup.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto j = s.find('>', i);
    if (j == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    if (tag.back() == '/') continue;
    stack.push_back(tag.substr(0, tag.find_first_of(" \n")));
  }
  return stack.empty();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EDM_ATLAS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One shared 4 x 5 fixture set with extracted features.
const fs::path& extracted_fixture() {
  static const fs::path dir = [] {
    const auto d = fresh_dir("shared");
    cmd_fixtures(d, 7, small_spec(5));
    RunConfig c;
    c.manifest = d / "manifest.csv";
    c.out_dir = d;
    c.workers = 1;
    if (cmd_extract(c) != kExitOk) throw std::runtime_error("fixture extraction failed");
    return d;
  }();
  return dir;
}

RunConfig fixture_config(const fs::path& out) {
  RunConfig c;
  c.manifest = extracted_fixture() / "manifest.csv";
  c.features = extracted_fixture() / "features.csv";
  c.out_dir = out;
  c.k = 4;
  c.k_min = 2;
  c.k_max = 8;
  c.restarts = 5;
  c.bootstrap = 5;
  c.workers = 1;
  return c;
}

}  // namespace

TEST(Config, FileAndOverrides) {
  const auto dir = fresh_dir("config");
  csv::write_file(dir / "run.cfg", "# comment\nmanifest = data/m.csv\nk=12\n\nmethod=both\nk_min = 3\nk_max=9\ntop_k=50\nseed=42\n");
  RunConfig c = load_config_file(dir / "run.cfg");
  EXPECT_EQ(c.manifest, fs::path("data/m.csv"));
  EXPECT_EQ(c.k, 12);
  EXPECT_EQ(c.method, "both");
  EXPECT_EQ(c.methods().size(), 2u);
  EXPECT_EQ(c.top_k, 50u);
  EXPECT_EQ(c.seed, 42u);
  apply_setting(c, "k", "20");
  EXPECT_EQ(c.k, 20);
  EXPECT_NO_THROW(c.validate());

  RunConfig d;
  EXPECT_EQ(d.k, 35);
  EXPECT_EQ(d.k_min, 15);
  EXPECT_EQ(d.k_max, 40);
  EXPECT_EQ(d.restarts, 50);
  EXPECT_EQ(d.top_k, 100u);
}

TEST(Config, Errors) {
  const auto dir = fresh_dir("config_err");
  csv::write_file(dir / "a.cfg", "colour=blue\n");
  EXPECT_THROW(load_config_file(dir / "a.cfg"), ConfigError);
  csv::write_file(dir / "b.cfg", "k=twelve\n");
  EXPECT_THROW(load_config_file(dir / "b.cfg"), ConfigError);
  csv::write_file(dir / "c.cfg", "just words\n");
  EXPECT_THROW(load_config_file(dir / "c.cfg"), ConfigError);
  EXPECT_THROW(load_config_file(dir / "missing.cfg"), ConfigError);
  RunConfig c;
  c.method = "spectral";
  EXPECT_THROW(c.validate(), ConfigError);
  c.method = "kmeans";
  c.k_min = 10;
  c.k_max = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Fixtures, ManifestAndDeterminism) {
  const auto a = fresh_dir("fix_a"), b = fresh_dir("fix_b");
  FixtureSpec s;
  s.duration = 2.0;
  cmd_fixtures(a, 3, s);
  cmd_fixtures(b, 3, s);
  const auto recs = load_manifest(a / "manifest.csv");
  ASSERT_EQ(recs.size(), 40u);
  std::set<double> bpms;
  for (const auto& r : recs) {
    bpms.insert(*r.bpm);
    EXPECT_TRUE(fs::exists(r.path));
    EXPECT_EQ(slurp(r.path), slurp(b / "audio" / r.path.filename()));
  }
  EXPECT_EQ(bpms, (std::set<double>{120, 128, 140, 174}));
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
}

TEST(Extract, SchemaAndRerun) {
  const auto& d = extracted_fixture();
  const FeatureMatrix m = load_matrix(d / "features.csv");
  EXPECT_EQ(m.n_rows(), 20);
  EXPECT_EQ(m.n_cols(), static_cast<Eigen::Index>(kExtractedFeatureCount + 2));
  const auto again = fresh_dir("extract_again");
  RunConfig c;
  c.manifest = d / "manifest.csv";
  c.out_dir = again;
  c.workers = 2;
  EXPECT_EQ(cmd_extract(c), kExitOk);
  EXPECT_EQ(slurp(again / "features.csv"), slurp(d / "features.csv"));
}

TEST(Extract, UnreadableTrackIsOmitted) {
  const auto d = fresh_dir("extract_partial");
  cmd_fixtures(d, 1, small_spec(10));
  csv::write_file(d / "audio" / "trance_03.wav", "not a wav file");
  RunConfig c;
  c.manifest = d / "manifest.csv";
  c.out_dir = d;
  c.workers = 1;
  EXPECT_EQ(cmd_extract(c), kExitPartial);
  const FeatureMatrix m = load_matrix(d / "features.csv");
  EXPECT_EQ(m.n_rows(), 39);
  EXPECT_EQ(std::find(m.rows.begin(), m.rows.end(), "trance_03"), m.rows.end());
}

TEST(Extract, AllFailingIsFatal) {
  const auto d = fresh_dir("extract_fatal");
  csv::write_file(d / "manifest.csv", "track_id,path,genre\na,nowhere.wav,x\n");
  RunConfig c;
  c.manifest = d / "manifest.csv";
  c.out_dir = d;
  EXPECT_THROW(cmd_extract(c), StageError);
  RunConfig none;
  EXPECT_THROW(cmd_extract(none), ConfigError);
}

TEST(Cluster, BothMethodsRecoverFamilies) {
  const auto out = fresh_dir("cluster");
  RunConfig c = fixture_config(out);
  c.method = "both";
  ASSERT_EQ(cmd_cluster(c), kExitOk);
  for (const char* m : {"kmeans", "divisive"}) {
    const auto j = nlohmann::json::parse(slurp(out / (std::string("report_") + m + ".json")));
    EXPECT_DOUBLE_EQ(j["external"]["ari"].get<double>(), 1.0) << m;
    EXPECT_EQ(j["selection"], "applied");
    EXPECT_EQ(j["n_tracks"], 20);
    EXPECT_EQ(j["n_features"], 100);
    EXPECT_EQ(j["k"], 4);
    // 5 rounds on 20 tracks rarely sees a pair 5 times; null, not an abort.
    EXPECT_TRUE(j["internal"]["cophenetic"].is_null() || j["internal"]["cophenetic"].is_number());
    EXPECT_TRUE(fs::exists(out / (std::string("labels_") + m + ".csv")));
    EXPECT_TRUE(fs::exists(out / (std::string("model_") + m + ".json")));
  }
  EXPECT_TRUE(fs::exists(out / "selection_report.csv"));
  const auto model = nlohmann::json::parse(slurp(out / "model_divisive.json"));
  EXPECT_EQ(model["split_tree"].size(), 7u);
}

TEST(Cluster, EmbeddingsSkipSelection) {
  const auto out = fresh_dir("cluster_emb");
  const auto recs = load_manifest(extracted_fixture() / "manifest.csv");
  std::string emb = "track_id,e0,e1,e2\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double g = static_cast<double>(i / 5);
    emb += fmt::format("{},{},{},{}\n", recs[i].track_id, 10 * g + 0.01 * static_cast<double>(i % 5), -3 * g, 0.1 * static_cast<double>(i % 3));
  }
  csv::write_file(out / "emb.csv", emb);
  RunConfig c = fixture_config(out);
  c.embeddings = out / "emb.csv";
  ASSERT_EQ(cmd_cluster(c), kExitOk);
  const auto j = nlohmann::json::parse(slurp(out / "report_kmeans.json"));
  EXPECT_EQ(j["selection"], "skipped");
  EXPECT_EQ(j["n_features"], 3);
  EXPECT_FALSE(fs::exists(out / "selection_report.csv"));
}

TEST(Cluster, KTooLargeIsConfigError) {
  RunConfig c = fixture_config(fresh_dir("cluster_bigk"));
  c.k = 20;
  EXPECT_THROW(cmd_cluster(c), ConfigError);
}

TEST(Sweep, OneRowPerKAndStableChoice) {
  const auto out = fresh_dir("sweep");
  RunConfig c = fixture_config(out);
  std::ostringstream first, second;
  ASSERT_EQ(cmd_sweep(c, first), kExitOk);
  const std::string csv1 = slurp(out / "sweep.csv");
  ASSERT_EQ(cmd_sweep(c, second), kExitOk);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(std::count(csv1.begin(), csv1.end(), '\n'), 1 + 7);
  // Printed k is the consensus argmax in the table, ties to the smaller k.
  const auto lines = csv::read_lines(out / "sweep.csv");
  int best_k = 0;
  double best = -1;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = csv::split(lines[r]);
    const double consensus = *csv::parse_double(f.back());
    if (consensus > best) {
      best = consensus;
      best_k = std::stoi(f[0]);
    }
  }
  EXPECT_EQ(first.str(), fmt::format("chosen_k={}\n", best_k));
  EXPECT_EQ(slurp(out / "sweep.csv"), csv1);
}

TEST(Sweep, TwentyBlobMatrix) {
  const auto out = fresh_dir("sweep_blobs");
  Eigen::MatrixXd centers(20, 2);
  for (int c = 0; c < 20; ++c) {
    centers(c, 0) = 20.0 * (c % 5);
    centers(c, 1) = 20.0 * (c / 5);
  }
  auto [x, y] = oracle::blobs(centers, 6, 1.0, 4);
  FeatureMatrix m;
  m.data = x;
  m.cols = {"e0", "e1"};
  m.groups.assign(2, FeatureGroup::embedding);
  for (Eigen::Index i = 0; i < x.rows(); ++i) m.rows.push_back("b" + std::to_string(i));
  save_matrix(m, out / "blobs.csv");
  RunConfig c;
  c.features = out / "blobs.csv";
  c.out_dir = out;
  c.restarts = 10;
  std::ostringstream s;
  ASSERT_EQ(cmd_sweep(c, s), kExitOk);
  const int k = std::stoi(s.str().substr(s.str().find('=') + 1));
  EXPECT_GE(k, 19);
  EXPECT_LE(k, 21);
  const std::string csv = slurp(out / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 26);
}

TEST(Profile, TwoClusterFixture) {
  const auto out = fresh_dir("profile");
  const FeatureMatrix m = load_matrix(extracted_fixture() / "features.csv");
  Labels lab;
  for (const auto& id : m.rows) lab.push_back(id.rfind("drum_and_bass", 0) == 0 ? 1 : 0);
  csv::write_file(out / "labels.csv", labels_to_csv(m.rows, lab));
  RunConfig c = fixture_config(out);
  c.labels = out / "labels.csv";
  ASSERT_EQ(cmd_profile(c), kExitOk);
  const auto lines = csv::read_lines(out / "profiles_kmeans.csv");
  ASSERT_EQ(lines.size(), 3u);
  const auto header = csv::split(lines[0]);
  const auto tempo = std::find(header.begin(), header.end(), "Tempo") - header.begin();
  EXPECT_EQ(csv::split(lines[2])[static_cast<std::size_t>(tempo)], "100");
  for (std::size_t r = 1; r < 3; ++r) {
    const auto f = csv::split(lines[r]);
    for (std::size_t j = 3; j < 9; ++j) {
      const double v = *csv::parse_double(f[j]);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
  for (int k = 0; k < 2; ++k) {
    const auto svg = slurp(out / fmt::format("profile_kmeans_cluster{:02d}.svg", k));
    EXPECT_TRUE(well_formed_xml(svg));
  }
  EXPECT_FALSE(fs::exists(out / "profile_kmeans_cluster02.svg"));
  const std::string before = slurp(out / "profile_kmeans_cluster01.svg");
  ASSERT_EQ(cmd_profile(c), kExitOk);
  EXPECT_EQ(slurp(out / "profile_kmeans_cluster01.svg"), before);
}

TEST(Plot, PcaProperties) {
  Eigen::MatrixXd centers(2, 3);
  centers << 0, 0, 0, 30, 5, -10;
  auto [x, y] = oracle::blobs(centers, 40, 1.0, 8);
  const Projection p = pca_2d(Matrix(x));
  EXPECT_GE(p.variance1, p.variance2);
  double m0 = 0, m1 = 0;
  for (int i = 0; i < 40; ++i) m0 += p.scores(i, 0) / 40, m1 += p.scores(40 + i, 0) / 40;
  double within = 0;
  for (int i = 0; i < 40; ++i) within += (p.scores(i, 0) - m0) * (p.scores(i, 0) - m0) / 39;
  EXPECT_GT(std::abs(m0 - m1), 5 * std::sqrt(within));
  EXPECT_THROW(pca_2d(Matrix::Random(5, 1)), std::invalid_argument);

  const Labels lab(y.begin(), y.end());
  const std::string svg = scatter_svg(p, lab);
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_EQ(svg, scatter_svg(pca_2d(Matrix(x)), lab));
  EXPECT_NE(svg.find("cluster 1"), std::string::npos);
}

TEST(Plot, CommandWritesScatter) {
  const auto out = fresh_dir("plot");
  RunConfig c = fixture_config(out);
  ASSERT_EQ(cmd_cluster(c), kExitOk);
  ASSERT_EQ(cmd_plot(c), kExitOk);
  EXPECT_TRUE(well_formed_xml(slurp(out / "scatter_kmeans.svg")));
}

TEST(Cli, ExitCodes) {
  const auto out = fresh_dir("cli");
  EXPECT_EQ(run_cli("cluster --out " + out.string() + " --method nonsense"), 2);
  EXPECT_EQ(run_cli("extract --out " + out.string()), 2);
  csv::write_file(out / "manifest.csv", "track_id,path,genre\na,nowhere.wav,x\n");
  EXPECT_EQ(run_cli("extract --manifest " + (out / "manifest.csv").string() + " --out " + out.string()), 3);
  EXPECT_EQ(run_cli("fixtures --out " + (out / "fx").string() + " --tracks-per-genre 1 --duration 10"), 0);
  csv::write_file(out / "fx" / "audio" / "house_00.wav", "junk");
  EXPECT_EQ(run_cli("extract --manifest " + (out / "fx" / "manifest.csv").string() + " --out " + (out / "fx").string()), 1);
}
