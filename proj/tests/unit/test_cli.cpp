// End-to-end runs of the command-line entry point, in process.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mcdsvdd/cli/commands.hpp"

namespace fs = std::filesystem;
using mcdsvdd::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mcdsvdd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("mcdsvdd_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv(mcdsvdd::cli::kOutputDirEnv);
  }
  void TearDown() override {
    unsetenv(mcdsvdd::cli::kOutputDirEnv);
    fs::remove_all(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // Three 4-d clusters 20 sigma apart, 200 rows each.
  fs::path write_spec() const {
    const auto p = path("spec.json");
    spit(p, slurp(fs::path(MCDSVDD_SOURCE_DIR) / "configs" / "synthetic_3cluster.json"));
    return p;
  }

  fs::path write_config(nlohmann::json j) const {
    const nlohmann::json base = {
        {"seed", 3},
        {"synthetic", "spec.json"},
        {"taxonomy", "infer"},
        {"detector_defaults",
         {{"architecture", {{"hidden", {8}}, {"latent", 3}}},
          {"training", {{"max_epochs", 4}, {"batch_size", 64}}},
          {"iforest", {{"trees", 20}, {"subsample", 64}}}}},
        {"detectors", {"iforest", "mcdsvdd"}},
        {"protocol", {{"folds", 2}, {"n_quantiles", 100}}},
        {"output_dir", "out"},
    };
    auto merged = base;
    if (j.is_object()) merged.merge_patch(j);
    write_spec();
    const auto p = path("run.json");
    spit(p, merged.dump());
    return p;
  }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s, bool skip_comments = true) {
  std::istringstream in(s);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += !(skip_comments && !line.empty() && line[0] == '#');
  return n;
}

}  // namespace

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"bench"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, SynthCountsLabelsAndDeterminism) {
  const auto spec = write_spec();
  const auto a = path("a.csv");
  const auto b = path("b.csv");
  ASSERT_EQ(cli({"synth", "--spec", spec.string(), "--seed", "9", "--output", a.string()}).code, 0);
  ASSERT_EQ(cli({"synth", "--spec", spec.string(), "--seed", "9", "--output", b.string()}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  ASSERT_EQ(cli({"synth", "--spec", spec.string(), "--seed", "10", "--output", b.string()}).code, 0);
  EXPECT_NE(slurp(a), slurp(b));

  mcdsvdd::data::ParseOptions options;
  options.taxonomy.reset();
  const auto d = mcdsvdd::data::parse_dataset(a, options).dataset;
  EXPECT_EQ(d.size(), 600u);
  EXPECT_EQ(d.subclass_counts().size(), 3u);
  EXPECT_NE(slurp(a).find("# seed=9 spec_digest=fnv1a64:"), std::string::npos);
}

TEST_F(CliTest, SynthClustersAreNearestCentroidSeparable) {
  const auto spec_path = write_spec();
  const auto out = path("d.csv");
  ASSERT_EQ(cli({"synth", "--spec", spec_path.string(), "--seed", "4", "--output", out.string()}).code, 0);
  std::ifstream in(spec_path);
  const auto spec = mcdsvdd::data::SyntheticSpec::from_json(nlohmann::json::parse(in));
  mcdsvdd::data::ParseOptions options;
  options.taxonomy.reset();
  const auto d = mcdsvdd::data::parse_dataset(out, options).dataset;
  std::size_t correct = 0;
  for (const auto& s : d.samples()) {
    const Eigen::Map<const Eigen::VectorXd> x(s.features.data(), static_cast<Eigen::Index>(s.features.size()));
    std::string nearest;
    double best = INFINITY;
    for (const auto& c : spec.clusters) {
      const double dist = (x - c.mean).squaredNorm();
      if (dist < best) {
        best = dist;
        nearest = c.subclass;
      }
    }
    correct += nearest == s.subclass;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(d.size()), 0.99);
}

TEST_F(CliTest, SynthRejectsBadSpecWithFieldPath) {
  const auto p = path("bad.json");
  spit(p, R"({"clusters": [{"top_class": "t", "subclass": "A", "count": 5, "mean": [0]},
                           {"top_class": "t", "subclass": "B", "count": 0, "mean": [1]}]})");
  const auto r = cli({"synth", "--spec", p.string(), "--seed", "1", "--output", path("x.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("clusters[1].count"), std::string::npos) << r.err;
}

TEST_F(CliTest, BenchWritesReportsAndCards) {
  const auto cfg = write_config({});
  const auto r = cli({"bench", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = path("out");
  const auto results = slurp(out / "results.csv");
  EXPECT_EQ(count_lines(results), 1u + 2 * 3 * 2);
  const auto digest = nlohmann::json::parse(slurp(out / "run.json")).at("config_digest").get<std::string>();
  EXPECT_NE(results.find(",3," + digest + "\n"), std::string::npos);
  EXPECT_NE(slurp(out / "table.txt").find("master_seed=3 config_digest=" + digest), std::string::npos);
  EXPECT_EQ(count_lines(slurp(out / "summary.csv")), 1u + 2 * 3);
  for (const char* det : {"iforest", "mcdsvdd"}) {
    for (const char* sub : {"A", "B", "C"}) {
      const auto card = mcdsvdd::detectors::load_card(out / "models" / (std::string(det) + "__synthetic__" + sub + ".card.json"));
      EXPECT_EQ(card.manifest.at("outlier_subclass"), sub);
      EXPECT_FALSE(card.manifest.at("training_subclass_counts").contains(sub));
      EXPECT_EQ(card.manifest.at("config_digest"), digest);
    }
  }
}

TEST_F(CliTest, BenchIsByteIdenticalAcrossRunsAndWorkers) {
  const auto cfg = write_config({});
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("r1").string()}).code, 0);
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("r2").string()}).code, 0);
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("r3").string(), "--jobs", "3"}).code, 0);
  EXPECT_EQ(slurp(path("r1") / "results.csv"), slurp(path("r2") / "results.csv"));
  EXPECT_EQ(slurp(path("r1") / "results.csv"), slurp(path("r3") / "results.csv"));
}

TEST_F(CliTest, CommandLineOverridesFileAndChangesDigest) {
  const auto cfg = write_config({});
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("a").string()}).code, 0);
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("b").string(), "--seed", "4",
                 "--detectors", "iforest"})
                .code,
            0);
  const auto a = nlohmann::json::parse(slurp(path("a") / "run.json"));
  const auto b = nlohmann::json::parse(slurp(path("b") / "run.json"));
  EXPECT_EQ(b.at("seed"), 4);
  EXPECT_EQ(b.at("detectors").size(), 1u);
  EXPECT_NE(a.at("config_digest"), b.at("config_digest"));
  EXPECT_EQ(count_lines(slurp(path("b") / "results.csv")), 1u + 3 * 2);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  const auto cfg = write_config({{"detectors", {"iforest"}}});
  setenv(mcdsvdd::cli::kOutputDirEnv, path("env_out").c_str(), 1);
  ASSERT_EQ(cli({"bench", "--config", cfg.string()}).code, 0);
  EXPECT_TRUE(fs::exists(path("env_out") / "results.csv"));
  EXPECT_FALSE(fs::exists(path("out")));
  ASSERT_EQ(cli({"bench", "--config", cfg.string(), "--output-dir", path("flag_out").string()}).code, 0);
  EXPECT_TRUE(fs::exists(path("flag_out") / "results.csv"));
}

TEST_F(CliTest, MissingDatasetNamesThePath) {
  const auto cfg = write_config({{"synthetic", nullptr}, {"dataset", "nowhere/features.csv"}});
  const auto r = cli({"bench", "--config", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nowhere/features.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, SeedIsMandatory) {
  const auto cfg = write_config({{"seed", nullptr}});
  const auto r = cli({"bench", "--config", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
  EXPECT_EQ(cli({"bench", "--config", cfg.string(), "--seed", "5", "--detectors", "iforest"}).code, 0);
}

TEST_F(CliTest, ConfigTyposAreRejected) {
  EXPECT_EQ(cli({"bench", "--config", write_config({{"fold", 3}}).string()}).code, 2);
  EXPECT_EQ(cli({"bench", "--config", write_config({{"detectors", {"svm"}}}).string()}).code, 2);
  EXPECT_EQ(cli({"bench", "--config", path("absent.json").string()}).code, 2);
}

TEST_F(CliTest, PartialFailureHasItsOwnExitCode) {
  const auto cfg = write_config({{"detectors", {"iforest"}},
                                 {"cells",
                                  {{{"top_class", "synthetic"}, {"outlier_subclass", "A"}},
                                   {{"top_class", "synthetic"}, {"outlier_subclass", "Z"}}}}});
  const auto r = cli({"bench", "--config", cfg.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("\"kind\":\"cell\""), std::string::npos);
  EXPECT_NE(slurp(path("out") / "results.csv").find(",failed,"), std::string::npos);

  const auto all_bad = write_config(
      {{"detectors", {"iforest"}}, {"cells", {{{"top_class", "synthetic"}, {"outlier_subclass", "Z"}}}}});
  EXPECT_EQ(cli({"bench", "--config", all_bad.string()}).code, 1);
}

TEST_F(CliTest, TrainScoreReplay) {
  const auto data_file = path("data.csv");
  ASSERT_EQ(cli({"synth", "--spec", write_spec().string(), "--seed", "2", "--output", data_file.string()}).code, 0);
  const auto cfg = write_config({{"synthetic", nullptr}, {"dataset", "data.csv"}});
  const auto card = path("model.card.json");
  for (const char* det : {"mcdsvdd", "ocsvm"}) {
    const auto t = cli({"train", "--config", cfg.string(), "--detector", det, "--top-class", "synthetic", "--outlier",
                        "B", "--output", card.string()});
    ASSERT_EQ(t.code, 0) << t.err;
    const auto loaded = mcdsvdd::detectors::load_card(card);
    EXPECT_FALSE(loaded.manifest.at("training_subclass_counts").contains("B"));
    EXPECT_TRUE(loaded.manifest.at("training_subclass_counts").contains("A"));

    const auto scores = path("scores.csv");
    ASSERT_EQ(cli({"score", "--model", card.string(), "--input", data_file.string(), "--output", scores.string()}).code, 0);
    const auto text = slurp(scores);
    EXPECT_EQ(text, slurp(path("model.card.json.scores.csv")));
    EXPECT_NE(text.find("# normalizer_digest=" + loaded.model.normalizer.digest()), std::string::npos);
    std::istringstream in(text);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line == "id,score") continue;
      EXPECT_TRUE(std::isfinite(std::stod(line.substr(line.find(',') + 1))));
      ++rows;
    }
    EXPECT_EQ(rows, 600u);
  }
}

TEST_F(CliTest, ScoreEdgeCases) {
  const auto data_file = path("data.csv");
  ASSERT_EQ(cli({"synth", "--spec", write_spec().string(), "--seed", "2", "--output", data_file.string()}).code, 0);
  const auto cfg = write_config({{"synthetic", nullptr}, {"dataset", "data.csv"}});
  const auto card = path("m.card.json");
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--detector", "iforest", "--top-class", "synthetic", "--outlier",
                 "C", "--output", card.string()})
                .code,
            0);

  spit(path("empty.csv"), "");
  ASSERT_EQ(cli({"score", "--model", card.string(), "--input", path("empty.csv").string(), "--output",
                 path("empty_scores.csv").string()})
                .code,
            0);
  EXPECT_EQ(count_lines(slurp(path("empty_scores.csv"))), 1u);  // the column header only

  spit(path("narrow.csv"), "id,top_class,subclass,f0,f1\nx,t,A,1,2\n");
  const auto narrow = cli({"score", "--model", card.string(), "--input", path("narrow.csv").string(), "--output",
                           path("n.csv").string()});
  EXPECT_EQ(narrow.code, 1);
  EXPECT_NE(narrow.err.find("\"kind\":\"shape\""), std::string::npos) << narrow.err;

  auto text = slurp(card);
  text[text.find("\"seed\"") + 9] ^= 1;
  spit(path("bad.card.json"), text);
  const auto bad = cli({"score", "--model", path("bad.card.json").string(), "--input", data_file.string(), "--output",
                        path("b.csv").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("\"kind\":\"checksum\""), std::string::npos) << bad.err;
}

TEST_F(CliTest, TrainRejectsUnknownPair) {
  const auto cfg = write_config({});
  const auto r = cli({"train", "--config", cfg.string(), "--detector", "iforest", "--top-class", "synthetic",
                      "--outlier", "Q"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Q"), std::string::npos);
}
