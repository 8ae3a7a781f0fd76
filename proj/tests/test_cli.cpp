#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "envshift/core.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("envshift-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    envshift::write_file((dir_ / "small.cfg").string(),
                         "regime = D\nn_train_envs = 3\nn_test_envs = 2\nsamples_per_env = 40\n"
                         "epochs = 2\nae_epochs = 2\ncontrastive_epochs = 2\nd_emb = 8\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(ENVSHIFT_CLI_PATH) + " --workdir " + dir_.string() + " " + args + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.err = envshift::read_file(err.string());
    return r;
  }

  std::string file(const std::string& rel) const { return envshift::read_file((dir_ / rel).string()); }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_F(Cli, GenWritesHeaderWithRegime) {
  ASSERT_EQ(run("--config small.cfg --seed 3 gen --out data.txt").status, 0);
  const std::string text = file("data.txt");
  EXPECT_NE(text.find("regime=D"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "data.txt.manifest"));
}

TEST_F(Cli, GenRequiresRegime) {
  envshift::write_file((dir_ / "noregime.cfg").string(), "samples_per_env = 40\n");
  const CliRun r = run("--config noregime.cfg gen --out data.txt");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("regime"), std::string::npos);
}

TEST_F(Cli, GenIsDeterministic) {
  ASSERT_EQ(run("--config small.cfg --seed 5 gen --out a.txt").status, 0);
  ASSERT_EQ(run("--config small.cfg --seed 5 gen --out b.txt").status, 0);
  EXPECT_EQ(file("a.txt"), file("b.txt"));
}

TEST_F(Cli, GenManifestReplays) {
  ASSERT_EQ(run("--config small.cfg --seed 9 gen --out a.txt").status, 0);
  ASSERT_EQ(run("--config a.txt.manifest gen --out b.txt").status, 0);
  EXPECT_EQ(file("a.txt"), file("b.txt"));
}

TEST_F(Cli, PretrainEmbedScore) {
  ASSERT_EQ(run("--config small.cfg gen --out data.txt").status, 0);
  ASSERT_EQ(run("--config small.cfg pretrain --pretrainer erm --dataset data.txt --out erm.model").status, 0);
  ASSERT_EQ(run("embed --model erm.model --dataset data.txt --split test --out emb.txt").status, 0);
  ASSERT_EQ(run("score --model erm.model --dataset data.txt --detector knn --out scores.txt").status, 0);

  const envshift::EnvDataset ds = envshift::parse_dataset(file("data.txt"));
  EXPECT_EQ(count_lines(file("scores.txt")), ds.count(envshift::Split::Test));

  const CliRun refused = run("score --model erm.model --dataset data.txt --detector knn --split train --out t.txt");
  EXPECT_EQ(refused.status, 2);
  EXPECT_NE(refused.err.find("--allow-train"), std::string::npos);
  EXPECT_EQ(run("score --model erm.model --dataset data.txt --detector knn --split train --allow-train --out t.txt").status, 0);
  EXPECT_EQ(count_lines(file("t.txt")), ds.count(envshift::Split::Train));
}

TEST_F(Cli, UnknownDetectorListsValidNames) {
  const CliRun r = run("--config small.cfg bench --out-dir out --pretrainers erm --detectors knn,nope --seeds 0");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("isoforest, inne, loda, ocsvm, pca, lof5, knn, kde"), std::string::npos);
}

TEST_F(Cli, SmallBenchAndReplay) {
  ASSERT_EQ(run("--config small.cfg bench --out-dir out --pretrainers random,erm --detectors knn,kde --seeds 0,1").status, 0);
  const std::string csv = file("out/report.csv");
  EXPECT_EQ(count_lines(csv), 4u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "detector,Random,ERM");
  EXPECT_NE(file("out/report.md").find("<!-- manifest "), std::string::npos);

  ASSERT_EQ(run("report --meta out/report_meta.csv --format csv --out table.csv").status, 0);
  EXPECT_EQ(file("table.csv"), csv);

  ASSERT_EQ(run("--config out/manifest.txt bench --out-dir replay").status, 0);
  EXPECT_EQ(file("replay/report.csv"), csv);
  EXPECT_EQ(file("replay/report_meta.csv"), file("out/report_meta.csv"));
}

TEST_F(Cli, BenchThreadCountDoesNotChangeCsv) {
  const std::string grid = "--pretrainers random,erm,eamoco --detectors knn,isoforest --seeds 0,1";
  ASSERT_EQ(run("--config small.cfg bench --out-dir t1 --threads 1 " + grid).status, 0);
  ASSERT_EQ(run("--config small.cfg bench --out-dir t4 --threads 4 " + grid).status, 0);
  EXPECT_EQ(file("t1/report.csv"), file("t4/report.csv"));
}
