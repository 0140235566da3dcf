#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "delelstm/cli.hpp"

namespace delelstm {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "delelstm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("delelstm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small synthetic dataset plus its generated config.
  void make_synth(const std::string& sub, std::size_t samples, std::size_t vars, std::size_t window,
                  const std::string& kind = "instant") {
    const CliRun r = cli({"synth", "--out", path(sub), "--seed", "3", "--window", std::to_string(window),
                       "synth.samples=" + std::to_string(samples), "synth.variables=" + std::to_string(vars),
                       "synth.kind=" + kind});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

const std::vector<std::string> kQuick{"epochs=2", "hidden=8", "repeats=2", "threads=1", "batch_size=16"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST_F(CliTest, SynthWritesDataAndConfig) {
  make_synth("s", 10, 3, 6);
  EXPECT_EQ(line_count(slurp(path("s/data.csv"))), 1u + 10 * 6 + 1);
  EXPECT_EQ(first_line(slurp(path("s/data.csv"))), "x1,x2,x3,y");
  EXPECT_NE(slurp(path("s/synth.conf")).find("include_target=false"), std::string::npos);
}

TEST_F(CliTest, TrainWritesCheckpointAndMetrics) {
  make_synth("s", 40, 3, 6);
  const CliRun r = cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("t/model.ckpt")));
  EXPECT_EQ(line_count(slurp(path("t/metrics.csv"))), 3u);
  EXPECT_EQ(first_line(slurp(path("t/summary.csv"))), "metric,mean,std");
  EXPECT_NE(r.out.find("test RMSE"), std::string::npos);
  const Checkpoint ck = load_checkpoint(path("t/model.ckpt"));
  EXPECT_EQ(ck.names, (std::vector<std::string>{"x1", "x2", "x3"}));
  EXPECT_EQ(ck.history.size(), 3u);
}

TEST_F(CliTest, BadTargetIsDataError) {
  make_synth("s", 10, 2, 6);
  const CliRun r = cli(with({"train", "--data", path("s/data.csv"), "--target", "nope", "--out", path("t")}, kQuick));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigErrors) {
  make_synth("s", 10, 2, 6);
  EXPECT_EQ(cli({"train", "--out", path("t"), "--data", path("s/data.csv"), "--target", "y", "bogus=1"}).code, 1);
  EXPECT_EQ(cli({"train", "--out", path("t"), "--data", path("s/data.csv"), "--target", "y", "hidden=abc"}).code, 1);
  EXPECT_EQ(cli({"train", "--out", path("t"), "--target", "y"}).code, 1);
  EXPECT_EQ(cli({"train", "--out", path("t"), "--config", path("missing.conf"), "--data", path("s/data.csv")}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"train", "--out", path("t"), "--data", path("s/data.csv"), "--target", "y", "--lambda", "0", "hidden=2"}).code, 1);
}

TEST_F(CliTest, DivergenceExitCode) {
  make_synth("s", 20, 2, 6);
  const CliRun r = cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out",
                          path("t"), "learning_rate=1e200"},
                         kQuick));
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(CliTest, GridWritesOneRowPerCell) {
  make_synth("s", 30, 2, 6);
  const CliRun r = cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out",
                          path("t"), "--grid", "grid.batch_size=8,16", "grid.learning_rate=0.01",
                          "grid.hidden=4,6"},
                         kQuick));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(slurp(path("t/grid.csv"))), 1u + 4);
  EXPECT_NE(r.out.find("best batch="), std::string::npos);
}

TEST_F(CliTest, EvaluateMatchesLibrary) {
  make_synth("s", 40, 2, 6);
  ASSERT_EQ(cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  const CliRun r = cli({"evaluate", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv"), "--out", path("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string metrics = slurp(path("t/metrics.csv"));
  const std::string first_run = metrics.substr(metrics.find('\n') + 1);
  const std::string rmse = first_run.substr(first_run.find(',', first_run.find(',') + 1) + 1);
  const std::string eval = slurp(path("e/evaluation.csv"));
  EXPECT_EQ(eval.substr(eval.find('\n') + 1, rmse.find(',')), rmse.substr(0, rmse.find(',')));
}

TEST_F(CliTest, ExplainOutputsAndIdempotence) {
  make_synth("s", 40, 3, 6);
  ASSERT_EQ(cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  const std::vector<std::string> args{"explain", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv")};
  const CliRun a = cli(with(args, {"--out", path("x1")}));
  const CliRun b = cli(with(args, {"--out", path("x2")}));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"instantaneous.csv", "long_term.csv", "temporal_weight.csv", "importance.csv"}) {
    EXPECT_EQ(slurp(dir_ / "x1" / f), slurp(dir_ / "x2" / f)) << f;
  }
  EXPECT_EQ(first_line(slurp(path("x1/instantaneous.csv"))), "time,x1,x2,x3");
  EXPECT_EQ(line_count(slurp(path("x1/instantaneous.csv"))), 1u + 6);
  EXPECT_EQ(first_line(slurp(path("x1/importance.csv"))), "name,global_importance,rank");
  EXPECT_EQ(line_count(slurp(path("x1/importance.csv"))), 4u);
}

TEST_F(CliTest, ExplainDimensionMismatch) {
  make_synth("a", 40, 3, 6);
  make_synth("b", 40, 2, 6);
  ASSERT_EQ(cli(with({"train", "--config", path("a/synth.conf"), "--data", path("a/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  const CliRun r = cli({"explain", "--checkpoint", path("t/model.ckpt"), "--data", path("b/data.csv"), "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("DimensionMismatch"), std::string::npos) << r.err;
}

TEST_F(CliTest, PmLayoutGivesEightColumns) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::ofstream f(path("pm.csv"));
  f << "No,year,month,day,hour,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir\n";
  const char* winds[] = {"NW", "SE", "cv", "NE"};
  for (int r = 0; r < 24 * 20 + 1; ++r) {
    f << r + 1 << ",2010,1," << 1 + r / 24 << ',' << r % 24 << ',' << 80 + 20 * n(rng) << ',' << n(rng) << ','
      << n(rng) << ',' << 1020 + n(rng) << ',' << winds[r % 4] << ',' << std::abs(n(rng)) << ',' << (r % 7 == 0)
      << ',' << (r % 5 == 0) << '\n';
  }
  f.close();
  std::ofstream c(path("pm.conf"));
  c << "target=pm2.5\ndrop_columns=No,year,month,day,hour\nwindow=24\n";
  c.close();
  ASSERT_EQ(cli(with({"train", "--config", path("pm.conf"), "--data", path("pm.csv"), "--out", path("t"), "hidden=16"}, kQuick)).code, 0);
  const CliRun r = cli({"explain", "--checkpoint", path("t/model.ckpt"), "--data", path("pm.csv"), "--out", path("x")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(slurp(path("x/temporal_weight.csv"))), "time,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir");
}

TEST_F(CliTest, AblateKeepsCeilingOfFraction) {
  EXPECT_EQ(kept_variable_count(5, 0.5), 3u);
  EXPECT_EQ(kept_variable_count(4, 0.5), 2u);
  EXPECT_EQ(kept_variable_count(1, 0.5), 1u);
  EXPECT_EQ(kept_variable_count(8, 1.0), 8u);
  make_synth("s", 40, 5, 6);
  ASSERT_EQ(cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  const CliRun r = cli({"ablate", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv"), "--out", path("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(slurp(path("a/selected.csv"))), 1u + 3);
  EXPECT_NE(r.out.find("kept 3 of 5"), std::string::npos);
}

TEST_F(CliTest, AblateFullFractionEqualsPlainLstm) {
  make_synth("s", 40, 3, 6);
  ASSERT_EQ(cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  const CliRun r = cli({"ablate", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv"), "--out", path("a"),
                     "--keep-fraction", "1.0"});
  ASSERT_EQ(r.code, 0) << r.err;
  // Same pipeline by hand: full panel, plain LSTM, same hyperparameters.
  RunConfig c;
  apply_settings(c, load_checkpoint(path("t/model.ckpt")).config);
  const PreparedData data = prepare_data(c, path("s/data.csv"));
  TrainConfig t = c.train;
  t.model = ModelKind::Lstm;
  const RepeatReport rep = repeat_fits(data.scaled, data.split, t);
  std::ostringstream expected;
  expected << "rmse," << format_double(rep.rmse.mean) << ',' << format_double(rep.rmse.std);
  EXPECT_NE(slurp(path("a/summary.csv")).find(expected.str()), std::string::npos);
}

TEST_F(CliTest, AblateKeepsTopRankedVariables) {
  make_synth("s", 60, 4, 8);
  ASSERT_EQ(cli(with({"train", "--config", path("s/synth.conf"), "--data", path("s/data.csv"), "--out", path("t")}, kQuick)).code, 0);
  ASSERT_EQ(cli({"explain", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv"), "--out", path("x")}).code, 0);
  const CliRun r = cli({"ablate", "--checkpoint", path("t/model.ckpt"), "--data", path("s/data.csv"), "--out", path("a"),
                     "repeats=1", "epochs=1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream imp(slurp(path("x/importance.csv")));
  std::string line;
  std::getline(imp, line);
  std::vector<std::string> top;
  while (std::getline(imp, line)) {
    const std::string rank = line.substr(line.rfind(',') + 1);
    if (rank == "1" || rank == "2") top.push_back(line.substr(0, line.find(',')));
  }
  ASSERT_EQ(top.size(), 2u);
  const std::string selected = slurp(path("a/selected.csv"));
  EXPECT_EQ(line_count(selected), 3u);
  for (const auto& name : top) EXPECT_NE(selected.find("\n" + name + ","), std::string::npos) << name;
}

TEST_F(CliTest, OverridesBeatConfigFile) {
  std::ofstream c(path("a.conf"));
  c << "# comment\nhidden = 12\nepochs=7\nwindow=6\n";
  c.close();
  CliOptions o;
  o.config = path("a.conf");
  o.overrides = {"epochs=3"};
  o.seed = 9;
  const RunConfig rc = resolve_config(o, nullptr);
  EXPECT_EQ(rc.train.hidden, 12u);
  EXPECT_EQ(rc.train.epochs, 3u);
  EXPECT_EQ(rc.train.seed, 9u);
  RunConfig back;
  apply_settings(back, to_key_values(rc));
  EXPECT_EQ(to_key_values(back), to_key_values(rc));
}

}  // namespace
}  // namespace delelstm
