#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "rgd/experiment.hpp"
#include "rgd/io.hpp"
#include "rgd/train.hpp"

namespace fs = std::filesystem;

namespace rgd {
namespace {

// ---------------------------------------------------------------------------
// Study helpers

MlpModel small_model() {
  const auto ds = synth_blobs(120, 6, 2, 0.3, 4);
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 4;
  tc.track_curves = false;
  return train_standard(MlpModel::random({6, 12, 2}, 4), ds, tc).model;
}

StudyConfig small_study() {
  StudyConfig sc;
  sc.eps = 0.1;
  sc.steps = 4;
  sc.seeds = {1, 2, 3};
  sc.raw_grid = {0.1, 1.0};
  return sc;
}

TEST(Experiment, RuleAndInitParsing) {
  EXPECT_EQ(parse_rule("raw").rule, UpdateRule::RawPgd);
  EXPECT_TRUE(parse_rule("hybrid").hybrid);
  EXPECT_EQ(parse_rule("hybrid").rule, UpdateRule::Rgd);
  EXPECT_THROW(parse_rule("pgd"), ConfigError);
  EXPECT_EQ(parse_init("random"), InitKind::Uniform);
  EXPECT_THROW(parse_init("gauss"), ConfigError);
  EXPECT_EQ(default_init(parse_rule("sign")), InitKind::Uniform);
  EXPECT_EQ(default_init(parse_rule("rgd")), InitKind::Zero);
  EXPECT_EQ(default_init(parse_rule("hybrid")), InitKind::Zero);
}

TEST(Experiment, MeanStdIsSampleStd) {
  const auto a = mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_DOUBLE_EQ(a.std, 1.0);
  EXPECT_EQ(mean_std({0.4}).std, 0.0);
  const auto same = mean_std({0.2325, 0.2325, 0.2325, 0.2325, 0.2325});
  EXPECT_EQ(same.mean, 0.2325);
  EXPECT_EQ(same.std, 0.0);
}

TEST(Experiment, StudyShapeAndDeterminism) {
  const auto model = small_model();
  const auto ds = synth_blobs(40, 6, 2, 0.3, 9);
  const auto sc = small_study();
  const auto a = run_study(model, ds, sc);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& rr : a) {
    ASSERT_EQ(rr.runs.size(), 3u);
    for (const auto& run : rr.runs) EXPECT_EQ(run.steps.size(), 4u);
  }
  std::ostringstream s1, s2;
  write_attack_summary_csv(s1, a, clean_accuracy(model, ds));
  write_attack_summary_csv(s2, run_study(model, ds, sc), clean_accuracy(model, ds));
  const std::string text = s1.str();
  EXPECT_EQ(text, s2.str());
  // Header plus rules x steps rows.
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 * 4);
}

TEST(Experiment, ZeroEpsKeepsCleanAccuracy) {
  const auto model = small_model();
  const auto ds = synth_blobs(40, 6, 2, 0.3, 9);
  auto sc = small_study();
  sc.eps = 0.0;
  const double clean = clean_accuracy(model, ds);
  for (const auto& rr : run_study(model, ds, sc)) {
    for (const auto& run : rr.runs) {
      for (const auto& st : run.steps) EXPECT_EQ(st.robust_accuracy, clean);
    }
  }
}

TEST(Experiment, ExplicitAlphaSkipsGridAndHybridGetsTail) {
  const auto model = small_model();
  const auto ds = synth_blobs(40, 6, 2, 0.3, 9);
  auto sc = small_study();
  sc.alpha["raw"] = 0.7;
  sc.alpha["sign"] = 0.03;
  EXPECT_EQ(resolve_config(model, ds, sc, "raw", 1).alpha, 0.7);
  const auto h = resolve_config(model, ds, sc, "hybrid", 1);
  EXPECT_EQ(h.tail_alpha, 0.03);
  EXPECT_EQ(h.hybrid_switch, 2u);
  EXPECT_TRUE(h.alpha == 0.1 || h.alpha == 1.0);
}

TEST(Experiment, DimensionMismatchRejected) {
  const auto model = small_model();
  const auto ds = synth_blobs(10, 5, 2, 0.3, 9);
  EXPECT_THROW(run_study(model, ds, small_study()), ConfigError);
}

TEST(Experiment, HistogramCountsEveryCoordinate) {
  const auto model = small_model();
  const auto ds = synth_blobs(40, 6, 2, 0.3, 9);
  const auto study = run_study(model, ds, small_study());
  std::ostringstream os;
  write_histogram_csv(os, study[0], {1, 4}, 10);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  std::size_t total = 0, rows = 0;
  while (std::getline(is, line)) {
    total += std::stoul(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 20u);
  EXPECT_EQ(total, 2 * ds.size() * ds.dim);
  EXPECT_THROW(write_histogram_csv(os, study[0], {5}, 10), ConfigError);
}

// ---------------------------------------------------------------------------
// The rgd executable

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::istringstream is(slurp(p));
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("rgd_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("gen-data --out data.rgdd --n 200 --dim 8 --seed 2 --spread 0.3"), 0);
    ASSERT_EQ(run("gen-data --out small.rgdd --n 20 --dim 4 --seed 2"), 0);
    ASSERT_EQ(run("train --data data.rgdd --out m.rgdm --hidden 16 --epochs 4 --eval-eps 0.1 --eval-alpha 0.025"), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  /// Runs the executable inside the scratch directory; stdout and stderr go to
  /// out.txt and err.txt there.
  static int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" RGD_CLI_PATH "' " + args + " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string out() { return slurp(dir_ / "out.txt"); }
  static std::string err() { return slurp(dir_ / "err.txt"); }
  static fs::path path(const std::string& rel) { return dir_ / rel; }

  static inline fs::path dir_;
};

TEST_F(Cli, GenDataRoundTripsAndIsDeterministic) {
  ASSERT_EQ(run("gen-data --classes 2 --dim 16 --n 2000 --seed 1 --out g1.rgdd"), 0);
  ASSERT_EQ(run("gen-data --classes 2 --dim 16 --n 2000 --seed 1 --out g2.rgdd"), 0);
  EXPECT_EQ(decode_dataset(read_file(path("g1.rgdd"))), synth_blobs(2000, 16, 2, 0.6, 1));
  EXPECT_EQ(slurp(path("g1.rgdd")), slurp(path("g2.rgdd")));
}

TEST_F(Cli, MissingOutputDirectoryNamed) {
  EXPECT_EQ(run("gen-data --out no_such_dir/d.rgdd"), 1);
  EXPECT_NE(err().find("no_such_dir"), std::string::npos);
}

TEST_F(Cli, AttackSummaryShapeAndPreamble) {
  ASSERT_EQ(run("attack --model m.rgdm --data data.rgdd --out att --rules sign,raw,rgd --steps 7 --eps 0.0627 "
                "--seeds 2 --raw-grid 0.1,1"),
            0);
  const auto lines = csv_lines(path("att/attack_summary.csv"));
  ASSERT_EQ(lines.size(), 2u + 3 * 7);
  EXPECT_TRUE(std::regex_match(lines[0], std::regex("# rgd-toolkit 0\\.1\\.0 config=[0-9a-f]{16} seeds=1,2")));
  EXPECT_EQ(lines[1].rfind("rule,step,alpha,clean_accuracy,robust_accuracy_mean", 0), 0u);
  EXPECT_EQ(csv_lines(path("att/attack_steps.csv")).size(), 2u + 3 * 2 * 7);
}

TEST_F(Cli, ZeroEpsAttackReportsCleanAccuracy) {
  ASSERT_EQ(run("attack --model m.rgdm --data data.rgdd --out att0 --eps 0 --seeds 1"), 0);
  const auto lines = csv_lines(path("att0/attack_summary.csv"));
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto c = cells(lines[i]);
    EXPECT_EQ(c[3], c[4]) << lines[i];
  }
}

TEST_F(Cli, ConfigFilePrecedence) {
  std::ofstream(path("a.cfg")) << "# steps from file\nsteps = 3   # trailing comment\n\nseeds = 1\nrules = sign\n";
  auto rows = [&](const std::string& extra) {
    EXPECT_EQ(run("attack --model m.rgdm --data data.rgdd --out pc " + extra), 0) << err();
    return csv_lines(path("pc/attack_summary.csv")).size() - 2;
  };
  EXPECT_EQ(rows("--config a.cfg"), 3u);
  EXPECT_EQ(rows("--config a.cfg --steps 5"), 5u);
  EXPECT_EQ(rows("--steps 5 --config a.cfg"), 5u);
  EXPECT_EQ(rows("--seeds 1 --rules sign"), 7u);
}

TEST_F(Cli, ConfigErrorsExitOne) {
  std::ofstream(path("bad.cfg")) << "stepz = 3\n";
  EXPECT_EQ(run("attack --config bad.cfg --model m.rgdm --data data.rgdd --out x"), 1);
  EXPECT_NE(err().find("stepz"), std::string::npos);
  std::ofstream(path("bad2.cfg")) << "steps 3\n";
  EXPECT_EQ(run("attack --config bad2.cfg --model m.rgdm --data data.rgdd --out x"), 1);
  EXPECT_EQ(run("attack --model m.rgdm --data data.rgdd --out x --eps 1/0"), 1);
  EXPECT_EQ(run("attack --model m.rgdm --data data.rgdd --out x --rules sign,pgd"), 1);
  EXPECT_EQ(run("attack --model missing.rgdm --data data.rgdd --out x"), 1);
  EXPECT_NE(err().find("missing.rgdm"), std::string::npos);
  EXPECT_EQ(run("attack --model m.rgdm --data small.rgdd --out x"), 1);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, FractionalEpsMatchesDecimal) {
  ASSERT_EQ(run("attack --model m.rgdm --data data.rgdd --out f1 --eps 8/255 --seeds 1 --rules sign"), 0);
  ASSERT_EQ(run("attack --model m.rgdm --data data.rgdd --out f2 --eps 0.03137254901960784 --seeds 1 --rules sign"), 0);
  auto a = csv_lines(path("f1/attack_summary.csv"));
  auto b = csv_lines(path("f2/attack_summary.csv"));
  a.erase(a.begin());
  b.erase(b.begin());
  EXPECT_EQ(a, b);
}

TEST_F(Cli, TheoremExitCodes) {
  EXPECT_EQ(run("theorem --n 0"), 1);
  ASSERT_EQ(run("theorem --n 500 --seed 7 --out th1.csv"), 0);
  EXPECT_NE(out().find("violations: 0"), std::string::npos);
  ASSERT_EQ(run("theorem --n 500 --seed 7 --out th2.csv"), 0);
  EXPECT_EQ(slurp(path("th1.csv")), slurp(path("th2.csv")));
}

TEST_F(Cli, SelfTransferIsOneMinusRobustAccuracy) {
  ASSERT_EQ(run("transfer --model m.rgdm --targets m.rgdm --data data.rgdd --out tr --eps 0.1 --seeds 2 "
                "--raw-grid 0.1,1"),
            0);
  ASSERT_EQ(run("attack --model m.rgdm --data data.rgdd --out tra --eps 0.1 --seeds 2 --steps 10 --raw-grid 0.1,1"),
            0);
  const auto tr = csv_lines(path("tr/transfer.csv"));
  const auto at = csv_lines(path("tra/attack_summary.csv"));
  ASSERT_EQ(tr.size(), 2u + 3);
  std::size_t matched = 0;
  for (std::size_t i = 2; i < tr.size(); ++i) {
    const auto t = cells(tr[i]);
    EXPECT_EQ(t[0], "Source");
    for (std::size_t j = 2; j < at.size(); ++j) {
      const auto a = cells(at[j]);
      if (a[0] == t[1] && a[1] == "10") {
        EXPECT_NEAR(std::stod(t[3]), 1.0 - std::stod(a[4]), 1e-9);
        ++matched;
      }
    }
  }
  EXPECT_EQ(matched, 3u);
}

TEST_F(Cli, ZeroEpsTransferIsCleanError) {
  ASSERT_EQ(run("transfer --model m.rgdm --targets m.rgdm --data data.rgdd --out tr0 --eps 0 --seeds 1"), 0);
  const auto model = std::get<MlpModel>(decode_model(read_file(path("m.rgdm"))));
  const double err_rate = 1.0 - clean_accuracy(model, decode_dataset(read_file(path("data.rgdd"))));
  const auto lines = csv_lines(path("tr0/transfer.csv"));
  for (std::size_t i = 2; i < lines.size(); ++i) EXPECT_NEAR(std::stod(cells(lines[i])[3]), err_rate, 1e-12);
}

TEST_F(Cli, TransferDimensionMismatch) {
  ASSERT_EQ(run("train --data small.rgdd --out small.rgdm --hidden 4 --epochs 1"), 0);
  EXPECT_EQ(run("transfer --model m.rgdm --targets small.rgdm --data data.rgdd --out trx"), 1);
  EXPECT_NE(err().find("small.rgdm"), std::string::npos);
}

TEST_F(Cli, SweepSinglePointGridAndInitColumns) {
  ASSERT_EQ(run("sweep --model m.rgdm --data data.rgdd --out sw --eps 0.1 --seeds 1 --sign-grid 0.5 --raw-grid 0.3 "
                "--inits zero"),
            0);
  const auto lines = csv_lines(path("sw/sweep.csv"));
  ASSERT_EQ(lines.size(), 2u + 3);
  for (std::size_t i = 2; i < lines.size(); ++i) EXPECT_EQ(cells(lines[i])[4], "1");
  ASSERT_EQ(run("sweep --model m.rgdm --data data.rgdd --out sw2 --eps 0.1 --seeds 1 --raw-grid 0.3,3"), 0);
  const auto table = csv_lines(path("sw2/sweep_table.csv"));
  EXPECT_EQ(table[1], "rule,uniform_init,uniform_alpha,zero_init,zero_alpha");
  std::size_t flagged = 0;
  for (const auto& l : csv_lines(path("sw2/sweep.csv"))) flagged += l.size() > 2 && l.back() == '1' && l[l.size() - 2] == ',';
  EXPECT_EQ(flagged, 6u);  // one per (rule, init)
}

TEST_F(Cli, ReportWritesHistogramsPerRule) {
  ASSERT_EQ(run("report --model m.rgdm --data data.rgdd --out rep --eps 0.1 --seeds 1 --raw-grid 0.3"), 0);
  for (const char* r : {"sign", "raw", "rgd"}) {
    EXPECT_EQ(csv_lines(path(std::string("rep/histogram_") + r + ".csv")).size(), 2u + 4 * 50) << r;
  }
  EXPECT_EQ(csv_lines(path("rep/report.csv")).size(), 2u + 3 * 7);
  EXPECT_EQ(run("report --model m.rgdm --data data.rgdd --out rep --eps 0.1 --hist-steps 9"), 1);
}

TEST_F(Cli, TrainPrintsCleanRobustAndZeroEpsIsStandard) {
  ASSERT_EQ(run("train --data data.rgdd --out s.rgdm --hidden 8 --epochs 2 --eval-eps 0.1 --eval-alpha 0.025"), 0);
  EXPECT_TRUE(std::regex_search(out(), std::regex("Clean [0-9.]+ \\| Robust [0-9.]+")));
  ASSERT_EQ(run("train --data data.rgdd --out z.rgdm --hidden 8 --epochs 2 --eval-eps 0.1 --eval-alpha 0.025 "
                "--adv-rule sign --adv-eps 0"),
            0);
  EXPECT_EQ(slurp(path("s.rgdm")), slurp(path("z.rgdm")));
  ASSERT_EQ(run("train --data data.rgdd --out r.rgdm --hidden 8 --epochs 2 --eval-eps 0.1 --eval-alpha 0.025 "
                "--adv-rule rgd --adv-eps 0.1 --curves curves.csv"),
            0);
  EXPECT_NE(slurp(path("s.rgdm")), slurp(path("r.rgdm")));
  EXPECT_EQ(csv_lines(path("curves.csv")).size(), 2u + 2);
  EXPECT_EQ(run("train --data data.rgdd --out q.rgdm --adv-rule raw"), 1);
}

TEST_F(Cli, CheckpointReloadGivesSameEvaluation) {
  const auto model = std::get<MlpModel>(decode_model(read_file(path("m.rgdm"))));
  const auto ds = decode_dataset(read_file(path("data.rgdd")));
  AttackConfig ev = TrainConfig::default_eval_attack();
  ev.eps = 0.1;
  ev.alpha = 0.025;
  ev.seed = 1;
  const auto again = std::get<MlpModel>(decode_model(encode_model(model)));
  const auto a = evaluate(model, ds, ev), b = evaluate(again, ds, ev);
  EXPECT_EQ(a.clean_accuracy, b.clean_accuracy);
  EXPECT_EQ(a.robust_accuracy, b.robust_accuracy);
}

TEST_F(Cli, NumericalFailureExitsTwo) {
  EXPECT_EQ(run("train --data data.rgdd --out nan.rgdm --epochs 1 --lr 1e300"), 2);
  EXPECT_NE(err().find("non-finite"), std::string::npos);
}

}  // namespace
}  // namespace rgd
