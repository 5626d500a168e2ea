#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scanvar/cli.hpp"

using namespace scanvar;
using ::testing::HasSubstr;
namespace fs = std::filesystem;

namespace {

const std::string models = SCANVAR_MODELS_DIR;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "scanvar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("scanvar_") + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string file(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return (path_ / name).string();
  }

private:
  fs::path path_;
};

} // namespace

TEST(Cli, CompareE1Row) {
  const CliResult r = run({"compare", "--model", models + "/e1.json", "--lambda", "0.5"});
  EXPECT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row, limit;
  std::getline(lines, header);
  std::getline(lines, row);
  std::getline(lines, limit);
  EXPECT_EQ(header, "lambda,var_strat,var_rand,gap,gap_lower_bound,method");
  EXPECT_THAT(row, ::testing::StartsWith("0.5,1.60416667,1.66666667,0.0625,"));
  EXPECT_THAT(row, ::testing::EndsWith(",resolvent"));
  EXPECT_EQ(limit, "1,2.57142857,3,0.428571429,0,limit");
}

TEST(Cli, CompareUsesModelGridAndIsByteStable) {
  const CliResult a = run({"compare", "--model", models + "/gibbs_3x3.json"});
  const CliResult b = run({"compare", "--model", models + "/gibbs_3x3.json"});
  EXPECT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_THAT(a.out, HasSubstr("\n0.99,"));
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 5); // header, three lambdas, limit
}

TEST(Cli, CompareSeriesMethod) {
  const CliResult r = run({"compare", "--model", models + "/e1.json", "--lambda", "0.3,0.6", "--method", "series",
                     "--series-terms", "200"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_THAT(r.out, HasSubstr(",series\n"));
  EXPECT_EQ(run({"compare", "--model", models + "/e1.json", "--method", "magic"}).code, 3);
}

TEST(Cli, ValidateReportsDiagnostics) {
  const CliResult r = run({"validate", "--model", models + "/e1.json"});
  EXPECT_EQ(r.code, 0);
  EXPECT_THAT(r.out, HasSubstr("kernel 1: max row-sum deviation"));
  EXPECT_THAT(r.out, HasSubstr("valid\n"));
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  const std::string bad_rows = dir.file(
      "bad.json", R"({"states": 2, "pi": [0.5, 0.5], "kernels": [[[0.9, 0.09], [0.1, 0.9]]], "f": [1, -1]})");
  const CliResult v = run({"validate", "--model", bad_rows});
  EXPECT_EQ(v.code, 1);
  EXPECT_THAT(v.err, HasSubstr("row 0"));

  const std::string broken = dir.file("broken.json", "{\"states\": 2,");
  const CliResult p = run({"compare", "--model", broken});
  EXPECT_EQ(p.code, 3);
  EXPECT_THAT(p.err, HasSubstr("line"));

  EXPECT_EQ(run({"compare", "--model", (dir.path() / "missing.json").string()}).code, 3);
  EXPECT_EQ(run({"compare"}).code, 3);
  EXPECT_EQ(run({"frobnicate"}).code, 3);
  EXPECT_EQ(run({"compare", "--model", models + "/e1.json", "--lambda", "1.5"}).code, 3);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, PeskunSelfComparison) {
  const CliResult r = run({"peskun", "--model", models + "/e1.json", "--model-b", models + "/e1.json", "--lambda", "0.5"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_THAT(r.out, HasSubstr("lambda,var_strat_a,var_strat_b,gap,ordering_holds,method\n"));
  EXPECT_THAT(r.out, HasSubstr("0.5,1.60416667,1.60416667,0,true,resolvent\n"));
}

TEST(Cli, PeskunWithoutDominanceIsOnlyANote) {
  TempDir dir;
  const std::string lazy = dir.file(
      "lazy.json",
      R"({"states": 2, "pi": [0.5, 0.5], "kernels": [[[0.95, 0.05], [0.05, 0.95]], [[0.8, 0.2], [0.2, 0.8]]], "f": [1, -1]})");
  const CliResult r = run({"peskun", "--model", lazy, "--model-b", models + "/e1.json", "--lambda", "0.5"});
  EXPECT_EQ(r.code, 0);
  EXPECT_THAT(r.err, HasSubstr("does not dominate"));
  EXPECT_THAT(r.out, HasSubstr(",false,"));
  const CliResult fwd = run({"peskun", "--model", models + "/e1.json", "--model-b", lazy, "--lambda", "0.5"});
  EXPECT_EQ(fwd.code, 0);
  EXPECT_TRUE(fwd.err.empty()) << fwd.err;
}

TEST(Cli, LimitRows) {
  const CliResult r = run({"limit", "--model", models + "/e1.json"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "scheme,var_limit,cycle_contraction,absolutely_summable\n"
                   "strat,2.57142857,0.16,true\n"
                   "rand,3,0.5,true\n");
}

TEST(Cli, LimitUndefinedForPeriodicCycle) {
  TempDir dir;
  const std::string flip =
      dir.file("flip.json", R"({"states": 2, "pi": [0.5, 0.5], "kernels": [[[0, 1], [1, 0]]], "f": [1, -1]})");
  const CliResult r = run({"limit", "--model", flip});
  EXPECT_EQ(r.code, 0);
  EXPECT_THAT(r.out, HasSubstr("strat,nan,1,false\n"));
  EXPECT_THAT(r.err, HasSubstr("undefined"));
}

TEST(Cli, SimulateAgreesWithExact) {
  const CliResult r = run({"simulate", "--model", models + "/e1.json", "--steps", "512", "--replicas", "100"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_THAT(r.out, HasSubstr("scheme,steps,replicas,estimate,standard_error,exact_finite_M,z_score\n"));
  EXPECT_THAT(r.out, HasSubstr("\nrand,512,100,"));
  EXPECT_THAT(r.out, HasSubstr("\nembedded,512,100,"));
  const CliResult again = run({"simulate", "--model", models + "/e1.json", "--steps", "512", "--replicas", "100"});
  EXPECT_EQ(r.out, again.out);
  EXPECT_EQ(run({"simulate", "--model", models + "/e1.json", "--replicas", "1"}).code, 3);
}

TEST(Cli, OutFlagWritesFile) {
  TempDir dir;
  const auto out = (dir.path() / "c.csv").string();
  const CliResult r = run({"compare", "--model", models + "/e1.json", "--lambda", "0.5", "--out", out});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(slurp(out), run({"compare", "--model", models + "/e1.json", "--lambda", "0.5"}).out);
  EXPECT_EQ(run({"compare", "--model", models + "/e1.json", "--out", (dir.path() / "no/such/dir/x.csv").string()}).code,
            3);
}

TEST(Cli, DemoWritesModelAndCsv) {
  TempDir dir;
  const CliResult r = run({"demo", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir.path() / "e1_compare.csv");
  EXPECT_THAT(csv, HasSubstr("\n0.5,1.60416667,1.66666667,0.0625,"));
  const ModelFile m = load_model((dir.path() / "e1_model.json").string());
  EXPECT_EQ(m.family.k(), 2u);
  const CliResult again = run({"demo", "--out", dir.path().string()});
  EXPECT_EQ(slurp(dir.path() / "e1_compare.csv"), csv);
}
