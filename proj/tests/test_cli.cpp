#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <sys/wait.h>

#include "cli.hpp"

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = unisae::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kSynth =
    "n_samples = 24\n"
    "d = 16\n"
    "n_shared = 6\n"
    "n_private = 3\n"
    "k_active = 2\n"
    "grid_h = 3\n"
    "grid_w = 3\n"
    "text_tokens = 4\n"
    "seed = 5\n";

const char* kTrain =
    "d = 16\n"
    "n_shared = 6\n"
    "n_private = 3\n"
    "k_shared = 1\n"
    "k_private = 1\n"
    "batch_size = 8\n"
    "steps = 12\n"
    "lr = 0.003\n"
    "seed = 5\n";

// gen-synth -> train -> eval -> interpret into `dir`.
void pipeline(const fs::path& dir, const std::string& threads) {
  write(dir / "synth.in", kSynth);
  write(dir / "train.in", kTrain);
  const std::string d = dir.string();
  ASSERT_EQ(run({"--threads", threads, "gen-synth", "--config", d + "/synth.in", "--out", d + "/data"}).code, 0);
  ASSERT_EQ(run({"--threads", threads, "train", "--config", d + "/train.in", "--data", d + "/data", "--out",
                 d + "/model.lckp", "--history", d + "/history.csv"})
                .code,
            0);
  ASSERT_EQ(run({"--threads", threads, "eval", "--ckpt", d + "/model.lckp", "--data", d + "/data", "--out",
                 d + "/eval"})
                .code,
            0);
  const Result r = run({"--threads", threads, "interpret", "--ckpt", d + "/model.lckp", "--data", d + "/data",
                        "--concepts", d + "/data/concepts.json", "--out", d + "/reports.json", "--min-hits", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, NoArgumentsIsAUsageError) {
  const Result r = run({});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"eval", "--bogus"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, PipelineWritesExpectedFiles) {
  const fs::path dir = fresh_dir("unisae_cli_pipeline");
  pipeline(dir, "1");
  EXPECT_TRUE(fs::exists(dir / "data" / "data.lact"));
  EXPECT_TRUE(fs::exists(dir / "data" / "data.lact.json"));
  EXPECT_TRUE(fs::exists(dir / "data" / "ground_truth.json"));
  EXPECT_EQ(first_line(dir / "eval" / "r2.csv"), "kind,subject,path,value");
  EXPECT_EQ(first_line(dir / "eval" / "grounding.csv"), "n_samples,mass_at_obj,point_at_1,iou_at_10");
  EXPECT_EQ(first_line(dir / "eval" / "maxfreq.csv"), "direction,maxfreq");
  EXPECT_EQ(first_line(dir / "history.csv"), "step,self_v,self_t,align,cross,total");
  EXPECT_NE(slurp(dir / "reports.json").find("unisae-neuron-reports"), std::string::npos);

  const Result ins = run({"inspect", (dir / "model.lckp").string()});
  EXPECT_EQ(ins.code, 0);
  EXPECT_NE(ins.out.find("checkpoint at step 12"), std::string::npos);
  EXPECT_EQ(run({"inspect", (dir / "data" / "data.lact").string()}).code, 0);
  EXPECT_EQ(run({"inspect", (dir / "data" / "concepts.json").string()}).code, 0);
  EXPECT_EQ(run({"inspect", (dir / "history.csv").string()}).code, 1);

  const Result heat = run({"heatmap", "--ckpt", (dir / "model.lckp").string(), "--data", (dir / "data").string(),
                           "--sample", "synth-0", "--sample", "synth-3", "--out", (dir / "heat").string()});
  EXPECT_EQ(heat.code, 0) << heat.err;
  EXPECT_TRUE(fs::exists(dir / "heat" / "synth-3.csv"));
  EXPECT_EQ(slurp(dir / "heat" / "synth-0.ppm").substr(0, 2), "P6");
  EXPECT_EQ(run({"heatmap", "--ckpt", (dir / "model.lckp").string(), "--data", (dir / "data").string(), "--sample",
                 "nope", "--out", (dir / "heat").string()})
                .code,
            1);

  // Resume continues the step count.
  const Result res = run({"train", "--resume", (dir / "model.lckp").string(), "--data", (dir / "data").string(),
                          "--out", (dir / "model2.lckp").string()});
  EXPECT_EQ(res.code, 0) << res.err;
}

TEST(Cli, DimensionMismatchIsAUserError) {
  const fs::path dir = fresh_dir("unisae_cli_dims");
  write(dir / "synth.in", kSynth);
  std::string bad = kTrain;
  bad.replace(bad.find("d = 16"), 6, "d = 20");
  write(dir / "train.in", bad);
  ASSERT_EQ(run({"gen-synth", "--config", (dir / "synth.in").string(), "--out", (dir / "data").string()}).code, 0);
  const Result r = run({"train", "--config", (dir / "train.in").string(), "--data", (dir / "data").string(),
                        "--out", (dir / "m.lckp").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dimension mismatch"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigIsAUserError) {
  const fs::path dir = fresh_dir("unisae_cli_badcfg");
  write(dir / "synth.in", "n_samples = 4\nwibble = 3\n");
  const Result r = run({"gen-synth", "--config", (dir / "synth.in").string(), "--out", (dir / "data").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("wibble"), std::string::npos) << r.err;
}

TEST(Cli, OutputsAreByteIdenticalAcrossThreadCounts) {
  const fs::path a = fresh_dir("unisae_cli_det_a"), b = fresh_dir("unisae_cli_det_b");
  pipeline(a, "1");
  pipeline(b, "2");
  for (const char* rel : {"data/data.lact", "data/data.lact.json", "data/ground_truth.json", "data/concepts.json",
                          "model.lckp", "history.csv", "eval/r2.csv", "eval/grounding.csv", "eval/maxfreq.csv",
                          "reports.json"})
    EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
}

TEST(Cli, InstalledBinaryRuns) {
  const std::string cmd = std::string("\"") + UNISAE_CLI_PATH + "\" --help > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const std::string none = std::string("\"") + UNISAE_CLI_PATH + "\" > /dev/null 2>&1";
  const int status = std::system(none.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 1);
}

}  // namespace
