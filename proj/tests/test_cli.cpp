#include <gtest/gtest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <thread>

#include "pilstm/cli.hpp"

#ifndef PILSTM_BIN
#error "PILSTM_BIN must point at the pilstm executable"
#endif

namespace pilstm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int status = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PILSTM_BIN) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = io::read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pilstm_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // small everything so each command takes well under a second
    json cfg{{"data", {{"n_washout", 1000}, {"n_steps", 1500}, {"test_steps", 3000}}},
             {"train", {{"n_hidden", 6}, {"max_epochs", 2}, {"window_len", 16}, {"batch_size", 8}}},
             {"lyapunov", {{"n_steps", 20000}, {"warmup", 1000}, {"network_steps", 500}}},
             {"evaluate", {{"rollout_lyap_times", 5}, {"le_warmup", 100}}},
             {"sweep", {{"n_hidden", {4, 6}}, {"alpha_pi", {0.0, 0.01}}}}};
    io::write_json(dir_ / "cfg.json", cfg);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string cfg() const { return "--config " + (dir_ / "cfg.json").string(); }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void make_data() {
    ASSERT_EQ(run("generate " + cfg() + " --out " + p("train.csv")).status, 0);
    ASSERT_EQ(run("generate " + cfg() + " --role test --out " + p("test.csv")).status, 0);
  }

  fs::path dir_;
};

TEST_F(Cli, GenerateDefaultsTo20001Rows) {
  const RunResult r = run("generate --out " + p("d.csv") + " --json");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(count_lines(dir_ / "d.csv"), 20002u);  // header + 20001 states
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("rows"), 20001);
  const json meta = io::read_json(dir_ / "d.meta.json");
  EXPECT_EQ(meta.at("n_steps"), 20000);
  EXPECT_TRUE(fs::exists(dir_ / "d.manifest.json"));
}

TEST_F(Cli, GenerateOneStepAndRefusal) {
  ASSERT_EQ(run("generate --steps 1 --out " + p("one.csv")).status, 0);
  EXPECT_EQ(count_lines(dir_ / "one.csv"), 3u);
  const std::string before = io::read_file(dir_ / "one.csv");
  EXPECT_NE(run("generate --steps 2 --out " + p("one.csv")).status, 0);
  EXPECT_EQ(io::read_file(dir_ / "one.csv"), before);
  EXPECT_EQ(run("generate --steps 2 --force --out " + p("one.csv")).status, 0);
  EXPECT_EQ(count_lines(dir_ / "one.csv"), 4u);
}

TEST_F(Cli, TrainAndTestSeedsAreDisjoint) {
  make_data();
  const auto a = io::read_json(dir_ / "train.meta.json").at("seed").get<std::uint64_t>();
  const auto b = io::read_json(dir_ / "test.meta.json").at("seed").get<std::uint64_t>();
  EXPECT_NE(a, b);
  EXPECT_EQ(io::load_trajectory(dir_ / "test.csv").n_states(), 3001);
  EXPECT_NE(io::read_file(dir_ / "train.csv").substr(0, 300), io::read_file(dir_ / "test.csv").substr(0, 300));
}

TEST_F(Cli, OutputDirFromEnvironment) {
  const std::string cmd = "PILSTM_OUTPUT_DIR=" + p("envout") + " " + std::string(PILSTM_BIN) +
                          " generate --steps 3 2>/dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "envout" / "train.csv"));
}

TEST_F(Cli, LyapunovMapHook) {
  const RunResult r = run("lyapunov --map diag:2,0.5 --json --out " + p("lm"));
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  const auto e = j.at("spectrum").at("exponents");
  EXPECT_NEAR(e[0].get<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(e[1].get<double>(), -std::log(2.0), 1e-12);
  EXPECT_EQ(count_lines(dir_ / "lm" / "spectrum.csv"), 3u);
  EXPECT_NE(run("lyapunov --map bogus --out " + p("lm2")).status, 0);
}

TEST_F(Cli, LyapunovZeroCheckpointBound) {
  LstmParams zp = init_params({9, 1, 12}, 1, ObservationSplit::tail(10, 1));
  zp.weights = LstmWeights::zeros(zp.dims);
  io::save_checkpoint(dir_ / "zero.txt", zp);
  const RunResult r = run("lyapunov " + cfg() + " --json --checkpoint " + p("zero.txt") + " --out " + p("lz"));
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("mode"), "network");
  for (const auto& e : j.at("spectrum").at("exponents")) EXPECT_LE(e.get<double>(), std::log(0.125) / 0.01);
  EXPECT_NE(run("lyapunov " + cfg() + " --checkpoint " + p("missing.txt") + " --out " + p("lx")).status, 0);
}

TEST_F(Cli, PresetsAndOverrides) {
  make_data();
  RunResult r = run("train " + cfg() + " --preset case-iii --epochs 1 --json --data " + p("train.csv") + " --out " + p("c3"));
  ASSERT_EQ(r.status, 0);
  const LstmParams c3 = io::load_checkpoint(dir_ / "c3" / "checkpoint.txt");
  EXPECT_EQ(c3.dims.n_hidden, 50);
  EXPECT_EQ(c3.dims.n_unmeasured, 5);
  EXPECT_EQ(json::parse(r.out).at("alpha_pi"), 0.001);

  r = run("train " + cfg() + " --preset case-i --n-h 5 --alpha-pi 0 --epochs 1 --json --data " + p("train.csv") +
          " --out " + p("dd"));
  ASSERT_EQ(r.status, 0);
  const LstmParams dd = io::load_checkpoint(dir_ / "dd" / "checkpoint.txt");
  EXPECT_EQ(dd.dims.n_hidden, 5);
  EXPECT_EQ(dd.split.unmeasured, (std::vector<int>{9}));
  EXPECT_EQ(json::parse(r.out).at("alpha_pi"), 0.0);
  EXPECT_EQ(count_lines(dir_ / "dd" / "history.csv"), 2u);

  EXPECT_NE(run("train " + cfg() + " --preset case-iv --data " + p("train.csv") + " --out " + p("x")).status, 0);
}

TEST_F(Cli, DimensionMismatchIsRejected) {
  make_data();
  io::write_json(dir_ / "wide.json", json{{"system", {{"n_dim", 12}}}, {"unmeasured", {11}}});
  EXPECT_EQ(run("train --config " + p("wide.json") + " --data " + p("train.csv") + " --out " + p("w")).status, 1);
  EXPECT_FALSE(fs::exists(dir_ / "w" / "manifest.json"));

  ASSERT_EQ(run("train " + cfg() + " --data " + p("train.csv") + " --out " + p("m")).status, 0);
  io::write_json(dir_ / "other.json", json{{"unmeasured", {7, 8, 9}}});
  EXPECT_EQ(run("evaluate --config " + p("other.json") + " --checkpoint " + p("m/checkpoint.txt") +
                " --test-data " + p("test.csv") + " --out " + p("e"))
                .status,
            1);
  EXPECT_EQ(run("train --no-such-flag").status, 2);
  EXPECT_EQ(run("--help").status, 0);
}

TEST_F(Cli, EvaluateIdentityAndTwoCheckpoints) {
  make_data();
  ASSERT_EQ(run("train " + cfg() + " --data " + p("train.csv") + " --out " + p("pi")).status, 0);
  ASSERT_EQ(run("train " + cfg() + " --alpha-pi 0 --data " + p("train.csv") + " --out " + p("dd")).status, 0);

  RunResult r = run("evaluate " + cfg() + " --identity --json --test-data " + p("test.csv") + " --out " + p("id"));
  ASSERT_EQ(r.status, 0);
  const json rep = io::read_json(dir_ / "id" / "report.json");
  for (const auto& v : rep.at("unmeasured")) EXPECT_EQ(v.at("wasserstein").get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir_ / "id" / "pdf_y10.csv"));

  r = run("evaluate " + cfg() + " --json --test-data " + p("test.csv") + " --checkpoint " + p("pi/checkpoint.txt") +
          " --label pi --checkpoint " + p("dd/checkpoint.txt") + " --label dd --out " + p("cmp"));
  ASSERT_EQ(r.status, 0);
  const std::string les = io::read_file(dir_ / "cmp" / "les.csv");
  EXPECT_EQ(les.substr(0, les.find('\n')), "index,reference,pi,dd");
  EXPECT_EQ(count_lines(dir_ / "cmp" / "les.csv"), 11u);
  EXPECT_TRUE(fs::exists(dir_ / "cmp" / "pi" / "report.json"));
  EXPECT_TRUE(fs::exists(dir_ / "cmp" / "dd" / "pdf_y10.csv"));
  EXPECT_EQ(json::parse(r.out).at("runs").size(), 2u);

  EXPECT_NE(run("evaluate " + cfg() + " --test-data " + p("test.csv") + " --out " + p("none")).status, 0);
}

TEST_F(Cli, SweepSingletonMatchesTrain) {
  make_data();
  io::write_json(dir_ / "one.json",
                 json{{"train", {{"max_epochs", 2}, {"window_len", 16}, {"batch_size", 8}}},
                      {"sweep", {{"n_hidden", {5}}, {"alpha_pi", {0.01}}}}});
  ASSERT_EQ(run("sweep --config " + p("one.json") + " --data " + p("train.csv") + " --out " + p("s")).status, 0);
  ASSERT_EQ(run("train --config " + p("one.json") + " --n-h 5 --alpha-pi 0.01 --data " + p("train.csv") + " --out " +
                p("t"))
                .status,
            0);
  EXPECT_EQ(io::read_file(dir_ / "s" / "trial_0" / "checkpoint.txt"), io::read_file(dir_ / "t" / "checkpoint.txt"));
  EXPECT_EQ(io::read_file(dir_ / "s" / "trial_0" / "history.csv"), io::read_file(dir_ / "t" / "history.csv"));
}

TEST_F(Cli, SweepResumesAfterKill) {
  make_data();
  // slower trials so the kill lands mid-sweep
  io::write_json(dir_ / "slow.json",
                 json{{"train", {{"max_epochs", 40}, {"window_len", 16}, {"batch_size", 4}}},
                      {"sweep", {{"n_hidden", {8, 10}}, {"alpha_pi", {0.0, 0.01}}}}});
  ASSERT_EQ(run("sweep --config " + p("slow.json") + " --data " + p("train.csv") + " --out " + p("full")).status, 0);

  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const std::string conf = p("slow.json"), data = p("train.csv"), out = p("part");
    ::execl(PILSTM_BIN, PILSTM_BIN, "sweep", "--config", conf.c_str(), "--data", data.c_str(), "--out", out.c_str(),
            static_cast<char*>(nullptr));
    ::_exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (!fs::exists(dir_ / "part" / "trial_0" / "trial.json") && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  ::kill(pid, SIGKILL);
  int st = 0;
  ::waitpid(pid, &st, 0);
  ASSERT_TRUE(fs::exists(dir_ / "part" / "trial_0" / "trial.json"));

  const RunResult r = run("sweep --config " + p("slow.json") + " --json --data " + p("train.csv") + " --out " + p("part"));
  ASSERT_EQ(r.status, 0);
  const json j = json::parse(r.out);
  EXPECT_GE(j.at("resumed").get<int>(), 1);
  EXPECT_EQ(j.at("trials"), 4);
  EXPECT_EQ(io::read_file(dir_ / "part" / "sweep.csv"), io::read_file(dir_ / "full" / "sweep.csv"));
  for (int k = 0; k < 4; ++k) {
    const fs::path rel = fs::path("trial_" + std::to_string(k)) / "checkpoint.txt";
    EXPECT_EQ(io::read_file(dir_ / "part" / rel), io::read_file(dir_ / "full" / rel)) << k;
  }
}

TEST_F(Cli, ReplayIsByteIdentical) {
  make_data();
  ASSERT_EQ(run("train " + cfg() + " --data " + p("train.csv") + " --out " + p("tr")).status, 0);
  ASSERT_EQ(run("lyapunov " + cfg() + " --out " + p("ly")).status, 0);
  ASSERT_EQ(run("evaluate " + cfg() + " --checkpoint " + p("tr/checkpoint.txt") + " --test-data " + p("test.csv") +
                " --out " + p("ev"))
                .status,
            0);

  ASSERT_EQ(run("replay " + p("train.manifest.json") + " --out " + p("r_gen")).status, 0);
  EXPECT_EQ(cli::sha256_file(dir_ / "r_gen" / "train.csv"), cli::sha256_file(dir_ / "train.csv"));
  for (const std::string sub : {"tr", "ly", "ev"}) {
    ASSERT_EQ(run("replay " + p(sub + "/manifest.json") + " --out " + p("r_" + sub)).status, 0) << sub;
    for (const auto& entry : fs::directory_iterator(dir_ / sub)) {
      if (entry.path().filename() == "manifest.json" || !entry.is_regular_file()) continue;
      EXPECT_EQ(cli::sha256_file(entry.path()), cli::sha256_file(dir_ / ("r_" + sub) / entry.path().filename()))
          << entry.path();
    }
  }
  // a manifest also works as --config
  ASSERT_EQ(run("train --config " + p("tr/manifest.json") + " --data " + p("train.csv") + " --out " + p("tr2")).status, 0);
  EXPECT_EQ(io::read_file(dir_ / "tr2" / "checkpoint.txt"), io::read_file(dir_ / "tr" / "checkpoint.txt"));

  const json man = io::read_json(dir_ / "tr" / "manifest.json");
  for (const char* key : {"command", "config", "inputs", "outputs", "seed", "tool_version", "wall_clock_seconds"})
    EXPECT_TRUE(man.contains(key)) << key;
  EXPECT_EQ(man.at("inputs").begin().value().get<std::string>().size(), 64u);
}

TEST(Sha256, KnownDigest) {
  const fs::path p = fs::temp_directory_path() / ("pilstm_sha_" + std::to_string(::getpid()));
  io::write_atomic(p, "abc");
  EXPECT_EQ(cli::sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

TEST(ConfigParsing, DefaultsPresetAndErrors) {
  const cli::RunConfig d = cli::config_from_json(json::object());
  EXPECT_EQ(d.data.n_steps, 20000);
  EXPECT_EQ(d.unmeasured, (std::vector<int>{9}));
  EXPECT_EQ(d.grid.size(), 30u);

  const cli::RunConfig c2 = cli::config_from_json(json{{"preset", "case-ii"}});
  EXPECT_EQ(c2.unmeasured, (std::vector<int>{7, 8, 9}));
  EXPECT_EQ(c2.train.n_hidden, 100);
  EXPECT_EQ(c2.train.alpha_pi, 0.01);

  const cli::RunConfig back = cli::config_from_json(cli::to_json(c2));
  EXPECT_EQ(cli::to_json(back), cli::to_json(c2));

  EXPECT_THROW(cli::config_from_json(json{{"train", {{"n_hidden", "many"}}}}), InvalidInput);
  EXPECT_THROW(cli::config_from_json(json{{"preset", "case-x"}}), InvalidInput);
  cli::Overrides negative;
  negative.alpha_pi = -1.0;
  EXPECT_THROW(cli::resolve_config(std::nullopt, negative), InvalidInput);
}

}  // namespace
}  // namespace pilstm
