// Runs the built secmqtt binary and checks exit codes and output.

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "secmqtt/broker.hpp"
#include "../support/test_util.hpp"

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path work_dir()
{
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / ("secmqtt-cli-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

CliResult run(const std::string& args, const std::string& env = "")
{
  static std::atomic<int> seq{0};
  const auto err_file = work_dir() / ("stderr-" + std::to_string(seq++) + ".txt");
  const std::string cmd = "cd '" + work_dir().string() + "' && env -u SECMQTT_KEY " + env + " '" +
                          SECMQTT_CLI_PATH + "' " + args + " 2>'" + err_file.string() + "'";
  CliResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.err = slurp(err_file);
  return r;
}

void write_file(const fs::path& p, const std::string& s)
{
  std::ofstream(p, std::ios::binary) << s;
}

std::string help_snapshot(const std::string& name)
{
  return slurp(fs::path(SECMQTT_TEST_DATA_DIR) / "cli_help" / (name + ".txt"));
}

} // namespace

TEST(Cli, TopLevelHelpMatchesSnapshot)
{
  const auto r = run("--help");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, help_snapshot("secmqtt"));
}

class CliHelp : public ::testing::TestWithParam<std::string> {};

TEST_P(CliHelp, MatchesSnapshot)
{
  const auto r = run(GetParam() + " --help");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, help_snapshot(GetParam()));
}

INSTANTIATE_TEST_SUITE_P(Subcommands, CliHelp,
                         ::testing::Values("broker", "publish", "subscribe", "bench", "kat", "policy-calibrate"),
                         [](const auto& info) {
                           std::string n = info.param;
                           std::replace(n.begin(), n.end(), '-', '_');
                           return n;
                         });

TEST(Cli, HelpShowsDefaults)
{
  const auto r = run("bench --help");
  EXPECT_NE(r.out.find("[10]"), std::string::npos);
  EXPECT_NE(r.out.find("[1..12]"), std::string::npos);
  EXPECT_NE(r.out.find("[none,aes,ascon]"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo)
{
  for (const char* args : {"", "nonsense", "publish --qos 3 --topic a --message x", "publish --bogus",
                           "bench --ciphers rot13", "bench --sizes 5..3", "kat", "policy-calibrate",
                           "publish --topic a --message x --size 4"}) {
    const auto r = run(args);
    EXPECT_EQ(r.status, 2) << args;
    EXPECT_FALSE(r.err.empty()) << args;
  }
}

TEST(Cli, PublishWithoutKeyIsUsageError)
{
  const auto r = run("publish --topic a --message x");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("key"), std::string::npos);
}

TEST(Cli, UnreachableBrokerExitsOne)
{
  const auto r = run("-q publish --broker 127.0.0.1:1 --topic a --message x --cipher none");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, KatFilesPass)
{
  const auto r = run("kat --ascon '" + secmqtt::testing::data_path("ascon128_kat.txt") + "' --gcm '" +
                     secmqtt::testing::data_path("gcm_vectors.txt") + "'");
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("ascon128: all 1089 vectors passed"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("aes128gcm: all"), std::string::npos) << r.out;
}

TEST(Cli, KatMismatchExitsOne)
{
  std::string kat = slurp(secmqtt::testing::data_path("ascon128_kat.txt"));
  const auto ct = kat.find("CT = ");
  ASSERT_NE(ct, std::string::npos);
  kat[ct + 5] = kat[ct + 5] == '0' ? '1' : '0';
  write_file(work_dir() / "bad_kat.txt", kat);
  const auto r = run("kat --ascon bad_kat.txt");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("1088/1089"), std::string::npos) << r.out;
}

TEST(Cli, BenchFromConfigThenCalibrate)
{
  write_file(work_dir() / "bench.toml",
             "[bench]\nsizes = \"1..4\"\niterations = 3\nwarmup = 1\nout-dir = \"cfg-out\"\n");
  const auto r = run("-q --config bench.toml bench");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto out = work_dir() / "cfg-out";
  for (const char* f : {"mrtt.csv", "rtt_raw.csv", "run_metadata.json", "mrtt_vs_size.dat", "pei_vs_size.dat"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_NE(r.out.find("(12 rows)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(36 rows)"), std::string::npos) << r.out;

  // flags override the file
  const auto r2 = run("-q --config bench.toml bench --iterations 2 --out-dir flag-out");
  ASSERT_EQ(r2.status, 0) << r2.err;
  EXPECT_NE(r2.out.find("(24 rows)"), std::string::npos) << r2.out;

  const auto c = run("policy-calibrate --csv cfg-out/mrtt.csv --write threshold.toml");
  ASSERT_EQ(c.status, 0) << c.err;
  EXPECT_EQ(c.out.rfind("threshold=", 0), 0u) << c.out;
  const auto frag = slurp(work_dir() / "threshold.toml");
  EXPECT_NE(frag.find("[publish]\nthreshold = "), std::string::npos) << frag;
}

TEST(Cli, UnknownConfigKeyRejected)
{
  write_file(work_dir() / "bad.toml", "[bench]\nbogus = 1\n");
  EXPECT_EQ(run("--config bad.toml bench").status, 2);
}

TEST(Cli, CalibrateRejectsMalformedCsv)
{
  write_file(work_dir() / "bad.csv", "cipher,message_size_bytes\nnone,2\n");
  const auto r = run("policy-calibrate --csv bad.csv");
  EXPECT_EQ(r.status, 1);
}

TEST(Cli, PublishSubscribeRoundTrip)
{
  secmqtt::broker::BrokerConfig bc;
  bc.bind_address = "127.0.0.1";
  bc.port = 0;
  secmqtt::broker::Broker b(bc, {});
  b.start();
  const std::string addr = "127.0.0.1:" + std::to_string(b.port());
  write_file(work_dir() / "key.hex", "000102030405060708090a0b0c0d0e0f\n");

  CliResult sub;
  std::thread t([&] {
    sub = run("-q subscribe --broker " + addr + " --filter 'cli/#' --count 2 --timeout-s 10 --key-file key.hex");
  });
  // wait for the subscription to register
  for (int i = 0; i < 200 && b.core().subscriptions().filter_count() == 0; ++i) std::this_thread::sleep_for(10ms);
  EXPECT_GT(b.core().subscriptions().filter_count(), 0u);

  const auto p1 = run("-q publish --broker " + addr + " --topic cli/a --message hello --key-file key.hex");
  const auto p2 = run("-q publish --broker " + addr + " --topic cli/b --message world --cipher aes",
                      "SECMQTT_KEY=000102030405060708090a0b0c0d0e0f");
  t.join();
  b.stop();

  EXPECT_EQ(p1.status, 0) << p1.err;
  EXPECT_NE(p1.out.find("cipher=ascon"), std::string::npos) << p1.out;
  EXPECT_EQ(p2.status, 0) << p2.err;
  EXPECT_NE(p2.out.find("cipher=aes"), std::string::npos) << p2.out;
  EXPECT_EQ(sub.status, 0) << sub.err;
  EXPECT_NE(sub.out.find("cli/a hello\n"), std::string::npos) << sub.out;
  EXPECT_NE(sub.out.find("cli/b world\n"), std::string::npos) << sub.out;
}

TEST(Cli, SubscribeTimeoutExitsOne)
{
  secmqtt::broker::BrokerConfig bc;
  bc.bind_address = "127.0.0.1";
  bc.port = 0;
  secmqtt::broker::Broker b(bc, {});
  b.start();
  const auto r = run("-q subscribe --broker 127.0.0.1:" + std::to_string(b.port()) +
                     " --filter x --count 1 --timeout-s 0.3 --cipher none");
  // --cipher is a publish option only
  EXPECT_EQ(r.status, 2);
  const auto r2 = run("-q subscribe --broker 127.0.0.1:" + std::to_string(b.port()) +
                      " --filter x --count 1 --timeout-s 0.3");
  EXPECT_EQ(r2.status, 1);
  b.stop();
}
