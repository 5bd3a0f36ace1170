#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace splitzip;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "splitzip");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("splitzip_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

  std::string make_raw(const std::string& leaf, ElementFormat fmt, std::uint64_t n, double rate, std::uint64_t seed) {
    write_raw(generate(default_spec(fmt, n, rate, seed)), path(leaf));
    return path(leaf);
  }

  fs::path dir_;
};

double field(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind(key + " ", 0) == 0) return std::stod(line.substr(key.size() + 1));
  }
  ADD_FAILURE() << "no field " << key << " in\n" << text;
  return 0;
}

}  // namespace

TEST_F(Cli, CompressDecompressRoundTrip) {
  const auto raw = make_raw("in.szrw", ElementFormat::BF16, 100000, 0.0016, 1);
  auto r = run({"compress", "-i", raw, "-o", path("c.splz"), "--dynamic"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(field(r.out, "payload_ratio"), 1.3256, 0.002);
  r = run({"decompress", "-i", path("c.splz"), "-o", path("out.szrw")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(raw), read_file(path("out.szrw")));
  r = run({"verify", "-i", raw, "--container", path("c.splz")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("verify=OK"), std::string::npos);
}

TEST_F(Cli, CalibrateThenCompressMatchesDynamic) {
  const auto a = make_raw("a.szrw", ElementFormat::BF16, 200000, 0.0016, 2);
  const auto b = make_raw("b.szrw", ElementFormat::BF16, 200000, 0.0016, 3);
  auto r = run({"calibrate", "-i", a, "-o", path("cb.bin"), "--text", path("cb.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(field(r.out, "top16_coverage"), 0.9984);
  EXPECT_TRUE(fs::exists(path("cb.txt")));
  auto pre = run({"compress", "-i", b, "-o", path("p.splz"), "--codebook", path("cb.bin")});
  auto dyn = run({"compress", "-i", b, "-o", path("d.splz"), "--dynamic"});
  ASSERT_EQ(pre.code, 0) << pre.err;
  ASSERT_EQ(dyn.code, 0) << dyn.err;
  EXPECT_EQ(field(pre.out, "payload_ratio"), field(dyn.out, "payload_ratio"));
  EXPECT_EQ(field(pre.out, "escape_rate"), field(dyn.out, "escape_rate"));
}

TEST_F(Cli, CalibrateMergesInputs) {
  const auto a = make_raw("a.szrw", ElementFormat::FP8_E5M2, 5000, 0.05, 4);
  const auto b = make_raw("b.szrw", ElementFormat::FP8_E5M2, 7000, 0.02, 5);
  auto s = read_raw(a);
  const auto t = read_raw(b);
  s.words.insert(s.words.end(), t.words.begin(), t.words.end());
  write_raw(s, path("ab.szrw"));
  ASSERT_EQ(run({"calibrate", "-i", a, "-i", b, "-o", path("1.cb")}).code, 0);
  const auto r = run({"calibrate", "-i", path("ab.szrw"), "-o", path("2.cb")});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_file(path("1.cb")), read_file(path("2.cb")));
  EXPECT_EQ(field(r.out, "elements"), 12000);
  std::ostringstream two;
  two << std::fixed << std::setprecision(2) << entropy_bits(build_histogram(s));
  EXPECT_NE(r.out.find("entropy_bits " + two.str()), std::string::npos);
}

TEST_F(Cli, SentinelModeIsSmaller) {
  const auto raw = make_raw("in.szrw", ElementFormat::BF16, 200000, 0.0027, 6);
  auto e = run({"compress", "-i", raw, "-o", path("e.splz"), "--dynamic"});
  auto s = run({"compress", "-i", raw, "-o", path("s.splz"), "--dynamic", "--mode", "sentinel"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_LT(field(s.out, "payload_bytes"), field(e.out, "payload_bytes"));
}

TEST_F(Cli, ExitCodes) {
  const auto raw = make_raw("in.szrw", ElementFormat::BF16, 5000, 0.01, 7);
  EXPECT_EQ(run({"compress", "-i", raw, "-o", path("x")}).code, 4);
  EXPECT_EQ(run({"compress", "-i", raw, "-o", path("x"), "--dynamic", "--code-bits", "5"}).code, 4);
  EXPECT_EQ(run({"compress", "-i", raw, "-o", path("x"), "--dynamic", "--format", "e4m3"}).code, 4);
  EXPECT_EQ(run({"frobnicate"}).code, 4);
  EXPECT_EQ(run({"decompress", "-i", path("missing"), "-o", path("y")}).code, 1);
  EXPECT_EQ(run({"decompress", "-i", raw, "-o", path("y")}).code, 3);
  ASSERT_EQ(run({"compress", "-i", raw, "-o", path("c.splz"), "--dynamic"}).code, 0);
  auto bytes = read_file(path("c.splz"));
  bytes[bytes.size() / 2] ^= 0x40;
  write_file(path("bad.splz"), bytes);
  EXPECT_EQ(run({"decompress", "-i", path("bad.splz"), "-o", path("y")}).code, 3);
  EXPECT_EQ(run({"verify", "-i", raw, "--container", path("bad.splz")}).code, 2);
  const auto other = make_raw("other.szrw", ElementFormat::BF16, 5000, 0.01, 8);
  EXPECT_EQ(run({"verify", "-i", other, "--container", path("c.splz")}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, BenchReportsVerifyFirst) {
  const auto raw = make_raw("in.szrw", ElementFormat::BF16, 50000, 0.0016, 9);
  auto r = run({"bench", "-i", raw, "--dynamic", "--reps", "2", "--warmup", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("verify=OK", 0), 0u);
  EXPECT_NE(r.out.find("encode_scalar_gbps"), std::string::npos);
  EXPECT_NE(r.out.find("encode_quad_gbps"), std::string::npos);
  EXPECT_NE(r.out.find("+-"), std::string::npos);
  r = run({"bench", "-i", raw, "--reps", "1", "--warmup", "0"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("+-"), std::string::npos);
}

TEST_F(Cli, SimulateOutputs) {
  auto r = run({"simulate", "--b-hide", "--g-enc", "613.3", "--g-dec", "2181.8", "--ratio", "1.324"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("b_hide_gbps 463.2"), std::string::npos);

  r = run({"simulate", "--stage-ms", "79.6,1297.8,19.6", "--native-ms", "1749.3", "--json", path("b.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(std::ifstream(path("b.json")));
  EXPECT_NEAR(j["t_total_compressed_ms"].get<double>(), 1397.0, 1.0);
  EXPECT_NEAR(j["speedup"].get<double>(), 1.252, 0.005);

  r = run({"simulate", "--kv-bytes-per-token", "131072", "--batches", "1,2,4", "--seqs", "1024,4096", "--ratio", "1.324",
           "--g-enc", "613.3", "--g-dec", "2181.8", "--bandwidth", "50", "--csv", path("s.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(path("s.csv"));
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 1 + 3 * 2);

  EXPECT_EQ(run({"simulate"}).code, 4);
  EXPECT_EQ(run({"simulate", "--kv-bytes-per-token", "0", "--batches", "1", "--seqs", "1"}).code, 4);
}

TEST_F(Cli, AblateSuites) {
  std::ofstream(path("spec.cfg")) << "format = bf16\ncount = 200000\nseed = 3\nescape_rate = 0.0016\n";
  auto r = run({"ablate", "--spec", path("spec.cfg"), "--suite", "positions", "--json", path("p.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = nlohmann::json::parse(std::ifstream(path("p.json")));
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) EXPECT_EQ(row["status"], "PASS");
  EXPECT_GT(rows[3]["ratio"].get<double>(), rows[0]["ratio"].get<double>());
  EXPECT_EQ(rows[2]["escape_rate"], rows[0]["escape_rate"]);

  r = run({"ablate", "--spec", path("spec.cfg"), "--suite", "precalib", "--json", path("pc.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pc = nlohmann::json::parse(std::ifstream(path("pc.json")));
  EXPECT_EQ(pc[0]["payload_bytes"], pc[1]["payload_bytes"]);

  const auto raw = make_raw("in.szrw", ElementFormat::BF16, 100000, 0.0789, 11);
  r = run({"ablate", "-i", raw, "--suite", "topk", "--csv", path("t.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("top8-3bit"), std::string::npos);
  EXPECT_EQ(run({"ablate", "-i", raw, "--suite", "precalib"}).code, 4);
  EXPECT_EQ(run({"ablate", "-i", raw, "--suite", "bogus"}).code, 4);
}

TEST_F(Cli, GenerateWritesMetadata) {
  auto r = run({"generate", "--format", "e4m3", "--count", "10000", "--escape-rate", "0.0783", "--seed", "4", "-o",
                path("g.szrw")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = read_raw(path("g.szrw"));
  EXPECT_EQ(s.size(), 10000u);
  EXPECT_EQ(s.fmt, ElementFormat::FP8_E4M3);
  const auto meta = read_file(path("g.szrw.meta"));
  const std::string text(meta.begin(), meta.end());
  EXPECT_NE(text.find("prng = mt19937_64"), std::string::npos);
  std::ofstream(path("again.cfg")) << text;
  ASSERT_EQ(run({"generate", "--config", path("again.cfg"), "-o", path("h.szrw")}).code, 0);
  EXPECT_EQ(read_file(path("g.szrw")), read_file(path("h.szrw")));
}
