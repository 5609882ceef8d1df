#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SYNOPTIC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

struct temp_dir {
  fs::path path;
  explicit temp_dir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~temp_dir() { fs::remove_all(path); }
};

}  // namespace

TEST(Cli, SelftestPasses) {
  EXPECT_EQ(run_cli("selftest"), 0);
}

TEST(Cli, SelftestJsonIsMachineParseable) {
  temp_dir dir("synoptic_cli_selftest");
  const std::string out = (dir.path / "out.json").string();
  const std::string cmd =
      std::string(SYNOPTIC_CLI_PATH) + " selftest --json > " + out + " 2>/dev/null";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  nlohmann::json j = nlohmann::json::parse(read_file(out));
  ASSERT_TRUE(j.is_array());
  ASSERT_GE(j.size(), 4u);
  for (const auto& entry : j) EXPECT_TRUE(entry.at("pass").get<bool>());
}

TEST(Cli, InjectedFaultFails) {
  EXPECT_NE(run_cli("selftest --inject-fault"), 0);
}

TEST(Cli, PrepareDataSyntheticAndIdempotence) {
  temp_dir a("synoptic_cli_prep_a");
  temp_dir b("synoptic_cli_prep_b");
  ASSERT_EQ(run_cli("prepare-data --synthetic classes=2,streams=4 --seed 3 --out " +
                    a.path.string()),
            0);
  ASSERT_EQ(run_cli("prepare-data --synthetic classes=2,streams=4 --seed 3 --out " +
                    b.path.string()),
            0);
  EXPECT_EQ(read_file(a.path / "manifest.json"), read_file(b.path / "manifest.json"));
  EXPECT_EQ(read_file(a.path / "run_manifest.json"),
            read_file(b.path / "run_manifest.json"));
  nlohmann::json m = nlohmann::json::parse(read_file(a.path / "manifest.json"));
  EXPECT_EQ(m.at("train").size() + m.at("test").size(), 8u);
}

TEST(Cli, CorruptEventFileExitsTwo) {
  temp_dir input("synoptic_cli_corrupt");
  temp_dir out("synoptic_cli_corrupt_out");
  fs::create_directories(input.path / "0");
  {
    std::ofstream f(input.path / "0" / "bad.bin", std::ios::binary);
    f << "not an event file";
  }
  EXPECT_EQ(run_cli("prepare-data --input " + input.path.string() + " --out " +
                    out.path.string()),
            2);
}

TEST(Cli, MissingArgumentsExitNonzero) {
  EXPECT_NE(run_cli("prepare-data"), 0);
  EXPECT_NE(run_cli("train"), 0);
}

TEST(Cli, SeedFallsBackToEnvironment) {
  temp_dir flagged("synoptic_cli_seed_flag");
  temp_dir env("synoptic_cli_seed_env");
  ASSERT_EQ(run_cli("prepare-data --synthetic classes=2,streams=2 --seed 11 --out " +
                    flagged.path.string()),
            0);
  const std::string cmd = std::string("SYNOPTIC_SEED=11 ") + SYNOPTIC_CLI_PATH +
                          " prepare-data --synthetic classes=2,streams=2 --out " +
                          env.path.string() + " >/dev/null 2>&1";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  EXPECT_EQ(read_file(flagged.path / "manifest.json"),
            read_file(env.path / "manifest.json"));
}
