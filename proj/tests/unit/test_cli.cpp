#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("derrt_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DERRT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown flags exit with usage status") {
    TempDir tmp;
    CHECK(run("plan --no-such-flag", tmp.path / "log") == 2);
    CHECK(run("", tmp.path / "log") == 2);
    CHECK(run("env gen --kind passage", tmp.path / "log") == 2);
  }

  TEST_CASE("plan output is reproducible for a fixed seed") {
    TempDir tmp;
    const auto env = tmp.path / "env.json";
    REQUIRE(run("env gen --seed 4 --kind passage --width 120 --height 120 -o \"" + env.string() + "\"", tmp.path / "log") == 0);
    REQUIRE(fs::exists(env));

    const std::string common = "plan --seed 9 --json --samples 4000 --env \"" + env.string() + "\"";
    REQUIRE(run(common + " -o \"" + (tmp.path / "a.json").string() + "\"", tmp.path / "out_a") == 0);
    REQUIRE(run(common + " -o \"" + (tmp.path / "b.json").string() + "\"", tmp.path / "out_b") == 0);
    const auto a = slurp(tmp.path / "a.json");
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(tmp.path / "b.json"));
    CHECK(slurp(tmp.path / "out_a") == slurp(tmp.path / "out_b"));
    CHECK(nlohmann::json::parse(a).at("success") == true);
  }

  TEST_CASE("passage bench reports three planner rows") {
    TempDir tmp;
    const auto out = tmp.path / "bench.json";
    REQUIRE(run("bench passage --seed 2 --json --rounds 2 --samples 400 --train-traces 6 --epochs 1 -o \"" +
                    out.string() + "\"",
                tmp.path / "log") == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    REQUIRE(j.at("summaries").size() == 3);
    CHECK(j.at("summaries")[0].at("planner") == "rrt_star");
    CHECK(j.at("summaries")[1].at("planner") == "derrt_hmm");
    CHECK(j.at("summaries")[2].at("planner") == "derrt_gru");
    CHECK(j.at("trials").size() == 6);
    CHECK_FALSE(j.contains("timing"));
  }
}
