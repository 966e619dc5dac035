#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(MFGP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int s = std::system(cmd.c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

fs::path dir(const std::string& name) {
  fs::path p = fs::path(MFGP_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("train --family banana") == 2);
    CHECK(run("train --family lmc --objective elbo") == 2);
    CHECK(run("predict --model /nonexistent/model.json --points x.csv") == 2);
    const fs::path d = dir("cli_badcfg");
    std::ofstream(d / "c.json") << "{\"beta\": -1}";
    CHECK(run("train --config " + (d / "c.json").string()) == 2);
    std::ofstream(d / "d.json") << "{oops";
    CHECK(run("train --config " + (d / "d.json").string()) == 2);
  }

  TEST_CASE("gen-data, train, predict and slice") {
    const fs::path d = dir("cli_flow");
    REQUIRE(run("gen-data --density sparse --seed 3 --out " + (d / "data.csv").string()) == 0);
    CHECK(slurp(d / "data.csv").rfind("fidelity,x1,x2,y,g1,g2", 0) == 0);

    REQUIRE(run("train --family lmc-grad --data " + (d / "data.csv").string() + " --test-data " +
                (d / "data.csv").string() + " --stage-iters 20 --out " + (d / "run").string()) == 0);
    for (const char* f : {"model.json", "loss.csv", "metrics.json", "manifest.json"})
      CHECK(fs::exists(d / "run" / f));
    auto manifest = nlohmann::json::parse(slurp(d / "run" / "manifest.json"));
    CHECK(manifest.contains("config"));
    CHECK(manifest.contains("wall_time_seconds"));
    auto metrics = nlohmann::json::parse(slurp(d / "run" / "metrics.json"));
    CHECK(metrics.contains("rmse"));

    std::ofstream(d / "pts.csv") << "x1,x2\n0,5\n2.5,7.5\n";
    REQUIRE(run("predict --model " + (d / "run" / "model.json").string() + " --points " +
                (d / "pts.csv").string() + " --out " + (d / "pred.csv").string()) == 0);
    const std::string pred = slurp(d / "pred.csv");
    CHECK(pred.rfind("x1,x2,mean,std", 0) == 0);

    REQUIRE(run("slice --model " + (d / "run" / "model.json").string() +
                " --fix x1=2.5 --points 25 --out " + (d / "slice.csv").string()) == 0);
    std::ifstream in(d / "slice.csv");
    std::string line;
    int rows = -1;
    std::string header;
    while (std::getline(in, line)) {
      if (rows < 0) header = line;
      ++rows;
    }
    CHECK(rows == 25);
    CHECK(header.rfind("x2,mean,lo,hi", 0) == 0);
    CHECK(run("slice --model " + (d / "run" / "model.json").string() + " --fix x3=1") == 2);
  }

  TEST_CASE("untrained model path exits 2") {
    const fs::path d = dir("cli_untrained");
    std::ofstream(d / "pts.csv") << "x1,x2\n0,5\n";
    // A model file written before training.
    std::ofstream(d / "m.json") << "{}";
    CHECK(run("predict --model " + (d / "m.json").string() + " --points " + (d / "pts.csv").string()) == 2);
  }

  TEST_CASE("benchmark writes the table") {
    const fs::path d = dir("cli_bench");
    REQUIRE(run("benchmark --density sparse --seeds 2 --models lmc,lmc-grad --stage-iters 10 --quiet --out " +
                d.string()) == 0);
    auto t = nlohmann::json::parse(slurp(d / "metrics.json"));
    REQUIRE(t["rows"].size() == 2);
    CHECK(t["rows"][0]["rmse"].size() == 2);
    CHECK(fs::exists(d / "metrics.csv"));
    CHECK(fs::exists(d / "manifest.json"));
  }
}
