#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "zigam/util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string err;
};

Run run(const std::string& args) {
  const auto err_path = testutil::temp_path("cli_stderr.txt");
  const std::string cmd = std::string(ZIGAM_CLI_PATH) + " " + args + " 2> " + err_path + " > /dev/null";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = zigam::read_file(err_path);
  return r;
}

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::path(testutil::temp_path("cli")) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const std::string& path) { return zigam::read_file(path); }

// Rows of a CSV body with the comment header removed.
std::vector<std::vector<std::string>> rows(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line;
  std::vector<std::vector<std::string>> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    out.push_back(cells);
  }
  return out;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  REQUIRE(it != header.end());
  return static_cast<std::size_t>(it - header.begin());
}

const char* kNullScenario = R"({
  "scenario": {
    "n": 1500, "n_periods": 3, "treatment_start_index": 1,
    "covariates": [{"name": "SIZE", "law": "lognormal", "a": 5.0, "b": 0.7},
                   {"name": "DENSITY", "law": "normal", "a": 100.0, "b": 20.0}],
    "mu": {"constant": 1.0, "linear": [0.5, 0.3]},
    "zero_intercept": [-1.0]
  },
  "seed": 5
})";

}  // namespace

TEST_CASE("simulate, fit and effect on a null scenario") {
  const auto dir = fresh_dir("null");
  write(dir + "/sim.json", kNullScenario);
  REQUIRE(run("simulate --config " + dir + "/sim.json --out " + dir).code == 0);
  CHECK(fs::exists(dir + "/data.csv"));
  CHECK(fs::exists(dir + "/truth.csv"));
  const auto truth = nlohmann::json::parse(slurp(dir + "/truth.json"));
  CHECK(truth["meta"]["seed"] == 5);
  CHECK(slurp(dir + "/data.csv").rfind("# zigam ", 0) == 0);

  write(dir + "/run.json", R"({
    "data": "data.csv",
    "schema": {"covariates": ["SIZE", "DENSITY"], "treatment_levels": ["0", "1"]},
    "zero_formula": {"linear": ["SIZE", "DENSITY"]},
    "cont_formula": {"smooths": [{"covariate": "SIZE", "k": 8}], "linear": ["DENSITY"]},
    "model": "model.json",
    "targets": [{"name": "mid", "x": {"SIZE": 150, "DENSITY": 100}}]
  })");
  write(dir + "/fit.json", R"({
    "data": "data.csv",
    "schema": {"covariates": ["SIZE", "DENSITY"], "treatment_levels": ["0", "1"]},
    "zero_formula": {"linear": ["SIZE", "DENSITY"]},
    "cont_formula": {"smooths": [{"covariate": "SIZE", "k": 8}], "linear": ["DENSITY"]}
  })");
  REQUIRE(run("fit --config " + dir + "/fit.json --out " + dir).code == 0);
  CHECK(fs::exists(dir + "/terms.csv"));
  REQUIRE(run("effect --config " + dir + "/run.json --out " + dir).code == 0);
  const auto eff = rows(dir + "/effects.csv");
  REQUIRE(eff.size() == 3);
  const auto point = column(eff[0], "point");
  for (std::size_t r = 1; r < eff.size(); ++r) CHECK(std::abs(std::stod(eff[r][point])) < 0.3);
}

TEST_CASE("reruns are byte-identical whatever the worker count") {
  const auto dir = fresh_dir("det");
  write(dir + "/sim.json", kNullScenario);
  REQUIRE(run("simulate --config " + dir + "/sim.json --out " + dir).code == 0);
  write(dir + "/boot.json", R"({
    "data": "data.csv",
    "schema": {"covariates": ["SIZE", "DENSITY"], "treatment_levels": ["0", "1"]},
    "zero_formula": {"linear": ["SIZE"]},
    "cont_formula": {"smooths": [{"covariate": "SIZE", "k": 6}]},
    "targets": [{"name": "mid", "x": {"SIZE": 150, "DENSITY": 100}}],
    "bootstrap": {"replicates": 12, "dump_draws": true}
  })");
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  REQUIRE(run("bootstrap --config " + dir + "/boot.json --out " + a + " --workers 1 --seed 3").code == 0);
  REQUIRE(run("bootstrap --config " + dir + "/boot.json --out " + b + " --workers 3 --seed 3").code == 0);
  for (const char* f : {"effects_bootstrap.csv", "draws.csv", "bootstrap.json"})
    CHECK(slurp(a + "/" + f) == slurp(b + "/" + f));
  const auto c = fresh_dir("det_c");
  REQUIRE(run("bootstrap --config " + dir + "/boot.json --out " + c + " --seed 4").code == 0);
  CHECK(slurp(a + "/draws.csv") != slurp(c + "/draws.csv"));
}

TEST_CASE("compare on a zero-inflated scenario puts model 3 above model 2") {
  const auto dir = fresh_dir("ladder");
  write(dir + "/sim.json", R"({
    "scenario": {
      "n": 2000, "n_periods": 2, "treatment_start_index": 1,
      "covariates": [{"name": "SIZE", "law": "normal"}, {"name": "DENSITY", "law": "normal"}],
      "mu": {"constant": 5.0, "linear": [0.5, 0.5]},
      "alpha": [{}, {"constant": 1.0}],
      "zero_intercept": [-0.405], "zero_shift": [0.0, -0.981]
    },
    "seed": 8
  })");
  REQUIRE(run("simulate --config " + dir + "/sim.json --out " + dir).code == 0);
  write(dir + "/cmp.json", R"({
    "data": "data.csv",
    "schema": {"covariates": ["SIZE", "DENSITY"], "treatment_levels": ["0", "1"]},
    "ladder": {"target": {"x": {"SIZE": 0, "DENSITY": 0}}, "tensor_dim": 4, "smooth_dim": 6}
  })");
  REQUIRE(run("compare --config " + dir + "/cmp.json --out " + dir).code == 0);
  const auto r = rows(dir + "/ladder.csv");
  const auto model = column(r[0], "model"), point = column(r[0], "point");
  double m2 = 0, m3 = 0;
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k][model] == "2") m2 = std::stod(r[k][point]);
    if (r[k][model] == "3") m3 = std::stod(r[k][point]);
  }
  CHECK(m3 > m2);
}

TEST_CASE("errors are reported as json on stderr") {
  const auto dir = fresh_dir("errors");
  write(dir + "/bad.json", "{\"data\": \"missing.csv\"}");
  auto r = run("fit --config " + dir + "/bad.json --out " + dir);
  CHECK(r.code == 1);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j["error"]["kind"] == "io");
  CHECK(j["error"]["message"].get<std::string>().find("missing.csv") != std::string::npos);

  write(dir + "/broken.json", "{\n\"seed\": 1,\n\"data\" \"x\"\n}");
  r = run("fit --config " + dir + "/broken.json");
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(r.err)["error"]["message"].get<std::string>().find("broken.json:3:") !=
        std::string::npos);

  write(dir + "/empty.json", "{}");
  r = run("placebo --config " + dir + "/empty.json");
  CHECK(r.code == 1);
  const auto missing = nlohmann::json::parse(r.err);
  CHECK(missing["error"]["kind"] == "config");
  CHECK(missing["error"]["message"].get<std::string>().find("empty.json: missing path 'data'") != std::string::npos);

  r = run("fit --config " + dir + "/empty.json --workers 0");
  CHECK(r.code == 2);
  CHECK(nlohmann::json::parse(r.err)["error"]["kind"] == "usage");
  CHECK(run("nonsense").code == 2);
}
