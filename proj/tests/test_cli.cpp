#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridfreq/acceptance.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(GRIDFREQ_BIN) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch() {
    fs::path d = fs::temp_directory_path() / "gridfreq_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const std::string src = GRIDFREQ_SOURCE_DIR;

}  // namespace

TEST_CASE("build-model is deterministic and lists the state ordering") {
    fs::path d = scratch();
    const std::string cfg = src + "/configs/ksa_2030.json";
    CHECK(run("build-model --config " + cfg + " --out " + (d / "a.txt").string()) == 0);
    CHECK(run("build-model --config " + cfg + " --out " + (d / "b.txt").string()) == 0);
    CHECK(slurp(d / "a.txt") == slurp(d / "b.txt"));
    std::string labels = slurp(d / "a.txt.labels");
    CHECK(labels.rfind("0 central.freq\n", 0) == 0);
    CHECK(labels.find("41 tie.southern-western\n") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2") {
    fs::path d = scratch();
    CHECK(run("") == 2);
    CHECK(run("simulate --scenario " + (d / "missing.json").string() + " --out " + d.string()) == 2);
    std::ofstream(d / "empty.json") << "{\"regions\": []}";
    CHECK(run("build-model --config " + (d / "empty.json").string() + " --out " + (d / "m.txt").string()) == 2);
    std::ofstream(d / "broken.json") << "{\n  \"regions\": [\n";
    CHECK(run("reduce --config " + (d / "broken.json").string() + " --out " + (d / "r.txt").string()) == 2);
    CHECK(run("verify --suite everything") == 2);
}

TEST_CASE("simulate writes the report files") {
    fs::path d = scratch();
    std::ofstream(d / "s.json") << R"({"name": "short", "grid": "ksa_2030",
        "primary": {"central": {"kbar_d": 30}, "eastern": {"kbar_d": 30}, "southern": {"kbar_d": 30}, "western": {"kbar_d": 30}},
        "disturbances": [{"t": 0.0, "region": "central", "dp": -0.02}], "t_end": 4.0})";
    CHECK(run("simulate --scenario " + (d / "s.json").string() + " --out " + (d / "run").string()) == 0);
    CHECK(fs::exists(d / "run" / "trace.csv"));
    CHECK(fs::exists(d / "run" / "metrics.json"));
    CHECK(fs::exists(d / "run" / "manifest.json"));
    CHECK(run("report --run " + (d / "run").string()) == 0);
    const std::string first = slurp(d / "run" / "trace.csv");
    CHECK(run("simulate --scenario " + (d / "s.json").string() + " --out " + (d / "run2").string()) == 0);
    CHECK(slurp(d / "run2" / "trace.csv") == first);
}

TEST_CASE("optimize-primary rejects an unknown region") {
    fs::path d = scratch();
    CHECK(run("optimize-primary --config " + src + "/configs/ksa_2030.json --region northern --out " +
              (d / "p.json").string()) == 2);
}

TEST_CASE("verify numerics suite passes") { CHECK(run("verify --suite numerics") == 0); }

TEST_CASE("golden metrics check detects corruption") {
    CHECK(gridfreq::check_golden_metrics(src + "/tests/golden/ksa_2030_metrics.json").pass);
    fs::path d = scratch();
    std::string g = slurp(src + "/tests/golden/ksa_2030_metrics.json");
    const auto pos = g.find("\"nadir_hz\": -0.05");
    REQUIRE(pos != std::string::npos);
    g.replace(pos, 18, "\"nadir_hz\": -0.07");
    std::ofstream(d / "bad.json") << g;
    CHECK_FALSE(gridfreq::check_golden_metrics((d / "bad.json").string()).pass);
}
