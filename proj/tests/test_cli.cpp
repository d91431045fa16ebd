#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "envkit/cli.hpp"
#include "envkit/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace envkit;

namespace {

const std::string kData = ENVKIT_DATA_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / ("envkit_test_" + name);
    std::ofstream(path) << content;
    return path.string();
}

} // namespace

TEST_CASE("usage errors exit 64") {
    CHECK(run_cli({}).code == cli::kExitUsage);
    CHECK(run_cli({"envelope", "--bogus"}).code == cli::kExitUsage);
    CHECK(run_cli({"envelope", "--density", kData + "/missing.json", "--matrix", "1,0;0,1"}).code ==
          cli::kExitUsage);
    CHECK(run_cli({"laminate", "--density", kData + "/kohn_strang.json"}).code == cli::kExitUsage);
    const Run bad_matrix = run_cli({"laminate", "--density", kData + "/kohn_strang.json", "--matrix", "1,2;3"});
    CHECK(bad_matrix.code == cli::kExitUsage);
    CHECK_FALSE(bad_matrix.err.empty());
    const Run bad_shape = run_cli({"laminate", "--density", kData + "/kohn_strang.json", "--matrix", "1,2,3"});
    CHECK(bad_shape.code == cli::kExitUsage);
}

TEST_CASE("help exits 0") {
    const Run r = run_cli({"--help"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("envelope") != std::string::npos);
}

TEST_CASE("envelope table csv") {
    const Run r = run_cli({"envelope", "--density", kData + "/kohn_strang.json", "--grid", kData + "/diag2d.json",
                           "--iters", "2"});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(r.out.rfind("F11,F12,F21,F22,R0,", 0) == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 21 * 21);
}

TEST_CASE("envelope json artifact is stamped") {
    const std::vector<std::string> args{"envelope", "--density", kData + "/kohn_strang.json", "--matrix",
                                        "0.3,0;0,0",  "--iters",   "3", "--seed", "5"};
    const Run r = run_cli(args);
    REQUIRE(r.code == cli::kExitOk);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["tool_version"] == kToolVersion);
    CHECK(j["seed"] == 5);
    CHECK(j["config_digest"].get<std::string>().size() == 16);
    CHECK(j["value"].get<double>() == doctest::Approx(0.6).epsilon(1e-3));
    CHECK(run_cli(args).out == r.out);
}

TEST_CASE("output path does not change the digest") {
    const std::string path = temp_file("envelope_out.json", "");
    const Run a = run_cli({"envelope", "--density", kData + "/kohn_strang.json", "--matrix", "1,0;0,1"});
    const Run b = run_cli({"envelope", "--density", kData + "/kohn_strang.json", "--matrix", "1,0;0,1", "--out", path});
    REQUIRE(b.code == cli::kExitOk);
    CHECK(b.out.empty());
    CHECK(read_text_file(path) == a.out);
    std::filesystem::remove(path);
}

TEST_CASE("laminate exit codes") {
    const Run failed = run_cli({"laminate", "--density", kData + "/det_barrier.json", "--matrix", "0,0;0,2", "--alpha", "1", "--beta", "2"});
    CHECK(run_cli({"laminate", "--density", kData + "/det_barrier.json", "--matrix", "0,0;0,2"}).code == cli::kExitUsage);
    CHECK(failed.code == cli::kExitCheckFailed);
    CHECK(nlohmann::json::parse(failed.out)["holds"] == false);

    const std::string weak = temp_file("weak.json", R"({"family":"weak_det_barrier","m":2,"N":2})");
    const Run ok = run_cli({"laminate", "--density", weak, "--matrix", "0,0;0,2"});
    CHECK(ok.code == cli::kExitOk);
    CHECK(nlohmann::json::parse(ok.out).contains("laminate"));

    const Run pre = run_cli({"laminate", "--density", weak, "--matrix", "0,0;0,2", "--alpha", "0.5"});
    CHECK(pre.code == cli::kExitError);
    const auto e = nlohmann::json::parse(pre.out);
    CHECK(e["error"]["type"] == "precondition");
    CHECK(e.contains("tool_version"));
}

TEST_CASE("film command") {
    const std::string flat = temp_file(
        "film.json",
        R"({"sigma":[0,1,0,1],"psi":{"gradient":[[1,0],[0,1],[0,0]]},"director":{"type":"constant","value":[0,0,1]}})");
    const std::string density = temp_file("det3.json", R"({"family":"det_barrier","m":3,"N":3})");
    const Run csv = run_cli({"film", "--density", density, "--film", flat, "--format", "csv"});
    CHECK(csv.code == cli::kExitOk);
    CHECK(csv.out.rfind("eps,energy,target,error,ratio\n", 0) == 0);

    const std::string low = temp_file(
        "film_low.json",
        R"({"sigma":[0,1,0,1],"psi":{"gradient":[[1,0],[0,1],[0,0]]},"director":{"type":"constant","value":[0,0,0.2]}})");
    const Run pre = run_cli({"film", "--density", density, "--film", low});
    CHECK(pre.code == cli::kExitError);
    CHECK(nlohmann::json::parse(pre.out)["error"]["type"] == "precondition");
}

TEST_CASE("reduce and verify") {
    const std::string density = temp_file("quad3.json", R"({"family":"quadratic","m":3,"N":3})");
    const Run r = run_cli({"reduce", "--density", density, "--matrix", "1,0;0,1;0,0"});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(nlohmann::json::parse(r.out).dump().find("w0") != std::string::npos);

    const Run v = run_cli({"verify", "--suite", "densities", "--seed", "3"});
    CHECK(v.code == cli::kExitOk);
    CHECK(nlohmann::json::parse(v.out)["failed"] == 0);
}
