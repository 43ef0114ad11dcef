#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* bin = std::getenv("TWINDIAG_CLI_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

int exit_code(int status) { return WEXITSTATUS(status); }

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("cli end-to-end smoke on a tiny dataset") {
    TempDir work("twindiag_cli_smoke");
    const auto ds = (work.path / "ds").string();

    // Tiny dataset: 3 classes, short episodes.
    CHECK(exit_code(run("dataset gen --classes nominal,engine_failure,oil_cooler_maintenance "
                        "--runs-per-class 6 --seed 3 --out " + ds +
                        " --format bin --duration 100 --inj-min 35 --inj-max 45 --jobs 2")) == 0);
    CHECK(fs::exists(ds + "/manifest.json"));
    CHECK(fs::exists(ds + "/runconfig.json"));

    // Re-running into the same directory fails cleanly (no in-place mutation).
    CHECK(exit_code(run("dataset gen --classes nominal --runs-per-class 1 --out " + ds)) == 1);

    // Surrogate training (small budget).
    const auto ck = (work.path / "surrogate.ckpt").string();
    CHECK(exit_code(run("surrogate train --data " + ds + " --horizon 3 --epochs 2 "
                        "--chunks-per-epoch 64 --out " + ck)) == 0);
    CHECK(fs::exists(ck));

    // Horizon 0 rejected.
    CHECK(exit_code(run("surrogate train --data " + ds + " --horizon 0 --out " + ck + "2")) != 0);

    // Classifier training on mirror features, then eval.
    const auto clf = (work.path / "cnn.ckpt").string();
    CHECK(exit_code(run("classify train --data " + ds + " --mode mirror --classifier cnn1d "
                        "--epochs 6 --patience 6 --out " + clf)) == 0);
    CHECK(fs::exists(clf));
    CHECK(fs::exists(clf + ".eval.json"));
    CHECK(exit_code(run("classify eval --data " + ds + " --model " + clf)) == 0);

    // Diagnose one run with a template report.
    std::string run_id = "engine_failure_0";
    CHECK(exit_code(run("diagnose --data " + ds + " --run " + run_id +
                        " --mode mirror --model " + clf + " --report template --out " +
                        (work.path / "diag").string())) == 0);
    CHECK(fs::exists(work.path / "diag" / (run_id + ".report.txt")));

    // Report batch with the mock client, then re-score the archive.
    const auto reports = (work.path / "reports").string();
    CHECK(exit_code(run("report gen --data " + ds + " --model " + clf +
                        " --mode template --cases 4 --out " + reports)) == 0);
    CHECK(fs::exists(reports + "/scores.json"));
    {
        std::ifstream in(reports + "/scores.json");
        nlohmann::json scores;
        in >> scores;
        CHECK(scores.at("mean").at("sec").get<double>() == 1.0);
        CHECK(scores.at("mean").at("dc").get<double>() == 1.0);
    }
    CHECK(exit_code(run("report score --dir " + reports + " --out " +
                        (work.path / "rescored.json").string())) == 0);

    // KB export and plot data.
    CHECK(exit_code(run("kb export --format json --out " + (work.path / "kb.json").string())) ==
          0);
    CHECK(exit_code(run("plotdata --data " + ds + " --run " + run_id +
                        " --figure channels --out " + (work.path / "plots").string())) == 0);
    CHECK(fs::exists(work.path / "plots" / (run_id + "_channels.tsv")));

    // Unknown run id is a user error (exit 1).
    CHECK(exit_code(run("plotdata --data " + ds + " --run nope --figure traj --out " +
                        (work.path / "plots").string())) == 1);
}
