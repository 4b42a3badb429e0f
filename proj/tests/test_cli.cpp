#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "pertkit/classifier.hpp"
#include "pertkit/harness.hpp"
#include "pertkit/spectral.hpp"

namespace fs = std::filesystem;
namespace classifier = pertkit::classifier;
namespace harness = pertkit::harness;
namespace spectral = pertkit::spectral;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const char* cli_binary() {
    const char* path = std::getenv("PERTKIT_CLI");
    REQUIRE_MESSAGE(path != nullptr, "PERTKIT_CLI must point at the pertkit binary");
    return path;
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out_file = dir / "stdout.txt";
    const fs::path err_file = dir / "stderr.txt";
    const std::string command = std::string(cli_binary()) + " " + args + " 1>" + out_file.string() +
                                " 2>" + err_file.string();
    const int raw = std::system(command.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    };
    result.out = slurp(out_file);
    result.err = slurp(err_file);
    return result;
}

fs::path make_work_dir() {
    const auto dir = fs::temp_directory_path() / "pertkit_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("detect on a stub model exhausts the budget") {
    const auto dir = make_work_dir();

    // Always-same-label classifier: zero weights, bias prefers class 0.
    classifier::MlpModel stub;
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(4);
    bias[0] = 1.0;
    stub.layers.push_back({Eigen::MatrixXd::Zero(4, 16), bias, classifier::Activation::identity});
    classifier::save_model(stub, (dir / "stub.pmlp").string());

    harness::SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 2;
    spec.height = 4;
    spec.width = 4;
    spec.channels = 1;
    spec.seed = 3;
    const auto dataset = harness::synth_dataset(spec);
    harness::save_images(dataset.images, 4, 4, 1, (dir / "imgs.pimg").string());
    spectral::save_basis(spectral::fit_pca(dataset.images), (dir / "basis.psb").string());

    std::ofstream config(dir / "run.cfg");
    config << "detect.T=4\ndetect.C=2\ndetect.sigma=0.1\n";
    config.close();

    const auto result = run_cli("--config " + (dir / "run.cfg").string() + " detect --model " +
                                    (dir / "stub.pmlp").string() + " --basis " + (dir / "basis.psb").string() +
                                    " --images " + (dir / "imgs.pimg").string() + " --detector pert",
                                dir);
    CHECK(result.exit_code == 0);
    CHECK(result.out.rfind("0,clean,4,budget_exhausted\n", 0) == 0);

    fs::remove_all(dir);
}

TEST_CASE("train-apert rejects an invalid schedule before loading artifacts") {
    const auto dir = make_work_dir();
    std::ofstream config(dir / "bad.cfg");
    config << "apert.edelta=0.5\n";
    config.close();

    // Artifact paths deliberately do not exist: the schedule check come first.
    const auto result = run_cli("--config " + (dir / "bad.cfg").string() +
                                    " train-apert --model nope.pmlp --basis nope.psb"
                                    " --clean-images nope.pimg --corpus-images nope.pimg"
                                    " --corpus-meta nope.csv --out-thresholds t.txt --out-trace tr.csv",
                                dir);
    CHECK(result.exit_code != 0);
    CHECK(result.err.find("sum_a_sq_over_delta_sq") != std::string::npos);
    CHECK(result.err.find("cannot open") == std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("unknown config keys fail with a structured message") {
    const auto dir = make_work_dir();
    std::ofstream config(dir / "bad.cfg");
    config << "no.such.key=1\n";
    config.close();
    const auto result = run_cli("--config " + (dir / "bad.cfg").string() +
                                    " synth-data --out-images x.pimg --out-labels x.plbl",
                                dir);
    CHECK(result.exit_code != 0);
    CHECK(result.err.find("no.such.key") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("small pipeline runs twice to identical bytes") {
    const auto dir = make_work_dir();
    std::ofstream config(dir / "run.cfg");
    config << "seed=11\n"
           << "image.height=6\nimage.width=6\n"
           << "data.classes=3\ndata.train_per_class=40\ndata.test_per_class=10\n"
           << "mlp.hidden=16\nmlp.epochs=8\n"
           << "detect.T=5\ndetect.C=8\ndetect.sigma=0.3\n";
    config.close();
    const std::string cfg = "--config " + (dir / "run.cfg").string() + " ";

    auto pipeline = [&](const fs::path& out_dir) {
        fs::create_directories(out_dir);
        const std::string o = out_dir.string() + "/";
        auto step = [&](const std::string& args) {
            const auto result = run_cli(cfg + args, dir);
            CAPTURE(result.err);
            REQUIRE(result.exit_code == 0);
        };
        step("synth-data --split train --out-images " + o + "train.pimg --out-labels " + o + "train.plbl");
        step("synth-data --split test --out-images " + o + "test.pimg --out-labels " + o + "test.plbl");
        step("train-classifier --images " + o + "train.pimg --labels " + o + "train.plbl --out " + o +
             "model.pmlp");
        step("fit-basis --images " + o + "train.pimg --labels " + o + "train.plbl --out " + o + "basis.psb");
        step("craft --model " + o + "model.pmlp --images " + o + "test.pimg --labels " + o +
             "test.plbl --attack fgsm --out-images " + o + "fgsm.pimg --out-meta " + o + "fgsm.csv");
        step("evaluate --model " + o + "model.pmlp --basis " + o + "basis.psb --clean-images " + o +
             "test.pimg --corpus-images " + o + "fgsm.pimg --corpus-meta " + o +
             "fgsm.csv --detector pert --out " + o + "report.csv");
    };

    pipeline(dir / "a");
    pipeline(dir / "b");
    for (const char* name : {"train.pimg", "train.plbl", "model.pmlp", "basis.psb", "fgsm.pimg",
                             "fgsm.csv", "report.csv"}) {
        CAPTURE(name);
        CHECK(read_bytes(dir / "a" / name) == read_bytes(dir / "b" / name));
    }
    fs::remove_all(dir);
}

}  // TEST_SUITE
