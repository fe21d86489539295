#include <catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>
#include <sgpde/checkpoint.hpp>
#include <sgpde/io.hpp>
#include <sgpde/problems.hpp>
#include <sgpde/reference.hpp>

using namespace sgpde;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef SGPDE_CLI_PATH
#error "SGPDE_CLI_PATH must point at the built command-line binary"
#endif

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sgpde_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Run the binary with the given arguments, capturing both streams.
RunResult run_cli(const TempDir& dir, const std::string& args) {
    const std::string out_path = dir.file("stdout.txt");
    const std::string err_path = dir.file("stderr.txt");
    const std::string cmd = std::string(SGPDE_CLI_PATH) + " " + args + " >" + out_path +
                            " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out_path);
    r.err = read_file(err_path);
    return r;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("help text lists the subcommands") {
    TempDir dir;
    const RunResult r = run_cli(dir, "--help");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("train") != std::string::npos);
    REQUIRE(r.out.find("reference") != std::string::npos);
    REQUIRE(r.out.find("moment-scan") != std::string::npos);
}

TEST_CASE("a subcommand is required") {
    TempDir dir;
    const RunResult r = run_cli(dir, "");
    REQUIRE(r.exit_code != 0);
}

TEST_CASE("tiny training run produces the full artifact set") {
    TempDir dir;
    const std::string out_dir = dir.file("out");
    write_text(dir.file("run.cfg"),
               "problem.id = laplace1d-x2\n"
               "net.hidden = 8\n"
               "train.epochs = 3\n"
               "train.collocation = 4\n"
               "train.M = 2\n"
               "train.dt = 0.001\n"
               "eval.count = 16\n"
               "output.dir = " + out_dir + "\n");

    const RunResult r = run_cli(dir, "train -c " + dir.file("run.cfg"));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("trained laplace1d-x2 for 3 epochs") != std::string::npos);

    const json rep = json::parse(read_file(out_dir + "/report.json"));
    REQUIRE(rep.at("command") == "train");
    REQUIRE(rep.at("problem") == "laplace1d-x2");
    REQUIRE(rep.at("epochs_run") == 3);
    REQUIRE(rep.at("evaluation").at("type") == "sup_norm_1d");
    REQUIRE(rep.at("evaluation").at("points") == 16);
    REQUIRE(rep.at("final_loss").at("total").get<double>() >= 0.0);
    REQUIRE(rep.at("config_hash").get<std::string>().size() == 40);

    // header plus one row per epoch
    REQUIRE(count_lines(read_file(out_dir + "/loss_history.csv")) == 4);

    // the checkpoint must match the configured architecture: 1 -> 8 -> 1
    const NetworkParams net = load_checkpoint(out_dir + "/model.ckpt");
    REQUIRE(net.layers.size() == 2);
    REQUIRE(net.layers[0].W.rows() == 8);
    REQUIRE(net.layers[0].W.cols() == 1);
    REQUIRE(net.layers[1].W.rows() == 1);

    SECTION("overrides from the command line win") {
        const RunResult r2 =
            run_cli(dir, "train -c " + dir.file("run.cfg") + " --set train.epochs=1" +
                             " --set output.dir=" + dir.file("out2"));
        INFO(r2.err);
        REQUIRE(r2.exit_code == 0);
        const json rep2 = json::parse(read_file(dir.file("out2") + "/report.json"));
        REQUIRE(rep2.at("epochs_run") == 1);
    }

    SECTION("evaluate reloads the checkpoint it trained") {
        const RunResult r2 = run_cli(dir, "evaluate -c " + dir.file("run.cfg"));
        INFO(r2.err);
        REQUIRE(r2.exit_code == 0);
        const json rep2 = json::parse(read_file(out_dir + "/evaluate_report.json"));
        REQUIRE(rep2.at("command") == "evaluate");
        REQUIRE(rep2.at("evaluation").at("type") == "sup_norm_1d");
    }

    SECTION("evaluate rejects a checkpoint with the wrong architecture") {
        const RunResult r2 =
            run_cli(dir, "evaluate -c " + dir.file("run.cfg") + " --set net.hidden=16");
        REQUIRE(r2.exit_code == 2);
        REQUIRE(r2.err.find("checkpoint") != std::string::npos);
    }
}

TEST_CASE("unknown keys are a configuration error") {
    TempDir dir;
    const RunResult r = run_cli(dir, "train --set problem.id=laplace1d-x2"
                                     " --set train.momentum=0.9");
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("configuration error") != std::string::npos);
    REQUIRE(r.err.find("train.momentum") != std::string::npos);
}

TEST_CASE("missing config file is an io error") {
    TempDir dir;
    const RunResult r = run_cli(dir, "train -c /nonexistent_dir_7719/x.cfg");
    REQUIRE(r.exit_code == 2);
}

TEST_CASE("reference prints the closed-form value") {
    TempDir dir;
    const RunResult r = run_cli(dir, "reference --t 0 --x 1.0"
                                     " --set problem.id=bsb --set problem.d=1");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.substr(0, 6) == "value ");
    REQUIRE(r.out.find(" stderr 0\n") != std::string::npos);

    Vec x(1);
    x << 1.0;
    const double want = bsb_exact_value(0.0, x, 0.4, 0.05, 1.0);
    const double got = std::stod(r.out.substr(6));
    REQUIRE_THAT(got, Catch::Matchers::WithinRel(want, 1e-15));
}

TEST_CASE("moment scan writes one row per grid cell") {
    TempDir dir;
    const std::string out_dir = dir.file("scan_out");
    const RunResult r = run_cli(dir, "moment-scan --set problem.id=laplace1d-x2"
                                     " --set scan.dt_values=0.25,0.125"
                                     " --set scan.M_values=2"
                                     " --set scan.trials=16"
                                     " --set output.dir=" + out_dir);
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("wrote 2 rows") != std::string::npos);
    REQUIRE(count_lines(read_file(out_dir + "/moment_scan.csv")) == 3);
}
