#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("tsi_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

RunResult run_cli(const TempDir& dir, const std::string& args) {
    const std::string out_file = dir.file("_stdout"), err_file = dir.file("_stderr");
    const std::string cmd = std::string(TSI_CLI_PATH) + " " + args + " > " + out_file + " 2> " + err_file;
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

const char* kSynthSpec =
    "length = 900\n"
    "sources = uniform, laplace, sinusoid\n"
    "source_periods = 0, 0, 41\n"
    "trend_slopes = 0.002, 0.001, -0.001\n"
    "seasonal_periods = 24, 32, 0\n"
    "seasonal_amplitudes = 1.0, 0.8, 0.0\n"
    "noise_sigma = 0.2\n"
    "seed = 11\n";

std::string small_run_config(const std::string& csv_path) {
    return "dataset = " + csv_path +
           "\n"
           "dataset_name = itest\n"
           "window = 32\n"
           "horizons = 8, 16\n"
           "d_hidden = 8\n"
           "d_tr = 8\n"
           "d_s = 8\n"
           "trend_m = 2\n"
           "steps = 40\n"
           "batch = 4\n"
           "queue = 16\n"
           "ae_hidden = 8\n"
           "ae_steps = 120\n"
           "seed = 5\n";
}

}  // namespace

TEST_CASE("synth -> train -> evaluate -> forecast happy path") {
    TempDir dir;
    write_file(dir.file("synth.conf"), kSynthSpec);
    RunResult synth = run_cli(dir, "synth --config " + dir.file("synth.conf") + " --out " + dir.file("data"));
    REQUIRE(synth.exit_code == 0);
    REQUIRE(fs::exists(dir.file("data/data.csv")));
    REQUIRE(fs::exists(dir.file("data/truth.json")));

    write_file(dir.file("run.conf"), small_run_config(dir.file("data/data.csv")));
    RunResult train = run_cli(dir, "train --config " + dir.file("run.conf") + " --out " + dir.file("run"));
    REQUIRE(train.exit_code == 0);
    REQUIRE(fs::exists(dir.file("run/checkpoint.tsi")));
    REQUIRE(fs::exists(dir.file("run/loss_contrastive.csv")));
    REQUIRE(fs::exists(dir.file("run/loss_autoencoder.csv")));

    RunResult ev = run_cli(dir, "evaluate --config " + dir.file("run.conf") + " --checkpoint " +
                                     dir.file("run/checkpoint.tsi") + " --out " + dir.file("run"));
    REQUIRE(ev.exit_code == 0);

    // Two metric rows, one per horizon, each parseable JSON with exactly the
    // documented keys.
    std::ifstream js(dir.file("run/metrics.json"));
    std::string line;
    int rows = 0;
    while (std::getline(js, line)) {
        ++rows;
        REQUIRE(line.find("\"dataset\"") != std::string::npos);
        REQUIRE(line.find("\"horizon\"") != std::string::npos);
        REQUIRE(line.find("\"mse\"") != std::string::npos);
        REQUIRE(line.find("\"mae\"") != std::string::npos);
        REQUIRE(line.find("\"alpha\"") != std::string::npos);
    }
    REQUIRE(rows == 2);

    RunResult fc = run_cli(dir, "forecast --config " + dir.file("run.conf") + " --checkpoint " +
                                     dir.file("run/checkpoint.tsi") + " --out " + dir.file("run"));
    REQUIRE(fc.exit_code == 0);
    REQUIRE(fs::exists(dir.file("run/forecast_L8.csv")));
    REQUIRE(fs::exists(dir.file("run/forecast_L16.csv")));
}

TEST_CASE("same seed twice gives byte-identical checkpoints and metrics") {
    TempDir dir;
    write_file(dir.file("synth.conf"), kSynthSpec);
    REQUIRE(run_cli(dir, "synth --config " + dir.file("synth.conf") + " --out " + dir.file("data")).exit_code == 0);
    write_file(dir.file("run.conf"), small_run_config(dir.file("data/data.csv")));

    REQUIRE(run_cli(dir, "train --config " + dir.file("run.conf") + " --out " + dir.file("a")).exit_code == 0);
    REQUIRE(run_cli(dir, "train --config " + dir.file("run.conf") + " --out " + dir.file("b")).exit_code == 0);
    REQUIRE(slurp(dir.file("a/checkpoint.tsi")) == slurp(dir.file("b/checkpoint.tsi")));
    REQUIRE(slurp(dir.file("a/loss_contrastive.csv")) == slurp(dir.file("b/loss_contrastive.csv")));

    REQUIRE(run_cli(dir, "evaluate --config " + dir.file("run.conf") + " --checkpoint " +
                             dir.file("a/checkpoint.tsi") + " --out " + dir.file("a")).exit_code == 0);
    REQUIRE(run_cli(dir, "evaluate --config " + dir.file("run.conf") + " --checkpoint " +
                             dir.file("b/checkpoint.tsi") + " --out " + dir.file("b")).exit_code == 0);
    REQUIRE(slurp(dir.file("a/metrics.json")) == slurp(dir.file("b/metrics.json")));
    REQUIRE(slurp(dir.file("a/metrics.csv")) == slurp(dir.file("b/metrics.csv")));

    // A different seed must change the checkpoint.
    REQUIRE(run_cli(dir, "train --config " + dir.file("run.conf") + " --seed 99 --out " + dir.file("c")).exit_code == 0);
    REQUIRE(slurp(dir.file("a/checkpoint.tsi")) != slurp(dir.file("c/checkpoint.tsi")));
}

TEST_CASE("config errors exit 1 and name the offending key") {
    TempDir dir;
    write_file(dir.file("bad.conf"), "dataset = x.csv\nnot_a_real_key = 3\n");
    RunResult r = run_cli(dir, "train --config " + dir.file("bad.conf") + " --out " + dir.file("out"));
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.err.find("not_a_real_key") != std::string::npos);
}

TEST_CASE("data errors exit 2") {
    TempDir dir;
    write_file(dir.file("run.conf"), small_run_config(dir.file("missing.csv")));
    RunResult missing = run_cli(dir, "train --config " + dir.file("run.conf") + " --out " + dir.file("out"));
    REQUIRE(missing.exit_code == 2);

    write_file(dir.file("nan.csv"), "date,a\n2020-01-01,1\n2020-01-02,nan\n");
    write_file(dir.file("nan.conf"), small_run_config(dir.file("nan.csv")));
    RunResult nan_run = run_cli(dir, "train --config " + dir.file("nan.conf") + " --out " + dir.file("out"));
    REQUIRE(nan_run.exit_code == 2);
    REQUIRE(nan_run.err.find("NaN") != std::string::npos);
}

TEST_CASE("checkpoint/config incompatibility exits 4") {
    TempDir dir;
    write_file(dir.file("synth.conf"), kSynthSpec);
    REQUIRE(run_cli(dir, "synth --config " + dir.file("synth.conf") + " --out " + dir.file("data")).exit_code == 0);
    write_file(dir.file("run.conf"), small_run_config(dir.file("data/data.csv")));
    REQUIRE(run_cli(dir, "train --config " + dir.file("run.conf") + " --out " + dir.file("run")).exit_code == 0);

    // Same checkpoint, different window.
    std::string other = small_run_config(dir.file("data/data.csv"));
    other.replace(other.find("window = 32"), 11, "window = 16");
    write_file(dir.file("other.conf"), other);
    RunResult r = run_cli(dir, "evaluate --config " + dir.file("other.conf") + " --checkpoint " +
                                   dir.file("run/checkpoint.tsi") + " --out " + dir.file("out2"));
    REQUIRE(r.exit_code == 4);
}

TEST_CASE("synth rejects a singular mixing matrix naming it") {
    TempDir dir;
    write_file(dir.file("bad_synth.conf"),
               "length = 100\nsources = uniform, laplace\nmixing = 1, 2, 2, 4\n");
    RunResult r = run_cli(dir, "synth --config " + dir.file("bad_synth.conf") + " --out " + dir.file("d"));
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.err.find("mixing") != std::string::npos);

    // Seeded spec runs are file-for-file reproducible.
    write_file(dir.file("ok.conf"), kSynthSpec);
    REQUIRE(run_cli(dir, "synth --config " + dir.file("ok.conf") + " --out " + dir.file("s1")).exit_code == 0);
    REQUIRE(run_cli(dir, "synth --config " + dir.file("ok.conf") + " --out " + dir.file("s2")).exit_code == 0);
    REQUIRE(slurp(dir.file("s1/data.csv")) == slurp(dir.file("s2/data.csv")));
    REQUIRE(slurp(dir.file("s1/truth.json")) == slurp(dir.file("s2/truth.json")));
}

TEST_CASE("check passes on a fresh build and lists every item exactly once") {
    TempDir dir;
    RunResult r = run_cli(dir, "check");
    REQUIRE(r.exit_code == 0);
    const std::vector<std::string> names{
        "gradient-finite-difference", "fft-roundtrip", "fft-parseval",
        "trend-causality",            "whitening-identity", "ridge-normal-equations",
        "ica-recovery",               "representation-width"};
    for (const auto& name : names) {
        size_t count = 0, pos = 0;
        while ((pos = r.out.find(name, pos)) != std::string::npos) {
            ++count;
            pos += name.size();
        }
        REQUIRE(count == 1);
        REQUIRE(r.out.find("[PASS] " + name) != std::string::npos);
    }
}

TEST_CASE("a corrupted transform makes check fail with exit 5") {
    TempDir dir;
    RunResult r = run_cli(dir, "check --sabotage fft-sign");
    REQUIRE(r.exit_code == 5);
    REQUIRE(r.out.find("[FAIL] fft-roundtrip") != std::string::npos);
    REQUIRE(run_cli(dir, "check --sabotage bogus").exit_code == 1);
}
