#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tsi/checkpoint.hpp"
#include "tsi/config.hpp"
#include "tsi/pipeline.hpp"
#include "tsi/rng.hpp"

using tsi::Rng;
using tsi::Tensor;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("tsi_fmt_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

tsi::RunConfig parse(const std::string& text) {
    std::istringstream ss(text);
    return tsi::parse_run_config_text(ss, "<test>");
}

}  // namespace

TEST_CASE("config: absent keys take documented defaults") {
    tsi::RunConfig cfg = parse("dataset = data.csv\n");
    REQUIRE(cfg.window == 128);
    REQUIRE(cfg.horizons == std::vector<int64_t>{24, 48, 168, 336, 720});
    REQUIRE(cfg.d_hidden == 64);
    REQUIRE(cfg.d_tr == 64);
    REQUIRE(cfg.d_s == 64);
    REQUIRE(cfg.trend_m == 5);
    REQUIRE(cfg.steps == 1000);
    REQUIRE(cfg.batch == 8);
    REQUIRE(cfg.queue == 256);
    REQUIRE(cfg.tau == 0.07);
    REQUIRE(cfg.mu == 0.999);
    REQUIRE(cfg.alpha_grid.size() == 13);
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.dataset_name == "data.csv");
}

TEST_CASE("config: unknown keys are rejected by name") {
    try {
        parse("dataset = x.csv\nwibble = 3\n");
        FAIL("expected ConfigError");
    } catch (const tsi::ConfigError& e) {
        REQUIRE(std::string(e.what()).find("wibble") != std::string::npos);
    }
}

TEST_CASE("config: comments, lists and overrides parse") {
    tsi::RunConfig cfg = parse(
        "# run settings\n"
        "dataset = ettm.csv\n"
        "dataset_name = ETTm1\n"
        "horizons = 24, 48, 96, 288, 672  # the 15-minute grid\n"
        "window = 64\n"
        "tau = 0.2\n"
        "ica_on_reconstruction = true\n"
        "alpha_grid = 0.5,5,50\n"
        "seed = 7\n");
    REQUIRE(cfg.dataset_name == "ETTm1");
    REQUIRE(cfg.horizons == std::vector<int64_t>{24, 48, 96, 288, 672});
    REQUIRE(cfg.window == 64);
    REQUIRE(cfg.tau == 0.2);
    REQUIRE(cfg.ica_on_reconstruction);
    REQUIRE(cfg.alpha_grid == std::vector<double>{0.5, 5, 50});
    REQUIRE(cfg.seed == 7);
}

TEST_CASE("config: validation failures are ConfigError") {
    REQUIRE_THROWS_AS(parse("window = 1\n"), tsi::ConfigError);
    REQUIRE_THROWS_AS(parse("tau = 0\n"), tsi::ConfigError);
    REQUIRE_THROWS_AS(parse("steps = abc\n"), tsi::ConfigError);
    REQUIRE_THROWS_AS(parse("horizons =\n"), tsi::ConfigError);
    REQUIRE_THROWS_AS(parse("not a key value line\n"), tsi::ConfigError);
}

TEST_CASE("synth spec: explicit and drawn mixing matrices") {
    std::istringstream ss(
        "length = 300\n"
        "sources = uniform, laplace\n"
        "mixing = 1, 0.5, -0.25, 2\n"
        "noise_sigma = 0.1\n"
        "seed = 3\n");
    tsi::SyntheticSpec spec = tsi::parse_synth_spec_text(ss, "<test>");
    REQUIRE(spec.length == 300);
    REQUIRE(spec.source_kinds.size() == 2);
    REQUIRE(spec.mixing.dims == std::vector<int64_t>{2, 2});
    REQUIRE(spec.mixing.at(1, 1) == 2.0);

    std::istringstream ss2("sources = uniform, laplace, sinusoid\nseed = 4\n");
    tsi::SyntheticSpec drawn = tsi::parse_synth_spec_text(ss2, "<test>");
    REQUIRE(drawn.mixing.dims == std::vector<int64_t>{3, 3});
    Eigen::FullPivLU<Eigen::MatrixXd> lu(tsi::as_eigen(drawn.mixing));
    REQUIRE(lu.isInvertible());

    std::istringstream ss3("sources = uniform\nmixing = 1, 2\n");
    REQUIRE_THROWS_AS(tsi::parse_synth_spec_text(ss3, "<test>"), tsi::ConfigError);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
    TempDir dir;
    Rng rng(5);
    tsi::Checkpoint cp;
    Tensor a = Tensor::zeros({3, 4});
    for (double& v : a.data) v = rng.uniform(-10, 10);
    cp.add("alpha", a);
    cp.add("beta", Tensor::scalar(2.5));
    Tensor c = Tensor::zeros({2, 2, 2});
    for (double& v : c.data) v = rng.normal();
    cp.add("gamma.delta", c);

    const std::string p1 = dir.file("a.tsi"), p2 = dir.file("b.tsi");
    cp.save(p1);
    tsi::Checkpoint loaded = tsi::Checkpoint::load(p1);
    loaded.save(p2);
    REQUIRE(slurp(p1) == slurp(p2));
    REQUIRE(loaded.entries.size() == 3);
    REQUIRE(loaded.require("alpha").data == a.data);
    REQUIRE(loaded.require("gamma.delta").dims == std::vector<int64_t>{2, 2, 2});
}

TEST_CASE("checkpoint: corrupt files raise DataError") {
    TempDir dir;
    const std::string path = dir.file("bad.tsi");
    std::ofstream(path, std::ios::binary) << "NOPE";
    REQUIRE_THROWS_AS(tsi::Checkpoint::load(path), tsi::DataError);
    REQUIRE_THROWS_AS(tsi::Checkpoint::load(dir.file("missing.tsi")), tsi::DataError);
}

TEST_CASE("model round-trips through the checkpoint bitwise") {
    Rng rng(7);
    const int64_t h = 16, m = 3;
    tsi::TsiModel model;
    model.window = h;
    model.encoder = tsi::init_encoder_params(m, 4, 3, 2, 2, h, rng);
    model.autoencoder = tsi::init_autoencoder(m, 5, 3, 0.01, tsi::Activation::Tanh, rng);

    // Small fitted whitening + ICA so the extractor fields are populated.
    Tensor rows = Tensor::zeros({50, 3});
    for (double& v : rows.data) v = rng.uniform(-1, 1);
    Tensor code = tsi::ae_encode(rows, model.autoencoder);
    model.whitening = tsi::whiten_fit(code);
    Tensor white = tsi::whiten_apply(model.whitening, code);
    auto fit = tsi::fastica_fit(white, 11, 1e-4, 50);
    model.ica = tsi::canonicalize_ica(fit, white);

    tsi::Checkpoint cp = tsi::model_to_checkpoint(model);
    tsi::TsiModel back = tsi::model_from_checkpoint(cp);

    REQUIRE(back.window == model.window);
    REQUIRE(back.encoder.backbone.weights.data == model.encoder.backbone.weights.data);
    REQUIRE(back.encoder.trend.kernels.size() == model.encoder.trend.kernels.size());
    for (size_t j = 0; j < back.encoder.trend.kernels.size(); ++j)
        REQUIRE(back.encoder.trend.kernels[j].data == model.encoder.trend.kernels[j].data);
    REQUIRE(back.encoder.seasonal.P.re == model.encoder.seasonal.P.re);
    REQUIRE(back.encoder.seasonal.P.im == model.encoder.seasonal.P.im);
    REQUIRE(back.autoencoder.enc_w1.data == model.autoencoder.enc_w1.data);
    REQUIRE(back.autoencoder.activation == model.autoencoder.activation);
    REQUIRE(back.whitening.k_matrix.data == model.whitening.k_matrix.data);
    REQUIRE(back.ica.w.data == model.ica.w.data);
    REQUIRE(back.ica.order == model.ica.order);
    REQUIRE(back.ica.signs == model.ica.signs);
    REQUIRE(back.ica.converged == model.ica.converged);

    // The restored model encodes identically.
    Tensor X = Tensor::zeros({h, m});
    for (double& v : X.data) v = rng.uniform(-1, 1);
    tsi::Representation r1 = tsi::encode_window(model, X);
    tsi::Representation r2 = tsi::encode_window(back, X);
    REQUIRE(r1.values.data == r2.values.data);
}

TEST_CASE("representation width and order match the model dimensions") {
    Rng rng(9);
    const int64_t h = 16, m = 2;
    tsi::TsiModel model;
    model.window = h;
    model.encoder = tsi::init_encoder_params(m, 3, 4, 3, 1, h, rng);
    model.autoencoder = tsi::identity_autoencoder(m, 4);
    Tensor rows = Tensor::zeros({60, m});
    for (double& v : rows.data) v = rng.uniform(-1, 1);
    model.whitening = tsi::whiten_fit(rows);
    Tensor white = tsi::whiten_apply(model.whitening, rows);
    model.ica = tsi::canonicalize_ica(tsi::fastica_fit(white, 13, 1e-4, 50), white);

    REQUIRE(model.representation_width() == 4 + 3 + model.ica.width());

    Tensor X = Tensor::zeros({h, m});
    for (double& v : X.data) v = rng.uniform(-1, 1);
    tsi::Representation rep = tsi::encode_window(model, X);
    REQUIRE(rep.values.dim(1) == model.representation_width());
    REQUIRE(rep.d_tr == 4);
    REQUIRE(rep.d_s == 3);
    REQUIRE(rep.d_i == model.ica.width());

    // Column blocks are the individual encoder outputs in fixed order.
    Tensor G = tsi::encode_backbone(X, model.encoder.backbone);
    Tensor tr = tsi::encode_trend(G, model.encoder.trend);
    Tensor se = tsi::encode_seasonal(G, model.encoder.seasonal);
    for (int64_t t = 0; t < h; ++t) {
        for (int64_t j = 0; j < 4; ++j) REQUIRE(rep.values.at(t, j) == tr.at(t, j));
        for (int64_t j = 0; j < 3; ++j) REQUIRE(rep.values.at(t, 4 + j) == se.at(t, j));
    }
}
