// tsi: train / evaluate / forecast / synth / check for the multi-view
// time-series representation learner.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 training divergence,
// 4 checkpoint/config incompatibility, 5 verification-check failure.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "tsi/autodiff.hpp"
#include "tsi/pipeline.hpp"

namespace fs = std::filesystem;
using tsi::Tensor;

namespace {

void write_loss_csv(const std::string& path, const std::vector<double>& history) {
    std::ofstream out(path);
    if (!out) throw tsi::DataError("cannot open " + path + " for writing");
    out << "step,loss\n";
    char buf[48];
    for (size_t i = 0; i < history.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, history[i]);
        out << buf;
    }
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int64_t seed_override) {
    tsi::RunConfig cfg = tsi::load_run_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (cfg.dataset.empty()) throw tsi::ConfigError("config: 'dataset' is required for train");
    tsi::DatasetBundle data = tsi::load_csv(cfg.dataset, cfg.dataset_name);

    tsi::TrainOutputs out = tsi::train_pipeline(cfg, data);

    fs::create_directories(out_dir);
    tsi::model_to_checkpoint(out.model).save((fs::path(out_dir) / "checkpoint.tsi").string());
    write_loss_csv((fs::path(out_dir) / "loss_contrastive.csv").string(), out.contrastive_loss);
    write_loss_csv((fs::path(out_dir) / "loss_autoencoder.csv").string(), out.autoencoder_loss);
    std::cout << "trained " << cfg.dataset_name << ": checkpoint + loss histories in " << out_dir
              << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& checkpoint_path,
                 const std::string& out_dir, int64_t seed_override) {
    tsi::RunConfig cfg = tsi::load_run_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (cfg.dataset.empty()) throw tsi::ConfigError("config: 'dataset' is required for evaluate");
    tsi::DatasetBundle data = tsi::load_csv(cfg.dataset, cfg.dataset_name);
    tsi::TsiModel model = tsi::model_from_checkpoint(tsi::Checkpoint::load(checkpoint_path));

    std::vector<tsi::EvalRow> rows = tsi::evaluate_pipeline(cfg, model, data);

    fs::create_directories(out_dir);
    std::ofstream js((fs::path(out_dir) / "metrics.json").string());
    std::ofstream csv((fs::path(out_dir) / "metrics.csv").string());
    if (!js || !csv) throw tsi::DataError("cannot open metric outputs in " + out_dir);
    csv << "dataset,L,MSE,MAE\n";
    char buf[160];
    for (const tsi::EvalRow& r : rows) {
        nlohmann::json j;
        j["dataset"] = r.dataset;
        j["horizon"] = r.horizon;
        j["mse"] = r.mse;
        j["mae"] = r.mae;
        j["alpha"] = r.alpha;
        js << j.dump() << "\n";
        std::snprintf(buf, sizeof(buf), "%s,%" PRId64 ",%.6f,%.6f\n", r.dataset.c_str(), r.horizon,
                      r.mse, r.mae);
        csv << buf;
        std::cout << r.dataset << " L=" << r.horizon << " mse=" << r.mse << " mae=" << r.mae
                  << " alpha=" << r.alpha << "\n";
    }
    return 0;
}

int cmd_forecast(const std::string& config_path, const std::string& checkpoint_path,
                 const std::string& out_dir, int64_t seed_override) {
    tsi::RunConfig cfg = tsi::load_run_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (cfg.dataset.empty()) throw tsi::ConfigError("config: 'dataset' is required for forecast");
    tsi::DatasetBundle data = tsi::load_csv(cfg.dataset, cfg.dataset_name);
    tsi::TsiModel model = tsi::model_from_checkpoint(tsi::Checkpoint::load(checkpoint_path));

    auto forecasts = tsi::forecast_pipeline(cfg, model, data);
    fs::create_directories(out_dir);
    char buf[48];
    for (const auto& [k, pred] : forecasts) {
        const std::string path =
            (fs::path(out_dir) / ("forecast_L" + std::to_string(k) + ".csv")).string();
        std::ofstream out(path);
        if (!out) throw tsi::DataError("cannot open " + path + " for writing");
        for (size_t j = 0; j < data.feature_names.size(); ++j)
            out << (j ? "," : "") << data.feature_names[j];
        out << "\n";
        for (int64_t s = 0; s < pred.dim(0); ++s) {
            for (int64_t v = 0; v < pred.dim(1); ++v) {
                std::snprintf(buf, sizeof(buf), "%.17g", pred.at(s, v));
                out << (v ? "," : "") << buf;
            }
            out << "\n";
        }
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    tsi::SyntheticSpec spec = tsi::load_synth_spec(spec_path);
    tsi::SyntheticData data = tsi::gen_synthetic(spec);
    fs::create_directories(out_dir);
    tsi::write_csv(data.bundle, (fs::path(out_dir) / "data.csv").string());
    tsi::write_truth_json(data.truth, (fs::path(out_dir) / "truth.json").string());
    std::cout << "wrote " << out_dir << "/data.csv (" << data.bundle.length() << " rows, "
              << data.bundle.width() << " features) and truth.json\n";
    return 0;
}

// ---------------------------------------------------------------------------
// check: the fast invariant battery. Each item prints exactly one line.
// ---------------------------------------------------------------------------
struct CheckReport {
    bool all_ok = true;

    void record(const std::string& name, bool ok, const std::string& detail = "") {
        if (ok)
            std::cout << "[PASS] " << name << "\n";
        else
            std::cout << "[FAIL] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
        all_ok = all_ok && ok;
    }
};

bool check_gradients() {
    tsi::Rng rng(401);
    const int64_t h = 8, m = 2, dtr = 2, ds = 2;
    tsi::EncoderParams params = tsi::init_encoder_params(m, 3, dtr, ds, 1, h, rng);
    Tensor window = Tensor::zeros({h, m});
    for (double& v : window.data) v = rng.uniform(-1.0, 1.0);
    Tensor key = Tensor::zeros({dtr + ds});
    for (double& v : key.data) v = rng.normal();
    key = tsi::ops::l2_normalize(key);

    auto build = [&](const tsi::EncoderParams& p, tsi::ad::Tape& tape) {
        auto leaves = tsi::tape::register_params(tape, p);
        auto enc = tsi::tape::encode(tape, tape.constant(window), leaves);
        auto q = tsi::ad::l2_normalize(
            tape, tsi::ad::concat_vec(tape, tsi::ad::row_at(tape, enc.trend, h - 2),
                                      tsi::ad::row_at(tape, enc.seasonal, h - 2)));
        auto logit = tsi::ad::dot(tape, q, tape.constant(key));
        auto ls = tsi::ad::log_softmax(tape, tsi::ad::scale(tape, logit, 1.0 / 0.3));
        return std::pair(leaves, tsi::ad::scale(tape, tsi::ad::element_at(tape, ls, 0), -1.0));
    };

    tsi::ad::Tape tape;
    auto [leaves, loss] = build(params, tape);
    auto grads = tsi::ad::backward(tape, loss, /*verify_replay=*/true);

    auto eval = [&](const tsi::EncoderParams& p) {
        tsi::ad::Tape t2;
        return t2.val(build(p, t2).second).at(0);
    };

    std::vector<Tensor> rs;
    std::vector<tsi::ComplexTensor> cs;
    auto gb = tsi::detail::leaf_grad_buffers(tape, grads, leaves, rs, cs);
    auto pb = tsi::param_buffers(params);
    tsi::Rng pick(402);
    const double eps = 1e-5;
    for (size_t bi = 0; bi < pb.size(); ++bi) {
        for (int probe = 0; probe < 3; ++probe) {
            const size_t e = pick.integer(pb[bi]->size());
            const double analytic = (*gb[bi])[e];
            double& slot = (*pb[bi])[e];
            const double saved = slot;
            slot = saved + eps;
            const double fp = eval(params);
            slot = saved - eps;
            const double fm = eval(params);
            slot = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            if (std::abs(analytic - numeric) / denom >= 1e-4) return false;
        }
    }
    return true;
}

bool check_fft_roundtrip(const std::string& sabotage) {
    tsi::Rng rng(403);
    for (int64_t n : {8, 37, 64, 100, 128, 256}) {
        Tensor x = Tensor::zeros({n, 2});
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        tsi::ComplexTensor spec = tsi::ops::rfft(x);
        if (sabotage == "fft-sign")
            for (double& v : spec.im) v = -v;  // corrupted-transform fixture
        Tensor back = tsi::ops::irfft(spec, n);
        for (int64_t i = 0; i < x.size(); ++i)
            if (std::abs(back.at(i) - x.at(i)) >= 1e-10) return false;
    }
    return true;
}

bool check_fft_parseval() {
    tsi::Rng rng(404);
    for (int64_t n : {8, 37, 64, 100, 128, 256}) {
        Tensor x = Tensor::zeros({n, 1});
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        tsi::ComplexTensor spec = tsi::ops::rfft(x);
        double lhs = 0.0;
        for (double v : x.data) lhs += v * v;
        double rhs = 0.0;
        for (int64_t f = 0; f < spec.dim(0); ++f) {
            const double w = (f == 0 || (n % 2 == 0 && f == n / 2)) ? 1.0 : 2.0;
            rhs += w * (spec.re[f] * spec.re[f] + spec.im[f] * spec.im[f]);
        }
        if (std::abs(lhs - rhs / static_cast<double>(n)) >= 1e-8) return false;
    }
    return true;
}

bool check_trend_causality() {
    for (uint64_t draw = 0; draw < 50; ++draw) {
        tsi::Rng rng(500 + draw);
        const int64_t h = 32, dh = 3, dtr = 2;
        tsi::EncoderParams enc = tsi::init_encoder_params(2, dh, dtr, 2, 3, h, rng);
        Tensor G = Tensor::zeros({h, dh});
        for (double& v : G.data) v = rng.uniform(-1.0, 1.0);
        const int64_t tp = static_cast<int64_t>(rng.integer(h));
        Tensor Gp = G;
        Gp.at(tp, static_cast<int64_t>(rng.integer(dh))) += 1.0;
        Tensor a = tsi::encode_trend(G, enc.trend);
        Tensor b = tsi::encode_trend(Gp, enc.trend);
        for (int64_t t = 0; t < tp; ++t)
            for (int64_t c = 0; c < dtr; ++c)
                if (a.at(t, c) != b.at(t, c)) return false;
    }
    return true;
}

bool check_whitening() {
    tsi::Rng rng(405);
    const int64_t N = 300, n = 4;
    Tensor raw = Tensor::zeros({N, n});
    for (double& v : raw.data) v = rng.normal();
    Tensor A = Tensor::zeros({n, n});
    for (double& v : A.data) v = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < n; ++i) A.at(i, i) += 2.0;
    tsi::RowMat mixed = tsi::as_eigen(raw) * tsi::as_eigen(A).transpose();
    Tensor Z = tsi::from_eigen(mixed);
    auto model = tsi::whiten_fit(Z);
    Tensor W = tsi::whiten_apply(model, Z);
    const int64_t k = W.dim(1);
    for (int64_t a = 0; a < k; ++a)
        for (int64_t b = 0; b < k; ++b) {
            double ma = 0, mb = 0, acc = 0;
            for (int64_t i = 0; i < N; ++i) {
                ma += W.at(i, a);
                mb += W.at(i, b);
            }
            ma /= N;
            mb /= N;
            for (int64_t i = 0; i < N; ++i) acc += (W.at(i, a) - ma) * (W.at(i, b) - mb);
            acc /= N;
            if (std::abs(acc - (a == b ? 1.0 : 0.0)) >= 1e-8) return false;
        }
    return true;
}

bool check_ridge() {
    tsi::Rng rng(406);
    // Against a plain Gauss-Jordan normal-equations solve.
    for (int rep = 0; rep < 20; ++rep) {
        const int64_t N = 4 + static_cast<int64_t>(rng.integer(12));
        const int64_t d = 1 + static_cast<int64_t>(rng.integer(4));
        Tensor H = Tensor::zeros({N, d});
        Tensor Y = Tensor::zeros({N, 2});
        for (double& v : H.data) v = rng.uniform(-1, 1);
        for (double& v : Y.data) v = rng.uniform(-1, 1);
        const double alpha = rng.uniform(0.05, 5.0);
        tsi::RidgeModel model = tsi::fit_ridge(H, Y, alpha);

        const int64_t p = d + 1;
        Eigen::MatrixXd Z(N, p);
        Z.leftCols(d) = tsi::as_eigen(H);
        Z.col(d).setOnes();
        Eigen::MatrixXd G = Z.transpose() * Z;
        for (int64_t i = 0; i < d; ++i) G(i, i) += alpha;
        Eigen::MatrixXd R = Z.transpose() * tsi::as_eigen(Y);
        // Gauss-Jordan elimination.
        for (int64_t col = 0; col < p; ++col) {
            int64_t piv = col;
            for (int64_t r = col + 1; r < p; ++r)
                if (std::abs(G(r, col)) > std::abs(G(piv, col))) piv = r;
            G.row(col).swap(G.row(piv));
            R.row(col).swap(R.row(piv));
            const double dg = G(col, col);
            G.row(col) /= dg;
            R.row(col) /= dg;
            for (int64_t r = 0; r < p; ++r) {
                if (r == col) continue;
                const double f = G(r, col);
                G.row(r) -= f * G.row(col);
                R.row(r) -= f * R.row(col);
            }
        }
        for (int64_t i = 0; i < p; ++i)
            for (int64_t j = 0; j < 2; ++j)
                if (std::abs(model.weights.at(i, j) - R(i, j)) >= 1e-6) return false;
    }
    // alpha = 0 interpolation on a full-rank square system.
    Tensor H = Tensor::zeros({3, 2}), Y = Tensor::zeros({3, 1});
    for (double& v : H.data) v = rng.uniform(-1, 1);
    for (double& v : Y.data) v = rng.uniform(-1, 1);
    tsi::RidgeModel exact = tsi::fit_ridge(H, Y, 0.0);
    Tensor P = tsi::predict_rows(exact, H);
    for (int64_t i = 0; i < 3; ++i)
        if (std::abs(P.at(i, 0) - Y.at(i, 0)) >= 1e-8) return false;
    // Monotone shrinkage.
    Tensor H2 = Tensor::zeros({20, 4}), Y2 = Tensor::zeros({20, 2});
    for (double& v : H2.data) v = rng.uniform(-1, 1);
    for (double& v : Y2.data) v = rng.uniform(-1, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
        tsi::RidgeModel m = tsi::fit_ridge(H2, Y2, alpha);
        double norm = 0.0;
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t j = 0; j < 2; ++j) norm += m.weights.at(i, j) * m.weights.at(i, j);
        if (norm > prev + 1e-12) return false;
        prev = norm;
    }
    return true;
}

bool check_ica_recovery(std::string& detail) {
    tsi::SyntheticSpec spec;
    spec.length = 2000;
    spec.source_kinds = {tsi::SourceKind::Uniform, tsi::SourceKind::Laplace,
                         tsi::SourceKind::Sinusoid};
    spec.source_periods = {0, 0, 41};
    spec.mixing = Tensor({3, 3}, {1.0, 0.5, -0.2, -0.4, 1.1, 0.3, 0.25, -0.15, 0.9});
    spec.seed = 2024;
    tsi::SyntheticData data = tsi::gen_synthetic(spec);

    auto wm = tsi::whiten_fit(data.bundle.values);
    Tensor Zw = tsi::whiten_apply(wm, data.bundle.values);
    auto fit = tsi::fastica_fit(Zw, 77);
    Eigen::MatrixXd eff = tsi::as_eigen(fit.w) * tsi::as_eigen(wm.k_matrix);
    const double amari = tsi::amari_index(tsi::from_eigen(eff), spec.mixing);

    Tensor comps = tsi::from_eigen(tsi::as_eigen(Zw) * tsi::as_eigen(fit.w).transpose());
    double worst = 1.0;
    std::vector<bool> used(3, false);
    for (int64_t j = 0; j < 3; ++j) {
        double best = -1.0;
        int64_t arg = -1;
        for (int64_t r = 0; r < 3; ++r) {
            if (used[r]) continue;
            double ma = 0, mb = 0, num = 0, va = 0, vb = 0;
            for (int64_t i = 0; i < 2000; ++i) {
                ma += comps.at(i, r);
                mb += data.truth.sources.at(i, j);
            }
            ma /= 2000;
            mb /= 2000;
            for (int64_t i = 0; i < 2000; ++i) {
                const double da = comps.at(i, r) - ma, db = data.truth.sources.at(i, j) - mb;
                num += da * db;
                va += da * da;
                vb += db * db;
            }
            const double c = std::abs(num / std::sqrt(va * vb));
            if (c > best) {
                best = c;
                arg = r;
            }
        }
        used[arg] = true;
        worst = std::min(worst, best);
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "amari=%.4f matched-corr=%.4f", amari, worst);
    detail = buf;
    return amari <= 0.1 && worst >= 0.95;
}

bool check_representation_width() {
    for (int variant = 0; variant < 2; ++variant) {
        tsi::Rng rng(600 + variant);
        const int64_t h = variant == 0 ? 16 : 32;
        const int64_t m = variant == 0 ? 2 : 3;
        const int64_t dtr = variant == 0 ? 3 : 5;
        const int64_t ds = variant == 0 ? 2 : 4;
        tsi::TsiModel model;
        model.window = h;
        model.encoder = tsi::init_encoder_params(m, 4, dtr, ds, 1, h, rng);
        model.autoencoder = tsi::identity_autoencoder(m, m + 1);
        Tensor rows = Tensor::zeros({80, m});
        for (double& v : rows.data) v = rng.uniform(-1, 1);
        model.whitening = tsi::whiten_fit(rows);
        Tensor white = tsi::whiten_apply(model.whitening, rows);
        model.ica = tsi::canonicalize_ica(tsi::fastica_fit(white, 7, 1e-4, 50), white);

        Tensor X = Tensor::zeros({h, m});
        for (double& v : X.data) v = rng.uniform(-1, 1);
        tsi::Representation rep = tsi::encode_window(model, X);
        if (rep.values.dim(1) != dtr + ds + model.ica.width()) return false;

        Tensor G = tsi::encode_backbone(X, model.encoder.backbone);
        Tensor tr = tsi::encode_trend(G, model.encoder.trend);
        Tensor se = tsi::encode_seasonal(G, model.encoder.seasonal);
        for (int64_t t = 0; t < h; ++t) {
            for (int64_t j = 0; j < dtr; ++j)
                if (rep.values.at(t, j) != tr.at(t, j)) return false;
            for (int64_t j = 0; j < ds; ++j)
                if (rep.values.at(t, dtr + j) != se.at(t, j)) return false;
        }
    }
    return true;
}

int cmd_check(const std::string& sabotage) {
    if (!sabotage.empty() && sabotage != "fft-sign")
        throw tsi::ConfigError("unknown sabotage fixture '" + sabotage + "'");
    CheckReport report;
    report.record("gradient-finite-difference", check_gradients());
    report.record("fft-roundtrip", check_fft_roundtrip(sabotage));
    report.record("fft-parseval", check_fft_parseval());
    report.record("trend-causality", check_trend_causality());
    report.record("whitening-identity", check_whitening());
    report.record("ridge-normal-equations", check_ridge());
    std::string ica_detail;
    const bool ica_ok = check_ica_recovery(ica_detail);
    report.record("ica-recovery", ica_ok, ica_detail);
    report.record("representation-width", check_representation_width());
    return report.all_ok ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TSI multi-view time-series representation learner"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir = ".", sabotage;
    int64_t seed_override = -1;

    CLI::App* train = app.add_subcommand("train", "train encoders, autoencoder and ICA extractor");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--seed", seed_override, "seed override");

    CLI::App* evaluate = app.add_subcommand("evaluate", "fit ridge heads and report MSE/MAE");
    evaluate->add_option("--config", config_path, "run configuration file")->required();
    evaluate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    evaluate->add_option("--out", out_dir, "output directory");
    evaluate->add_option("--seed", seed_override, "seed override");

    CLI::App* forecast = app.add_subcommand("forecast", "emit predictions for the final window");
    forecast->add_option("--config", config_path, "run configuration file")->required();
    forecast->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    forecast->add_option("--out", out_dir, "output directory");
    forecast->add_option("--seed", seed_override, "seed override");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
    synth->add_option("--config", config_path, "synthetic spec file")->required();
    synth->add_option("--out", out_dir, "output directory");

    CLI::App* check = app.add_subcommand("check", "run the fast verification battery");
    check->add_option("--sabotage", sabotage, "test fixture: corrupt a named stage")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir, seed_override);
        if (evaluate->parsed()) return cmd_evaluate(config_path, checkpoint_path, out_dir, seed_override);
        if (forecast->parsed()) return cmd_forecast(config_path, checkpoint_path, out_dir, seed_override);
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (check->parsed()) return cmd_check(sabotage);
    } catch (const tsi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const tsi::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const tsi::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 3;
    } catch (const tsi::CompatError& e) {
        std::cerr << "incompatible checkpoint: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
