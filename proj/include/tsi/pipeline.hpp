#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tsi/checkpoint.hpp"
#include "tsi/config.hpp"
#include "tsi/contrastive.hpp"
#include "tsi/data_io.hpp"
#include "tsi/encoders.hpp"
#include "tsi/errors.hpp"
#include "tsi/forecaster.hpp"
#include "tsi/ica.hpp"
#include "tsi/tensor.hpp"

// End-to-end plumbing shared by the CLI and the acceptance suite: the full
// model bundle, its checkpoint mapping, and the train/evaluate protocols.
namespace tsi {

struct TsiModel {
    EncoderParams encoder;
    SparseAutoencoderParams autoencoder;
    WhiteningModel whitening;
    IcaModel ica;
    IcaInput ica_input = IcaInput::Latent;
    int64_t window = 0;  // h the seasonal parameters were built for

    int64_t input_width() const { return encoder.backbone.input_width(); }
    int64_t representation_width() const {
        return encoder.trend.out_width() + encoder.seasonal.out_width() + ica.width();
    }
};

// Lookback-only windows at the given stride.
inline std::vector<Tensor> slice_windows(const Tensor& split, int64_t lookback,
                                         int64_t stride = 1) {
    const int64_t T = split.dim(0), m = split.dim(1);
    if (T < lookback) throw DataError("slice_windows: split shorter than the lookback window");
    std::vector<Tensor> out;
    for (int64_t base = 0; base + lookback <= T; base += stride) {
        Tensor X = Tensor::zeros({lookback, m});
        for (int64_t t = 0; t < lookback; ++t)
            for (int64_t j = 0; j < m; ++j) X.at(t, j) = split.at(base + t, j);
        out.push_back(std::move(X));
    }
    return out;
}

inline Representation encode_window(const TsiModel& model, const Tensor& X) {
    Tensor G = encode_backbone(X, model.encoder.backbone);
    Tensor tr = encode_trend(G, model.encoder.trend);
    Tensor se = encode_seasonal(G, model.encoder.seasonal);
    Tensor ic = extract_independent(X, model.autoencoder, model.whitening, model.ica,
                                    model.ica_input);
    return assemble(tr, se, ic);
}

// Last-timestep representation H_t for every lookback window of a split, one
// encoder pass per window start.
inline Tensor encode_last_rows(const TsiModel& model, const Tensor& split) {
    const int64_t T = split.dim(0), h = model.window;
    if (T < h) throw DataError("encode_last_rows: split shorter than the window");
    const int64_t count = T - h + 1;
    const int64_t d = model.representation_width();
    Tensor out = Tensor::zeros({count, d});
    auto windows = slice_windows(split, h, 1);
    for (int64_t w = 0; w < count; ++w) {
        Representation rep = encode_window(model, windows[static_cast<size_t>(w)]);
        for (int64_t j = 0; j < d; ++j) out.at(w, j) = rep.values.at(h - 1, j);
    }
    return out;
}

struct TrainOutputs {
    TsiModel model;
    std::vector<double> contrastive_loss;
    std::vector<double> autoencoder_loss;
};

// Full training protocol: contrastive encoders on training windows, then the
// sparse autoencoder on training rows, then whitening + FastICA on the
// training-split code.
inline TrainOutputs train_pipeline(const RunConfig& cfg, const DatasetBundle& data) {
    const int64_t max_h = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
    SplitResult split = split_standardize(data, 0.6, 0.2, cfg.window + max_h);

    TrainOutputs out;

    ContrastiveConfig ccfg;
    ccfg.d_hidden = cfg.d_hidden;
    ccfg.d_tr = cfg.d_tr;
    ccfg.d_s = cfg.d_s;
    ccfg.trend_depth = cfg.trend_m;
    ccfg.steps = cfg.steps;
    ccfg.batch = cfg.batch;
    ccfg.queue_capacity = cfg.queue;
    ccfg.tau = cfg.tau;
    ccfg.mu = cfg.mu;
    ccfg.lr = cfg.lr;
    ccfg.aug.p_apply = cfg.p_apply;
    ccfg.aug.scale_sigma = cfg.scale_sigma;
    ccfg.aug.shift_sigma = cfg.shift_sigma;
    ccfg.aug.jitter_sigma = cfg.jitter_sigma;

    std::vector<Tensor> train_windows = slice_windows(split.train, cfg.window, 1);
    ContrastiveResult crep = train_representation(train_windows, ccfg, cfg.seed);
    out.model.encoder = std::move(crep.params);
    out.contrastive_loss = std::move(crep.loss_history);
    out.model.window = cfg.window;

    AutoencoderConfig acfg;
    acfg.hidden = cfg.ae_hidden;
    acfg.latent = cfg.n_i;  // 0 -> input width
    acfg.sparsity = cfg.ica_lambda;
    acfg.steps = cfg.ae_steps;
    acfg.batch = cfg.ae_batch;
    acfg.lr = cfg.ae_lr;
    AutoencoderResult ae = train_autoencoder(split.train, acfg, cfg.seed + 1);
    out.model.autoencoder = std::move(ae.params);
    out.autoencoder_loss = std::move(ae.loss_history);

    out.model.ica_input = cfg.ica_on_reconstruction ? IcaInput::Reconstruction : IcaInput::Latent;
    Tensor code = ica_input_rows(split.train, out.model.autoencoder, out.model.ica_input);
    out.model.whitening = whiten_fit(code);
    Tensor white = whiten_apply(out.model.whitening, code);
    FasticaResult fit = fastica_fit(white, cfg.seed + 2, cfg.ica_tol, cfg.ica_max_iter);
    out.model.ica = canonicalize_ica(fit, white);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint mapping.
// ---------------------------------------------------------------------------
inline Checkpoint model_to_checkpoint(const TsiModel& model) {
    Checkpoint cp;
    const int64_t M = model.encoder.trend.depth();
    Tensor meta = Tensor::zeros({10});
    meta.at(0) = 1;  // format version
    meta.at(1) = static_cast<double>(model.window);
    meta.at(2) = static_cast<double>(model.encoder.backbone.hidden_width());
    meta.at(3) = static_cast<double>(model.encoder.trend.out_width());
    meta.at(4) = static_cast<double>(model.encoder.seasonal.out_width());
    meta.at(5) = static_cast<double>(M);
    meta.at(6) = static_cast<double>(model.input_width());
    meta.at(7) = model.autoencoder.activation == Activation::Tanh ? 1 : 0;
    meta.at(8) = model.ica_input == IcaInput::Reconstruction ? 1 : 0;
    meta.at(9) = model.ica.converged ? 1 : 0;
    cp.add("meta", std::move(meta));

    cp.add("backbone.weights", model.encoder.backbone.weights);
    cp.add("backbone.bias", model.encoder.backbone.bias);
    for (int64_t j = 0; j <= M; ++j) {
        cp.add("trend.kernel." + std::to_string(j), model.encoder.trend.kernels[j]);
        cp.add("trend.bias." + std::to_string(j), model.encoder.trend.biases[j]);
    }
    cp.add("seasonal.p.re", Tensor(model.encoder.seasonal.P.dims, model.encoder.seasonal.P.re));
    cp.add("seasonal.p.im", Tensor(model.encoder.seasonal.P.dims, model.encoder.seasonal.P.im));
    cp.add("seasonal.b.re", Tensor(model.encoder.seasonal.B.dims, model.encoder.seasonal.B.re));
    cp.add("seasonal.b.im", Tensor(model.encoder.seasonal.B.dims, model.encoder.seasonal.B.im));

    cp.add("ae.enc1.w", model.autoencoder.enc_w1);
    cp.add("ae.enc1.b", model.autoencoder.enc_b1);
    cp.add("ae.enc2.w", model.autoencoder.enc_w2);
    cp.add("ae.enc2.b", model.autoencoder.enc_b2);
    cp.add("ae.dec1.w", model.autoencoder.dec_w1);
    cp.add("ae.dec1.b", model.autoencoder.dec_b1);
    cp.add("ae.dec2.w", model.autoencoder.dec_w2);
    cp.add("ae.dec2.b", model.autoencoder.dec_b2);
    cp.add("ae.sparsity", Tensor::scalar(model.autoencoder.sparsity_weight));

    cp.add("whiten.mean", model.whitening.mean);
    cp.add("whiten.k", model.whitening.k_matrix);

    cp.add("ica.w", model.ica.w);
    Tensor order = Tensor::zeros({static_cast<int64_t>(model.ica.order.size())});
    for (size_t i = 0; i < model.ica.order.size(); ++i) order.at(static_cast<int64_t>(i)) = static_cast<double>(model.ica.order[i]);
    cp.add("ica.order", std::move(order));
    Tensor signs = Tensor::zeros({static_cast<int64_t>(model.ica.signs.size())});
    for (size_t i = 0; i < model.ica.signs.size(); ++i) signs.at(static_cast<int64_t>(i)) = model.ica.signs[i];
    cp.add("ica.signs", std::move(signs));
    return cp;
}

inline TsiModel model_from_checkpoint(const Checkpoint& cp) {
    const Tensor& meta = cp.require("meta");
    if (meta.size() < 10 || meta.at(0) != 1)
        throw DataError("checkpoint: unsupported format version");
    TsiModel model;
    model.window = static_cast<int64_t>(meta.at(1));
    const int64_t M = static_cast<int64_t>(meta.at(5));

    model.encoder.backbone.weights = cp.require("backbone.weights");
    model.encoder.backbone.bias = cp.require("backbone.bias");
    for (int64_t j = 0; j <= M; ++j) {
        model.encoder.trend.kernels.push_back(cp.require("trend.kernel." + std::to_string(j)));
        model.encoder.trend.biases.push_back(cp.require("trend.bias." + std::to_string(j)));
    }
    const Tensor& pre = cp.require("seasonal.p.re");
    model.encoder.seasonal.P = ComplexTensor(pre.dims, pre.data, cp.require("seasonal.p.im").data);
    const Tensor& bre = cp.require("seasonal.b.re");
    model.encoder.seasonal.B = ComplexTensor(bre.dims, bre.data, cp.require("seasonal.b.im").data);

    model.autoencoder.enc_w1 = cp.require("ae.enc1.w");
    model.autoencoder.enc_b1 = cp.require("ae.enc1.b");
    model.autoencoder.enc_w2 = cp.require("ae.enc2.w");
    model.autoencoder.enc_b2 = cp.require("ae.enc2.b");
    model.autoencoder.dec_w1 = cp.require("ae.dec1.w");
    model.autoencoder.dec_b1 = cp.require("ae.dec1.b");
    model.autoencoder.dec_w2 = cp.require("ae.dec2.w");
    model.autoencoder.dec_b2 = cp.require("ae.dec2.b");
    model.autoencoder.sparsity_weight = cp.require("ae.sparsity").at(0);
    model.autoencoder.activation = meta.at(7) != 0 ? Activation::Tanh : Activation::Identity;
    model.ica_input = meta.at(8) != 0 ? IcaInput::Reconstruction : IcaInput::Latent;

    model.whitening.mean = cp.require("whiten.mean");
    model.whitening.k_matrix = cp.require("whiten.k");

    model.ica.w = cp.require("ica.w");
    model.ica.converged = meta.at(9) != 0;
    const Tensor& order = cp.require("ica.order");
    for (int64_t i = 0; i < order.size(); ++i) model.ica.order.push_back(static_cast<int64_t>(order.at(i)));
    const Tensor& signs = cp.require("ica.signs");
    for (int64_t i = 0; i < signs.size(); ++i) model.ica.signs.push_back(signs.at(i));
    return model;
}

// Raises CompatError when a checkpoint cannot serve a config/dataset pair.
inline void check_compat(const TsiModel& model, const RunConfig& cfg, const DatasetBundle& data) {
    if (model.window != cfg.window)
        throw CompatError("checkpoint window " + std::to_string(model.window) +
                          " != config window " + std::to_string(cfg.window));
    if (model.input_width() != data.width())
        throw CompatError("checkpoint expects " + std::to_string(model.input_width()) +
                          " features, dataset has " + std::to_string(data.width()));
}

// ---------------------------------------------------------------------------
// Evaluation protocol: for each horizon, representations for all windows,
// alpha selected on validation, ridge fit on train, metrics on test.
// ---------------------------------------------------------------------------
struct EvalRow {
    std::string dataset;
    int64_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    double alpha = 0.0;
};

namespace detail {

// Flattened (step, variable) targets for each whole window starting at
// offset i: rows i+h .. i+h+k-1.
inline Tensor horizon_targets(const Tensor& split, int64_t h, int64_t k, int64_t count) {
    const int64_t m = split.dim(1);
    Tensor Y = Tensor::zeros({count, k * m});
    for (int64_t w = 0; w < count; ++w)
        for (int64_t s = 0; s < k; ++s)
            for (int64_t v = 0; v < m; ++v) Y.at(w, s * m + v) = split.at(w + h + s, v);
    return Y;
}

inline Tensor first_rows(const Tensor& t, int64_t count) {
    Tensor out = Tensor::zeros({count, t.dim(1)});
    for (int64_t i = 0; i < count; ++i)
        for (int64_t j = 0; j < t.dim(1); ++j) out.at(i, j) = t.at(i, j);
    return out;
}

}  // namespace detail

inline std::vector<EvalRow> evaluate_pipeline(const RunConfig& cfg, const TsiModel& model,
                                              const DatasetBundle& data) {
    check_compat(model, cfg, data);
    std::vector<int64_t> horizons = cfg.horizons;
    std::sort(horizons.begin(), horizons.end());
    const int64_t max_h = horizons.back();
    SplitResult split = split_standardize(data, 0.6, 0.2, cfg.window + max_h);

    // One encoder pass per split; every horizon reuses the representations.
    Tensor h_train = encode_last_rows(model, split.train);
    Tensor h_val = encode_last_rows(model, split.val);
    Tensor h_test = encode_last_rows(model, split.test);

    const int64_t h = cfg.window;
    std::vector<EvalRow> rows;
    for (int64_t k : horizons) {
        const int64_t n_train = split.train.dim(0) - h - k + 1;
        const int64_t n_val = split.val.dim(0) - h - k + 1;
        const int64_t n_test = split.test.dim(0) - h - k + 1;
        if (n_train < 1 || n_val < 1 || n_test < 1)
            throw DataError("evaluate: horizon " + std::to_string(k) +
                            " leaves an empty window set");

        Tensor Ht = detail::first_rows(h_train, n_train);
        Tensor Hv = detail::first_rows(h_val, n_val);
        Tensor Hs = detail::first_rows(h_test, n_test);
        Tensor Yt = detail::horizon_targets(split.train, h, k, n_train);
        Tensor Yv = detail::horizon_targets(split.val, h, k, n_val);
        Tensor Ys = detail::horizon_targets(split.test, h, k, n_test);

        const double alpha = select_alpha(Ht, Yt, Hv, Yv, cfg.alpha_grid);
        RidgeModel ridge = fit_ridge(Ht, Yt, alpha, k, data.width());
        Metrics m = evaluate(predict_rows(ridge, Hs), Ys);

        EvalRow row;
        row.dataset = cfg.dataset_name;
        row.horizon = k;
        row.mse = m.mse;
        row.mae = m.mae;
        row.alpha = alpha;
        rows.push_back(std::move(row));
    }
    return rows;
}

// Forecast for the final test window of each horizon, in standardized units.
inline std::vector<std::pair<int64_t, Tensor>> forecast_pipeline(const RunConfig& cfg,
                                                                 const TsiModel& model,
                                                                 const DatasetBundle& data) {
    check_compat(model, cfg, data);
    std::vector<int64_t> horizons = cfg.horizons;
    std::sort(horizons.begin(), horizons.end());
    const int64_t max_h = horizons.back();
    SplitResult split = split_standardize(data, 0.6, 0.2, cfg.window + max_h);

    Tensor h_train = encode_last_rows(model, split.train);
    Tensor h_val = encode_last_rows(model, split.val);
    Tensor h_test = encode_last_rows(model, split.test);

    const int64_t h = cfg.window;
    std::vector<std::pair<int64_t, Tensor>> out;
    for (int64_t k : horizons) {
        const int64_t n_train = split.train.dim(0) - h - k + 1;
        const int64_t n_val = split.val.dim(0) - h - k + 1;
        const int64_t n_test = split.test.dim(0) - h - k + 1;
        if (n_train < 1 || n_val < 1 || n_test < 1)
            throw DataError("forecast: horizon " + std::to_string(k) +
                            " leaves an empty window set");
        Tensor Ht = detail::first_rows(h_train, n_train);
        Tensor Hv = detail::first_rows(h_val, n_val);
        Tensor Yt = detail::horizon_targets(split.train, h, k, n_train);
        Tensor Yv = detail::horizon_targets(split.val, h, k, n_val);
        const double alpha = select_alpha(Ht, Yt, Hv, Yv, cfg.alpha_grid);
        RidgeModel ridge = fit_ridge(Ht, Yt, alpha, k, data.width());

        Tensor last = Tensor::zeros({h_test.dim(1)});
        for (int64_t j = 0; j < h_test.dim(1); ++j) last.at(j) = h_test.at(n_test - 1, j);
        out.emplace_back(k, predict(ridge, last));
    }
    return out;
}

}  // namespace tsi
