#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsi/autodiff.hpp"
#include "tsi/ops.hpp"
#include "tsi/rng.hpp"
#include "tsi/tensor.hpp"

// Trend/seasonal feature extractors and representation assembly. Encoding is
// pure given parameters; the tape variants below record the identical kernel
// calls for training.
namespace tsi {

// Per-timestep affine input projection. Deliberately has no temporal mixing,
// so all temporal structure in the representation comes from the trend and
// seasonal paths.
struct BackboneParams {
    Tensor weights;  // [m, d_hidden]
    Tensor bias;     // [d_hidden]

    int64_t input_width() const { return weights.dim(0); }
    int64_t hidden_width() const { return weights.dim(1); }
};

// M+1 dilated causal kernels, kernel j with taps=2 and dilation 2^j.
struct TrendParams {
    std::vector<Tensor> kernels;  // each [2, d_hidden, d_tr]
    std::vector<Tensor> biases;   // each [d_tr]

    int64_t depth() const { return static_cast<int64_t>(kernels.size()) - 1; }  // M
    int64_t out_width() const { return kernels.at(0).dim(2); }
    static int64_t dilation(int64_t j) { return int64_t{1} << j; }
};

// Learnable per-frequency complex transform for a fixed window length.
struct SeasonalParams {
    ComplexTensor P;  // [bins, d_hidden, d_s]
    ComplexTensor B;  // [bins, d_s]

    int64_t bins() const { return P.dim(0); }
    int64_t out_width() const { return P.dim(2); }
};

struct EncoderParams {
    BackboneParams backbone;
    TrendParams trend;
    SeasonalParams seasonal;
};

// Row t is the full per-timestep feature vector, columns laid out as
// [trend | seasonal | independent] in that fixed order.
struct Representation {
    Tensor values;  // [h, d_tr + d_s + d_i]
    int64_t d_tr = 0;
    int64_t d_s = 0;
    int64_t d_i = 0;
};

inline EncoderParams init_encoder_params(int64_t m, int64_t d_hidden, int64_t d_tr, int64_t d_s,
                                         int64_t trend_depth, int64_t window, Rng& rng) {
    if (m < 1 || d_hidden < 1 || d_tr < 1 || d_s < 1 || trend_depth < 0 || window < 1)
        throw std::invalid_argument("init_encoder_params: invalid dimensions");
    EncoderParams p;
    p.backbone.weights = Tensor::zeros({m, d_hidden});
    const double bs = 1.0 / std::sqrt(static_cast<double>(m));
    for (double& v : p.backbone.weights.data) v = rng.normal(0.0, bs);
    p.backbone.bias = Tensor::zeros({d_hidden});

    const double ks = 1.0 / std::sqrt(static_cast<double>(2 * d_hidden));
    for (int64_t j = 0; j <= trend_depth; ++j) {
        Tensor k = Tensor::zeros({2, d_hidden, d_tr});
        for (double& v : k.data) v = rng.normal(0.0, ks);
        p.trend.kernels.push_back(std::move(k));
        p.trend.biases.push_back(Tensor::zeros({d_tr}));
    }

    const int64_t bins = ops::rfft_bins(window);
    p.seasonal.P = ComplexTensor::zeros({bins, d_hidden, d_s});
    const double ss = 1.0 / std::sqrt(static_cast<double>(2 * d_hidden));
    for (size_t i = 0; i < p.seasonal.P.re.size(); ++i) {
        p.seasonal.P.re[i] = rng.normal(0.0, ss);
        p.seasonal.P.im[i] = rng.normal(0.0, ss);
    }
    p.seasonal.B = ComplexTensor::zeros({bins, d_s});
    return p;
}

inline Tensor encode_backbone(const Tensor& X, const BackboneParams& p) {
    if (X.rank() != 2 || X.dim(1) != p.input_width())
        throw std::invalid_argument("encode_backbone: input has " + std::to_string(X.dim(1)) +
                                    " columns, parameters expect " +
                                    std::to_string(p.input_width()));
    return ops::add_rows(ops::matmul(X, p.weights), p.bias);
}

inline Tensor encode_trend(const Tensor& G, const TrendParams& p) {
    const int64_t layers = static_cast<int64_t>(p.kernels.size());
    if (layers == 0) throw std::invalid_argument("encode_trend: no kernels");
    Tensor acc;
    for (int64_t j = 0; j < layers; ++j) {
        Tensor layer = ops::add_rows(ops::conv1d_causal(G, p.kernels[j], TrendParams::dilation(j)),
                                     p.biases[j]);
        acc = (j == 0) ? std::move(layer) : ops::add(acc, layer);
    }
    return ops::scale(acc, 1.0 / static_cast<double>(layers));
}

inline Tensor encode_seasonal(const Tensor& G, const SeasonalParams& p) {
    const int64_t h = G.dim(0);
    if (ops::rfft_bins(h) != p.bins())
        throw std::invalid_argument("encode_seasonal: window length " + std::to_string(h) +
                                    " maps to " + std::to_string(ops::rfft_bins(h)) +
                                    " bins, parameters hold " + std::to_string(p.bins()));
    return ops::irfft(ops::complex_linear(ops::rfft(G), p.P, p.B), h);
}

inline Representation assemble(const Tensor& H_tr, const Tensor& H_s, const Tensor& H_i) {
    if (H_tr.rank() != 2 || H_s.rank() != 2 || H_i.rank() != 2 ||
        H_tr.dim(0) != H_s.dim(0) || H_tr.dim(0) != H_i.dim(0))
        throw std::invalid_argument("assemble: time lengths differ");
    const int64_t h = H_tr.dim(0);
    Representation r;
    r.d_tr = H_tr.dim(1);
    r.d_s = H_s.dim(1);
    r.d_i = H_i.dim(1);
    r.values = Tensor::zeros({h, r.d_tr + r.d_s + r.d_i});
    for (int64_t t = 0; t < h; ++t) {
        for (int64_t j = 0; j < r.d_tr; ++j) r.values.at(t, j) = H_tr.at(t, j);
        for (int64_t j = 0; j < r.d_s; ++j) r.values.at(t, r.d_tr + j) = H_s.at(t, j);
        for (int64_t j = 0; j < r.d_i; ++j) r.values.at(t, r.d_tr + r.d_s + j) = H_i.at(t, j);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Tape-recorded encoder forward for training. Same kernels as the plain path,
// so recorded values are bit-identical to inference.
// ---------------------------------------------------------------------------
namespace tape {

struct EncoderLeaves {
    ad::NodeId backbone_w = -1;
    ad::NodeId backbone_b = -1;
    std::vector<ad::NodeId> kernels;
    std::vector<ad::NodeId> kernel_biases;
    ad::NodeId seasonal_p = -1;
    ad::NodeId seasonal_b = -1;

    std::vector<ad::NodeId> all() const {
        std::vector<ad::NodeId> ids{backbone_w, backbone_b};
        ids.insert(ids.end(), kernels.begin(), kernels.end());
        ids.insert(ids.end(), kernel_biases.begin(), kernel_biases.end());
        ids.push_back(seasonal_p);
        ids.push_back(seasonal_b);
        return ids;
    }
};

inline EncoderLeaves register_params(ad::Tape& t, const EncoderParams& p) {
    EncoderLeaves l;
    l.backbone_w = t.leaf(p.backbone.weights);
    l.backbone_b = t.leaf(p.backbone.bias);
    for (const Tensor& k : p.trend.kernels) l.kernels.push_back(t.leaf(k));
    for (const Tensor& b : p.trend.biases) l.kernel_biases.push_back(t.leaf(b));
    l.seasonal_p = t.leaf(p.seasonal.P);
    l.seasonal_b = t.leaf(p.seasonal.B);
    return l;
}

struct EncodedWindow {
    ad::NodeId hidden = -1;    // [h, d_hidden]
    ad::NodeId trend = -1;     // [h, d_tr]
    ad::NodeId seasonal = -1;  // [h, d_s]
};

inline EncodedWindow encode(ad::Tape& t, ad::NodeId x, const EncoderLeaves& l) {
    EncodedWindow out;
    out.hidden = ad::add_rows(t, ad::matmul(t, x, l.backbone_w), l.backbone_b);
    const int64_t layers = static_cast<int64_t>(l.kernels.size());
    ad::NodeId acc = -1;
    for (int64_t j = 0; j < layers; ++j) {
        ad::NodeId layer =
            ad::add_rows(t, ad::conv1d_causal(t, out.hidden, l.kernels[j], TrendParams::dilation(j)),
                         l.kernel_biases[j]);
        acc = (j == 0) ? layer : ad::add(t, acc, layer);
    }
    out.trend = ad::scale(t, acc, 1.0 / static_cast<double>(layers));
    const int64_t h = t.val(x).dim(0);
    out.seasonal =
        ad::irfft(t, ad::complex_linear(t, ad::rfft(t, out.hidden), l.seasonal_p, l.seasonal_b), h);
    return out;
}

}  // namespace tape

}  // namespace tsi
