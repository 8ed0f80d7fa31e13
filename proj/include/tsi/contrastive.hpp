#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsi/autodiff.hpp"
#include "tsi/encoders.hpp"
#include "tsi/errors.hpp"
#include "tsi/ops.hpp"
#include "tsi/rng.hpp"
#include "tsi/tensor.hpp"

// Momentum-contrast training of the backbone/trend/seasonal parameters with a
// time-domain InfoNCE loss over augmented views.
namespace tsi {

struct AugmentConfig {
    double p_apply = 0.5;
    double scale_sigma = 0.3;
    double shift_sigma = 0.3;
    double jitter_sigma = 0.3;
};

inline Tensor apply_scale(const Tensor& window, double factor) {
    return ops::scale(window, factor);
}

// offsets[j] is added to every timestep of feature j.
inline Tensor apply_shift(const Tensor& window, const Tensor& offsets) {
    return ops::add_rows(window, offsets);
}

inline Tensor apply_jitter(const Tensor& window, const Tensor& noise) {
    return ops::add(window, noise);
}

// Scaling, shifting and jittering, each branch taken independently with
// probability p_apply. Draw order is fixed: branch gate, then the branch's
// own parameters, in scale/shift/jitter order.
inline Tensor augment(const Tensor& window, const AugmentConfig& cfg, Rng& rng) {
    if (cfg.p_apply < 0.0 || cfg.p_apply > 1.0)
        throw std::invalid_argument("augment: p_apply must lie in [0, 1]");
    if (cfg.scale_sigma < 0.0 || cfg.shift_sigma < 0.0 || cfg.jitter_sigma < 0.0)
        throw std::invalid_argument("augment: sigmas must be nonnegative");
    Tensor out = window;
    if (rng.uniform() < cfg.p_apply) out = apply_scale(out, rng.normal(1.0, cfg.scale_sigma));
    if (rng.uniform() < cfg.p_apply) {
        Tensor offsets = Tensor::zeros({window.dim(1)});
        for (double& v : offsets.data) v = rng.normal(0.0, cfg.shift_sigma);
        out = apply_shift(out, offsets);
    }
    if (rng.uniform() < cfg.p_apply) {
        Tensor noise = Tensor::zeros(window.dims);
        for (double& v : noise.data) v = rng.normal(0.0, cfg.jitter_sigma);
        out = apply_jitter(out, noise);
    }
    return out;
}

// InfoNCE over one positive and the queued negatives:
//   -log( exp(q.k+/tau) / (exp(q.k+/tau) + sum_j exp(q.queue_j/tau)) )
inline double infonce(const Tensor& q, const Tensor& k_pos, const std::vector<Tensor>& queue,
                      double tau) {
    if (tau <= 0.0) throw std::invalid_argument("infonce: temperature must be positive");
    if (ops::l2_norm(q).at(0) == 0.0 || ops::l2_norm(k_pos).at(0) == 0.0)
        throw std::invalid_argument("infonce: zero-norm input");
    std::vector<double> logits;
    logits.push_back(ops::dot(q, k_pos).at(0) / tau);
    for (const Tensor& neg : queue) {
        if (ops::l2_norm(neg).at(0) == 0.0)
            throw std::invalid_argument("infonce: zero-norm input");
        logits.push_back(ops::dot(q, neg).at(0) / tau);
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return -(logits[0] - mx - std::log(z));
}

// Flat views over every trainable buffer of an encoder, in a fixed order the
// optimizer and the checkpoint both rely on.
inline std::vector<std::vector<double>*> param_buffers(EncoderParams& p) {
    std::vector<std::vector<double>*> bufs{&p.backbone.weights.data, &p.backbone.bias.data};
    for (Tensor& k : p.trend.kernels) bufs.push_back(&k.data);
    for (Tensor& b : p.trend.biases) bufs.push_back(&b.data);
    bufs.push_back(&p.seasonal.P.re);
    bufs.push_back(&p.seasonal.P.im);
    bufs.push_back(&p.seasonal.B.re);
    bufs.push_back(&p.seasonal.B.im);
    return bufs;
}

inline std::vector<const std::vector<double>*> param_buffers(const EncoderParams& p) {
    auto mut = param_buffers(const_cast<EncoderParams&>(p));
    return {mut.begin(), mut.end()};
}

// key <- mu * key + (1 - mu) * query, elementwise across all buffers.
inline void momentum_update(EncoderParams& key, const EncoderParams& query, double mu) {
    auto kb = param_buffers(key);
    auto qb = param_buffers(query);
    if (kb.size() != qb.size()) throw std::invalid_argument("momentum_update: parameter count mismatch");
    for (size_t i = 0; i < kb.size(); ++i) {
        if (kb[i]->size() != qb[i]->size())
            throw std::invalid_argument("momentum_update: shape mismatch at buffer " +
                                        std::to_string(i));
        for (size_t j = 0; j < kb[i]->size(); ++j)
            (*kb[i])[j] = mu * (*kb[i])[j] + (1.0 - mu) * (*qb[i])[j];
    }
}

// Negative-key FIFO. Fills during warm-up, then overwrites the oldest slot.
struct MoCoState {
    EncoderParams key_params;
    std::vector<Tensor> queue;
    int64_t capacity = 0;
    int64_t ptr = 0;
    double momentum = 0.999;
    double temperature = 0.07;

    void enqueue(Tensor key) {
        if (static_cast<int64_t>(queue.size()) < capacity) {
            queue.push_back(std::move(key));
        } else {
            queue[static_cast<size_t>(ptr)] = std::move(key);
            ptr = (ptr + 1) % capacity;
        }
    }
};

// Adaptive-moment gradient descent over the flat buffer layout.
struct OptimState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step_count = 0;
    std::vector<std::vector<double>> m1;
    std::vector<std::vector<double>> m2;

    void init(const std::vector<std::vector<double>*>& params) {
        m1.clear();
        m2.clear();
        for (const auto* p : params) {
            m1.emplace_back(p->size(), 0.0);
            m2.emplace_back(p->size(), 0.0);
        }
    }

    void step(const std::vector<std::vector<double>*>& params,
              const std::vector<const std::vector<double>*>& grads) {
        if (m1.empty()) init(params);
        if (params.size() != grads.size() || params.size() != m1.size())
            throw std::invalid_argument("optimizer step: buffer count mismatch");
        ++step_count;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            const auto& g = *grads[i];
            for (size_t j = 0; j < p.size(); ++j) {
                m1[i][j] = beta1 * m1[i][j] + (1.0 - beta1) * g[j];
                m2[i][j] = beta2 * m2[i][j] + (1.0 - beta2) * g[j] * g[j];
                p[j] -= lr * (m1[i][j] / c1) / (std::sqrt(m2[i][j] / c2) + eps);
            }
        }
    }
};

struct ContrastiveConfig {
    int64_t d_hidden = 64;
    int64_t d_tr = 64;
    int64_t d_s = 64;
    int64_t trend_depth = 5;  // dilations 1..2^depth
    int64_t steps = 1000;
    int64_t batch = 8;
    int64_t queue_capacity = 256;
    double tau = 0.07;
    double mu = 0.999;
    double lr = 1e-3;
    AugmentConfig aug;
};

struct ContrastiveResult {
    EncoderParams params;
    MoCoState moco;
    std::vector<double> loss_history;
};

namespace detail {

// Normalized trend+seasonal row at one timestamp, inference path.
inline Tensor key_embedding(const Tensor& window, const EncoderParams& p, int64_t t) {
    Tensor G = encode_backbone(window, p.backbone);
    Tensor row = ops::concat_vec(ops::row_at(encode_trend(G, p.trend), t),
                                 ops::row_at(encode_seasonal(G, p.seasonal), t));
    return ops::l2_normalize(row);
}

inline std::vector<const std::vector<double>*> leaf_grad_buffers(
    const ad::Tape& tape, const ad::Gradients& grads, const tape::EncoderLeaves& leaves,
    std::vector<Tensor>& real_store, std::vector<ComplexTensor>& cplx_store) {
    real_store.clear();
    cplx_store.clear();
    real_store.reserve(2 + 2 * leaves.kernels.size());
    cplx_store.reserve(2);
    std::vector<const std::vector<double>*> out;
    real_store.push_back(grads.grad(tape, leaves.backbone_w));
    real_store.push_back(grads.grad(tape, leaves.backbone_b));
    for (ad::NodeId k : leaves.kernels) real_store.push_back(grads.grad(tape, k));
    for (ad::NodeId b : leaves.kernel_biases) real_store.push_back(grads.grad(tape, b));
    for (const Tensor& t : real_store) out.push_back(&t.data);
    cplx_store.push_back(grads.cgrad(tape, leaves.seasonal_p));
    cplx_store.push_back(grads.cgrad(tape, leaves.seasonal_b));
    out.push_back(&cplx_store[0].re);
    out.push_back(&cplx_store[0].im);
    out.push_back(&cplx_store[1].re);
    out.push_back(&cplx_store[1].im);
    return out;
}

}  // namespace detail

// One contrastive step on a prepared batch. Exposed separately so tests can
// replay queue and momentum semantics step by step.
inline double contrastive_step(EncoderParams& params, MoCoState& moco, OptimState& opt,
                               const std::vector<const Tensor*>& batch_windows,
                               const AugmentConfig& aug, Rng& rng) {
    ad::Tape tape;
    tape::EncoderLeaves leaves = tape::register_params(tape, params);
    ad::NodeId loss_acc = -1;
    std::vector<Tensor> new_keys;
    new_keys.reserve(batch_windows.size());

    for (const Tensor* wptr : batch_windows) {
        const Tensor& w = *wptr;
        const int64_t h = w.dim(0);
        Tensor view_q = augment(w, aug, rng);
        Tensor view_k = augment(w, aug, rng);
        const int64_t t_pick = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(h)));

        tape::EncodedWindow enc = tape::encode(tape, tape.constant(view_q), leaves);
        ad::NodeId q = ad::l2_normalize(
            tape, ad::concat_vec(tape, ad::row_at(tape, enc.trend, t_pick),
                                 ad::row_at(tape, enc.seasonal, t_pick)));

        Tensor key = detail::key_embedding(view_k, moco.key_params, t_pick);
        ad::NodeId logits = ad::dot(tape, q, tape.constant(key));
        if (!moco.queue.empty()) {
            const int64_t d = key.dim(0);
            Tensor negs = Tensor::zeros({static_cast<int64_t>(moco.queue.size()), d});
            for (size_t i = 0; i < moco.queue.size(); ++i)
                for (int64_t j = 0; j < d; ++j) negs.at(static_cast<int64_t>(i), j) = moco.queue[i].at(j);
            logits = ad::concat_vec(tape, logits, ad::matvec(tape, tape.constant(negs), q));
        }
        ad::NodeId nll = ad::scale(
            tape, ad::element_at(tape, ad::log_softmax(tape, ad::scale(tape, logits, 1.0 / moco.temperature)), 0),
            -1.0);
        loss_acc = (loss_acc < 0) ? nll : ad::add(tape, loss_acc, nll);
        new_keys.push_back(std::move(key));
    }

    ad::NodeId loss_node = ad::scale(tape, loss_acc, 1.0 / static_cast<double>(batch_windows.size()));
    const double loss = tape.val(loss_node).at(0);
    if (!std::isfinite(loss)) throw DivergenceError("contrastive loss is not finite");

    ad::Gradients grads = ad::backward(tape, loss_node);
    std::vector<Tensor> real_store;
    std::vector<ComplexTensor> cplx_store;
    auto gbufs = detail::leaf_grad_buffers(tape, grads, leaves, real_store, cplx_store);
    opt.step(param_buffers(params), gbufs);
    momentum_update(moco.key_params, params, moco.momentum);
    for (Tensor& k : new_keys) moco.enqueue(std::move(k));
    return loss;
}

// Full training loop: deterministic for a fixed seed.
inline ContrastiveResult train_representation(const std::vector<Tensor>& windows,
                                              const ContrastiveConfig& cfg, uint64_t seed) {
    if (windows.empty()) throw DataError("train_representation: no training windows");
    if (cfg.queue_capacity > cfg.steps * cfg.batch)
        throw ConfigError("train_representation: queue capacity " +
                          std::to_string(cfg.queue_capacity) + " exceeds total keys " +
                          std::to_string(cfg.steps * cfg.batch));
    const int64_t h = windows.front().dim(0);
    const int64_t m = windows.front().dim(1);
    Rng rng(seed);

    ContrastiveResult res;
    res.params = init_encoder_params(m, cfg.d_hidden, cfg.d_tr, cfg.d_s, cfg.trend_depth, h, rng);
    res.moco.key_params = res.params;
    res.moco.capacity = cfg.queue_capacity;
    res.moco.momentum = cfg.mu;
    res.moco.temperature = cfg.tau;
    // Warm the queue with key-encoder embeddings of random windows before the
    // first step, so recorded losses face the full negative set from step 0.
    for (int64_t i = 0; i < cfg.queue_capacity; ++i) {
        const Tensor& w = windows[rng.integer(windows.size())];
        Tensor view = augment(w, cfg.aug, rng);
        const int64_t t_pick = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(h)));
        res.moco.enqueue(detail::key_embedding(view, res.moco.key_params, t_pick));
    }

    OptimState opt;
    opt.lr = cfg.lr;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        std::vector<const Tensor*> batch;
        batch.reserve(cfg.batch);
        for (int64_t b = 0; b < cfg.batch; ++b)
            batch.push_back(&windows[rng.integer(windows.size())]);
        res.loss_history.push_back(contrastive_step(res.params, res.moco, opt, batch, cfg.aug, rng));
    }
    return res;
}

}  // namespace tsi
