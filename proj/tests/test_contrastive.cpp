#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "tsi/contrastive.hpp"
#include "tsi/rng.hpp"

using tsi::AugmentConfig;
using tsi::EncoderParams;
using tsi::Rng;
using tsi::Tensor;
namespace ad = tsi::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(dims));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Tensor random_unit(int64_t d, Rng& rng) {
    Tensor v = Tensor::zeros({d});
    for (double& x : v.data) x = rng.normal();
    return tsi::ops::l2_normalize(v);
}

// Noisy two-tone seasonal windows, enough structure for contrastive training
// to make progress on.
std::vector<Tensor> seasonal_windows(int64_t count, int64_t h, int64_t m, Rng& rng) {
    std::vector<Tensor> out;
    for (int64_t w = 0; w < count; ++w) {
        Tensor x = Tensor::zeros({h, m});
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (int64_t t = 0; t < h; ++t)
            for (int64_t j = 0; j < m; ++j)
                x.at(t, j) = std::sin(2.0 * M_PI * static_cast<double>(t) / 16.0 + phase +
                                      static_cast<double>(j)) +
                             0.5 * std::sin(2.0 * M_PI * static_cast<double>(t) / 5.0 + phase) +
                             0.1 * rng.normal();
        out.push_back(std::move(x));
    }
    return out;
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    auto ab = tsi::param_buffers(a);
    auto bb = tsi::param_buffers(b);
    if (ab.size() != bb.size()) return false;
    for (size_t i = 0; i < ab.size(); ++i)
        if (*ab[i] != *bb[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("augment with p_apply=0 never touches the window") {
    Rng data_rng(1), rng(2);
    Tensor w = random_tensor({12, 3}, data_rng);
    AugmentConfig cfg;
    cfg.p_apply = 0.0;
    Tensor out = tsi::augment(w, cfg, rng);
    REQUIRE(out.data == w.data);
}

TEST_CASE("forced scaling by 2 doubles every value") {
    Rng rng(3);
    Tensor w = random_tensor({6, 2}, rng);
    Tensor out = tsi::apply_scale(w, 2.0);
    for (int64_t i = 0; i < w.size(); ++i) REQUIRE(out.at(i) == 2.0 * w.at(i));
}

TEST_CASE("degenerate sigmas with forced application are the identity") {
    Rng data_rng(5), rng(7);
    Tensor w = random_tensor({8, 2}, data_rng);
    AugmentConfig cfg;
    cfg.p_apply = 1.0;
    cfg.scale_sigma = 0.0;
    cfg.shift_sigma = 0.0;
    cfg.jitter_sigma = 0.0;
    Tensor out = tsi::augment(w, cfg, rng);
    REQUIRE(out.data == w.data);
}

TEST_CASE("augment preserves shape for all branch combinations") {
    Rng data_rng(9), rng(11);
    Tensor w = random_tensor({10, 4}, data_rng);
    AugmentConfig cfg;
    cfg.p_apply = 0.5;
    for (int it = 0; it < 20; ++it) REQUIRE(tsi::augment(w, cfg, rng).dims == w.dims);
}

TEST_CASE("infonce matches the hand-evaluated softmax expression") {
    // q.k+ = 1, two zero-similarity negatives, tau = 1:
    // loss = log(e + 2) - 1.
    Tensor q({2}, {1.0, 0.0});
    Tensor k({2}, {1.0, 0.0});
    std::vector<Tensor> queue{Tensor({2}, {0.0, 1.0}), Tensor({2}, {0.0, -1.0})};
    const double expected = std::log(std::exp(1.0) + 2.0) - 1.0;
    REQUIRE(tsi::infonce(q, k, queue, 1.0) == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(expected == Catch::Approx(0.5514447139320511).epsilon(1e-12));
}

TEST_CASE("infonce with equal similarities is log(K+1)") {
    Tensor q({2}, {1.0, 0.0});
    Tensor k({2}, {1.0, 0.0});
    std::vector<Tensor> queue(5, k);
    REQUIRE(tsi::infonce(q, k, queue, 0.3) == Catch::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("infonce vanishes when the positive dominates") {
    Tensor q({2}, {1.0, 0.0});
    Tensor k({2}, {1.0, 0.0});
    std::vector<Tensor> queue{Tensor({2}, {0.0, 1.0})};
    REQUIRE(tsi::infonce(q, k, queue, 1e-3) < 1e-10);
}

TEST_CASE("infonce rejects zero-norm inputs and bad temperature") {
    Tensor q({2}, {1.0, 0.0});
    Tensor z = Tensor::zeros({2});
    REQUIRE_THROWS_AS(tsi::infonce(z, q, {}, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(tsi::infonce(q, z, {}, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(tsi::infonce(q, q, {}, 0.0), std::invalid_argument);
}

TEST_CASE("infonce stays within its similarity-implied bounds") {
    Rng rng(13);
    const double tau = 0.2;
    for (int it = 0; it < 50; ++it) {
        const int64_t K = 1 + static_cast<int64_t>(rng.integer(8));
        Tensor q = random_unit(4, rng);
        Tensor k = random_unit(4, rng);
        std::vector<Tensor> queue;
        for (int64_t i = 0; i < K; ++i) queue.push_back(random_unit(4, rng));
        const double loss = tsi::infonce(q, k, queue, tau);
        REQUIRE(loss >= 0.0);
        REQUIRE(loss <= std::log(static_cast<double>(K + 1)) + 2.0 / tau);
    }
}

TEST_CASE("momentum_update follows the EMA arithmetic") {
    Rng rng(17);
    EncoderParams q = tsi::init_encoder_params(2, 3, 2, 2, 1, 8, rng);
    EncoderParams k = tsi::init_encoder_params(2, 3, 2, 2, 1, 8, rng);

    EncoderParams k1 = k;
    tsi::momentum_update(k1, q, 1.0);
    REQUIRE(params_equal(k1, k));

    EncoderParams k0 = k;
    tsi::momentum_update(k0, q, 0.0);
    REQUIRE(params_equal(k0, q));

    EncoderParams kz = k;
    for (auto* b : tsi::param_buffers(kz)) std::fill(b->begin(), b->end(), 0.0);
    EncoderParams qo = q;
    for (auto* b : tsi::param_buffers(qo)) std::fill(b->begin(), b->end(), 1.0);
    tsi::momentum_update(kz, qo, 0.999);
    for (auto* b : tsi::param_buffers(kz))
        for (double v : *b) REQUIRE(v == Catch::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("queue is FIFO with a wrapping pointer") {
    tsi::MoCoState moco;
    moco.capacity = 3;
    auto key = [](double v) { return Tensor({1}, {v}); };
    moco.enqueue(key(0));
    moco.enqueue(key(1));
    moco.enqueue(key(2));
    REQUIRE(moco.queue.size() == 3);
    REQUIRE(moco.ptr == 0);
    moco.enqueue(key(3));  // evicts the first key
    REQUIRE(moco.queue[0].at(0) == 3.0);
    REQUIRE(moco.ptr == 1);
    moco.enqueue(key(4));
    moco.enqueue(key(5));
    REQUIRE(moco.ptr == 0);
    moco.enqueue(key(6));
    REQUIRE(moco.queue[0].at(0) == 6.0);
    REQUIRE(moco.queue[1].at(0) == 4.0);
    REQUIRE(moco.queue[2].at(0) == 5.0);
}

TEST_CASE("train_representation is deterministic for a fixed seed") {
    Rng data_rng(19);
    auto windows = seasonal_windows(6, 16, 2, data_rng);
    tsi::ContrastiveConfig cfg;
    cfg.d_hidden = 4;
    cfg.d_tr = 3;
    cfg.d_s = 3;
    cfg.trend_depth = 1;
    cfg.steps = 5;
    cfg.batch = 2;
    cfg.queue_capacity = 6;
    auto r1 = tsi::train_representation(windows, cfg, 77);
    auto r2 = tsi::train_representation(windows, cfg, 77);
    REQUIRE(params_equal(r1.params, r2.params));
    REQUIRE(r1.loss_history == r2.loss_history);
}

TEST_CASE("train_representation rejects empty datasets and oversized queues") {
    tsi::ContrastiveConfig cfg;
    REQUIRE_THROWS_AS(tsi::train_representation({}, cfg, 1), tsi::DataError);
    Rng rng(21);
    auto windows = seasonal_windows(2, 8, 1, rng);
    cfg.steps = 2;
    cfg.batch = 1;
    cfg.queue_capacity = 100;
    REQUIRE_THROWS_AS(tsi::train_representation(windows, cfg, 1), tsi::ConfigError);
}

TEST_CASE("key parameters replay the exact EMA recurrence") {
    Rng data_rng(23), rng(29);
    auto windows = seasonal_windows(4, 16, 2, data_rng);
    tsi::ContrastiveConfig cfg;
    cfg.d_hidden = 3;
    cfg.d_tr = 2;
    cfg.d_s = 2;
    cfg.trend_depth = 1;
    cfg.batch = 2;
    const double mu = 0.9;

    Rng train_rng(31);
    EncoderParams params = tsi::init_encoder_params(2, cfg.d_hidden, cfg.d_tr, cfg.d_s,
                                                    cfg.trend_depth, 16, train_rng);
    tsi::MoCoState moco;
    moco.key_params = params;
    moco.capacity = 8;
    moco.momentum = mu;
    moco.temperature = 0.2;
    tsi::OptimState opt;

    for (int step = 0; step < 4; ++step) {
        EncoderParams key_before = moco.key_params;
        std::vector<const Tensor*> batch{&windows[rng.integer(windows.size())],
                                         &windows[rng.integer(windows.size())]};
        tsi::contrastive_step(params, moco, opt, batch, cfg.aug, train_rng);
        // Replay: key(t) = mu * key(t-1) + (1-mu) * query(t), bit for bit.
        EncoderParams replay = key_before;
        tsi::momentum_update(replay, params, mu);
        REQUIRE(params_equal(replay, moco.key_params));
    }
}

TEST_CASE("queued keys are unit vectors") {
    Rng data_rng(37);
    auto windows = seasonal_windows(5, 16, 2, data_rng);
    tsi::ContrastiveConfig cfg;
    cfg.d_hidden = 4;
    cfg.d_tr = 2;
    cfg.d_s = 2;
    cfg.trend_depth = 1;
    cfg.steps = 6;
    cfg.batch = 2;
    cfg.queue_capacity = 8;
    auto res = tsi::train_representation(windows, cfg, 41);
    REQUIRE_FALSE(res.moco.queue.empty());
    for (const Tensor& k : res.moco.queue)
        REQUIRE(std::abs(tsi::ops::l2_norm(k).at(0) - 1.0) < 1e-8);
}

TEST_CASE("gradients reach every encoder parameter tensor") {
    Rng data_rng(43), rng(47);
    const int64_t h = 16, m = 2;
    auto windows = seasonal_windows(4, h, m, data_rng);
    EncoderParams params = tsi::init_encoder_params(m, 3, 2, 2, 1, h, rng);

    std::vector<double> acc;  // max |grad| per buffer
    for (int batch = 0; batch < 10; ++batch) {
        ad::Tape tape;
        auto leaves = tsi::tape::register_params(tape, params);
        auto enc = tsi::tape::encode(tape, tape.constant(windows[batch % windows.size()]), leaves);
        const int64_t t_pick = static_cast<int64_t>(rng.integer(h));
        auto q = ad::l2_normalize(tape,
                                  ad::concat_vec(tape, ad::row_at(tape, enc.trend, t_pick),
                                                 ad::row_at(tape, enc.seasonal, t_pick)));
        Tensor key = random_unit(4, rng);
        Tensor negs = Tensor::zeros({3, 4});
        for (int64_t i = 0; i < 3; ++i) {
            Tensor n = random_unit(4, rng);
            for (int64_t j = 0; j < 4; ++j) negs.at(i, j) = n.at(j);
        }
        auto logits = ad::concat_vec(tape, ad::dot(tape, q, tape.constant(key)),
                                     ad::matvec(tape, tape.constant(negs), q));
        auto loss = ad::scale(
            tape, ad::element_at(tape, ad::log_softmax(tape, ad::scale(tape, logits, 1.0 / 0.2)), 0),
            -1.0);
        auto grads = ad::backward(tape, loss);

        std::vector<Tensor> rs;
        std::vector<tsi::ComplexTensor> cs;
        auto gb = tsi::detail::leaf_grad_buffers(tape, grads, leaves, rs, cs);
        if (acc.empty()) acc.assign(gb.size(), 0.0);
        for (size_t i = 0; i < gb.size(); ++i)
            for (double v : *gb[i]) acc[i] = std::max(acc[i], std::abs(v));
    }
    // Every parameter tensor must receive gradient somewhere. (Individual
    // entries can be structurally dead: the real inverse transform ignores
    // the imaginary parts of the DC and Nyquist bins.)
    for (double a : acc) REQUIRE(a > 0.0);
}

TEST_CASE("training reduces the smoothed contrastive loss on seasonal data") {
    Rng data_rng(53);
    auto windows = seasonal_windows(16, 32, 2, data_rng);
    tsi::ContrastiveConfig cfg;
    cfg.d_hidden = 8;
    cfg.d_tr = 4;
    cfg.d_s = 4;
    cfg.trend_depth = 2;
    cfg.steps = 120;
    cfg.batch = 4;
    cfg.queue_capacity = 32;
    cfg.lr = 2e-3;
    auto res = tsi::train_representation(windows, cfg, 59);
    REQUIRE(res.loss_history.size() == 120);
    const auto mean_of = [&](size_t lo, size_t hi) {
        return std::accumulate(res.loss_history.begin() + lo, res.loss_history.begin() + hi, 0.0) /
               static_cast<double>(hi - lo);
    };
    REQUIRE(mean_of(100, 120) < mean_of(0, 20));
}

TEST_CASE("full encoder InfoNCE loss passes finite differences") {
    Rng rng(61);
    const int64_t h = 8, m = 2, dh = 3, dtr = 2, ds = 2, M = 1;
    EncoderParams params = tsi::init_encoder_params(m, dh, dtr, ds, M, h, rng);
    Tensor window = random_tensor({h, m}, rng);
    Tensor key = random_unit(dtr + ds, rng);
    Tensor negs = Tensor::zeros({2, dtr + ds});
    for (int64_t i = 0; i < 2; ++i) {
        Tensor n = random_unit(dtr + ds, rng);
        for (int64_t j = 0; j < dtr + ds; ++j) negs.at(i, j) = n.at(j);
    }
    const int64_t t_pick = 5;
    const double tau = 0.3;

    auto build = [&](const EncoderParams& p, ad::Tape& tape, tsi::tape::EncoderLeaves& leaves) {
        leaves = tsi::tape::register_params(tape, p);
        auto enc = tsi::tape::encode(tape, tape.constant(window), leaves);
        auto q = ad::l2_normalize(tape,
                                  ad::concat_vec(tape, ad::row_at(tape, enc.trend, t_pick),
                                                 ad::row_at(tape, enc.seasonal, t_pick)));
        auto logits = ad::concat_vec(tape, ad::dot(tape, q, tape.constant(key)),
                                     ad::matvec(tape, tape.constant(negs), q));
        return ad::scale(
            tape, ad::element_at(tape, ad::log_softmax(tape, ad::scale(tape, logits, 1.0 / tau)), 0),
            -1.0);
    };

    ad::Tape tape;
    tsi::tape::EncoderLeaves leaves;
    auto loss = build(params, tape, leaves);
    auto grads = ad::backward(tape, loss, /*verify_replay=*/true);

    auto eval = [&](const EncoderParams& p) {
        ad::Tape t2;
        tsi::tape::EncoderLeaves l2;
        return t2.val(build(p, t2, l2)).at(0);
    };

    const double eps = 1e-5, tol = 1e-4;
    auto pb = tsi::param_buffers(params);  // mutable buffers, same order as leaves
    std::vector<Tensor> rs;
    std::vector<tsi::ComplexTensor> cs;
    auto gb = tsi::detail::leaf_grad_buffers(tape, grads, leaves, rs, cs);
    REQUIRE(pb.size() == gb.size());

    Rng pick(67);
    for (size_t bi = 0; bi < pb.size(); ++bi) {
        // Spot-check a handful of entries per tensor.
        for (int probe = 0; probe < 4; ++probe) {
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
            INFO("buffer " << bi << " entry " << e);
            REQUIRE(std::abs(analytic - numeric) / denom < tol);
        }
    }
}
