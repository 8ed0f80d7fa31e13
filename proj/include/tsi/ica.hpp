#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsi/autodiff.hpp"
#include "tsi/contrastive.hpp"
#include "tsi/errors.hpp"
#include "tsi/ops.hpp"
#include "tsi/rng.hpp"
#include "tsi/tensor.hpp"

// Independent-component path: sparsity-regularized autoencoder for nonlinear
// de-mixing, then whitening and fixed-point FastICA on the latent code.
namespace tsi {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> as_eigen(const Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("as_eigen: rank-2 tensor required");
    return {t.data.data(), t.dim(0), t.dim(1)};
}

inline Tensor from_eigen(const RowMat& m) {
    Tensor t = Tensor::zeros({m.rows(), m.cols()});
    Eigen::Map<RowMat>(t.data.data(), m.rows(), m.cols()) = m;
    return t;
}

enum class Activation { Tanh, Identity };

// Encoder m -> hidden -> n_i, decoder n_i -> hidden -> m with a linear output
// layer. The sparsity weight applies to the mean absolute latent value.
struct SparseAutoencoderParams {
    Tensor enc_w1, enc_b1;
    Tensor enc_w2, enc_b2;
    Tensor dec_w1, dec_b1;
    Tensor dec_w2, dec_b2;
    double sparsity_weight = 1e-3;
    Activation activation = Activation::Tanh;

    int64_t input_width() const { return enc_w1.dim(0); }
    int64_t hidden_width() const { return enc_w1.dim(1); }
    int64_t latent_width() const { return enc_w2.dim(1); }
};

inline std::vector<std::vector<double>*> param_buffers(SparseAutoencoderParams& p) {
    return {&p.enc_w1.data, &p.enc_b1.data, &p.enc_w2.data, &p.enc_b2.data,
            &p.dec_w1.data, &p.dec_b1.data, &p.dec_w2.data, &p.dec_b2.data};
}

inline SparseAutoencoderParams init_autoencoder(int64_t m, int64_t hidden, int64_t latent,
                                                double sparsity, Activation act, Rng& rng) {
    if (m < 1 || hidden < 1 || latent < 1)
        throw std::invalid_argument("init_autoencoder: invalid widths");
    if (sparsity < 0.0) throw std::invalid_argument("init_autoencoder: sparsity must be >= 0");
    SparseAutoencoderParams p;
    p.sparsity_weight = sparsity;
    p.activation = act;
    auto dense = [&rng](int64_t rows, int64_t cols) {
        Tensor w = Tensor::zeros({rows, cols});
        const double s = 1.0 / std::sqrt(static_cast<double>(rows));
        for (double& v : w.data) v = rng.normal(0.0, s);
        return w;
    };
    p.enc_w1 = dense(m, hidden);
    p.enc_b1 = Tensor::zeros({hidden});
    p.enc_w2 = dense(hidden, latent);
    p.enc_b2 = Tensor::zeros({latent});
    p.dec_w1 = dense(latent, hidden);
    p.dec_b1 = Tensor::zeros({hidden});
    p.dec_w2 = dense(hidden, m);
    p.dec_b2 = Tensor::zeros({m});
    return p;
}

// Convenience fixture: an autoencoder that is exactly the identity map, used
// to run the whiten+ICA stages on raw signals.
inline SparseAutoencoderParams identity_autoencoder(int64_t m, int64_t hidden) {
    if (hidden < m) throw std::invalid_argument("identity_autoencoder: hidden must be >= m");
    SparseAutoencoderParams p;
    p.activation = Activation::Identity;
    p.sparsity_weight = 0.0;
    auto eye = [](int64_t rows, int64_t cols) {
        Tensor w = Tensor::zeros({rows, cols});
        for (int64_t i = 0; i < std::min(rows, cols); ++i) w.at(i, i) = 1.0;
        return w;
    };
    p.enc_w1 = eye(m, hidden);
    p.enc_b1 = Tensor::zeros({hidden});
    p.enc_w2 = eye(hidden, m);
    p.enc_b2 = Tensor::zeros({m});
    p.dec_w1 = eye(m, hidden);
    p.dec_b1 = Tensor::zeros({hidden});
    p.dec_w2 = eye(hidden, m);
    p.dec_b2 = Tensor::zeros({m});
    return p;
}

namespace detail {
inline Tensor activate(const Tensor& x, Activation act) {
    return act == Activation::Tanh ? ops::tanh_map(x) : x;
}
}  // namespace detail

inline Tensor ae_encode(const Tensor& X, const SparseAutoencoderParams& p) {
    if (X.rank() != 2 || X.dim(1) != p.input_width())
        throw std::invalid_argument("ae_encode: input width mismatch");
    Tensor h = detail::activate(ops::add_rows(ops::matmul(X, p.enc_w1), p.enc_b1), p.activation);
    return detail::activate(ops::add_rows(ops::matmul(h, p.enc_w2), p.enc_b2), p.activation);
}

inline Tensor ae_decode(const Tensor& Z, const SparseAutoencoderParams& p) {
    if (Z.rank() != 2 || Z.dim(1) != p.latent_width())
        throw std::invalid_argument("ae_decode: latent width mismatch");
    Tensor h = detail::activate(ops::add_rows(ops::matmul(Z, p.dec_w1), p.dec_b1), p.activation);
    return ops::add_rows(ops::matmul(h, p.dec_w2), p.dec_b2);
}

inline Tensor ae_reconstruct(const Tensor& X, const SparseAutoencoderParams& p) {
    return ae_decode(ae_encode(X, p), p);
}

inline double reconstruction_mse(const Tensor& X, const SparseAutoencoderParams& p) {
    Tensor R = ae_reconstruct(X, p);
    double acc = 0.0;
    for (int64_t i = 0; i < X.size(); ++i) {
        const double d = R.at(i) - X.at(i);
        acc += d * d;
    }
    return acc / static_cast<double>(X.size());
}

struct AutoencoderConfig {
    int64_t hidden = 32;
    int64_t latent = 0;  // 0 means same as the input width
    double sparsity = 1e-3;
    Activation activation = Activation::Tanh;
    int64_t steps = 500;
    int64_t batch = 64;
    double lr = 1e-3;
};

struct AutoencoderResult {
    SparseAutoencoderParams params;
    std::vector<double> loss_history;
};

// Minimizes mean squared reconstruction error + sparsity * mean(|latent|)
// by adaptive-moment gradient steps; deterministic per seed.
inline AutoencoderResult train_autoencoder(const Tensor& rows, const AutoencoderConfig& cfg,
                                           uint64_t seed) {
    if (rows.rank() != 2 || rows.dim(0) < 2) throw DataError("train_autoencoder: need at least 2 rows");
    const int64_t N = rows.dim(0), m = rows.dim(1);
    const int64_t latent = cfg.latent > 0 ? cfg.latent : m;
    Rng rng(seed);

    AutoencoderResult res;
    res.params = init_autoencoder(m, cfg.hidden, latent, cfg.sparsity, cfg.activation, rng);

    OptimState opt;
    opt.lr = cfg.lr;
    const bool full_batch = cfg.batch >= N;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        Tensor batch;
        if (full_batch) {
            batch = rows;
        } else {
            batch = Tensor::zeros({cfg.batch, m});
            for (int64_t b = 0; b < cfg.batch; ++b) {
                const int64_t r = static_cast<int64_t>(rng.integer(static_cast<uint64_t>(N)));
                for (int64_t j = 0; j < m; ++j) batch.at(b, j) = rows.at(r, j);
            }
        }

        ad::Tape tape;
        SparseAutoencoderParams& p = res.params;
        ad::NodeId ew1 = tape.leaf(p.enc_w1), eb1 = tape.leaf(p.enc_b1);
        ad::NodeId ew2 = tape.leaf(p.enc_w2), eb2 = tape.leaf(p.enc_b2);
        ad::NodeId dw1 = tape.leaf(p.dec_w1), db1 = tape.leaf(p.dec_b1);
        ad::NodeId dw2 = tape.leaf(p.dec_w2), db2 = tape.leaf(p.dec_b2);
        ad::NodeId x = tape.constant(batch);

        auto act = [&](ad::NodeId n) {
            return p.activation == Activation::Tanh ? ad::tanh(tape, n) : n;
        };
        ad::NodeId hidden = act(ad::add_rows(tape, ad::matmul(tape, x, ew1), eb1));
        ad::NodeId code = act(ad::add_rows(tape, ad::matmul(tape, hidden, ew2), eb2));
        ad::NodeId hidden2 = act(ad::add_rows(tape, ad::matmul(tape, code, dw1), db1));
        ad::NodeId recon = ad::add_rows(tape, ad::matmul(tape, hidden2, dw2), db2);

        ad::NodeId diff = ad::add(tape, recon, ad::scale(tape, x, -1.0));
        ad::NodeId loss = ad::mean_all(tape, ad::mul(tape, diff, diff));
        if (p.sparsity_weight > 0.0) {
            const double l1s = p.sparsity_weight / static_cast<double>(tape.val(code).size());
            loss = ad::add(tape, loss, ad::scale(tape, ad::l1_norm(tape, code), l1s));
        }

        const double loss_value = tape.val(loss).at(0);
        if (!std::isfinite(loss_value)) throw DivergenceError("autoencoder loss is not finite");

        ad::Gradients grads = ad::backward(tape, loss);
        std::vector<Tensor> gstore;
        for (ad::NodeId id : {ew1, eb1, ew2, eb2, dw1, db1, dw2, db2})
            gstore.push_back(grads.grad(tape, id));
        std::vector<const std::vector<double>*> gbufs;
        for (const Tensor& g : gstore) gbufs.push_back(&g.data);
        opt.step(param_buffers(p), gbufs);
        res.loss_history.push_back(loss_value);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Whitening: center, eigendecompose the covariance, keep directions whose
// eigenvalue clears a relative threshold, scale to unit variance.
// Covariance convention: population (1/N).
// ---------------------------------------------------------------------------
struct WhiteningModel {
    Tensor mean;      // [n_i]
    Tensor k_matrix;  // [n_w, n_i]

    int64_t input_width() const { return mean.dim(0); }
    int64_t kept() const { return k_matrix.dim(0); }
};

inline WhiteningModel whiten_fit(const Tensor& Z) {
    if (Z.rank() != 2) throw std::invalid_argument("whiten_fit: rank-2 input required");
    const int64_t N = Z.dim(0), n = Z.dim(1);
    if (N <= n) throw std::invalid_argument("whiten_fit: need more samples than dimensions");

    Eigen::Map<const RowMat> z = as_eigen(Z);
    Eigen::RowVectorXd mean = z.colwise().mean();
    RowMat centered = z.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(N);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("whiten_fit: eigensolver failed");
    const Eigen::VectorXd evals = es.eigenvalues();   // ascending
    const Eigen::MatrixXd evecs = es.eigenvectors();  // columns

    const double lmax = evals(n - 1);
    if (!(lmax > 1e-12)) throw DataError("whiten_fit: input has no variance (all-constant)");
    const double cutoff = 1e-8 * lmax;

    // Decreasing eigenvalue order; ties keep the solver's index order so an
    // exactly-white input maps to the identity rather than a permutation.
    std::vector<int64_t> kept(static_cast<size_t>(n));
    std::iota(kept.begin(), kept.end(), 0);
    std::stable_sort(kept.begin(), kept.end(),
                     [&](int64_t a, int64_t b) { return evals(a) > evals(b); });
    while (!kept.empty() && evals(kept.back()) < cutoff) kept.pop_back();
    if (kept.empty()) throw DataError("whiten_fit: no retained eigenvalues");

    WhiteningModel model;
    model.mean = Tensor::zeros({n});
    for (int64_t j = 0; j < n; ++j) model.mean.at(j) = mean(j);
    model.k_matrix = Tensor::zeros({static_cast<int64_t>(kept.size()), n});
    for (size_t r = 0; r < kept.size(); ++r) {
        Eigen::VectorXd v = evecs.col(kept[r]);
        // Sign convention: largest-magnitude component positive.
        int64_t arg = 0;
        for (int64_t j = 1; j < n; ++j)
            if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
        if (v(arg) < 0.0) v = -v;
        const double s = 1.0 / std::sqrt(evals(kept[r]));
        for (int64_t j = 0; j < n; ++j) model.k_matrix.at(static_cast<int64_t>(r), j) = s * v(j);
    }
    return model;
}

inline Tensor whiten_apply(const WhiteningModel& model, const Tensor& Z) {
    if (Z.rank() != 2 || Z.dim(1) != model.input_width())
        throw std::invalid_argument("whiten_apply: width mismatch");
    Eigen::Map<const RowMat> z = as_eigen(Z);
    Eigen::Map<const RowMat> k = as_eigen(model.k_matrix);
    Eigen::RowVectorXd mean(model.input_width());
    for (int64_t j = 0; j < model.input_width(); ++j) mean(j) = model.mean.at(j);
    RowMat out = (z.rowwise() - mean) * k.transpose();
    return from_eigen(out);
}

// ---------------------------------------------------------------------------
// FastICA, symmetric variant with the tanh contrast.
// ---------------------------------------------------------------------------
struct FasticaResult {
    Tensor w;  // [n_w, n_w], rows orthonormal
    bool converged = false;
    int64_t iterations = 0;
};

namespace detail {

inline Eigen::MatrixXd sym_inv_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd lam = es.eigenvalues();
    for (int64_t i = 0; i < lam.size(); ++i) lam(i) = 1.0 / std::sqrt(std::max(lam(i), 1e-12));
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

inline FasticaResult fastica_fit(const Tensor& Z_white, uint64_t seed, double tol = 1e-4,
                                 int64_t max_iter = 200) {
    if (Z_white.rank() != 2) throw std::invalid_argument("fastica_fit: rank-2 input required");
    const int64_t N = Z_white.dim(0), n = Z_white.dim(1);
    if (N < 2 || n < 1) throw std::invalid_argument("fastica_fit: degenerate input");

    Eigen::Map<const RowMat> z = as_eigen(Z_white);

    // Random orthonormal start.
    Rng rng(seed);
    Eigen::MatrixXd g(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::MatrixXd W = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    W = detail::sym_inv_sqrt(W * W.transpose()) * W;

    FasticaResult res;
    for (int64_t it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd Y = z * W.transpose();            // [N, n]
        Eigen::MatrixXd Gy = Y.array().tanh().matrix();   // g(u) = tanh(u)
        Eigen::VectorXd gp(n);                            // mean of g'(u) = 1 - tanh^2
        for (int64_t j = 0; j < n; ++j)
            gp(j) = 1.0 - Gy.col(j).array().square().mean();
        Eigen::MatrixXd W1 =
            (Gy.transpose() * z) / static_cast<double>(N) - gp.asDiagonal() * W;
        Eigen::MatrixXd Wn = detail::sym_inv_sqrt(W1 * W1.transpose()) * W1;

        double drift = 0.0;
        Eigen::MatrixXd overlap = Wn * W.transpose();
        for (int64_t j = 0; j < n; ++j)
            drift = std::max(drift, std::abs(1.0 - std::abs(overlap(j, j))));
        W = Wn;
        res.iterations = it + 1;
        if (drift < tol) {
            res.converged = true;
            break;
        }
    }
    res.w = from_eigen(W);
    return res;
}

// ---------------------------------------------------------------------------
// Canonicalized extractor: unmixing plus a deterministic component order
// (decreasing |excess kurtosis| on training data) and sign convention
// (largest-magnitude training value positive).
// ---------------------------------------------------------------------------
struct IcaModel {
    Tensor w;                    // [n_w, n_w]
    std::vector<int64_t> order;  // output i reads unmixed component order[i]
    std::vector<double> signs;   // +-1 per output
    bool converged = false;

    int64_t width() const { return w.dim(0); }
};

inline std::vector<double> excess_kurtosis(const Tensor& cols) {
    const int64_t N = cols.dim(0), n = cols.dim(1);
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (int64_t j = 0; j < n; ++j) {
        double m2 = 0.0, m4 = 0.0;
        for (int64_t i = 0; i < N; ++i) {
            const double v = cols.at(i, j);
            m2 += v * v;
            m4 += v * v * v * v;
        }
        m2 /= static_cast<double>(N);
        m4 /= static_cast<double>(N);
        out[static_cast<size_t>(j)] = (m2 > 0.0) ? m4 / (m2 * m2) - 3.0 : 0.0;
    }
    return out;
}

inline IcaModel canonicalize_ica(const FasticaResult& fit, const Tensor& Z_white_train) {
    IcaModel model;
    model.w = fit.w;
    model.converged = fit.converged;
    const int64_t n = model.w.dim(0);

    RowMat comps = as_eigen(Z_white_train) * as_eigen(model.w).transpose();
    Tensor comps_t = from_eigen(comps);
    std::vector<double> kurt = excess_kurtosis(comps_t);

    model.order.resize(static_cast<size_t>(n));
    std::iota(model.order.begin(), model.order.end(), 0);
    std::stable_sort(model.order.begin(), model.order.end(), [&](int64_t a, int64_t b) {
        return std::abs(kurt[static_cast<size_t>(a)]) > std::abs(kurt[static_cast<size_t>(b)]);
    });

    model.signs.assign(static_cast<size_t>(n), 1.0);
    const int64_t N = comps_t.dim(0);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t c = model.order[static_cast<size_t>(i)];
        int64_t arg = 0;
        for (int64_t r = 1; r < N; ++r)
            if (std::abs(comps_t.at(r, c)) > std::abs(comps_t.at(arg, c))) arg = r;
        if (comps_t.at(arg, c) < 0.0) model.signs[static_cast<size_t>(i)] = -1.0;
    }
    return model;
}

// Which signal feeds whitening + FastICA: the autoencoder's latent code, or
// the reconstructed observation (kept as an option for comparison).
enum class IcaInput { Latent, Reconstruction };

inline Tensor ica_input_rows(const Tensor& X, const SparseAutoencoderParams& ae, IcaInput mode) {
    return mode == IcaInput::Latent ? ae_encode(X, ae) : ae_reconstruct(X, ae);
}

// H_i = sign . perm . W . K . center(encoder(X)), applied per timestep.
inline Tensor extract_independent(const Tensor& X, const SparseAutoencoderParams& ae,
                                  const WhiteningModel& whitening, const IcaModel& ica,
                                  IcaInput mode = IcaInput::Latent) {
    if (ica.order.empty()) throw std::invalid_argument("extract_independent: unfitted model");
    Tensor z = whiten_apply(whitening, ica_input_rows(X, ae, mode));
    RowMat comps = as_eigen(z) * as_eigen(ica.w).transpose();
    const int64_t h = comps.rows(), n = ica.width();
    Tensor out = Tensor::zeros({h, n});
    for (int64_t i = 0; i < n; ++i) {
        const int64_t c = ica.order[static_cast<size_t>(i)];
        const double s = ica.signs[static_cast<size_t>(i)];
        for (int64_t t = 0; t < h; ++t) out.at(t, i) = s * comps(t, c);
    }
    return out;
}

// Standard Amari performance index of P = W_effective * A_true, normalized to
// [0, 1]; zero iff P is a scaled permutation.
inline double amari_index(const Tensor& W_effective, const Tensor& A_true) {
    if (W_effective.rank() != 2 || A_true.rank() != 2 || W_effective.dim(0) != W_effective.dim(1) ||
        A_true.dim(0) != A_true.dim(1) || W_effective.dim(0) != A_true.dim(0))
        throw std::invalid_argument("amari_index: square matrices of equal size required");
    const int64_t n = A_true.dim(0);
    Eigen::Map<const RowMat> a = as_eigen(A_true);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw std::invalid_argument("amari_index: A_true is singular");
    if (n == 1) return 0.0;  // a 1x1 product is always a scaled permutation

    Eigen::MatrixXd P = as_eigen(W_effective) * a;
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double rmax = 0.0, rsum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double v = std::abs(P(i, j));
            rmax = std::max(rmax, v);
            rsum += v;
        }
        total += rsum / rmax - 1.0;
    }
    for (int64_t j = 0; j < n; ++j) {
        double cmax = 0.0, csum = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double v = std::abs(P(i, j));
            cmax = std::max(cmax, v);
            csum += v;
        }
        total += csum / cmax - 1.0;
    }
    return total / static_cast<double>(2 * n * (n - 1));
}

}  // namespace tsi
