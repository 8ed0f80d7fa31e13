#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsi/ica.hpp"  // as_eigen / from_eigen
#include "tsi/tensor.hpp"

// Ridge regression from the last-timestep representation to the next k steps
// of all variables, solved in closed form, plus the MSE/MAE metrics.
namespace tsi {

// weights is [(d+1), k*m] with the bias in the last row; outputs are laid out
// row-major over (step, variable).
struct RidgeModel {
    Tensor weights;
    double alpha = 0.0;
    int64_t horizon = 1;  // k
    int64_t vars = 1;     // m

    int64_t input_width() const { return weights.dim(0) - 1; }
    int64_t output_width() const { return weights.dim(1); }
};

// Closed form (Z^T Z + alpha J) W = Z^T Y with Z bias-augmented and J the
// identity zeroed at the bias row, solved by LDLT. The bias is never
// penalized.
inline RidgeModel fit_ridge(const Tensor& H, const Tensor& Y, double alpha, int64_t horizon,
                            int64_t vars) {
    if (H.rank() != 2 || Y.rank() != 2 || H.dim(0) != Y.dim(0))
        throw std::invalid_argument("fit_ridge: row counts differ");
    if (H.dim(0) < 1) throw std::invalid_argument("fit_ridge: empty training set");
    if (alpha < 0.0) throw std::invalid_argument("fit_ridge: alpha must be >= 0");
    if (horizon * vars != Y.dim(1))
        throw std::invalid_argument("fit_ridge: horizon*vars != target width");
    const int64_t N = H.dim(0), d = H.dim(1), out = Y.dim(1);

    RowMat Z(N, d + 1);
    Z.leftCols(d) = as_eigen(H);
    Z.col(d).setOnes();

    if (alpha == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
        if (qr.rank() < d + 1)
            throw std::invalid_argument("fit_ridge: singular system (alpha = 0, rank " +
                                        std::to_string(qr.rank()) + " < " +
                                        std::to_string(d + 1) + ")");
    }

    Eigen::MatrixXd G = Z.transpose() * Z;
    for (int64_t i = 0; i < d; ++i) G(i, i) += alpha;  // bias row unpenalized
    Eigen::MatrixXd rhs = Z.transpose() * as_eigen(Y);
    Eigen::MatrixXd W = Eigen::LDLT<Eigen::MatrixXd>(G).solve(rhs);

    RidgeModel model;
    model.alpha = alpha;
    model.horizon = horizon;
    model.vars = vars;
    model.weights = Tensor::zeros({d + 1, out});
    Eigen::Map<RowMat>(model.weights.data.data(), d + 1, out) = W;
    return model;
}

inline RidgeModel fit_ridge(const Tensor& H, const Tensor& Y, double alpha) {
    return fit_ridge(H, Y, alpha, Y.dim(1), 1);
}

// Bias-augmented matrix-vector product reshaped to [k, m].
inline Tensor predict(const RidgeModel& model, const Tensor& h_t) {
    if (h_t.rank() != 1 || h_t.dim(0) != model.input_width())
        throw std::invalid_argument("predict: representation width " +
                                    std::to_string(h_t.rank() == 1 ? h_t.dim(0) : -1) +
                                    " does not match model width " +
                                    std::to_string(model.input_width()));
    const int64_t d = model.input_width(), out = model.output_width();
    Tensor flat = Tensor::zeros({out});
    for (int64_t j = 0; j < out; ++j) {
        double acc = model.weights.at(d, j);
        for (int64_t i = 0; i < d; ++i) acc += h_t.at(i) * model.weights.at(i, j);
        flat.at(j) = acc;
    }
    return Tensor({model.horizon, model.vars}, std::move(flat.data));
}

// Predictions for many representations at once: rows of H map to rows of the
// flattened [k*m] output.
inline Tensor predict_rows(const RidgeModel& model, const Tensor& H) {
    if (H.rank() != 2 || H.dim(1) != model.input_width())
        throw std::invalid_argument("predict_rows: width mismatch");
    const int64_t N = H.dim(0), d = model.input_width(), out = model.output_width();
    RowMat Z(N, d + 1);
    Z.leftCols(d) = as_eigen(H);
    Z.col(d).setOnes();
    RowMat P = Z * as_eigen(model.weights);
    (void)out;
    return from_eigen(P);
}

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    int64_t count = 0;
};

inline Metrics evaluate(const Tensor& predictions, const Tensor& truths) {
    if (predictions.dims != truths.dims)
        throw std::invalid_argument("evaluate: shape mismatch " + shape_string(predictions.dims) +
                                    " vs " + shape_string(truths.dims));
    if (predictions.size() == 0) throw std::invalid_argument("evaluate: empty input");
    Metrics m;
    m.count = predictions.size();
    for (int64_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions.at(i) - truths.at(i);
        m.mse += e * e;
        m.mae += std::abs(e);
    }
    m.mse /= static_cast<double>(m.count);
    m.mae /= static_cast<double>(m.count);
    return m;
}

// Fits one model per grid value on the training rows, evaluates MSE on the
// validation rows, returns the minimizer. Ties break toward smaller alpha.
inline double select_alpha(const Tensor& H_train, const Tensor& Y_train, const Tensor& H_val,
                           const Tensor& Y_val, std::vector<double> grid) {
    if (grid.empty()) throw std::invalid_argument("select_alpha: empty grid");
    std::sort(grid.begin(), grid.end());
    double best_alpha = grid.front();
    double best_mse = std::numeric_limits<double>::infinity();
    for (double alpha : grid) {
        RidgeModel model = fit_ridge(H_train, Y_train, alpha);
        const Metrics m = evaluate(predict_rows(model, H_val), Y_val);
        if (m.mse < best_mse) {
            best_mse = m.mse;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

}  // namespace tsi
