#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsi/tensor.hpp"

// Forward kernels and their vector-Jacobian products. The autodiff tape and
// the plain (inference) encoder paths both call these, so the two paths are
// bit-identical by construction.
namespace tsi::ops {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// FFT core. Unnormalized in both directions; `invert` flips the kernel sign.
// Power-of-two lengths use iterative radix-2; other lengths fall back to a
// direct transform with exact-angle twiddles (accurate and fast enough for
// the window sizes this library works at).
// ---------------------------------------------------------------------------
namespace detail {

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline void fft_radix2(std::vector<std::complex<double>>& a, bool invert) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (invert ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        for (size_t i = 0; i < n; i += len) {
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(j));
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }
}

inline void dft_direct(std::vector<std::complex<double>>& a, bool invert) {
    const int64_t n = static_cast<int64_t>(a.size());
    const double base = (invert ? 2.0 : -2.0) * M_PI / static_cast<double>(n);
    std::vector<std::complex<double>> out(a.size());
    for (int64_t f = 0; f < n; ++f) {
        std::complex<double> acc(0.0, 0.0);
        for (int64_t t = 0; t < n; ++t) {
            // Reduce f*t mod n before forming the angle to keep twiddles exact.
            const int64_t k = (f * t) % n;
            acc += a[static_cast<size_t>(t)] * std::polar(1.0, base * static_cast<double>(k));
        }
        out[static_cast<size_t>(f)] = acc;
    }
    a.swap(out);
}

inline void fft(std::vector<std::complex<double>>& a, bool invert) {
    if (a.size() <= 1) return;
    if (is_pow2(static_cast<int64_t>(a.size())))
        fft_radix2(a, invert);
    else
        dft_direct(a, invert);
}

}  // namespace detail

inline int64_t rfft_bins(int64_t time) { return time / 2 + 1; }

// Real-to-complex DFT along the time axis of a [time, c] tensor, one
// transform per channel. Unnormalized forward convention.
inline ComplexTensor rfft(const Tensor& x) {
    require(x.rank() == 2, "rfft expects a [time, channels] tensor, got " + shape_string(x.dims));
    const int64_t time = x.dim(0), c = x.dim(1);
    const int64_t bins = rfft_bins(time);
    ComplexTensor out = ComplexTensor::zeros({bins, c});
    std::vector<std::complex<double>> buf(static_cast<size_t>(time));
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t t = 0; t < time; ++t) buf[static_cast<size_t>(t)] = {x.at(t, ch), 0.0};
        detail::fft(buf, false);
        for (int64_t f = 0; f < bins; ++f) {
            out.re[static_cast<size_t>(f * c + ch)] = buf[static_cast<size_t>(f)].real();
            out.im[static_cast<size_t>(f * c + ch)] = buf[static_cast<size_t>(f)].imag();
        }
    }
    return out;
}

// Complex-to-real inverse under the 1/time convention. The stored bins are
// extended Hermitianly, so the imaginary parts of the DC bin (and the Nyquist
// bin for even lengths) do not influence the output.
inline Tensor irfft(const ComplexTensor& X, int64_t time) {
    require(X.rank() == 2, "irfft expects a [bins, channels] tensor, got " + shape_string(X.dims));
    require(time >= 1, "irfft time must be >= 1");
    require(X.dim(0) == rfft_bins(time),
            "irfft: " + std::to_string(X.dim(0)) + " bins inconsistent with time length " +
                std::to_string(time) + " (expected " + std::to_string(rfft_bins(time)) + ")");
    const int64_t bins = X.dim(0), c = X.dim(1);
    Tensor out = Tensor::zeros({time, c});
    std::vector<std::complex<double>> buf(static_cast<size_t>(time));
    for (int64_t ch = 0; ch < c; ++ch) {
        buf.assign(static_cast<size_t>(time), {0.0, 0.0});
        buf[0] = {X.re[static_cast<size_t>(ch)], 0.0};
        for (int64_t f = 1; f < bins; ++f) {
            std::complex<double> v(X.re[static_cast<size_t>(f * c + ch)],
                                   X.im[static_cast<size_t>(f * c + ch)]);
            if (time % 2 == 0 && f == time / 2) v = {v.real(), 0.0};
            buf[static_cast<size_t>(f)] = v;
            if (f != time - f) buf[static_cast<size_t>(time - f)] = std::conj(v);
        }
        detail::fft(buf, true);
        for (int64_t t = 0; t < time; ++t)
            out.at(t, ch) = buf[static_cast<size_t>(t)].real() / static_cast<double>(time);
    }
    return out;
}

// Adjoint of rfft: scatters the cotangent back through the forward transform.
inline Tensor rfft_vjp(const ComplexTensor& g, int64_t time) {
    const int64_t bins = rfft_bins(time), c = g.dim(1);
    require(g.dim(0) == bins, "rfft_vjp: cotangent bins mismatch");
    Tensor dx = Tensor::zeros({time, c});
    std::vector<std::complex<double>> buf(static_cast<size_t>(time));
    for (int64_t ch = 0; ch < c; ++ch) {
        buf.assign(static_cast<size_t>(time), {0.0, 0.0});
        for (int64_t f = 0; f < bins; ++f)
            buf[static_cast<size_t>(f)] = {g.re[static_cast<size_t>(f * c + ch)],
                                           g.im[static_cast<size_t>(f * c + ch)]};
        detail::fft(buf, true);  // unnormalized inverse kernel exp(+i2pi ft/T)
        for (int64_t t = 0; t < time; ++t) dx.at(t, ch) = buf[static_cast<size_t>(t)].real();
    }
    return dx;
}

// Adjoint of irfft. Bin weights mirror the Hermitian fold: 1 at DC and
// Nyquist, 2 elsewhere, all scaled by 1/time.
inline ComplexTensor irfft_vjp(const Tensor& g) {
    const int64_t time = g.dim(0), c = g.dim(1);
    const int64_t bins = rfft_bins(time);
    ComplexTensor F = rfft(g);
    ComplexTensor dX = ComplexTensor::zeros({bins, c});
    for (int64_t f = 0; f < bins; ++f) {
        double w = 2.0;
        if (f == 0 || (time % 2 == 0 && f == time / 2)) w = 1.0;
        w /= static_cast<double>(time);
        for (int64_t ch = 0; ch < c; ++ch) {
            dX.re[static_cast<size_t>(f * c + ch)] = w * F.re[static_cast<size_t>(f * c + ch)];
            dX.im[static_cast<size_t>(f * c + ch)] = w * F.im[static_cast<size_t>(f * c + ch)];
        }
    }
    // The inverse ignores these imaginary parts, so nothing flows back to them.
    for (int64_t ch = 0; ch < c; ++ch) {
        dX.im[static_cast<size_t>(ch)] = 0.0;
        if (time % 2 == 0) dX.im[static_cast<size_t>((time / 2) * c + ch)] = 0.0;
    }
    return dX;
}

// ---------------------------------------------------------------------------
// Per-frequency complex affine map: out[f, l] = sum_n P[f, n, l] * Q[f, n] + B[f, l].
// ---------------------------------------------------------------------------
inline ComplexTensor complex_linear(const ComplexTensor& Q, const ComplexTensor& P,
                                    const ComplexTensor& B) {
    require(Q.rank() == 2 && P.rank() == 3 && B.rank() == 2,
            "complex_linear expects Q[bins,c_in], P[bins,c_in,c_out], B[bins,c_out]");
    const int64_t bins = Q.dim(0), cin = Q.dim(1);
    require(P.dim(0) == bins && P.dim(1) == cin,
            "complex_linear: P shape " + shape_string(P.dims) + " does not match Q " +
                shape_string(Q.dims));
    const int64_t cout = P.dim(2);
    require(B.dim(0) == bins && B.dim(1) == cout, "complex_linear: B shape mismatch");
    ComplexTensor out = ComplexTensor::zeros({bins, cout});
    for (int64_t f = 0; f < bins; ++f) {
        for (int64_t n = 0; n < cin; ++n) {
            const double qr = Q.re[static_cast<size_t>(f * cin + n)];
            const double qi = Q.im[static_cast<size_t>(f * cin + n)];
            const size_t pbase = static_cast<size_t>((f * cin + n) * cout);
            const size_t obase = static_cast<size_t>(f * cout);
            for (int64_t l = 0; l < cout; ++l) {
                const double pr = P.re[pbase + static_cast<size_t>(l)];
                const double pi = P.im[pbase + static_cast<size_t>(l)];
                out.re[obase + static_cast<size_t>(l)] += pr * qr - pi * qi;
                out.im[obase + static_cast<size_t>(l)] += pr * qi + pi * qr;
            }
        }
        const size_t obase = static_cast<size_t>(f * cout);
        for (int64_t l = 0; l < cout; ++l) {
            out.re[obase + static_cast<size_t>(l)] += B.re[obase + static_cast<size_t>(l)];
            out.im[obase + static_cast<size_t>(l)] += B.im[obase + static_cast<size_t>(l)];
        }
    }
    return out;
}

inline void complex_linear_vjp(const ComplexTensor& Q, const ComplexTensor& P,
                               const ComplexTensor& g, ComplexTensor& dQ, ComplexTensor& dP,
                               ComplexTensor& dB) {
    const int64_t bins = Q.dim(0), cin = Q.dim(1), cout = P.dim(2);
    for (int64_t f = 0; f < bins; ++f) {
        const size_t obase = static_cast<size_t>(f * cout);
        for (int64_t n = 0; n < cin; ++n) {
            const size_t qidx = static_cast<size_t>(f * cin + n);
            const double qr = Q.re[qidx], qi = Q.im[qidx];
            const size_t pbase = static_cast<size_t>((f * cin + n) * cout);
            double acc_qr = 0.0, acc_qi = 0.0;
            for (int64_t l = 0; l < cout; ++l) {
                const double gr = g.re[obase + static_cast<size_t>(l)];
                const double gi = g.im[obase + static_cast<size_t>(l)];
                const double pr = P.re[pbase + static_cast<size_t>(l)];
                const double pi = P.im[pbase + static_cast<size_t>(l)];
                dP.re[pbase + static_cast<size_t>(l)] += gr * qr + gi * qi;
                dP.im[pbase + static_cast<size_t>(l)] += -gr * qi + gi * qr;
                acc_qr += gr * pr + gi * pi;
                acc_qi += -gr * pi + gi * pr;
            }
            dQ.re[qidx] += acc_qr;
            dQ.im[qidx] += acc_qi;
        }
        for (int64_t l = 0; l < cout; ++l) {
            dB.re[obase + static_cast<size_t>(l)] += g.re[obase + static_cast<size_t>(l)];
            dB.im[obase + static_cast<size_t>(l)] += g.im[obase + static_cast<size_t>(l)];
        }
    }
}

// ---------------------------------------------------------------------------
// Dilated causal convolution with implicit zero left-padding. Tap j of the
// kernel reaches back j*dilation steps, so output[t] never sees the future
// and the output keeps the input's time length.
// ---------------------------------------------------------------------------
inline Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, int64_t dilation) {
    require(x.rank() == 2, "conv1d_causal expects x[time, c_in], got " + shape_string(x.dims));
    require(kernel.rank() == 3,
            "conv1d_causal expects kernel[taps, c_in, c_out], got " + shape_string(kernel.dims));
    require(dilation >= 1, "conv1d_causal: dilation must be >= 1");
    const int64_t time = x.dim(0), cin = x.dim(1);
    require(kernel.dim(1) == cin,
            "conv1d_causal: x has " + std::to_string(cin) + " channels but kernel expects " +
                std::to_string(kernel.dim(1)));
    const int64_t taps = kernel.dim(0), cout = kernel.dim(2);
    Tensor out = Tensor::zeros({time, cout});
    for (int64_t t = 0; t < time; ++t) {
        double* orow = &out.data[static_cast<size_t>(t * cout)];
        for (int64_t tap = 0; tap < taps; ++tap) {
            const int64_t src = t - tap * dilation;
            if (src < 0) continue;
            const double* xrow = &x.data[static_cast<size_t>(src * cin)];
            for (int64_t i = 0; i < cin; ++i) {
                const double xv = xrow[i];
                const double* krow = &kernel.data[static_cast<size_t>((tap * cin + i) * cout)];
                for (int64_t l = 0; l < cout; ++l) orow[l] += xv * krow[l];
            }
        }
    }
    return out;
}

inline void conv1d_causal_vjp(const Tensor& x, const Tensor& kernel, int64_t dilation,
                              const Tensor& g, Tensor& dx, Tensor& dkernel) {
    const int64_t time = x.dim(0), cin = x.dim(1);
    const int64_t taps = kernel.dim(0), cout = kernel.dim(2);
    for (int64_t t = 0; t < time; ++t) {
        const double* grow = &g.data[static_cast<size_t>(t * cout)];
        for (int64_t tap = 0; tap < taps; ++tap) {
            const int64_t src = t - tap * dilation;
            if (src < 0) continue;
            const double* xrow = &x.data[static_cast<size_t>(src * cin)];
            double* dxrow = &dx.data[static_cast<size_t>(src * cin)];
            for (int64_t i = 0; i < cin; ++i) {
                const size_t kbase = static_cast<size_t>((tap * cin + i) * cout);
                const double* krow = &kernel.data[kbase];
                double* dkrow = &dkernel.data[kbase];
                double acc = 0.0;
                for (int64_t l = 0; l < cout; ++l) {
                    acc += grow[l] * krow[l];
                    dkrow[l] += grow[l] * xrow[i];
                }
                dxrow[i] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense algebra and elementwise maps.
// ---------------------------------------------------------------------------
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul expects two rank-2 tensors");
    require(a.dim(1) == b.dim(0), "matmul: inner dimensions " + std::to_string(a.dim(1)) +
                                      " and " + std::to_string(b.dim(0)) + " differ");
    const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int64_t i = 0; i < n; ++i) {
        double* orow = &out.data[static_cast<size_t>(i * m)];
        for (int64_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            const double* brow = &b.data[static_cast<size_t>(p * m)];
            for (int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline void matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da, Tensor& db) {
    const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        const double* grow = &g.data[static_cast<size_t>(i * m)];
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = &b.data[static_cast<size_t>(p * m)];
            double acc = 0.0;
            for (int64_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            da.at(i, p) += acc;
        }
        for (int64_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            double* dbrow = &db.data[static_cast<size_t>(p * m)];
            for (int64_t j = 0; j < m; ++j) dbrow[j] += av * grow[j];
        }
    }
}

// Matrix [n, d] times vector [d] -> [n].
inline Tensor matvec(const Tensor& m, const Tensor& v) {
    require(m.rank() == 2 && v.rank() == 1, "matvec expects m[n,d] and v[d]");
    require(m.dim(1) == v.dim(0), "matvec: dimension mismatch");
    const int64_t n = m.dim(0), d = m.dim(1);
    Tensor out = Tensor::zeros({n});
    for (int64_t i = 0; i < n; ++i) {
        const double* row = &m.data[static_cast<size_t>(i * d)];
        double acc = 0.0;
        for (int64_t j = 0; j < d; ++j) acc += row[j] * v.at(j);
        out.at(i) = acc;
    }
    return out;
}

inline void matvec_vjp(const Tensor& m, const Tensor& v, const Tensor& g, Tensor& dm, Tensor& dv) {
    const int64_t n = m.dim(0), d = m.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        const double gi = g.at(i);
        const double* row = &m.data[static_cast<size_t>(i * d)];
        double* drow = &dm.data[static_cast<size_t>(i * d)];
        for (int64_t j = 0; j < d; ++j) {
            drow[j] += gi * v.at(j);
            dv.at(j) += gi * row[j];
        }
    }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add: shape mismatch " + shape_string(a.dims) + " vs " +
                                 shape_string(b.dims));
    Tensor out = a;
    for (int64_t i = 0; i < out.size(); ++i) out.data[static_cast<size_t>(i)] += b.data[static_cast<size_t>(i)];
    return out;
}

// x[rows, c] + bias[c], broadcast across rows.
inline Tensor add_rows(const Tensor& x, const Tensor& bias) {
    require(x.rank() == 2 && bias.rank() == 1 && x.dim(1) == bias.dim(0),
            "add_rows expects x[rows,c] and bias[c]");
    Tensor out = x;
    const int64_t rows = x.dim(0), c = x.dim(1);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(i, j) += bias.at(j);
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mul: shape mismatch");
    Tensor out = a;
    for (int64_t i = 0; i < out.size(); ++i) out.data[static_cast<size_t>(i)] *= b.data[static_cast<size_t>(i)];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

inline Tensor tanh_map(const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

// Average over the time axis: [time, c] -> [c].
inline Tensor mean_pool_time(const Tensor& x) {
    require(x.rank() == 2, "mean_pool_time expects [time, c]");
    const int64_t time = x.dim(0), c = x.dim(1);
    Tensor out = Tensor::zeros({c});
    for (int64_t t = 0; t < time; ++t)
        for (int64_t j = 0; j < c; ++j) out.at(j) += x.at(t, j);
    for (int64_t j = 0; j < c; ++j) out.at(j) /= static_cast<double>(time);
    return out;
}

// Row t of a [time, c] tensor as a [c] vector.
inline Tensor row_at(const Tensor& x, int64_t t) {
    require(x.rank() == 2, "row_at expects [time, c]");
    require(t >= 0 && t < x.dim(0), "row_at: index out of range");
    const int64_t c = x.dim(1);
    Tensor out = Tensor::zeros({c});
    for (int64_t j = 0; j < c; ++j) out.at(j) = x.at(t, j);
    return out;
}

// Element i of a vector as a scalar tensor.
inline Tensor element_at(const Tensor& v, int64_t i) {
    require(v.rank() == 1, "element_at expects a vector");
    require(i >= 0 && i < v.dim(0), "element_at: index out of range");
    return Tensor::scalar(v.at(i));
}

inline Tensor concat_vec(const Tensor& a, const Tensor& b) {
    require(a.rank() == 1 && b.rank() == 1, "concat_vec expects vectors");
    std::vector<double> data = a.data;
    data.insert(data.end(), b.data.begin(), b.data.end());
    return Tensor({a.dim(0) + b.dim(0)}, std::move(data));
}

inline Tensor l2_normalize(const Tensor& v) {
    require(v.rank() == 1, "l2_normalize expects a vector");
    double n2 = 0.0;
    for (double x : v.data) n2 += x * x;
    const double n = std::sqrt(n2);
    require(n > 0.0, "l2_normalize: zero-norm input");
    return scale(v, 1.0 / n);
}

inline void l2_normalize_vjp(const Tensor& v, const Tensor& y, const Tensor& g, Tensor& dv) {
    double n2 = 0.0;
    for (double x : v.data) n2 += x * x;
    const double n = std::sqrt(n2);
    double gy = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) gy += g.at(i) * y.at(i);
    for (int64_t i = 0; i < v.size(); ++i) dv.at(i) += (g.at(i) - gy * y.at(i)) / n;
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
    require(a.rank() == 1 && b.rank() == 1 && a.dim(0) == b.dim(0),
            "dot expects equal-length vectors");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
    return Tensor::scalar(acc);
}

inline Tensor log_softmax(const Tensor& v) {
    require(v.rank() == 1, "log_softmax expects a vector");
    double mx = v.at(0);
    for (double x : v.data) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : v.data) z += std::exp(x - mx);
    const double lz = mx + std::log(z);
    Tensor out = v;
    for (double& x : out.data) x -= lz;
    return out;
}

inline void log_softmax_vjp(const Tensor& y, const Tensor& g, Tensor& dv) {
    double gs = 0.0;
    for (double x : g.data) gs += x;
    for (int64_t i = 0; i < y.size(); ++i) dv.at(i) += g.at(i) - std::exp(y.at(i)) * gs;
}

inline Tensor l1_norm(const Tensor& v) {
    double acc = 0.0;
    for (double x : v.data) acc += std::abs(x);
    return Tensor::scalar(acc);
}

inline Tensor l2_norm(const Tensor& v) {
    double acc = 0.0;
    for (double x : v.data) acc += x * x;
    return Tensor::scalar(std::sqrt(acc));
}

inline Tensor mean_all(const Tensor& v) {
    double acc = 0.0;
    for (double x : v.data) acc += x;
    return Tensor::scalar(acc / static_cast<double>(v.size()));
}

inline Tensor sum_all(const Tensor& v) {
    double acc = 0.0;
    for (double x : v.data) acc += x;
    return Tensor::scalar(acc);
}

}  // namespace tsi::ops
