#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsi {

inline int64_t shape_product(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

// Dense row-major tensor of doubles. The carrier for every signal,
// activation and parameter in the library.
struct Tensor {
    std::vector<int64_t> dims;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<int64_t> shape, std::vector<double> values)
        : dims(std::move(shape)), data(std::move(values)) {
        if (static_cast<int64_t>(data.size()) != shape_product(dims))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<int64_t> shape) {
        int64_t n = shape_product(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
    }

    static Tensor full(std::vector<int64_t> shape, double value) {
        int64_t n = shape_product(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
    }

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t rank() const { return static_cast<int64_t>(dims.size()); }
    int64_t dim(int64_t i) const { return dims.at(static_cast<size_t>(i)); }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    // Row-major accessors for the ranks the encoders use.
    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * dims[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * dims[1] + j)]; }
    double& at(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Complex tensor stored as parallel real/imaginary planes.
struct ComplexTensor {
    std::vector<int64_t> dims;
    std::vector<double> re;
    std::vector<double> im;

    ComplexTensor() = default;

    ComplexTensor(std::vector<int64_t> shape, std::vector<double> real, std::vector<double> imag)
        : dims(std::move(shape)), re(std::move(real)), im(std::move(imag)) {
        int64_t n = shape_product(dims);
        if (static_cast<int64_t>(re.size()) != n || static_cast<int64_t>(im.size()) != n)
            throw std::invalid_argument("complex tensor plane length does not match shape");
    }

    static ComplexTensor zeros(std::vector<int64_t> shape) {
        int64_t n = shape_product(shape);
        std::vector<double> real(static_cast<size_t>(n), 0.0);
        std::vector<double> imag(static_cast<size_t>(n), 0.0);
        return ComplexTensor(std::move(shape), std::move(real), std::move(imag));
    }

    int64_t size() const { return static_cast<int64_t>(re.size()); }
    int64_t rank() const { return static_cast<int64_t>(dims.size()); }
    int64_t dim(int64_t i) const { return dims.at(static_cast<size_t>(i)); }

    bool same_shape(const ComplexTensor& other) const { return dims == other.dims; }

    bool all_finite() const {
        for (double v : re)
            if (!std::isfinite(v)) return false;
        for (double v : im)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_string(const std::vector<int64_t>& dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

}  // namespace tsi
