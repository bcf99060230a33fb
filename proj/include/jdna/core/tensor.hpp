#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jdna/core/error.hpp"

namespace jdna {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_dims();
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (shape_size(shape_) != data_.size())
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<std::vector<double>> const& values) {
        Tensor t({rows, cols});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = values.at(i).at(j);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return rank() == 1 ? 1 : shape_.at(1); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * cols(), cols()); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * cols(), cols());
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    // Bitwise equality (distinguishes -0.0 from 0.0 only through value compare; NaN never equal).
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (std::size_t d : shape_)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

namespace kernels {

// c[m x n] += a[m x k] * b[k x n]; each c(i,j) accumulates k in ascending order.
inline void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    const double* __restrict ap = a.data();
    const double* __restrict bp = b.data();
    double* __restrict cp = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict ci = cp + i * n;
        const double* ai = ap + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* __restrict bk = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]; accumulation over m in ascending order.
inline void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                        std::size_t m, std::size_t k, std::size_t n) {
    const double* __restrict ap = a.data();
    const double* __restrict bp = b.data();
    double* __restrict cp = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = ap + i * k;
        const double* __restrict bi = bp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* __restrict cr = cp + p * n;
            for (std::size_t j = 0; j < n; ++j) cr[j] += av * bi[j];
        }
    }
}

inline void transpose(std::span<const double> a, std::span<double> out, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
}

}  // namespace kernels

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    if (a.cols() != b.rows())
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    Tensor c({a.rows(), b.cols()});
    kernels::gemm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose expects a 2-D tensor");
    Tensor t({a.cols(), a.rows()});
    kernels::transpose(a.data(), t.data(), a.rows(), a.cols());
    return t;
}

inline Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

// (1 - alpha) * a + alpha * b, elementwise.
inline Tensor lerp(const Tensor& a, const Tensor& b, double alpha) {
    if (a.shape() != b.shape())
        throw DimensionError("lerp shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::lerp(a[i], b[i], alpha);
    return out;
}

}  // namespace jdna
