#ifndef SENA_TENSOR_HPP
#define SENA_TENSOR_HPP

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

/**
 * @file tensor.hpp
 * @brief Dense row-major matrices of 64-bit floats and the eager kernels behind every tape primitive.
 */

namespace sena {

/**
 * @brief Dense row-major matrix.
 *
 * Vectors are stored as 1 x n rows and scalars as 1 x 1 matrices.
 * All reductions run left to right over the row-major layout.
 */
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorKind::dimension, "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t nr = rows.size();
        std::size_t nc = nr ? rows.begin()->size() : 0;
        Tensor out(nr, nc);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != nc) {
                throw Error(ErrorKind::dimension, "ragged row list");
            }
            std::size_t j = 0;
            for (double v : r) {
                out(i, j++) = v;
            }
            ++i;
        }
        return out;
    }

    static Tensor row(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor(1, n, std::move(values));
    }

    static Tensor scalar(double value) { return Tensor(1, 1, value); }

    static Tensor identity(std::size_t n) {
        Tensor out(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            out(i, i) = 1.0;
        }
        return out;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::vector<std::size_t> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    double item() const {
        if (data_.size() != 1) {
            throw Error(ErrorKind::contract, "item() on a non-scalar tensor");
        }
        return data_[0];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> row_span(std::size_t i) { return std::span<double>(data_).subspan(i * cols_, cols_); }
    std::span<const double> row_span(std::size_t i) const { return std::span<const double>(data_).subspan(i * cols_, cols_); }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const Tensor& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

/**
 * Eager kernels. The tape records the same calls, so eager and taped
 * evaluation agree bit for bit.
 */
namespace ops {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(ErrorKind::dimension, std::string(what) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorKind::dimension, "matmul: " + shape_string(a) + " times " + shape_string(b));
    }
    Tensor out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t nc = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row_span(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a(i, k);
            auto brow = b.row_span(k);
            for (std::size_t j = 0; j < nc; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

template<typename Fun_>
Tensor map(const Tensor& a, Fun_ fun) {
    Tensor out = a;
    for (auto& v : out.values()) {
        v = fun(v);
    }
    return out;
}

template<typename Fun_>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, Fun_ fun) {
    require_same_shape(a, b, what);
    Tensor out = a;
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t k = 0; k < ov.size(); ++k) {
        ov[k] = fun(ov[k], bv[k]);
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", [](double x, double y) { return x + y; }); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", [](double x, double y) { return x - y; }); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", [](double x, double y) { return x * y; }); }
inline Tensor scale(const Tensor& a, double c) { return map(a, [c](double x) { return c * x; }); }
inline Tensor exp(const Tensor& a) { return map(a, [](double x) { return std::exp(x); }); }
inline Tensor square(const Tensor& a) { return map(a, [](double x) { return x * x; }); }
inline Tensor abs(const Tensor& a) { return map(a, [](double x) { return std::abs(x); }); }
inline Tensor tanh(const Tensor& a) { return map(a, [](double x) { return std::tanh(x); }); }

inline Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) {
            throw Error(ErrorKind::domain, "log of non-positive value " + std::to_string(v));
        }
    }
    return map(a, [](double x) { return std::log(x); });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
    return map(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
}

inline double sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) {
        s += v;
    }
    return s;
}

inline Tensor sum(const Tensor& a) { return Tensor::scalar(sum_all(a)); }

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) {
        throw Error(ErrorKind::contract, "mean of an empty tensor");
    }
    return Tensor::scalar(sum_all(a) / static_cast<double>(a.size()));
}

/**
 * Row-wise softmax of `temperature * a`.
 */
inline Tensor softmax_rows(const Tensor& a, double temperature) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto in = a.row_span(i);
        auto o = out.row_span(i);
        double top = -INFINITY;
        for (double v : in) {
            top = std::max(top, temperature * v);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(temperature * in[j] - top);
            total += o[j];
        }
        for (auto& v : o) {
            v /= total;
        }
    }
    return out;
}

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s;
}

/**
 * Kernel matrix `K(i, j) = exp(-|a_i - b_j|^2 / (2 bandwidth^2))` over the rows of `a` and `b`.
 */
inline Tensor gaussian_kernel(const Tensor& a, const Tensor& b, double bandwidth) {
    if (a.cols() != b.cols()) {
        throw Error(ErrorKind::dimension, "gaussian kernel: row widths " + shape_string(a) + " and " + shape_string(b));
    }
    if (!(bandwidth > 0.0)) {
        throw Error(ErrorKind::domain, "gaussian kernel bandwidth must be positive");
    }
    const double denom = 2.0 * bandwidth * bandwidth;
    Tensor out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            out(i, j) = std::exp(-squared_distance(a.row_span(i), b.row_span(j)) / denom);
        }
    }
    return out;
}

/**
 * Repeat a 1 x c row `nrows` times.
 */
inline Tensor broadcast_row(const Tensor& row, std::size_t nrows) {
    if (row.rows() != 1) {
        throw Error(ErrorKind::dimension, "broadcast_row expects a single row, got " + shape_string(row));
    }
    Tensor out(nrows, row.cols());
    for (std::size_t i = 0; i < nrows; ++i) {
        auto o = out.row_span(i);
        auto r = row.row_span(0);
        std::copy(r.begin(), r.end(), o.begin());
    }
    return out;
}

inline Tensor column_sums(const Tensor& a) {
    Tensor out(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(0, j) += a(i, j);
        }
    }
    return out;
}

inline Tensor column_means(const Tensor& a) {
    if (a.rows() == 0) {
        throw Error(ErrorKind::contract, "column means of an empty tensor");
    }
    return scale(column_sums(a), 1.0 / static_cast<double>(a.rows()));
}

inline Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
    Tensor out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = a.row_span(rows[i]);
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
}

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.values()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

}

}

#endif
