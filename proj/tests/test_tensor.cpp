#include "sena/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sena;

namespace {

Tensor loop_matmul(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += a(i, k) * b(k, j);
            }
            out(i, j) = s;
        }
    }
    return out;
}

}

TEST(Tensor, ShapeMustMatchData) {
    EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), Error);
    try {
        Tensor(2, 2, std::vector<double>{1, 2, 3});
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension);
    }
}

TEST(Tensor, MatmulSmallCase) {
    auto a = Tensor::from_rows({{1, 2}, {3, 4}});
    auto b = Tensor::from_rows({{1}, {1}});
    EXPECT_EQ(ops::matmul(a, b), Tensor::from_rows({{3}, {7}}));
}

TEST(Tensor, MatmulMatchesLoop) {
    Tensor a(3, 5), b(5, 4);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::sin(0.7 * k);
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = std::cos(1.3 * k);
    const auto got = ops::matmul(a, b);
    const auto want = loop_matmul(a, b);
    for (std::size_t k = 0; k < got.size(); ++k) {
        EXPECT_NEAR(got[k], want[k], 1e-14);
    }
}

TEST(Tensor, ShapeMismatchIsDimensionError) {
    Tensor a(2, 3), b(2, 3);
    try {
        ops::matmul(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::dimension);
    }
    EXPECT_THROW(ops::add(a, Tensor(3, 2)), Error);
    EXPECT_THROW(ops::broadcast_row(a, 4), Error);
}

TEST(Tensor, LogOfNonPositiveIsDomainError) {
    try {
        ops::log(Tensor::row({1.0, 0.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
    }
}

TEST(Tensor, LeakyRelu) {
    const auto y = ops::leaky_relu(Tensor::row({-1.0, 2.0}), 0.01);
    EXPECT_DOUBLE_EQ(y[0], -0.01);
    EXPECT_DOUBLE_EQ(y[1], 2.0);
}

TEST(Tensor, SoftmaxUniformLogits) {
    const auto y = ops::softmax_rows(Tensor::row({0, 0, 0}), 100.0);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(y[k], 1.0 / 3.0, 1e-15);
    }
}

TEST(Tensor, SoftmaxClosedForm) {
    const auto y = ops::softmax_rows(Tensor::row({1, 0}), 1.0);
    const double e = std::exp(1.0);
    EXPECT_NEAR(y[0], e / (e + 1), 1e-15);
    EXPECT_NEAR(y[1], 1 / (e + 1), 1e-15);
}

TEST(Tensor, SoftmaxLargeLogitsStayFinite) {
    const auto y = ops::softmax_rows(Tensor::row({1000, 0, -1000}), 100.0);
    EXPECT_TRUE(y.all_finite());
    EXPECT_NEAR(y[0], 1.0, 1e-15);
}

TEST(Tensor, GaussianKernel) {
    auto a = Tensor::from_rows({{0, 0}, {1, 1}});
    auto b = Tensor::from_rows({{0, 1}});
    const auto k = ops::gaussian_kernel(a, b, 2.0);
    EXPECT_NEAR(k(0, 0), std::exp(-1.0 / 8.0), 1e-15);
    EXPECT_NEAR(k(1, 0), std::exp(-1.0 / 8.0), 1e-15);
    EXPECT_THROW(ops::gaussian_kernel(a, b, 0.0), Error);
}

TEST(Tensor, Reductions) {
    auto a = Tensor::from_rows({{1, 2}, {3, 4}});
    EXPECT_DOUBLE_EQ(ops::sum(a).item(), 10.0);
    EXPECT_DOUBLE_EQ(ops::mean(a).item(), 2.5);
    EXPECT_EQ(ops::column_means(a), Tensor::row({2, 3}));
    EXPECT_THROW(ops::mean(Tensor()), Error);
}
