#ifndef SENA_LOSSES_HPP
#define SENA_LOSSES_HPP

#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

/**
 * @file losses.hpp
 * @brief Reconstruction, variational, distribution-matching and sparsity objectives.
 *
 * Each loss is a template over the eager and tape backends; the eager overloads are thin wrappers.
 */

namespace sena {

struct LossWeights {
    double beta_kld = 0.01;
    double gamma_mmd = 1.0;
    double rho_l1 = 1e-3;
    double ell1_encoder = 0.0;
};

enum class MmdEstimator { unbiased, biased };

/**
 * @brief Kernel bandwidth choice for `mmd_rbf()`.
 *
 * A positive `fixed` value is used as is; otherwise the lower median of the pairwise
 * Euclidean distances over the pooled sample.
 */
struct MmdOptions {
    MmdEstimator estimator = MmdEstimator::unbiased;
    double fixed_bandwidth = 0.0;
};

struct LossParts {
    double mse = 0.0;
    double kld = 0.0;
    double mmd = 0.0;
    double l1 = 0.0;
    double ell1 = 0.0;
};

namespace loss {

template<typename Backend_>
typename Backend_::Value mse(Backend_& be, const typename Backend_::Value& x_hat, const typename Backend_::Value& x) {
    const Tensor& xv = be.value(x);
    ops::require_same_shape(be.value(x_hat), xv, "mse");
    if (xv.size() == 0) {
        throw Error(ErrorKind::contract, "mse of an empty batch");
    }
    return be.mean(be.square(be.sub(x_hat, x)));
}

/** Mean over cells of 0.5 * sum_j (mu^2 + exp(logvar) - 1 - logvar). */
template<typename Backend_>
typename Backend_::Value kld(Backend_& be, const typename Backend_::Value& mu, const typename Backend_::Value& logvar) {
    const Tensor& mv = be.value(mu);
    ops::require_same_shape(mv, be.value(logvar), "kld");
    if (mv.rows() == 0) {
        throw Error(ErrorKind::contract, "kld of an empty batch");
    }
    auto inner = be.sub(be.add(be.square(mu), be.exp(logvar)), be.add(logvar, be.constant(Tensor(mv.rows(), mv.cols(), 1.0))));
    return be.scale(be.sum(inner), 0.5 / static_cast<double>(mv.rows()));
}

inline Tensor off_diagonal(std::size_t n) {
    Tensor out(n, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 0.0;
    }
    return out;
}

/**
 * Squared maximum mean discrepancy with a Gaussian kernel at a given bandwidth.
 * The unbiased form drops the diagonal of the within-sample kernel matrices.
 */
template<typename Backend_>
typename Backend_::Value mmd(Backend_& be, const typename Backend_::Value& a, const typename Backend_::Value& b, double bandwidth, bool unbiased) {
    const std::size_t n = be.value(a).rows(), m = be.value(b).rows();
    auto kab = be.mean(be.gaussian_kernel(a, b, bandwidth));
    typename Backend_::Value kaa, kbb;
    if (unbiased) {
        kaa = be.scale(be.sum(be.mul(be.gaussian_kernel(a, a, bandwidth), be.constant(off_diagonal(n)))), 1.0 / static_cast<double>(n * (n - 1)));
        kbb = be.scale(be.sum(be.mul(be.gaussian_kernel(b, b, bandwidth), be.constant(off_diagonal(m)))), 1.0 / static_cast<double>(m * (m - 1)));
    } else {
        kaa = be.mean(be.gaussian_kernel(a, a, bandwidth));
        kbb = be.mean(be.gaussian_kernel(b, b, bandwidth));
    }
    return be.sub(be.add(kaa, kbb), be.scale(kab, 2.0));
}

/** Sum of |A_ij| over the strict upper triangle. */
template<typename Backend_>
typename Backend_::Value l1_adjacency(Backend_& be, const typename Backend_::Value& a_raw) {
    const std::size_t d = be.value(a_raw).rows();
    Tensor upper(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            upper(i, j) = 1.0;
        }
    }
    return be.sum(be.abs(be.mul(a_raw, be.constant(upper))));
}

template<typename Backend_>
typename Backend_::Value l1(Backend_& be, const typename Backend_::Value& w) {
    return be.sum(be.abs(w));
}

}

/**
 * Lower median of the pairwise Euclidean distances between distinct rows of the pooled sample.
 * Falls back to 1 when every pooled row is identical.
 */
inline double median_bandwidth(const Tensor& a, const Tensor& b) {
    std::vector<const double*> rows;
    for (std::size_t i = 0; i < a.rows(); ++i) rows.push_back(a.row_span(i).data());
    for (std::size_t i = 0; i < b.rows(); ++i) rows.push_back(b.row_span(i).data());
    const std::size_t w = a.cols();
    std::vector<double> dist;
    dist.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            dist.push_back(std::sqrt(ops::squared_distance({rows[i], w}, {rows[j], w})));
        }
    }
    if (dist.empty()) {
        return 1.0;
    }
    const std::size_t mid = (dist.size() - 1) / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
    const double med = dist[mid];
    return med > 0.0 ? med : 1.0;
}

struct MmdResult {
    double value = 0.0;
    double bandwidth = 0.0;
    bool biased_fallback = false;
};

inline double resolve_bandwidth(const Tensor& a, const Tensor& b, const MmdOptions& opt) {
    return opt.fixed_bandwidth > 0.0 ? opt.fixed_bandwidth : median_bandwidth(a, b);
}

inline MmdResult mmd_rbf(const Tensor& a, const Tensor& b, const MmdOptions& opt = {}) {
    if (a.rows() == 0 || b.rows() == 0) {
        throw Error(ErrorKind::contract, "mmd needs non-empty samples");
    }
    if (a.cols() != b.cols()) {
        throw Error(ErrorKind::dimension, "mmd samples have different widths");
    }
    // Canonical operand order makes the estimate exactly symmetric in its arguments.
    if (b.storage() < a.storage()) {
        return mmd_rbf(b, a, opt);
    }
    MmdResult res;
    res.bandwidth = resolve_bandwidth(a, b, opt);
    bool unbiased = opt.estimator == MmdEstimator::unbiased;
    if (unbiased && (a.rows() < 2 || b.rows() < 2)) {
        unbiased = false;
        res.biased_fallback = true;
    }
    EagerBackend be;
    res.value = loss::mmd(be, a, b, res.bandwidth, unbiased).item();
    return res;
}

inline double mse(const Tensor& x_hat, const Tensor& x) {
    EagerBackend be;
    return loss::mse(be, x_hat, x).item();
}

inline double kld(const Tensor& mu, const Tensor& logvar) {
    EagerBackend be;
    return loss::kld(be, mu, logvar).item();
}

inline double l1_adj(const Tensor& a) {
    EagerBackend be;
    return loss::l1_adjacency(be, a).item();
}

/**
 * mse + beta * kld + gamma * mmd + rho * l1 (+ ell1_encoder * first-layer l1).
 */
inline double total_loss(const LossWeights& w, const LossParts& parts) {
    for (double v : {parts.mse, parts.kld, parts.mmd, parts.l1, parts.ell1}) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::diverged, "non-finite loss component");
        }
    }
    return parts.mse + w.beta_kld * parts.kld + w.gamma_mmd * parts.mmd + w.rho_l1 * parts.l1 + w.ell1_encoder * parts.ell1;
}

}

#endif
