#ifndef SENA_ANALYSIS_HPP
#define SENA_ANALYSIS_HPP

#include "data.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

/**
 * @file analysis.hpp
 * @brief Post-hoc validations: the E(U) identity, causal-edge robustness across runs and
 * aggregation of gene-set groups onto latent factors.
 */

namespace sena {

struct IdentityGroup {
    std::string name;
    Tensor x;
};

struct IdentityResult {
    std::string group;
    std::size_t n_cells = 0;

    /** Monte-Carlo mean of each causal factor. */
    std::vector<double> lhs;

    /** mean(head input) * Delta_mu * L per factor. */
    std::vector<double> rhs;

    double pearson = 0.0;
};

/**
 * Compare the sampled mean of U = z^T L, z ~ N(mu, sigma^2) per cell, with the closed form
 * mean(alpha)^T Delta_mu L, for each cell group.
 */
inline std::vector<IdentityResult> identity_check(const Model& m, const std::vector<IdentityGroup>& groups, std::size_t n_draws, Rng& rng) {
    if (n_draws < 1000) {
        throw Error(ErrorKind::contract, "identity check needs at least 1000 draws");
    }
    const std::size_t d = m.latent_dim();
    const Tensor L = model_L(m);
    const Tensor delta = mean_head(m);
    std::vector<IdentityResult> out;
    for (const auto& g : groups) {
        if (g.x.rows() == 0) {
            throw Error(ErrorKind::insufficient_sample, "identity group " + g.name + " has no cells");
        }
        const Tensor alpha = encode_alpha(m, g.x);
        EagerBackend be;
        const auto p = eager_values(m);
        const Tensor h = graph::head_input(be, m, p, alpha);
        const Tensor mu = graph::mu(be, m, p, h);
        const Tensor sd = ops::exp(ops::scale(graph::logvar(be, p, h), 0.5));

        std::vector<double> acc(d, 0.0), z(d);
        for (std::size_t c = 0; c < g.x.rows(); ++c) {
            for (std::size_t t = 0; t < n_draws; ++t) {
                for (std::size_t j = 0; j < d; ++j) {
                    z[j] = mu(c, j) + sd(c, j) * rng.normal();
                }
                for (std::size_t j = 0; j < d; ++j) {
                    double u = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        u += z[i] * L(i, j);
                    }
                    acc[j] += u;
                }
            }
        }
        IdentityResult r;
        r.group = g.name;
        r.n_cells = g.x.rows();
        const double total = static_cast<double>(g.x.rows()) * static_cast<double>(n_draws);
        for (double v : acc) {
            r.lhs.push_back(v / total);
        }
        const Tensor rhs = ops::matmul(ops::matmul(ops::column_means(h), delta), L);
        r.rhs.assign(rhs.values().begin(), rhs.values().end());
        r.pearson = stats::pearson(r.lhs, r.rhs);
        out.push_back(std::move(r));
    }
    return out;
}

/**
 * One group per label present in the dataset (controls first), in label order.
 */
inline std::vector<IdentityGroup> identity_groups(const ExpressionDataset& ds) {
    std::vector<IdentityGroup> out;
    const auto split = split_dataset(ds);
    out.push_back({"ctrl", ds.rows(split.controls)});
    for (const auto& [l, cells] : split.singles) out.push_back({l.str(), ds.rows(cells)});
    for (const auto& [l, cells] : split.doubles) out.push_back({l.str(), ds.rows(cells)});
    return out;
}

struct EdgeStats {
    std::size_t from = 0;
    std::size_t to = 0;
    std::vector<double> weights;
    double mean = 0.0;
    double std = 0.0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::size_t zero = 0;

    /** Count of the modal nonzero sign over the number of runs. */
    double consistency = 0.0;

    /** |mean| / std, +inf when std is zero. */
    double stability = 0.0;
};

struct EdgeRobustness {
    std::size_t latent_dim = 0;
    std::size_t runs = 0;
    std::vector<EdgeStats> edges;

    /** Empirical CDF of edge consistency: (value, fraction of edges <= value). */
    std::vector<std::pair<double, double>> consistency_ecdf;
};

inline EdgeRobustness edge_robustness(const std::vector<Tensor>& adjacencies) {
    if (adjacencies.size() < 2) {
        throw Error(ErrorKind::contract, "edge robustness needs at least two runs");
    }
    const std::size_t d = adjacencies.front().rows();
    for (const auto& a : adjacencies) {
        if (a.rows() != d || a.cols() != d) {
            throw Error(ErrorKind::contract, "edge robustness needs runs with identical latent_dim");
        }
    }
    EdgeRobustness out;
    out.latent_dim = d;
    out.runs = adjacencies.size();
    const double n = static_cast<double>(out.runs);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            EdgeStats e;
            e.from = i;
            e.to = j;
            for (const auto& a : adjacencies) {
                const double w = a(i, j);
                e.weights.push_back(w);
                if (w > 0.0) ++e.positive;
                else if (w < 0.0) ++e.negative;
                else ++e.zero;
            }
            const auto [lo, hi] = std::minmax_element(e.weights.begin(), e.weights.end());
            const bool constant = *lo == *hi;
            e.mean = constant ? *lo : stats::mean(e.weights);
            e.std = constant ? 0.0 : std::sqrt(stats::sample_variance(e.weights));
            e.consistency = static_cast<double>(std::max(e.positive, e.negative)) / n;
            e.stability = e.std == 0.0 ? std::numeric_limits<double>::infinity() : std::abs(e.mean) / e.std;
            out.edges.push_back(std::move(e));
        }
    }
    std::vector<double> c;
    for (const auto& e : out.edges) {
        c.push_back(e.consistency);
    }
    std::sort(c.begin(), c.end());
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (k + 1 == c.size() || c[k + 1] != c[k]) {
            out.consistency_ecdf.emplace_back(c[k], static_cast<double>(k + 1) / static_cast<double>(c.size()));
        }
    }
    return out;
}

/**
 * @brief High-level groups of gene sets.
 */
struct L2Groups {
    std::map<std::string, std::vector<std::string>> groups;

    /** Groups dropped for having fewer members among the model's gene sets than required. */
    std::vector<std::string> dropped;
};

/**
 * Read `l2_id<TAB>bp_id` lines.
 */
inline std::map<std::string, std::vector<std::string>> parse_l2_groups(std::istream& in) {
    std::map<std::string, std::vector<std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty() || line[0] == '#') {
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() != 2 || trim(f[0]).empty() || trim(f[1]).empty()) {
            throw Error(ErrorKind::parse, "l2 groups line " + std::to_string(line_no) + ": expected l2_id<TAB>bp_id");
        }
        auto& members = out[trim(f[0])];
        const auto bp = trim(f[1]);
        if (std::find(members.begin(), members.end(), bp) == members.end()) {
            members.push_back(bp);
        }
    }
    return out;
}

inline std::map<std::string, std::vector<std::string>> parse_l2_groups_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open l2 groups file " + path);
    }
    return parse_l2_groups(in);
}

/**
 * Restrict groups to the given gene sets and keep those with at least `min_members` members.
 */
inline L2Groups filter_l2_groups(const std::map<std::string, std::vector<std::string>>& raw, const std::vector<std::string>& bp_ids,
    std::size_t min_members = 10) {
    L2Groups out;
    for (const auto& [id, members] : raw) {
        std::vector<std::string> kept;
        for (const auto& m : members) {
            if (std::find(bp_ids.begin(), bp_ids.end(), m) != bp_ids.end()) {
                kept.push_back(m);
            }
        }
        if (kept.size() >= min_members) {
            out.groups[id] = std::move(kept);
        } else {
            out.dropped.push_back(id);
        }
    }
    return out;
}

/**
 * @brief Mean activities and head weights that define group contributions.
 */
struct L2Inputs {
    std::vector<std::string> bp_ids;

    /** Mean activity of each gene set over all cells. */
    std::vector<double> alpha_mean;

    /** K x d mean-head weights. */
    Tensor delta;
};

inline L2Inputs l2_inputs(const Model& m, const Tensor& x) {
    L2Inputs in;
    in.bp_ids = m.bp_ids;
    const Tensor a = ops::column_means(encode_alpha(m, x));
    in.alpha_mean.assign(a.values().begin(), a.values().end());
    in.delta = mean_head(m);
    return in;
}

enum class ContributionMode {
    /** Sum of member mean activities over z_j. */
    literal,
    /** Sum of member mean activities times delta_ij over z_j. */
    weighted
};

namespace detail {

inline std::vector<double> meta_means(const L2Inputs& in) {
    const std::size_t K = in.bp_ids.size(), d = in.delta.cols();
    if (in.alpha_mean.size() != K || in.delta.rows() != K) {
        throw Error(ErrorKind::dimension, "l2 inputs disagree on the number of gene sets");
    }
    std::vector<double> z(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            z[j] += in.alpha_mean[k] * in.delta(k, j);
        }
    }
    return z;
}

inline double member_term(const L2Inputs& in, std::size_t k, std::size_t j, ContributionMode mode) {
    return mode == ContributionMode::literal ? in.alpha_mean[k] : in.alpha_mean[k] * in.delta(k, j);
}

inline std::vector<std::size_t> member_indices(const L2Inputs& in, const std::vector<std::string>& members) {
    std::vector<std::size_t> out;
    for (const auto& m : members) {
        auto it = std::find(in.bp_ids.begin(), in.bp_ids.end(), m);
        if (it == in.bp_ids.end()) {
            throw Error(ErrorKind::lookup, "gene set " + m + " is not part of the model");
        }
        out.push_back(static_cast<std::size_t>(it - in.bp_ids.begin()));
    }
    return out;
}

}

/**
 * c_kj for each group k (in map order) and factor j; NaN where z_j is zero.
 */
inline Tensor l2_contribution(const L2Inputs& in, const L2Groups& groups, ContributionMode mode = ContributionMode::literal) {
    const auto z = detail::meta_means(in);
    Tensor c(groups.groups.size(), z.size());
    std::size_t row = 0;
    for (const auto& [id, members] : groups.groups) {
        const auto idx = detail::member_indices(in, members);
        for (std::size_t j = 0; j < z.size(); ++j) {
            double num = 0.0;
            for (auto k : idx) {
                num += detail::member_term(in, k, j, mode);
            }
            c(row, j) = z[j] == 0.0 ? std::numeric_limits<double>::quiet_NaN() : num / z[j];
        }
        ++row;
    }
    return c;
}

struct L2TestRow {
    std::string group;
    std::size_t factor = 0;
    std::size_t size = 0;
    double contribution = 0.0;
    double p_value = 1.0;
    double corrected = 1.0;
    bool skipped = false;
    bool undefined = false;
};

struct L2Aggregation {
    L2Groups groups;
    std::vector<L2TestRow> rows;
    std::size_t n_perm = 0;
    ContributionMode mode = ContributionMode::literal;

    double min_corrected() const {
        double best = 1.0;
        for (const auto& r : rows) {
            if (!r.skipped && !r.undefined) {
                best = std::min(best, r.corrected);
            }
        }
        return best;
    }
};

/**
 * Permutation test per (group, factor): one-sided Mann-Whitney of the group's member contributions
 * against the member contributions of `n_perm` size-preserving random groups, Bonferroni over all tests.
 */
inline L2Aggregation l2_permutation_test(const L2Inputs& in, const L2Groups& groups, std::size_t n_perm, Rng& rng,
    ContributionMode mode = ContributionMode::literal) {
    if (n_perm < 100) {
        throw Error(ErrorKind::contract, "the permutation test needs at least 100 permutations");
    }
    const auto z = detail::meta_means(in);
    const std::size_t K = in.bp_ids.size(), d = z.size();
    L2Aggregation out;
    out.groups = groups;
    out.n_perm = n_perm;
    out.mode = mode;
    const Tensor c = l2_contribution(in, groups, mode);
    std::vector<std::size_t> all(K);
    for (std::size_t k = 0; k < K; ++k) {
        all[k] = k;
    }
    std::size_t row = 0;
    std::vector<std::size_t> tested;
    std::vector<double> raw;
    for (const auto& [id, members] : groups.groups) {
        const auto idx = detail::member_indices(in, members);
        std::vector<std::vector<std::size_t>> perms;
        if (idx.size() >= 2) {
            for (std::size_t t = 0; t < n_perm; ++t) {
                auto draw = all;
                rng.shuffle(draw);
                draw.resize(idx.size());
                perms.push_back(std::move(draw));
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            L2TestRow r;
            r.group = id;
            r.factor = j;
            r.size = idx.size();
            r.contribution = c(row, j);
            if (idx.size() < 2) {
                r.skipped = true;
            } else if (z[j] == 0.0) {
                r.undefined = true;
            } else {
                std::vector<double> truth, null;
                for (auto k : idx) {
                    truth.push_back(detail::member_term(in, k, j, mode) / z[j]);
                }
                for (const auto& draw : perms) {
                    for (auto k : draw) {
                        null.push_back(detail::member_term(in, k, j, mode) / z[j]);
                    }
                }
                r.p_value = stats::mann_whitney_u(truth, null, stats::Alternative::greater).p_value;
                tested.push_back(out.rows.size());
                raw.push_back(r.p_value);
            }
            out.rows.push_back(r);
        }
        ++row;
    }
    const auto adj = stats::bonferroni_adjust(raw);
    for (std::size_t t = 0; t < tested.size(); ++t) {
        out.rows[tested[t]].corrected = adj[t];
    }
    return out;
}

}

#endif
