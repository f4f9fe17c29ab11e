#ifndef SENA_METRICS_HPP
#define SENA_METRICS_HPP

#include "data.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "stats.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

/**
 * @file metrics.hpp
 * @brief Interpretability metrics of a trained model: differential activation, Hits@N, DAR,
 * sparsity, head-level scores, gene-set to factor mapping and unseen-double prediction quality.
 */

namespace sena {

/**
 * @brief Differential activation of every gene set under one perturbation.
 */
struct DAReport {
    PerturbationLabel label;
    std::vector<std::string> bp_ids;
    std::vector<double> da;
    std::vector<double> p_value;
    std::vector<double> q_value;

    /** Membership in W_p: the gene set contains a target gene. */
    std::vector<bool> affected;

    /** 1-based rank by decreasing DA, ties broken by ascending id. */
    std::vector<std::size_t> rank;

    std::size_t n_perturbed = 0;
    std::size_t n_control = 0;

    std::size_t n_affected() const { return static_cast<std::size_t>(std::count(affected.begin(), affected.end(), true)); }

    /** Both W_p and its complement are non-empty. */
    bool applicable() const { return n_affected() > 0 && n_affected() < affected.size(); }
};

/**
 * W_p from the model's membership table; a double uses the union of its targets.
 */
inline std::vector<bool> affected_sets(const Model& m, const PerturbationLabel& label) {
    std::vector<bool> out(m.n_bps(), false);
    for (const auto& gene : label.targets) {
        auto it = std::find(m.genes.begin(), m.genes.end(), gene);
        if (it == m.genes.end()) {
            continue;
        }
        const auto& row = m.membership[static_cast<std::size_t>(it - m.genes.begin())];
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = out[k] || row[k];
        }
    }
    return out;
}

inline std::vector<std::size_t> rank_descending(const std::vector<double>& values, const std::vector<std::string>& ids) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) {
            return values[a] > values[b];
        }
        return ids[a] < ids[b];
    });
    std::vector<std::size_t> rank(values.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank[order[r]] = r + 1;
    }
    return rank;
}

/**
 * DA from precomputed activities of perturbed and control cells.
 */
inline DAReport differential_activation(const Tensor& alpha_pert, const Tensor& alpha_ctrl, const std::vector<std::string>& bp_ids) {
    if (alpha_pert.rows() < 2 || alpha_ctrl.rows() < 2) {
        throw Error(ErrorKind::insufficient_sample, "differential activation needs at least two perturbed and two control cells");
    }
    const std::size_t K = bp_ids.size();
    if (alpha_pert.cols() != K || alpha_ctrl.cols() != K) {
        throw Error(ErrorKind::dimension, "activity width does not match the gene-set list");
    }
    DAReport r;
    r.bp_ids = bp_ids;
    r.n_perturbed = alpha_pert.rows();
    r.n_control = alpha_ctrl.rows();
    const Tensor tp = ops::transpose(alpha_pert), tc = ops::transpose(alpha_ctrl);
    for (std::size_t k = 0; k < K; ++k) {
        auto a = tp.row_span(k), c = tc.row_span(k);
        r.da.push_back(std::abs(stats::mean(a) - stats::mean(c)));
        r.p_value.push_back(stats::welch_t(a, c).p_value);
    }
    r.q_value = stats::bh_adjust(r.p_value);
    r.rank = rank_descending(r.da, bp_ids);
    r.affected.assign(K, false);
    return r;
}

inline DAReport differential_activation(const Model& m, const ExpressionDataset& ds, const PerturbationLabel& label) {
    if (label.is_control()) {
        throw Error(ErrorKind::contract, "differential activation needs a perturbed label");
    }
    const auto pert = ds.cells_with(label);
    const auto ctrl = ds.control_cells();
    if (pert.size() < 2 || ctrl.size() < 2) {
        throw Error(ErrorKind::insufficient_sample, "perturbation " + label.str() + " has " + std::to_string(pert.size()) + " cells; at least 2 are needed");
    }
    auto r = differential_activation(encode_alpha(m, ds.rows(pert)), encode_alpha(m, ds.rows(ctrl)), m.bp_ids);
    r.label = label;
    r.affected = affected_sets(m, label);
    return r;
}

/**
 * Fraction of W_p ranked within the first N; empty when W_p is empty.
 */
inline std::optional<double> hits_at_n(const DAReport& r, std::size_t n) {
    const std::size_t w = r.n_affected();
    if (w == 0) {
        return std::nullopt;
    }
    std::size_t hits = 0;
    for (std::size_t k = 0; k < r.rank.size(); ++k) {
        if (r.affected[k] && r.rank[k] <= n) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(w);
}

struct DarValue {
    /** +inf when the complement's total DA is zero. */
    double value = 0.0;
    bool applicable = false;
    bool infinite = false;
};

/**
 * Size-normalized ratio of the mean DA inside W_p to the mean DA outside it.
 */
inline DarValue dar(const DAReport& r) {
    DarValue out;
    if (!r.applicable()) {
        return out;
    }
    out.applicable = true;
    double in = 0.0, outside = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t k = 0; k < r.da.size(); ++k) {
        if (r.affected[k]) {
            in += r.da[k];
            ++n_in;
        } else {
            outside += r.da[k];
            ++n_out;
        }
    }
    const double den = static_cast<double>(n_in) * outside;
    if (den == 0.0) {
        out.infinite = true;
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }
    out.value = static_cast<double>(n_out) * in / den;
    return out;
}

inline constexpr double sparsity_threshold = 1e-8;

/**
 * Fraction of first-layer contributions |mean(x_i) * W_eff(i, k)| below 1e-8, with the mean over the given cells.
 */
inline double sparsity(const Model& m, const Tensor& x) {
    if (x.cols() != m.n_genes() || x.rows() == 0) {
        throw Error(ErrorKind::dimension, "sparsity needs a non-empty cells x genes matrix matching the model");
    }
    const Tensor xbar = ops::column_means(x);
    const Tensor w = effective_first_layer(m);
    std::size_t small = 0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t k = 0; k < w.cols(); ++k) {
            if (std::abs(xbar(0, i) * w(i, k)) < sparsity_threshold) {
                ++small;
            }
        }
    }
    return static_cast<double>(small) / static_cast<double>(w.size());
}

/**
 * @brief Head-level DA: |delta_kj| * DA_k for the mean and variance heads.
 */
struct HeadDAReport {
    PerturbationLabel label;
    Tensor mu_scores;
    Tensor logvar_scores;

    /** One-sided Mann-Whitney (affected > unaffected) per latent neuron, with BH across neurons. */
    std::vector<double> mu_p, mu_q, logvar_p, logvar_q;
    bool tested = false;
};

inline HeadDAReport da_at_heads(const Model& m, const DAReport& r) {
    HeadDAReport out;
    out.label = r.label;
    const Tensor dmu = mean_head(m), dlv = m.params.at("encoder.delta_logvar");
    const std::size_t K = r.da.size(), d = m.latent_dim();
    if (dmu.rows() != K) {
        throw Error(ErrorKind::dimension, "head weights do not match the gene-set list");
    }
    out.mu_scores = Tensor(K, d);
    out.logvar_scores = Tensor(K, d);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < d; ++j) {
            out.mu_scores(k, j) = std::abs(dmu(k, j)) * r.da[k];
            out.logvar_scores(k, j) = std::abs(dlv(k, j)) * r.da[k];
        }
    }
    if (!r.applicable()) {
        return out;
    }
    out.tested = true;
    auto test = [&](const Tensor& s, std::vector<double>& p, std::vector<double>& q) {
        for (std::size_t j = 0; j < d; ++j) {
            std::vector<double> in, rest;
            for (std::size_t k = 0; k < K; ++k) {
                (r.affected[k] ? in : rest).push_back(s(k, j));
            }
            p.push_back(stats::mann_whitney_u(in, rest, stats::Alternative::greater).p_value);
        }
        q = stats::bh_adjust(p);
    };
    test(out.mu_scores, out.mu_p, out.mu_q);
    test(out.logvar_scores, out.logvar_p, out.logvar_q);
    return out;
}

inline HeadDAReport da_at_heads(const Model& m, const ExpressionDataset& ds, const PerturbationLabel& label) {
    return da_at_heads(m, differential_activation(m, ds, label));
}

struct FactorAssignment {
    std::string bp_id;
    bool assigned = false;
    std::string perturbation;
    std::size_t factor = 0;
    double da = 0.0;
    double q_value = 1.0;
};

struct FactorMapOptions {
    /** Fraction of all (gene set, perturbation) DA values that passes the magnitude gate. */
    double top_fraction = 0.01;
    double fdr = 0.05;
};

/**
 * Assign each gene set to its maximal-DA single perturbation and on to that perturbation's argmax
 * latent target, when the DA is in the top fraction of all DA values and BH-significant.
 */
inline std::vector<FactorAssignment> map_bps_to_factors(const Model& m, const std::vector<DAReport>& reports, const FactorMapOptions& opt = {}) {
    const std::size_t K = m.n_bps();
    std::vector<const DAReport*> singles;
    std::vector<double> all;
    for (const auto& r : reports) {
        if (r.label.order() == 1 && std::find(m.perturbations.begin(), m.perturbations.end(), *r.label.targets.begin()) != m.perturbations.end()) {
            singles.push_back(&r);
            all.insert(all.end(), r.da.begin(), r.da.end());
        }
    }
    std::vector<FactorAssignment> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        out[k].bp_id = m.bp_ids[k];
    }
    if (singles.empty()) {
        return out;
    }
    std::sort(all.begin(), all.end(), std::greater<>());
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt.top_fraction * static_cast<double>(all.size()))));
    const double gate = all[std::min(keep, all.size()) - 1];
    const Tensor targets = intervention_targets(m);
    for (std::size_t k = 0; k < K; ++k) {
        const DAReport* best = nullptr;
        for (const auto* r : singles) {
            if (!best || r->da[k] > best->da[k]) {
                best = r;
            }
        }
        auto& a = out[k];
        a.perturbation = best->label.str();
        a.da = best->da[k];
        a.q_value = best->q_value[k];
        const std::size_t p = m.perturbation_index(*best->label.targets.begin());
        auto row = targets.row_span(p);
        a.factor = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        a.assigned = a.da >= gate && a.q_value <= opt.fdr;
    }
    return out;
}

/**
 * Cells generated for a perturbation label from the given control cells: encode, sample, shift, decode.
 * Targets use the training temperature, the one the generator was fitted with.
 */
inline Tensor generate_perturbed(const Model& m, const Tensor& x_control, const PerturbationLabel& label, Rng& rng) {
    const Tensor alpha = encode_alpha(m, x_control);
    const auto lat = encode_latent(m, alpha, rng);
    const std::vector<PerturbationLabel> labels(x_control.rows(), label);
    const Tensor z = apply_intervention(m, lat.z, labels, m.config.train_temperature);
    return decode_poly(m, to_causal_factors(z, model_L(m)));
}

struct DoublePrediction {
    std::string label;
    double model_mmd = 0.0;
    double baseline_mmd = 0.0;
    double bandwidth = 0.0;
    std::size_t n_generated = 0;
    std::size_t n_observed = 0;
};

/**
 * MMD of generated vs observed cells of a held-out combination, next to the control-vs-observed baseline,
 * both at the median bandwidth of the pooled control and observed cells.
 */
inline DoublePrediction double_prediction(const Model& m, const ExpressionDataset& ds, const PerturbationLabel& label, Rng& rng,
    MmdEstimator estimator = MmdEstimator::unbiased) {
    const Tensor ctrl = ds.rows(ds.control_cells());
    const auto obs_idx = ds.cells_with(label);
    if (obs_idx.empty()) {
        throw Error(ErrorKind::insufficient_sample, "no observed cells for " + label.str());
    }
    const Tensor obs = ds.rows(obs_idx);
    DoublePrediction out;
    out.label = label.str();
    out.bandwidth = median_bandwidth(ctrl, obs);
    const MmdOptions opt{estimator, out.bandwidth};
    const Tensor gen = generate_perturbed(m, ctrl, label, rng);
    out.n_generated = gen.rows();
    out.n_observed = obs.rows();
    out.model_mmd = mmd_rbf(gen, obs, opt).value;
    out.baseline_mmd = mmd_rbf(ctrl, obs, opt).value;
    return out;
}

struct MetricsOptions {
    std::size_t hits_n = 100;
    FactorMapOptions factor_map;
    MmdEstimator estimator = MmdEstimator::unbiased;
};

/**
 * @brief Every metric for one model over one dataset.
 */
struct MetricsReport {
    std::vector<DAReport> da;
    std::vector<HeadDAReport> heads;
    std::vector<std::optional<double>> hits;
    std::vector<DarValue> dar;
    double sparsity = 0.0;
    std::vector<FactorAssignment> factor_map;
    std::vector<DoublePrediction> doubles;
    std::size_t hits_n = 0;

    /** Perturbed labels skipped for having fewer than two cells. */
    std::vector<std::string> skipped;
};

inline MetricsReport compute_metrics(const Model& m, const ExpressionDataset& ds, Rng& rng, const MetricsOptions& opt = {}) {
    MetricsReport rep;
    rep.hits_n = opt.hits_n;
    const auto split = split_dataset(ds);
    std::vector<PerturbationLabel> labels;
    for (const auto& [l, cells] : split.singles) labels.push_back(l);
    for (const auto& [l, cells] : split.doubles) labels.push_back(l);
    for (const auto& l : labels) {
        if (ds.cells_with(l).size() < 2) {
            rep.skipped.push_back(l.str());
            continue;
        }
        rep.da.push_back(differential_activation(m, ds, l));
        rep.heads.push_back(da_at_heads(m, rep.da.back()));
        rep.hits.push_back(hits_at_n(rep.da.back(), opt.hits_n));
        rep.dar.push_back(dar(rep.da.back()));
    }
    rep.sparsity = sparsity(m, ds.values);
    rep.factor_map = map_bps_to_factors(m, rep.da, opt.factor_map);
    for (const auto& [l, cells] : split.doubles) {
        bool known = true;
        for (const auto& t : l.targets) {
            known = known && std::find(m.perturbations.begin(), m.perturbations.end(), t) != m.perturbations.end();
        }
        if (known) {
            rep.doubles.push_back(double_prediction(m, ds, l, rng, opt.estimator));
        }
    }
    return rep;
}

namespace detail {

inline std::string num(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    if (std::isnan(v)) {
        return "nan";
    }
    return format_double(v);
}

}

inline void write_da_tsv(std::ostream& out, const MetricsReport& rep) {
    out << "perturbation\tbp_id\tda\tp_value\tq_value\taffected\trank\n";
    for (const auto& r : rep.da) {
        for (std::size_t k = 0; k < r.bp_ids.size(); ++k) {
            out << r.label.str() << '\t' << r.bp_ids[k] << '\t' << detail::num(r.da[k]) << '\t' << detail::num(r.p_value[k]) << '\t'
                << detail::num(r.q_value[k]) << '\t' << (r.affected[k] ? 1 : 0) << '\t' << r.rank[k] << '\n';
        }
    }
}

inline void write_hits_dar_tsv(std::ostream& out, const MetricsReport& rep) {
    out << "perturbation\tn_affected\thits_at_" << rep.hits_n << "\tdar\tdar_infinite\tapplicable\n";
    for (std::size_t i = 0; i < rep.da.size(); ++i) {
        const auto& r = rep.da[i];
        out << r.label.str() << '\t' << r.n_affected() << '\t' << (rep.hits[i] ? detail::num(*rep.hits[i]) : "NA") << '\t'
            << (rep.dar[i].applicable ? detail::num(rep.dar[i].value) : "NA") << '\t' << (rep.dar[i].infinite ? 1 : 0) << '\t'
            << (r.applicable() ? 1 : 0) << '\n';
    }
}

inline void write_heads_tsv(std::ostream& out, const MetricsReport& rep) {
    out << "perturbation\thead\tfactor\tp_value\tq_value\n";
    for (const auto& h : rep.heads) {
        if (!h.tested) {
            continue;
        }
        for (std::size_t j = 0; j < h.mu_p.size(); ++j) {
            out << h.label.str() << "\tmu\t" << j << '\t' << detail::num(h.mu_p[j]) << '\t' << detail::num(h.mu_q[j]) << '\n';
        }
        for (std::size_t j = 0; j < h.logvar_p.size(); ++j) {
            out << h.label.str() << "\tlogvar\t" << j << '\t' << detail::num(h.logvar_p[j]) << '\t' << detail::num(h.logvar_q[j]) << '\n';
        }
    }
}

inline void write_factor_map_tsv(std::ostream& out, const MetricsReport& rep) {
    out << "bp_id\tassigned\tperturbation\tfactor\tda\tq_value\n";
    for (const auto& a : rep.factor_map) {
        out << a.bp_id << '\t' << (a.assigned ? 1 : 0) << '\t' << a.perturbation << '\t' << a.factor << '\t' << detail::num(a.da) << '\t'
            << detail::num(a.q_value) << '\n';
    }
}

inline void write_doubles_tsv(std::ostream& out, const MetricsReport& rep) {
    out << "perturbation\tmodel_mmd\tbaseline_mmd\tbandwidth\tn_generated\tn_observed\n";
    for (const auto& d : rep.doubles) {
        out << d.label << '\t' << detail::num(d.model_mmd) << '\t' << detail::num(d.baseline_mmd) << '\t' << detail::num(d.bandwidth) << '\t'
            << d.n_generated << '\t' << d.n_observed << '\n';
    }
}

inline nlohmann::ordered_json metrics_summary(const MetricsReport& rep) {
    nlohmann::ordered_json j;
    double hits_sum = 0.0, dar_sum = 0.0;
    std::size_t hits_n = 0, dar_n = 0, dar_inf = 0, dar_above_one = 0;
    for (std::size_t i = 0; i < rep.da.size(); ++i) {
        if (rep.hits[i]) {
            hits_sum += *rep.hits[i];
            ++hits_n;
        }
        if (rep.dar[i].applicable) {
            if (rep.dar[i].infinite) {
                ++dar_inf;
            } else {
                dar_sum += rep.dar[i].value;
                ++dar_n;
            }
            if (rep.dar[i].value > 1.0) {
                ++dar_above_one;
            }
        }
    }
    j["n_perturbations"] = rep.da.size();
    j["hits_n"] = rep.hits_n;
    j["mean_hits"] = hits_n ? hits_sum / static_cast<double>(hits_n) : 0.0;
    j["hits_applicable"] = hits_n;
    j["mean_finite_dar"] = dar_n ? dar_sum / static_cast<double>(dar_n) : 0.0;
    j["dar_above_one"] = dar_above_one;
    j["dar_infinite"] = dar_inf;
    j["sparsity"] = rep.sparsity;
    std::size_t assigned = 0;
    for (const auto& a : rep.factor_map) {
        assigned += a.assigned ? 1 : 0;
    }
    j["bps_assigned"] = assigned;
    nlohmann::ordered_json d = nlohmann::ordered_json::array();
    for (const auto& x : rep.doubles) {
        d.push_back({{"perturbation", x.label}, {"model_mmd", x.model_mmd}, {"baseline_mmd", x.baseline_mmd}});
    }
    j["doubles"] = d;
    j["skipped"] = rep.skipped;
    return j;
}

}

#endif
