#ifndef SENA_SYNTHETIC_HPP
#define SENA_SYNTHETIC_HPP

#include "data.hpp"
#include "pathways.hpp"
#include "rng.hpp"

#include "json.hpp"

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

/**
 * @file synthetic.hpp
 * @brief Interventional datasets with planted latent structure.
 *
 * Cells draw exogenous factors z ~ N(0, latent_std^2 I), perturbations shift one coordinate of z,
 * causal factors are u = z^T (I - A)^{-1}, and every gene in the block of gene set k responds to
 * the single factor assigned to k through a degree-2 polynomial plus Gaussian noise.
 */

namespace sena {

struct SyntheticPerturbation {
    std::size_t target_factor = 0;
    double shift = 0.0;
};

struct SyntheticSpec {
    std::size_t n_genes = 100;
    std::size_t n_bps = 20;
    std::size_t genes_per_bp = 5;
    std::size_t latent_dim = 8;
    std::size_t n_controls = 400;
    std::size_t cells_per_perturbation = 100;
    std::vector<SyntheticPerturbation> perturbations;

    /** Held-out double perturbations, as pairs of indices into `perturbations`. */
    std::vector<std::pair<std::size_t, std::size_t>> doubles;
    std::size_t cells_per_double = 100;

    /** Strictly upper triangular latent adjacency. */
    Tensor a_true;

    double noise_std = 0.1;
    double latent_std = 1.0;
    double quadratic_scale = 0.1;
    std::uint64_t seed = 0;
};

/**
 * Eight single perturbations (one per factor), four doubles and a sparse random DAG.
 */
inline SyntheticSpec default_synthetic_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    for (std::size_t j = 0; j < spec.latent_dim; ++j) {
        spec.perturbations.push_back({j, (j % 2 == 0) ? 2.0 : -2.0});
    }
    spec.doubles = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};

    Rng rng = Rng::substream(seed, "synthetic-dag");
    spec.a_true = Tensor(spec.latent_dim, spec.latent_dim);
    for (std::size_t i = 0; i < spec.latent_dim; ++i) {
        for (std::size_t j = i + 1; j < spec.latent_dim; ++j) {
            if (rng.uniform() < 0.25) {
                const double w = rng.uniform(0.3, 0.6);
                spec.a_true(i, j) = rng.uniform() < 0.5 ? -w : w;
            }
        }
    }
    return spec;
}

struct PerturbationTruth {
    std::string label;
    std::vector<std::string> targets;
    std::vector<std::size_t> target_factors;
    std::vector<double> shifts;
    std::vector<std::string> affected_bps;
};

struct GroundTruth {
    Tensor a_true;
    std::vector<std::string> bp_ids;
    std::vector<std::size_t> bp_factor;
    std::vector<PerturbationTruth> perturbations;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json out;
        out["format"] = "sena-ground-truth";
        out["latent_dim"] = a_true.rows();
        std::vector<std::vector<double>> a;
        for (std::size_t i = 0; i < a_true.rows(); ++i) {
            auto r = a_true.row_span(i);
            a.emplace_back(r.begin(), r.end());
        }
        out["a_true"] = a;
        nlohmann::ordered_json bps = nlohmann::ordered_json::object();
        for (std::size_t k = 0; k < bp_ids.size(); ++k) {
            bps[bp_ids[k]] = bp_factor[k];
        }
        out["bp_factor"] = bps;
        nlohmann::ordered_json perts = nlohmann::ordered_json::array();
        for (const auto& p : perturbations) {
            perts.push_back({{"label", p.label},
                {"targets", p.targets},
                {"target_factors", p.target_factors},
                {"shifts", p.shifts},
                {"affected_bps", p.affected_bps}});
        }
        out["perturbations"] = perts;
        return out;
    }

    const PerturbationTruth* find(const std::string& label) const {
        for (const auto& p : perturbations) {
            if (p.label == label) {
                return &p;
            }
        }
        return nullptr;
    }
};

struct SyntheticData {
    ExpressionDataset dataset;
    PathwayDatabase pathways;
    GroundTruth truth;
};

inline void validate_synthetic(const SyntheticSpec& spec) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::validation, "synthetic spec: " + msg); };
    if (spec.latent_dim == 0 || spec.n_bps == 0 || spec.genes_per_bp == 0) {
        fail("latent_dim, n_bps and genes_per_bp must be positive");
    }
    if (spec.n_bps * spec.genes_per_bp > spec.n_genes) {
        fail("gene blocks need n_bps * genes_per_bp <= n_genes");
    }
    if (spec.n_controls < 2) {
        fail("at least two control cells are required");
    }
    if (spec.a_true.rows() != spec.latent_dim || spec.a_true.cols() != spec.latent_dim) {
        fail("a_true must be latent_dim x latent_dim");
    }
    for (std::size_t i = 0; i < spec.latent_dim; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            if (spec.a_true(i, j) != 0.0) {
                fail("a_true must be strictly upper triangular");
            }
        }
    }
    for (const auto& p : spec.perturbations) {
        if (p.target_factor >= spec.latent_dim) {
            fail("perturbation target factor " + std::to_string(p.target_factor) + " exceeds latent_dim");
        }
    }
    for (const auto& [a, b] : spec.doubles) {
        if (a >= spec.perturbations.size() || b >= spec.perturbations.size() || a == b) {
            fail("double perturbations must pair two distinct single perturbations");
        }
    }
    if (!(spec.noise_std >= 0.0) || !(spec.latent_std >= 0.0)) {
        fail("noise_std and latent_std must be non-negative");
    }
}

inline std::string numbered(const char* prefix, std::size_t i, int width) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
    return buf;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    validate_synthetic(spec);
    const std::size_t n = spec.n_genes, d = spec.latent_dim, K = spec.n_bps;
    Rng rng(spec.seed);

    SyntheticData out;
    auto& ds = out.dataset;
    for (std::size_t i = 0; i < n; ++i) {
        ds.genes.push_back(numbered("G", i + 1, 3));
    }

    // Signed loadings are bounded away from zero so every block carries its factor.
    std::vector<double> baseline(n), linear(n, 0.0), quadratic(n, 0.0);
    std::vector<std::size_t> gene_factor(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        baseline[i] = rng.uniform(-0.5, 0.5);
    }
    auto& truth = out.truth;
    truth.a_true = spec.a_true;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t factor = k % d;
        PathwayEntry entry;
        entry.id = numbered("BP", k + 1, 2);
        entry.description = "synthetic block loading on factor " + std::to_string(factor);
        for (std::size_t g = k * spec.genes_per_bp; g < (k + 1) * spec.genes_per_bp; ++g) {
            entry.genes.insert(ds.genes[g]);
            gene_factor[g] = factor;
            const double mag = rng.uniform(0.5, 1.5);
            linear[g] = rng.uniform() < 0.5 ? -mag : mag;
            quadratic[g] = spec.quadratic_scale * rng.uniform(-1.0, 1.0);
        }
        truth.bp_ids.push_back(entry.id);
        truth.bp_factor.push_back(factor);
        out.pathways.entries.push_back(std::move(entry));
    }

    // The r-th perturbation on a factor targets a distinct gene inside a block loading on it.
    std::vector<std::string> single_gene;
    std::vector<std::size_t> used(d, 0);
    for (const auto& p : spec.perturbations) {
        std::vector<std::size_t> blocks;
        for (std::size_t k = 0; k < K; ++k) {
            if (truth.bp_factor[k] == p.target_factor) {
                blocks.push_back(k);
            }
        }
        if (blocks.empty()) {
            throw Error(ErrorKind::validation, "synthetic spec: no gene set loads on factor " + std::to_string(p.target_factor));
        }
        const std::size_t r = used[p.target_factor]++;
        const std::size_t block = blocks[r % blocks.size()];
        const std::size_t offset = r / blocks.size();
        if (offset >= spec.genes_per_bp) {
            throw Error(ErrorKind::validation, "synthetic spec: too many perturbations on factor " + std::to_string(p.target_factor));
        }
        single_gene.push_back(ds.genes[block * spec.genes_per_bp + offset]);
    }

    auto affected_for = [&](std::size_t factor) {
        std::vector<std::string> bps;
        for (std::size_t k = 0; k < K; ++k) {
            if (truth.bp_factor[k] == factor) {
                bps.push_back(truth.bp_ids[k]);
            }
        }
        return bps;
    };

    const Tensor L = [&] {
        // (I - A)^{-1} by the terminating power series.
        Tensor acc = Tensor::identity(d);
        Tensor power = Tensor::identity(d);
        for (std::size_t l = 1; l < d; ++l) {
            power = ops::matmul(power, spec.a_true);
            acc = ops::add(acc, power);
        }
        return acc;
    }();

    std::vector<double> values;
    auto emit_cells = [&](const std::string& prefix, const PerturbationLabel& label, const std::vector<std::size_t>& pert_idx, std::size_t count) {
        for (std::size_t c = 0; c < count; ++c) {
            ds.cell_ids.push_back(numbered((prefix + "_").c_str(), c + 1, 4));
            ds.labels.push_back(label);
            Tensor z(1, d);
            for (std::size_t j = 0; j < d; ++j) {
                z(0, j) = spec.latent_std * rng.normal();
            }
            for (auto p : pert_idx) {
                z(0, spec.perturbations[p].target_factor) += spec.perturbations[p].shift;
            }
            const Tensor u = ops::matmul(z, L);
            for (std::size_t i = 0; i < n; ++i) {
                double x = baseline[i];
                if (gene_factor[i] < d) {
                    const double ui = u(0, gene_factor[i]);
                    x += linear[i] * ui + quadratic[i] * ui * ui;
                }
                x += spec.noise_std * rng.normal();
                values.push_back(x);
            }
        }
    };

    emit_cells("ctrl", PerturbationLabel{}, {}, spec.n_controls);
    for (std::size_t p = 0; p < spec.perturbations.size(); ++p) {
        PerturbationLabel label;
        label.targets.insert(single_gene[p]);
        emit_cells(label.str(), label, {p}, spec.cells_per_perturbation);

        PerturbationTruth pt;
        pt.label = label.str();
        pt.targets = {single_gene[p]};
        pt.target_factors = {spec.perturbations[p].target_factor};
        pt.shifts = {spec.perturbations[p].shift};
        pt.affected_bps = affected_for(spec.perturbations[p].target_factor);
        truth.perturbations.push_back(std::move(pt));
    }
    for (const auto& [a, b] : spec.doubles) {
        PerturbationLabel label;
        label.targets = {single_gene[a], single_gene[b]};
        emit_cells(label.str(), label, {a, b}, spec.cells_per_double);

        PerturbationTruth pt;
        pt.label = label.str();
        pt.targets = {single_gene[a], single_gene[b]};
        pt.target_factors = {spec.perturbations[a].target_factor, spec.perturbations[b].target_factor};
        pt.shifts = {spec.perturbations[a].shift, spec.perturbations[b].shift};
        auto bps = affected_for(spec.perturbations[a].target_factor);
        for (auto& bp : affected_for(spec.perturbations[b].target_factor)) {
            if (std::find(bps.begin(), bps.end(), bp) == bps.end()) {
                bps.push_back(bp);
            }
        }
        pt.affected_bps = std::move(bps);
        truth.perturbations.push_back(std::move(pt));
    }

    ds.values = Tensor(ds.cell_ids.size(), n, std::move(values));
    ds.validate();
    return out;
}

}

#endif
