#ifndef SENA_TESTS_FIXTURES_HPP
#define SENA_TESTS_FIXTURES_HPP

#include "sena/sena.hpp"

#include <functional>
#include <string>
#include <vector>

namespace fixture {

using namespace sena;

/** Genes g1..g8; four gene sets of three genes (overlapping pairwise); perturbations on g1, g4, g7. */
inline PathwayDatabase tiny_pathways() {
    PathwayDatabase db;
    db.entries.push_back({"BP1", "", {"g1", "g2", "g3"}});
    db.entries.push_back({"BP2", "", {"g3", "g4", "g5"}});
    db.entries.push_back({"BP3", "", {"g5", "g6", "g7"}});
    db.entries.push_back({"BP4", "", {"g7", "g8", "g1"}});
    return db;
}

inline std::vector<std::string> tiny_genes() { return {"g1", "g2", "g3", "g4", "g5", "g6", "g7", "g8"}; }

inline Model tiny_model(EncoderVariant variant = EncoderVariant::sena_delta, double lambda = 0.0, std::size_t d = 3, std::uint64_t seed = 1) {
    ModelConfig c;
    c.variant = variant;
    c.lambda = lambda;
    c.latent_dim = variant == EncoderVariant::sena ? 4 : d;
    c.embed_dim = 4;
    c.hidden_dim = 5;
    return create_model(c, tiny_genes(), tiny_pathways(), {"g1", "g4", "g7"}, seed);
}

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (std::size_t k = 0; k < t.size(); ++k) {
        t[k] = rng.uniform(lo, hi);
    }
    return t;
}

inline Tensor random_upper(std::size_t d, Rng& rng, double scale = 1.0) {
    Tensor a(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            a(i, j) = rng.uniform(-scale, scale);
        }
    }
    return a;
}

inline void randomize(Model& m, Rng& rng, double scale = 0.5) {
    for (auto& [name, t] : m.params.items) {
        if (name == "causal.A") {
            t = random_upper(t.rows(), rng, scale);
        } else {
            t = random_tensor(t.rows(), t.cols(), rng, -scale, scale);
        }
    }
}

inline ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    throw std::runtime_error("expected an error");
}

/** Small synthetic problem: 30 genes, 6 gene sets, d = 3, three singles and one double. */
inline SyntheticSpec small_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.n_genes = 30;
    s.n_bps = 6;
    s.genes_per_bp = 5;
    s.latent_dim = 3;
    s.n_controls = 60;
    s.cells_per_perturbation = 20;
    s.cells_per_double = 20;
    s.perturbations = {{0, 2.0}, {1, -2.0}, {2, 2.0}};
    s.doubles = {{0, 1}};
    s.a_true = Tensor(3, 3);
    s.a_true(0, 1) = 0.5;
    s.seed = seed;
    return s;
}

inline TrainConfig small_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.latent_dim = 3;
    c.batch_size = 16;
    c.epochs = 3;
    c.embed_dim = 4;
    c.hidden_dim = 8;
    return c;
}

/** Controls and singles only, the regime used for training. */
inline ExpressionDataset without_doubles(const ExpressionDataset& ds) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.n_cells(); ++i) {
        if (ds.labels[i].order() < 2) {
            keep.push_back(i);
        }
    }
    return subset_cells(ds, keep);
}

}

#endif
