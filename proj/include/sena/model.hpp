#ifndef SENA_MODEL_HPP
#define SENA_MODEL_HPP

#include "data.hpp"
#include "pathways.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

/**
 * @file model.hpp
 * @brief Pathway-masked encoder, causal latent layer, intervention encoder and polynomial decoder.
 *
 * The graph-building functions are templated on a backend so that the eager forward pass used for
 * evaluation and the taped pass used for training execute the same kernels in the same order.
 * Cells are rows throughout: a batch of expression profiles is a cells x genes matrix.
 */

namespace sena {

enum class EncoderVariant {
    sena,       ///< masked layer whose activities are the latent means directly (requires latent_dim == number of gene sets)
    sena_delta, ///< masked layer followed by the two linear heads
    mlp,        ///< two dense layers followed by the heads
    mlp_l1      ///< as `mlp`, with an l1 penalty on the first layer
};

enum class Activation { identity, leaky_relu, tanh };

constexpr double leaky_slope = 0.01;

inline std::string to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::sena: return "sena";
        case EncoderVariant::sena_delta: return "sena_delta";
        case EncoderVariant::mlp: return "mlp";
        case EncoderVariant::mlp_l1: return "mlp_l1";
    }
    return "unknown";
}

inline EncoderVariant parse_encoder_variant(const std::string& s) {
    if (s == "sena") return EncoderVariant::sena;
    if (s == "sena_delta" || s == "sena-delta") return EncoderVariant::sena_delta;
    if (s == "mlp") return EncoderVariant::mlp;
    if (s == "mlp_l1" || s == "mlp-l1") return EncoderVariant::mlp_l1;
    throw Error(ErrorKind::validation, "unknown encoder variant '" + s + "'");
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "leaky_relu" || s == "leaky-relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    throw Error(ErrorKind::validation, "unknown activation '" + s + "'");
}

inline bool is_masked(EncoderVariant v) { return v == EncoderVariant::sena || v == EncoderVariant::sena_delta; }
inline bool is_dense(EncoderVariant v) { return !is_masked(v); }

struct ModelConfig {
    EncoderVariant variant = EncoderVariant::sena_delta;
    Activation activation = Activation::leaky_relu;
    std::size_t latent_dim = 8;
    double lambda = 0.0;
    /** Softmax temperature of the intervention targets at inference. */
    double temperature = 100.0;

    /** Softmax temperature used while training. */
    double train_temperature = 1.0;

    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 64;
};

/**
 * Named tensors in a fixed order. The order is the serialization and optimizer order.
 */
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;

    bool contains(const std::string& name) const {
        for (const auto& [k, v] : items) {
            if (k == name) {
                return true;
            }
        }
        return false;
    }

    Tensor& at(const std::string& name) {
        for (auto& [k, v] : items) {
            if (k == name) {
                return v;
            }
        }
        throw Error(ErrorKind::lookup, "no parameter named '" + name + "'");
    }

    const Tensor& at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

    void add(std::string name, Tensor value) { items.emplace_back(std::move(name), std::move(value)); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [k, v] : items) {
            n += v.size();
        }
        return n;
    }

    bool operator==(const ParamSet&) const = default;
};

inline std::size_t monomial_count(std::size_t d) { return d * (d + 1) / 2; }

/**
 * @brief A complete model: architecture, gene and gene-set vocabularies, mask and parameters.
 */
struct Model {
    ModelConfig config;
    std::vector<std::string> genes;
    std::vector<std::string> bp_ids;
    std::vector<std::set<std::string>> bp_genes;

    /** Target gene of every registered single perturbation, indexed as in the intervention tables. */
    std::vector<std::string> perturbations;

    MaskMatrix mask;
    std::vector<std::vector<bool>> membership;
    ParamSet params;

    std::size_t n_genes() const { return genes.size(); }
    std::size_t n_bps() const { return bp_ids.size(); }
    std::size_t latent_dim() const { return config.latent_dim; }
    std::size_t n_perturbations() const { return perturbations.size(); }

    std::size_t perturbation_index(const std::string& gene) const {
        for (std::size_t i = 0; i < perturbations.size(); ++i) {
            if (perturbations[i] == gene) {
                return i;
            }
        }
        throw Error(ErrorKind::lookup, "perturbation '" + gene + "' was not registered during training");
    }

    PathwayDatabase pathway_database() const {
        PathwayDatabase db;
        for (std::size_t k = 0; k < bp_ids.size(); ++k) {
            db.entries.push_back({bp_ids[k], "", bp_genes[k]});
        }
        return db;
    }

    /** Rebuild mask and membership from the vocabularies and lambda. */
    void rebuild_mask() {
        auto built = build_mask_with_membership(pathway_database(), genes, config.lambda);
        mask = std::move(built.mask);
        membership = std::move(built.membership);
    }

    bool operator==(const Model& other) const {
        return genes == other.genes && bp_ids == other.bp_ids && bp_genes == other.bp_genes && perturbations == other.perturbations &&
            params == other.params && mask.values == other.mask.values;
    }
};

inline Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
    Tensor out(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (auto& v : out.values()) {
        v = rng.uniform(-bound, bound);
    }
    return out;
}

/**
 * Assemble a freshly initialized model. Weights are uniform in +-1/sqrt(fan_in), each parameter
 * from its own seeded stream; biases, the adjacency and the intervention shifts start at zero.
 */
inline Model create_model(const ModelConfig& config, const std::vector<std::string>& genes, const PathwayDatabase& pathways,
    const std::vector<std::string>& perturbations, std::uint64_t seed) {
    if (config.latent_dim < 1) {
        throw Error(ErrorKind::validation, "latent_dim must be at least 1");
    }
    if (!(config.temperature > 0.0) || !(config.train_temperature > 0.0)) {
        throw Error(ErrorKind::validation, "temperatures must be positive");
    }
    Model m;
    m.config = config;
    m.genes = genes;
    for (const auto& e : pathways.entries) {
        m.bp_ids.push_back(e.id);
        m.bp_genes.push_back(e.genes);
    }
    m.perturbations = perturbations;
    m.rebuild_mask();

    const std::size_t n = genes.size(), K = m.n_bps(), d = config.latent_dim, P = perturbations.size();
    const std::size_t e = config.embed_dim, h = config.hidden_dim, mono = monomial_count(d);
    if (config.variant == EncoderVariant::sena && d != K) {
        throw Error(ErrorKind::validation, "the sena variant maps gene sets to latent means directly and needs latent_dim == " + std::to_string(K));
    }

    auto init = [&](const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
        Rng rng = Rng::substream(seed, name);
        m.params.add(name, uniform_init(rows, cols, fan_in, rng));
    };
    auto zeros = [&](const std::string& name, std::size_t rows, std::size_t cols) { m.params.add(name, Tensor(rows, cols)); };

    init("encoder.W", n, K, n);
    if (is_dense(config.variant)) {
        zeros("encoder.b1", 1, K);
        init("encoder.W2", K, K, K);
        zeros("encoder.b2", 1, K);
    }
    if (config.variant != EncoderVariant::sena) {
        init("encoder.delta_mu", K, d, K);
    }
    init("encoder.delta_logvar", K, d, K);
    zeros("causal.A", d, d);
    zeros("decoder.C0", 1, n);
    init("decoder.C1", d, n, d);
    init("decoder.C2", mono, n, mono);
    init("intervention.embed", P, e, P);
    init("intervention.W1", e, h, e);
    zeros("intervention.b1", 1, h);
    init("intervention.W2", h, d, h);
    zeros("intervention.b2", 1, d);
    zeros("intervention.shift", P, 1);
    return m;
}

/**
 * Strictly upper triangular 0/1 pattern.
 */
inline Tensor upper_pattern(std::size_t d) {
    Tensor out(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            out(i, j) = 1.0;
        }
    }
    return out;
}

/**
 * Column selectors such that (u S_first) * (u S_second) lists u_a u_b for a <= b in lexicographic order.
 */
inline std::pair<Tensor, Tensor> monomial_selectors(std::size_t d) {
    const std::size_t m = monomial_count(d);
    Tensor first(d, m), second(d, m);
    std::size_t col = 0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            first(a, col) = 1.0;
            second(b, col) = 1.0;
            ++col;
        }
    }
    return {first, second};
}

/**
 * Rows are cells; entry (c, p) is 1 when the `slot`-th target (in ascending gene order) of cell c is perturbation p.
 */
inline Tensor intervention_selector(const Model& m, const std::vector<PerturbationLabel>& labels, std::size_t slot) {
    Tensor out(labels.size(), m.n_perturbations());
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c].targets.size() > slot) {
            auto it = labels[c].targets.begin();
            std::advance(it, slot);
            out(c, m.perturbation_index(*it)) = 1.0;
        }
    }
    return out;
}

/**
 * Backend values for every model parameter.
 */
template<typename Backend_>
struct ParamValues {
    std::map<std::string, typename Backend_::Value> values;
    const typename Backend_::Value& operator[](const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) {
            throw Error(ErrorKind::lookup, "parameter '" + name + "' is not bound");
        }
        return it->second;
    }
};

inline ParamValues<EagerBackend> eager_values(const Model& m) {
    ParamValues<EagerBackend> out;
    for (const auto& [name, t] : m.params.items) {
        out.values[name] = t;
    }
    return out;
}

/**
 * Register every parameter as a trainable leaf named after it.
 */
inline ParamValues<TapeBackend> tape_values(Tape& tape, const Model& m) {
    ParamValues<TapeBackend> out;
    for (const auto& [name, t] : m.params.items) {
        out.values[name] = tape.parameter(t, name);
    }
    return out;
}

namespace graph {

template<typename Backend_>
typename Backend_::Value activate(Backend_& be, const typename Backend_::Value& x, Activation act) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::leaky_relu: return be.leaky_relu(x, leaky_slope);
        case Activation::tanh: return be.tanh(x);
    }
    return x;
}

/** Gene-set activities: act(X (W .* M)) for masked variants, act(X W + b1) for dense ones. */
template<typename Backend_>
typename Backend_::Value alpha(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& x) {
    if (is_masked(m.config.variant)) {
        auto wm = be.mul(p["encoder.W"], be.constant(m.mask.values));
        return activate(be, be.matmul(x, wm), m.config.activation);
    }
    const std::size_t rows = be.value(x).rows();
    auto pre = be.add(be.matmul(x, p["encoder.W"]), be.broadcast_row(p["encoder.b1"], rows));
    return activate(be, pre, m.config.activation);
}

/** Input of the variational heads: the activities, or the second dense layer for MLP encoders. */
template<typename Backend_>
typename Backend_::Value head_input(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& a) {
    if (is_masked(m.config.variant)) {
        return a;
    }
    const std::size_t rows = be.value(a).rows();
    return be.leaky_relu(be.add(be.matmul(a, p["encoder.W2"]), be.broadcast_row(p["encoder.b2"], rows)), leaky_slope);
}

template<typename Backend_>
typename Backend_::Value mu(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& h) {
    if (m.config.variant == EncoderVariant::sena) {
        return h;
    }
    return be.matmul(h, p["encoder.delta_mu"]);
}

template<typename Backend_>
typename Backend_::Value logvar(Backend_& be, const ParamValues<Backend_>& p, const typename Backend_::Value& h) {
    return be.matmul(h, p["encoder.delta_logvar"]);
}

/** z = mu + exp(logvar / 2) * eps. */
template<typename Backend_>
typename Backend_::Value reparameterize(Backend_& be, const typename Backend_::Value& mu_v, const typename Backend_::Value& lv, const Tensor& eps) {
    return be.add(mu_v, be.mul(be.exp(be.scale(lv, 0.5)), be.constant(eps)));
}

/** Soft target of every perturbation: softmax(temperature * (leaky(E W1 + b1) W2 + b2)), one row per perturbation. */
template<typename Backend_>
typename Backend_::Value targets(Backend_& be, const Model& m, const ParamValues<Backend_>& p, double temperature) {
    const std::size_t P = m.n_perturbations();
    auto hidden = be.leaky_relu(be.add(be.matmul(p["intervention.embed"], p["intervention.W1"]), be.broadcast_row(p["intervention.b1"], P)), leaky_slope);
    auto logits = be.add(be.matmul(hidden, p["intervention.W2"]), be.broadcast_row(p["intervention.b2"], P));
    return be.softmax(logits, temperature);
}

/** Per-perturbation additive shift in z-space: shift_p * target_p. */
template<typename Backend_>
typename Backend_::Value shift_vectors(Backend_& be, const Model& m, const ParamValues<Backend_>& p, double temperature) {
    auto spread = be.matmul(p["intervention.shift"], be.constant(Tensor(1, m.latent_dim(), 1.0)));
    return be.mul(targets(be, m, p, temperature), spread);
}

/**
 * Add each cell's perturbation shifts to z, one target at a time, so a double equals two sequential singles.
 */
template<typename Backend_>
typename Backend_::Value intervene(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& z,
    const std::vector<PerturbationLabel>& labels, double temperature) {
    std::size_t max_order = 0;
    for (const auto& l : labels) {
        max_order = std::max(max_order, l.order());
    }
    if (max_order == 0) {
        return z;
    }
    auto shifts = shift_vectors(be, m, p, temperature);
    auto out = z;
    for (std::size_t slot = 0; slot < max_order; ++slot) {
        out = be.add(out, be.matmul(be.constant(intervention_selector(m, labels, slot)), shifts));
    }
    return out;
}

/** L = I + A + ... + A^max_power with A restricted to its strict upper triangle. */
template<typename Backend_>
typename Backend_::Value neumann(Backend_& be, const typename Backend_::Value& a_raw, std::size_t d, std::size_t max_power) {
    if (max_power == 0) {
        return be.constant(Tensor::identity(d));
    }
    auto a = be.mul(a_raw, be.constant(upper_pattern(d)));
    auto acc = be.add(be.constant(Tensor::identity(d)), a);
    auto power = a;
    for (std::size_t l = 2; l <= max_power; ++l) {
        power = be.matmul(power, a);
        acc = be.add(acc, power);
    }
    return acc;
}

template<typename Backend_>
typename Backend_::Value decode(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& u) {
    const std::size_t rows = be.value(u).rows();
    auto [first, second] = monomial_selectors(m.latent_dim());
    auto mono = be.mul(be.matmul(u, be.constant(first)), be.matmul(u, be.constant(second)));
    auto out = be.add(be.broadcast_row(p["decoder.C0"], rows), be.matmul(u, p["decoder.C1"]));
    return be.add(out, be.matmul(mono, p["decoder.C2"]));
}

template<typename Backend_>
struct Forward {
    typename Backend_::Value alpha, head, mu, logvar, z, z_intervened, L, u, x_hat;
};

/**
 * Full pass: activities, heads, reparameterized sample, intervention, causal layer, decoder.
 */
template<typename Backend_>
Forward<Backend_> forward(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const typename Backend_::Value& x,
    const std::vector<PerturbationLabel>& labels, const Tensor& eps, double temperature) {
    Forward<Backend_> f;
    f.alpha = alpha(be, m, p, x);
    f.head = head_input(be, m, p, f.alpha);
    f.mu = mu(be, m, p, f.head);
    f.logvar = logvar(be, p, f.head);
    f.z = reparameterize(be, f.mu, f.logvar, eps);
    f.z_intervened = intervene(be, m, p, f.z, labels, temperature);
    const std::size_t d = m.latent_dim();
    f.L = neumann(be, p["causal.A"], d, d == 0 ? 0 : d - 1);
    f.u = be.matmul(f.z_intervened, f.L);
    f.x_hat = decode(be, m, p, f.u);
    return f;
}

}

inline Tensor draw_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor out(rows, cols);
    for (auto& v : out.values()) {
        v = rng.normal();
    }
    return out;
}

/**
 * Gene-set activities for each row of `x`.
 */
inline Tensor encode_alpha(const Model& m, const Tensor& x) {
    if (x.cols() != m.n_genes()) {
        throw Error(ErrorKind::dimension, "expression rows have " + std::to_string(x.cols()) + " genes, model expects " + std::to_string(m.n_genes()));
    }
    if (!x.all_finite()) {
        throw Error(ErrorKind::domain, "non-finite expression input");
    }
    EagerBackend be;
    return graph::alpha(be, m, eager_values(m), x);
}

struct LatentSample {
    Tensor mu, logvar, z;
};

/**
 * Heads and a reparameterized draw from the rows of `alpha`.
 */
inline LatentSample encode_latent(const Model& m, const Tensor& alpha, Rng& rng) {
    if (!alpha.all_finite()) {
        throw Error(ErrorKind::domain, "non-finite activities");
    }
    EagerBackend be;
    auto p = eager_values(m);
    auto h = graph::head_input(be, m, p, alpha);
    LatentSample out;
    out.mu = graph::mu(be, m, p, h);
    out.logvar = graph::logvar(be, p, h);
    out.z = graph::reparameterize(be, out.mu, out.logvar, draw_normal(alpha.rows(), m.latent_dim(), rng));
    return out;
}

inline void require_strict_upper(const Tensor& a) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorKind::dimension, "adjacency must be square");
    }
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            if (a(i, j) != 0.0) {
                throw Error(ErrorKind::contract, "structure error: adjacency has a nonzero entry at (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") on or below the diagonal");
            }
        }
    }
}

/**
 * Truncated power series of (I - A)^{-1}; exact for a strictly upper triangular A once max_power >= d - 1.
 */
inline Tensor neumann_L(const Tensor& a, std::size_t max_power) {
    require_strict_upper(a);
    if (a.rows() > 0 && max_power + 1 < a.rows()) {
        throw Error(ErrorKind::contract, "max_power must be at least d - 1");
    }
    EagerBackend be;
    return graph::neumann(be, a, a.rows(), max_power);
}

inline Tensor model_L(const Model& m) {
    const std::size_t d = m.latent_dim();
    return neumann_L(m.params.at("causal.A"), d - 1);
}

/** u = z^T L for each row. */
inline Tensor to_causal_factors(const Tensor& z, const Tensor& L) { return ops::matmul(z, L); }

/** Soft latent target of every perturbation, one row each. */
inline Tensor intervention_targets(const Model& m) {
    EagerBackend be;
    return graph::targets(be, m, eager_values(m), m.config.temperature);
}

inline Tensor intervention_target(const Model& m, std::size_t pert_index) {
    if (pert_index >= m.n_perturbations()) {
        throw Error(ErrorKind::lookup, "perturbation index " + std::to_string(pert_index) + " out of range");
    }
    const Tensor all = intervention_targets(m);
    return ops::select_rows(all, std::vector<std::size_t>{pert_index});
}

/**
 * Shift each row of z by its label's interventions, with targets at the given softmax temperature.
 */
inline Tensor apply_intervention(const Model& m, const Tensor& z, const std::vector<PerturbationLabel>& labels, double temperature) {
    if (labels.size() != z.rows()) {
        throw Error(ErrorKind::dimension, "one perturbation label per row of z is required");
    }
    if (!(temperature > 0.0)) {
        throw Error(ErrorKind::domain, "temperature must be positive");
    }
    EagerBackend be;
    return graph::intervene(be, m, eager_values(m), z, labels, temperature);
}

inline Tensor apply_intervention(const Model& m, const Tensor& z, const std::vector<PerturbationLabel>& labels) {
    return apply_intervention(m, z, labels, m.config.temperature);
}

inline Tensor decode_poly(const Model& m, const Tensor& u) {
    EagerBackend be;
    return graph::decode(be, m, eager_values(m), u);
}

struct ForwardResult {
    Tensor x_hat, mu, logvar, z, u, alpha;
};

/**
 * Eager full pass over the rows of `x`, drawing the reparameterization noise from `rng`.
 */
inline ForwardResult forward(const Model& m, const Tensor& x, const std::vector<PerturbationLabel>& labels, Rng& rng) {
    if (x.cols() != m.n_genes()) {
        throw Error(ErrorKind::dimension, "expression rows have " + std::to_string(x.cols()) + " genes, model expects " + std::to_string(m.n_genes()));
    }
    if (!x.all_finite()) {
        throw Error(ErrorKind::domain, "non-finite expression input");
    }
    require_strict_upper(m.params.at("causal.A"));
    EagerBackend be;
    const Tensor eps = draw_normal(x.rows(), m.latent_dim(), rng);
    auto f = graph::forward(be, m, eager_values(m), x, labels, eps, m.config.temperature);
    return {f.x_hat, f.mu, f.logvar, f.z, f.u, f.alpha};
}

/**
 * Linear map from head inputs to latent means (the identity for the plain masked variant).
 */
inline Tensor mean_head(const Model& m) {
    if (m.config.variant == EncoderVariant::sena) {
        return Tensor::identity(m.n_bps());
    }
    return m.params.at("encoder.delta_mu");
}

/**
 * Effective first-layer weights: W .* M for masked encoders, W for dense ones.
 */
inline Tensor effective_first_layer(const Model& m) {
    const Tensor& w = m.params.at("encoder.W");
    return is_masked(m.config.variant) ? ops::mul(w, m.mask.values) : w;
}

}

#endif
