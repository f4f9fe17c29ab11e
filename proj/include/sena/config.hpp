#ifndef SENA_CONFIG_HPP
#define SENA_CONFIG_HPP

#include "error.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "pathways.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file config.hpp
 * @brief Training configuration and its flat `key = value` text form.
 */

namespace sena {

/**
 * @brief Everything that determines a training run.
 *
 * Keys in the config file are exactly these field names.
 */
struct TrainConfig {
    double lambda = 0.0;
    std::size_t latent_dim = 8;
    EncoderVariant encoder_variant = EncoderVariant::sena_delta;
    Activation activation = Activation::leaky_relu;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta_kld = 0.01;
    double gamma_mmd = 1.0;
    double rho_l1 = 1e-3;
    double ell1_encoder = 1e-3;
    std::uint64_t seed = 0;
    std::vector<double> lambda_grid = {0.0, 0.1, 0.01, 1e-3};
    std::vector<std::size_t> latent_dim_grid = {5, 10, 35, 70, 105};
    double temperature = 100.0;
    double train_temperature = 1.0;
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 64;
    MmdEstimator mmd_estimator = MmdEstimator::unbiased;
    double mmd_bandwidth = 0.0;
    std::size_t max_bp_size = 30;
    double overlap_frac = 0.5;
    std::size_t min_genes = 5;

    ModelConfig model_config() const {
        ModelConfig mc;
        mc.variant = encoder_variant;
        mc.activation = activation;
        mc.latent_dim = latent_dim;
        mc.lambda = lambda;
        mc.temperature = temperature;
        mc.train_temperature = train_temperature;
        mc.embed_dim = embed_dim;
        mc.hidden_dim = hidden_dim;
        return mc;
    }

    LossWeights loss_weights() const {
        LossWeights w;
        w.beta_kld = beta_kld;
        w.gamma_mmd = gamma_mmd;
        w.rho_l1 = rho_l1;
        w.ell1_encoder = encoder_variant == EncoderVariant::mlp_l1 ? ell1_encoder : 0.0;
        return w;
    }

    MmdOptions mmd_options() const { return {mmd_estimator, mmd_bandwidth}; }

    SelectionOptions selection() const { return {max_bp_size, overlap_frac, min_genes}; }

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::validation, "config: " + m); };
        if (latent_dim < 1) fail("latent_dim must be at least 1");
        if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
        if (batch_size < 1) fail("batch_size must be positive");
        if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
        if (!(beta_kld >= 0.0 && gamma_mmd >= 0.0 && rho_l1 >= 0.0 && ell1_encoder >= 0.0)) fail("loss weights must be non-negative");
        if (!(temperature > 0.0) || !(train_temperature > 0.0)) fail("temperatures must be positive");
        if (!(mmd_bandwidth >= 0.0)) fail("mmd_bandwidth must be non-negative (0 selects the median heuristic)");
        if (!(overlap_frac > 0.0 && overlap_frac <= 1.0)) fail("overlap_frac must lie in (0, 1]");
        if (min_genes < 1) fail("min_genes must be at least 1");
        for (double l : lambda_grid) {
            if (!(l >= 0.0 && l <= 1.0)) fail("lambda_grid values must lie in [0, 1]");
        }
        for (auto d : latent_dim_grid) {
            if (d < 1) fail("latent_dim_grid values must be at least 1");
        }
    }

    bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template<typename T_>
std::string join(const std::vector<T_>& xs) {
    std::string out;
    for (const auto& x : xs) {
        if (!out.empty()) {
            out += ',';
        }
        if constexpr (std::is_floating_point_v<T_>) {
            out += fmt_num(x);
        } else {
            out += std::to_string(x);
        }
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return out;
    } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    try {
        if (v.empty() || v[0] == '-') {
            throw std::invalid_argument(v);
        }
        std::size_t used = 0;
        auto out = std::stoull(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return out;
    } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
}

inline std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

}

/**
 * Ordered key/value view of a config, used for writing and for `--help`.
 */
inline std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
    using detail::fmt_num;
    return {
        {"lambda", fmt_num(c.lambda)},
        {"latent_dim", std::to_string(c.latent_dim)},
        {"encoder_variant", to_string(c.encoder_variant)},
        {"activation", to_string(c.activation)},
        {"epochs", std::to_string(c.epochs)},
        {"batch_size", std::to_string(c.batch_size)},
        {"learning_rate", fmt_num(c.learning_rate)},
        {"beta_kld", fmt_num(c.beta_kld)},
        {"gamma_mmd", fmt_num(c.gamma_mmd)},
        {"rho_l1", fmt_num(c.rho_l1)},
        {"ell1_encoder", fmt_num(c.ell1_encoder)},
        {"seed", std::to_string(c.seed)},
        {"lambda_grid", detail::join(c.lambda_grid)},
        {"latent_dim_grid", detail::join(c.latent_dim_grid)},
        {"temperature", fmt_num(c.temperature)},
        {"train_temperature", fmt_num(c.train_temperature)},
        {"embed_dim", std::to_string(c.embed_dim)},
        {"hidden_dim", std::to_string(c.hidden_dim)},
        {"mmd_estimator", c.mmd_estimator == MmdEstimator::unbiased ? "unbiased" : "biased"},
        {"mmd_bandwidth", fmt_num(c.mmd_bandwidth)},
        {"max_bp_size", std::to_string(c.max_bp_size)},
        {"overlap_frac", fmt_num(c.overlap_frac)},
        {"min_genes", std::to_string(c.min_genes)},
    };
}

/**
 * Set one field from its text form. Unknown keys are a validation error.
 */
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    const std::string v = trim(value);
    if (key == "lambda") c.lambda = to_double(key, v);
    else if (key == "latent_dim") c.latent_dim = to_uint(key, v);
    else if (key == "encoder_variant") c.encoder_variant = parse_encoder_variant(v);
    else if (key == "activation") c.activation = parse_activation(v);
    else if (key == "epochs") c.epochs = to_uint(key, v);
    else if (key == "batch_size") c.batch_size = to_uint(key, v);
    else if (key == "learning_rate") c.learning_rate = to_double(key, v);
    else if (key == "beta_kld") c.beta_kld = to_double(key, v);
    else if (key == "gamma_mmd") c.gamma_mmd = to_double(key, v);
    else if (key == "rho_l1") c.rho_l1 = to_double(key, v);
    else if (key == "ell1_encoder") c.ell1_encoder = to_double(key, v);
    else if (key == "seed") c.seed = to_uint(key, v);
    else if (key == "lambda_grid") {
        c.lambda_grid.clear();
        for (const auto& item : split_commas(v)) c.lambda_grid.push_back(to_double(key, item));
    } else if (key == "latent_dim_grid") {
        c.latent_dim_grid.clear();
        for (const auto& item : split_commas(v)) c.latent_dim_grid.push_back(to_uint(key, item));
    } else if (key == "temperature") c.temperature = to_double(key, v);
    else if (key == "train_temperature") c.train_temperature = to_double(key, v);
    else if (key == "embed_dim") c.embed_dim = to_uint(key, v);
    else if (key == "hidden_dim") c.hidden_dim = to_uint(key, v);
    else if (key == "mmd_estimator") {
        if (v == "unbiased") c.mmd_estimator = MmdEstimator::unbiased;
        else if (v == "biased") c.mmd_estimator = MmdEstimator::biased;
        else throw Error(ErrorKind::validation, "config key 'mmd_estimator': expected unbiased or biased");
    } else if (key == "mmd_bandwidth") c.mmd_bandwidth = to_double(key, v);
    else if (key == "max_bp_size") c.max_bp_size = to_uint(key, v);
    else if (key == "overlap_frac") c.overlap_frac = to_double(key, v);
    else if (key == "min_genes") c.min_genes = to_uint(key, v);
    else throw Error(ErrorKind::validation, "unknown config key '" + key + "'");
}

inline std::string write_config(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_entries(c)) {
        out += k + " = " + v + "\n";
    }
    return out;
}

/**
 * Parse `key = value` lines over defaults; `#` starts a comment.
 */
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::validation, "config line " + std::to_string(line_no) + ": expected key = value");
        }
        set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    base.validate();
    return base;
}

inline TrainConfig parse_config_text(const std::string& text, TrainConfig base = {}) {
    std::istringstream in(text);
    return parse_config(in, std::move(base));
}

inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open config file " + path);
    }
    return parse_config(in, std::move(base));
}

}

#endif
