#ifndef SENA_OPTIMIZER_HPP
#define SENA_OPTIMIZER_HPP

#include "model.hpp"

#include <cmath>
#include <map>
#include <string>

/**
 * @file optimizer.hpp
 * @brief Adaptive-moment gradient descent with bias correction.
 */

namespace sena {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/**
 * First and second moment estimates per parameter, plus the number of steps taken.
 */
struct AdamState {
    ParamSet m;
    ParamSet v;
    std::size_t step = 0;

    static AdamState zeros_like(const ParamSet& params) {
        AdamState s;
        for (const auto& [name, t] : params.items) {
            s.m.add(name, Tensor(t.rows(), t.cols()));
            s.v.add(name, Tensor(t.rows(), t.cols()));
        }
        return s;
    }

    bool operator==(const AdamState&) const = default;
};

/**
 * One update of every parameter that has a gradient. Parameters missing from `grads` are left alone
 * and their moments are not advanced.
 */
inline void adam_step(ParamSet& params, const std::map<std::string, Tensor>& grads, AdamState& state, double lr, const AdamOptions& opt = {}) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    for (auto& [name, w] : params.items) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            continue;
        }
        const Tensor& g = it->second;
        ops::require_same_shape(w, g, "adam_step");
        auto m = state.m.at(name).values();
        auto v = state.v.at(name).values();
        auto wv = w.values();
        const auto& gv = g.values();
        for (std::size_t i = 0; i < wv.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gv[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gv[i] * gv[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            wv[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

}

#endif
