#ifndef SENA_GRADCHECK_HPP
#define SENA_GRADCHECK_HPP

#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

/**
 * @file gradcheck.hpp
 * @brief Central finite-difference verification of tape gradients.
 */

namespace sena {

struct GradientViolation {
    std::string group;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradientGroupReport {
    std::string group;
    std::size_t coordinates = 0;
    double max_relative_error = 0.0;
    std::size_t violations = 0;
};

struct GradientCheckReport {
    double tolerance = 0.0;
    std::vector<GradientGroupReport> groups;
    std::vector<GradientViolation> violations;

    bool passed() const { return violations.empty(); }

    double max_relative_error() const {
        double m = 0.0;
        for (const auto& g : groups) {
            m = std::max(m, g.max_relative_error);
        }
        return m;
    }
};

inline double gradient_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/**
 * Compare the tape gradient of `loss` against central differences with step `step`,
 * coordinate by coordinate, for every trainable leaf. Parameter groups are named after
 * the leaf names. The tape is restored to its original leaf values afterwards.
 */
inline GradientCheckReport check_gradients(Tape& tape, Var loss, double tolerance, double step = 1e-5) {
    if (!(tolerance > 0.0)) {
        throw Error(ErrorKind::contract, "gradient check tolerance must be positive");
    }
    GradientCheckReport report;
    report.tolerance = tolerance;

    const auto analytic = tape.gradient(loss);
    for (NodeId id : tape.parameters()) {
        const Tensor original = tape.value(id);
        const Tensor& grad = analytic.at(id);
        GradientGroupReport group;
        group.group = tape.node(id).name.empty() ? "leaf" + std::to_string(id) : tape.node(id).name;
        group.coordinates = original.size();

        for (std::size_t k = 0; k < original.size(); ++k) {
            Tensor probe = original;
            probe[k] = original[k] + step;
            tape.set_leaf(id, probe);
            tape.replay();
            const double up = tape.value(loss).item();

            probe[k] = original[k] - step;
            tape.set_leaf(id, probe);
            tape.replay();
            const double down = tape.value(loss).item();

            const double numeric = (up - down) / (2.0 * step);
            const double err = gradient_relative_error(grad[k], numeric);
            group.max_relative_error = std::max(group.max_relative_error, err);
            if (err > tolerance) {
                ++group.violations;
                report.violations.push_back({group.group, k, grad[k], numeric, err});
            }
        }
        tape.set_leaf(id, original);
        report.groups.push_back(group);
    }
    tape.replay();
    return report;
}

}

#endif
