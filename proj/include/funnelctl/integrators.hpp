#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "funnelctl/errors.hpp"

namespace funnelctl {

/// Classical four-stage Runge-Kutta step. Throws NonFiniteError if any stage
/// slope is not finite.
template <typename Rhs, typename State>
State rk4_step(Rhs&& rhs, double t, const State& x, double dt) {
    auto check = [&](const State& k, const char* name) {
        if (!k.allFinite()) throw NonFiniteError(std::string("rk4 stage ") + name + " non-finite at t = " + std::to_string(t));
    };
    const State k1 = rhs(t, x);
    check(k1, "k1");
    const State k2 = rhs(t + dt / 2, State(x + dt / 2 * k1));
    check(k2, "k2");
    const State k3 = rhs(t + dt / 2, State(x + dt / 2 * k2));
    check(k3, "k3");
    const State k4 = rhs(t + dt, State(x + dt * k3));
    check(k4, "k4");
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

template <typename State>
struct EmbeddedStep {
    State x;       // fifth-order solution
    State err;     // difference to the embedded fourth-order solution
};

/// Dormand-Prince 5(4) step (no FSAL reuse).
template <typename Rhs, typename State>
EmbeddedStep<State> dormand_prince_step(Rhs&& rhs, double t, const State& x, double h) {
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;

    auto checked = [&](const State& k) {
        if (!k.allFinite()) throw NonFiniteError("dormand-prince stage non-finite at t = " + std::to_string(t));
        return k;
    };
    const State k1 = checked(rhs(t, x));
    const State k2 = checked(rhs(t + h / 5, State(x + h * a21 * k1)));
    const State k3 = checked(rhs(t + 3 * h / 10, State(x + h * (a31 * k1 + a32 * k2))));
    const State k4 = checked(rhs(t + 4 * h / 5, State(x + h * (a41 * k1 + a42 * k2 + a43 * k3))));
    const State k5 = checked(rhs(t + 8 * h / 9, State(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4))));
    const State k6 =
        checked(rhs(t + h, State(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5))));
    State x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const State k7 = checked(rhs(t + h, x5));
    State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    return {std::move(x5), std::move(err)};
}

/// max_i |err_i| / (atol + rtol * max(|x_i|, |x_new_i|))
template <typename State>
double scaled_error(const State& err, const State& x, const State& x_new, double rtol, double atol) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(x(i)), std::abs(x_new(i)));
        e = std::max(e, std::abs(err(i)) / sc);
    }
    return e;
}

}  // namespace funnelctl
