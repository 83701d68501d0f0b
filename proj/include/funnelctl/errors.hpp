#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace funnelctl {

/// Raised for invalid arguments and malformed inputs (bad stage index,
/// empty grid, history too short, invalid construction parameters).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The controller's gain argument left the domain [0, 1) of gamma.
class GainSingularity : public std::runtime_error {
public:
    GainSingularity(double t, double w, Eigen::VectorXd e_r)
        : std::runtime_error("gain singularity: w = " + std::to_string(w) +
                             " at t = " + std::to_string(t)),
          t_(t), w_(w), e_r_(std::move(e_r)) {}

    double time() const noexcept { return t_; }
    double argument() const noexcept { return w_; }
    const Eigen::VectorXd& e_r() const noexcept { return e_r_; }

private:
    double t_;
    double w_;
    Eigen::VectorXd e_r_;
};

/// An intermediate stage of the legacy controller reached its funnel.
class StageSingularity : public std::runtime_error {
public:
    StageSingularity(double t, int stage, double ratio)
        : std::runtime_error("stage " + std::to_string(stage) +
                             " reached its funnel boundary (|e_i|/psi_i = " +
                             std::to_string(ratio) + ") at t = " + std::to_string(t)),
          t_(t), stage_(stage), ratio_(ratio) {}

    double time() const noexcept { return t_; }
    int stage() const noexcept { return stage_; }
    double ratio() const noexcept { return ratio_; }

private:
    double t_;
    int stage_;
    double ratio_;
};

/// A right-hand side, controller input or integrator stage produced NaN/Inf.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace funnelctl
