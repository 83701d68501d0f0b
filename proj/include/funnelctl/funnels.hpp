#pragma once

#include <span>
#include <variant>
#include <vector>

namespace funnelctl {

/// psi(t) = a * exp(-lambda * t) + c
struct Exponential {
    double a;
    double lambda;
    double c;
};

/// psi(t) = c
struct ConstantBand {
    double c;
};

using FunnelFamily = std::variant<Exponential, ConstantBand>;

struct FunnelValue {
    double psi;
    double psi_dot;
};

/// A performance boundary psi together with the constants (alpha, beta) of
/// the inequality psi' >= -alpha * psi + beta that the caller commits to.
class FunnelFunction {
public:
    /// Throws UsageError for non-positive shape parameters or constants.
    FunnelFunction(FunnelFamily family, double alpha, double beta);

    static FunnelFunction exponential(double a, double lambda, double c, double alpha, double beta) {
        return FunnelFunction(Exponential{a, lambda, c}, alpha, beta);
    }
    static FunnelFunction constant(double c, double alpha, double beta) {
        return FunnelFunction(ConstantBand{c}, alpha, beta);
    }

    const FunnelFamily& family() const noexcept { return family_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }

    double value(double t) const;
    double derivative(double t) const;
    /// n-th time derivative (n = 0 is the value).
    double derivative(double t, int n) const;
    /// (psi(t), psi'(t), ..., psi^(order)(t))
    std::vector<double> derivatives(double t, int order) const;

    /// ||psi||_inf over t >= 0.
    double sup_norm() const;

    /// Same shape scaled by s > 0; (alpha, beta) become (alpha, s * beta).
    FunnelFunction scaled(double s) const;

private:
    FunnelFamily family_;
    double alpha_;
    double beta_;
};

FunnelValue eval_funnel(const FunnelFunction& f, double t);

struct MembershipReport {
    bool ok;
    double worst_residual;  // min over the grid of psi' + alpha psi - beta
    double worst_t;
    double min_psi;
};

/// Checks psi > 0 and psi' + alpha psi - beta >= -tol on every grid point.
/// Throws UsageError on an empty, unsorted or negative grid.
MembershipReport verify_class_G(const FunnelFunction& f, std::span<const double> grid, double tol);

/// beta / alpha: the bound used for stages 2..r of the feasibility set.
double funnel_floor(const FunnelFunction& f);

/// n points evenly spaced on [t0, t1] (inclusive).
std::vector<double> uniform_grid(double t0, double t1, std::size_t n = 1001);

}  // namespace funnelctl
