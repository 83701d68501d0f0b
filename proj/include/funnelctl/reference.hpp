#pragma once

#include <variant>
#include <vector>

#include <Eigen/Core>

#include "funnelctl/derivative_stack.hpp"

namespace funnelctl {

/// amplitude * cos(frequency * t + phase)
struct CosineSignal {
    double amplitude;
    double frequency;
    double phase;
};

/// Piecewise polynomial; segment i covers [knots[i], knots[i+1]] and holds
/// coefficients in ascending powers of (t - knots[i]). Derivatives of order
/// < smoothness are continuous across interior knots.
struct PolynomialSpline {
    std::vector<double> knots;
    std::vector<std::vector<double>> coefficients;
    int smoothness;
};

using ScalarReference = std::variant<CosineSignal, PolynomialSpline>;

/// One scalar signal per output component.
class ReferenceSignal {
public:
    /// Throws UsageError for malformed splines (unsorted knots, ragged
    /// coefficients, or jumps in derivatives below the declared smoothness).
    explicit ReferenceSignal(std::vector<ScalarReference> components);

    static ReferenceSignal cosine(double amplitude, double frequency, double phase, int m = 1);

    int dim() const noexcept { return static_cast<int>(components_.size()); }
    const std::vector<ScalarReference>& components() const noexcept { return components_; }

    /// n-th derivative of every component at t.
    Eigen::VectorXd derivative(double t, int n) const;
    /// Upper bound on sup_t ||y_ref^(n)(t)||; exact for cosines, coefficient
    /// bound (sum |c_j| j!/(j-n)! h^(j-n) per segment) for splines.
    double derivative_bound(int n) const;
    /// Highest order r the signal supports as a W^{r,inf} reference.
    int max_order() const;

private:
    std::vector<ScalarReference> components_;
};

struct RefStack {
    Stack stack;            // (y_ref, ..., y_ref^(r-1))
    Eigen::VectorXd rth;    // y_ref^(r)
    double rth_bound;       // ||y_ref^(r)||_inf
};

/// Throws UsageError for negative t, t outside a spline's knot range, or r
/// above a spline's smoothness.
RefStack ref_stack(const ReferenceSignal& ref, double t, int r);

}  // namespace funnelctl
