#include "funnelctl/reference.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "funnelctl/errors.hpp"

namespace funnelctl {

namespace {

// j! / (j - n)!
double falling(int j, int n) {
    double f = 1.0;
    for (int i = 0; i < n; ++i) f *= static_cast<double>(j - i);
    return f;
}

double poly_derivative(const std::vector<double>& c, double tau, int n) {
    double acc = 0.0;
    for (int j = static_cast<int>(c.size()) - 1; j >= n; --j) acc = acc * tau + c[static_cast<std::size_t>(j)] * falling(j, n);
    return acc;
}

std::size_t segment_of(const PolynomialSpline& s, double t) {
    if (t < s.knots.front() || t > s.knots.back()) throw UsageError("spline queried outside its knot range");
    std::size_t i = 0;
    while (i + 2 < s.knots.size() && t >= s.knots[i + 1]) ++i;
    return i;
}

double spline_derivative(const PolynomialSpline& s, double t, int n) {
    const std::size_t i = segment_of(s, t);
    return poly_derivative(s.coefficients[i], t - s.knots[i], n);
}

double spline_bound(const PolynomialSpline& s, int n) {
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < s.knots.size(); ++i) {
        const double h = s.knots[i + 1] - s.knots[i];
        const auto& c = s.coefficients[i];
        double b = 0.0;
        for (int j = n; j < static_cast<int>(c.size()); ++j)
            b += std::abs(c[static_cast<std::size_t>(j)]) * falling(j, n) * std::pow(h, j - n);
        best = std::max(best, b);
    }
    return best;
}

void validate(const PolynomialSpline& s) {
    if (s.knots.size() < 2) throw UsageError("spline needs at least two knots");
    if (s.coefficients.size() != s.knots.size() - 1) throw UsageError("spline needs one coefficient list per segment");
    for (std::size_t i = 0; i + 1 < s.knots.size(); ++i) {
        if (!(s.knots[i + 1] > s.knots[i])) throw UsageError("spline knots must increase");
        if (s.coefficients[i].empty()) throw UsageError("spline segment without coefficients");
    }
    if (s.smoothness < 1) throw UsageError("spline smoothness must be >= 1");
    for (std::size_t i = 1; i + 1 < s.knots.size(); ++i) {
        const double h = s.knots[i] - s.knots[i - 1];
        for (int n = 0; n < s.smoothness; ++n) {
            const double left = poly_derivative(s.coefficients[i - 1], h, n);
            const double right = poly_derivative(s.coefficients[i], 0.0, n);
            if (std::abs(left - right) > 1e-9 * (1.0 + std::abs(left)))
                throw UsageError("spline derivative " + std::to_string(n) + " jumps at knot " + std::to_string(i));
        }
    }
}

}  // namespace

ReferenceSignal::ReferenceSignal(std::vector<ScalarReference> components) : components_(std::move(components)) {
    if (components_.empty()) throw UsageError("reference needs at least one component");
    for (const auto& c : components_)
        if (const auto* s = std::get_if<PolynomialSpline>(&c)) validate(*s);
}

ReferenceSignal ReferenceSignal::cosine(double amplitude, double frequency, double phase, int m) {
    return ReferenceSignal(std::vector<ScalarReference>(static_cast<std::size_t>(m),
                                                        CosineSignal{amplitude, frequency, phase}));
}

Eigen::VectorXd ReferenceSignal::derivative(double t, int n) const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) {
        const auto& c = components_[static_cast<std::size_t>(i)];
        if (const auto* cs = std::get_if<CosineSignal>(&c)) {
            v(i) = cs->amplitude * std::pow(cs->frequency, n) *
                   std::cos(cs->frequency * t + cs->phase + n * std::numbers::pi / 2);
        } else {
            v(i) = spline_derivative(std::get<PolynomialSpline>(c), t, n);
        }
    }
    return v;
}

double ReferenceSignal::derivative_bound(int n) const {
    double sq = 0.0;
    for (const auto& c : components_) {
        double b;
        if (const auto* cs = std::get_if<CosineSignal>(&c)) b = std::abs(cs->amplitude) * std::pow(std::abs(cs->frequency), n);
        else b = spline_bound(std::get<PolynomialSpline>(c), n);
        sq += b * b;
    }
    return std::sqrt(sq);
}

int ReferenceSignal::max_order() const {
    int r = std::numeric_limits<int>::max();
    for (const auto& c : components_)
        if (const auto* s = std::get_if<PolynomialSpline>(&c)) r = std::min(r, s->smoothness);
    return r;
}

RefStack ref_stack(const ReferenceSignal& ref, double t, int r) {
    if (!(t >= 0.0)) throw UsageError("reference evaluated at negative time");
    if (r < 1) throw UsageError("reference stack order must be >= 1");
    if (r > ref.max_order()) throw UsageError("reference is not smooth enough for order r");
    Stack s(r, ref.dim());
    for (int j = 0; j < r; ++j) s.block(j) = ref.derivative(t, j);
    return {std::move(s), ref.derivative(t, r), ref.derivative_bound(r)};
}

}  // namespace funnelctl
