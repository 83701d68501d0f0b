#pragma once

#include <vector>

#include <Eigen/Core>

#include "funnelctl/errchain.hpp"
#include "funnelctl/errors.hpp"

namespace funnelctl {

/// Forward-mode time-derivative propagation truncated at order p.
///
/// Coefficient n is the raw n-th derivative f^(n)(t), not the Taylor
/// coefficient f^(n)/n!, so a DerivativeStack seeds a jet directly.
/// Binary operations truncate to the lower of the two orders.
template <typename Scalar = double>
class Jet {
public:
    using Coeffs = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Jet() : c_(Coeffs::Zero(1)) {}
    explicit Jet(Coeffs c) : c_(std::move(c)) {
        if (c_.size() < 1) throw UsageError("jet needs at least the value coefficient");
    }

    static Jet constant(Scalar v, int order) {
        Coeffs c = Coeffs::Zero(order + 1);
        c(0) = v;
        return Jet(c);
    }

    int order() const noexcept { return static_cast<int>(c_.size()) - 1; }
    Scalar value() const { return c_(0); }
    Scalar operator[](int n) const { return c_(n); }
    const Coeffs& coeffs() const noexcept { return c_; }

    Jet truncated(int order) const {
        if (order < 0 || order > this->order()) throw UsageError("jet truncation order out of range");
        return Jet(Coeffs(c_.head(order + 1)));
    }

    /// d/dt: drops one order.
    Jet derivative() const {
        if (order() < 1) throw UsageError("derivative of an order-0 jet");
        return Jet(Coeffs(c_.tail(c_.size() - 1)));
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        const int n = std::min(a.order(), b.order());
        return Jet(Coeffs(a.c_.head(n + 1) + b.c_.head(n + 1)));
    }
    friend Jet operator-(const Jet& a, const Jet& b) {
        const int n = std::min(a.order(), b.order());
        return Jet(Coeffs(a.c_.head(n + 1) - b.c_.head(n + 1)));
    }
    friend Jet operator-(const Jet& a) { return Jet(Coeffs(-a.c_)); }
    friend Jet operator*(Scalar s, const Jet& a) { return Jet(Coeffs(s * a.c_)); }
    friend Jet operator*(const Jet& a, Scalar s) { return s * a; }

    /// Leibniz: (fg)^(n) = sum_j C(n, j) f^(j) g^(n-j)
    friend Jet operator*(const Jet& a, const Jet& b) {
        const int n = std::min(a.order(), b.order());
        Coeffs out = Coeffs::Zero(n + 1);
        for (int q = 0; q <= n; ++q)
            for (int j = 0; j <= q; ++j)
                out(q) += Scalar(static_cast<double>(binomial(q, j))) * a.c_(j) * b.c_(q - j);
        return Jet(out);
    }

    friend Jet operator/(const Jet& a, const Jet& b) { return a * b.reciprocal(); }

    /// h = 1/g from (g h)^(n) = 0 for n >= 1:
    /// h^(n) = -(1/g) sum_{j=1}^{n} C(n, j) g^(j) h^(n-j)
    Jet reciprocal() const {
        if (c_(0) == Scalar(0)) throw UsageError("reciprocal of a jet with zero value");
        const int n = order();
        Coeffs h = Coeffs::Zero(n + 1);
        h(0) = Scalar(1) / c_(0);
        for (int q = 1; q <= n; ++q) {
            Scalar s(0);
            for (int j = 1; j <= q; ++j) s += Scalar(static_cast<double>(binomial(q, j))) * c_(j) * h(q - j);
            h(q) = -s / c_(0);
        }
        return Jet(h);
    }

private:
    Coeffs c_;
};

/// One jet per component of the stack, coefficient n = block n, truncated at
/// the given order (order <= r - 1).
template <typename Scalar>
std::vector<Jet<Scalar>> jet_lift(const DerivativeStack<Scalar>& stack, int order) {
    if (order < 0 || order > stack.order() - 1)
        throw UsageError("jet_lift: order exceeds the stack's r - 1");
    std::vector<Jet<Scalar>> out;
    out.reserve(static_cast<std::size_t>(stack.dim()));
    for (Eigen::Index c = 0; c < stack.dim(); ++c)
        out.emplace_back(typename Jet<Scalar>::Coeffs(stack.blocks().row(c).head(order + 1).transpose()));
    return out;
}

}  // namespace funnelctl
