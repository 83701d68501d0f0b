#include "funnelctl/funnels.hpp"

#include <cmath>
#include <limits>

#include "funnelctl/errors.hpp"

namespace funnelctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

FunnelFunction::FunnelFunction(FunnelFamily family, double alpha, double beta)
    : family_(family), alpha_(alpha), beta_(beta) {
    if (!positive(alpha_) || !positive(beta_))
        throw UsageError("funnel constants alpha and beta must be positive");
    std::visit(overloaded{
                   [](const Exponential& e) {
                       if (!positive(e.a) || !positive(e.lambda) || !positive(e.c))
                           throw UsageError("exponential funnel needs a, lambda, c > 0");
                   },
                   [](const ConstantBand& b) {
                       if (!positive(b.c)) throw UsageError("constant funnel needs c > 0");
                   },
               },
               family_);
}

double FunnelFunction::value(double t) const { return derivative(t, 0); }

double FunnelFunction::derivative(double t) const { return derivative(t, 1); }

double FunnelFunction::derivative(double t, int n) const {
    if (n < 0) throw UsageError("negative derivative order");
    return std::visit(overloaded{
                          [&](const Exponential& e) {
                              double d = e.a * std::pow(-e.lambda, n) * std::exp(-e.lambda * t);
                              return n == 0 ? d + e.c : d;
                          },
                          [&](const ConstantBand& b) { return n == 0 ? b.c : 0.0; },
                      },
                      family_);
}

std::vector<double> FunnelFunction::derivatives(double t, int order) const {
    std::vector<double> out(static_cast<std::size_t>(order) + 1);
    for (int n = 0; n <= order; ++n) out[static_cast<std::size_t>(n)] = derivative(t, n);
    return out;
}

double FunnelFunction::sup_norm() const {
    return std::visit(overloaded{
                          [](const Exponential& e) { return e.a + e.c; },
                          [](const ConstantBand& b) { return b.c; },
                      },
                      family_);
}

FunnelFunction FunnelFunction::scaled(double s) const {
    if (!positive(s)) throw UsageError("funnel scale must be positive");
    FunnelFamily f = std::visit(overloaded{
                                    [&](const Exponential& e) -> FunnelFamily {
                                        return Exponential{s * e.a, e.lambda, s * e.c};
                                    },
                                    [&](const ConstantBand& b) -> FunnelFamily {
                                        return ConstantBand{s * b.c};
                                    },
                                },
                                family_);
    return FunnelFunction(f, alpha_, s * beta_);
}

FunnelValue eval_funnel(const FunnelFunction& f, double t) {
    if (!(t >= 0.0)) throw UsageError("funnel evaluated at negative time");
    return {f.value(t), f.derivative(t)};
}

MembershipReport verify_class_G(const FunnelFunction& f, std::span<const double> grid, double tol) {
    if (grid.empty()) throw UsageError("verify_class_G: empty grid");
    if (!(tol >= 0.0)) throw UsageError("verify_class_G: tolerance must be nonnegative");
    MembershipReport rep{true, std::numeric_limits<double>::infinity(), grid.front(),
                         std::numeric_limits<double>::infinity()};
    double prev = -std::numeric_limits<double>::infinity();
    for (double t : grid) {
        if (t < 0.0 || t < prev) throw UsageError("verify_class_G: grid must be sorted and nonnegative");
        prev = t;
        const auto [psi, psi_dot] = eval_funnel(f, t);
        const double residual = psi_dot + f.alpha() * psi - f.beta();
        if (residual < rep.worst_residual) {
            rep.worst_residual = residual;
            rep.worst_t = t;
        }
        rep.min_psi = std::min(rep.min_psi, psi);
    }
    rep.ok = rep.worst_residual >= -tol && rep.min_psi > 0.0;
    return rep;
}

double funnel_floor(const FunnelFunction& f) { return f.beta() / f.alpha(); }

std::vector<double> uniform_grid(double t0, double t1, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {t0};
    std::vector<double> g(n);
    const double h = (t1 - t0) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = t0 + h * static_cast<double>(i);
    g.back() = t1;
    return g;
}

}  // namespace funnelctl
