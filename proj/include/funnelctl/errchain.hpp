#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "funnelctl/derivative_stack.hpp"
#include "funnelctl/errors.hpp"
#include "funnelctl/funnels.hpp"

namespace funnelctl {

/// Largest supported order; binomials stay exact in 64-bit integers.
inline constexpr int kMaxOrder = 20;

/// (k, r, m) of the auxiliary error recursion xi_{i+1}(z) = xi_i(shift z) + k xi_i(z).
struct ErrorChainParams {
    double k;
    int r;
    int m;

    ErrorChainParams(double k_, int r_, int m_) : k(k_), r(r_), m(m_) {
        if (!(k >= 0.0) || !std::isfinite(k)) throw UsageError("chain gain k must be finite and >= 0");
        if (r < 1 || r > kMaxOrder) throw UsageError("chain order r must lie in [1, 20]");
        if (m < 1) throw UsageError("output dimension m must be >= 1");
    }

    /// k >= alpha + 2
    bool theorem_compliant(const FunnelFunction& f) const { return k >= f.alpha() + 2.0; }
};

/// Exact binomial coefficient C(n, j) for 0 <= j <= n <= kMaxOrder.
constexpr std::int64_t binomial(int n, int j) {
    if (j < 0 || j > n) return 0;
    std::int64_t c = 1;
    for (int i = 1; i <= j; ++i) c = c * (n - j + i) / i;
    return c;
}

namespace detail {
template <typename Scalar>
void check_shape(const ErrorChainParams& p, const DerivativeStack<Scalar>& z) {
    if (z.order() != p.r || z.dim() != p.m) throw UsageError("stack shape does not match (r, m)");
}
template <typename Scalar>
void check_stage(const ErrorChainParams& p, int i) {
    if (i < 1 || i > p.r) throw UsageError("stage index out of range [1, r]");
}
}  // namespace detail

/// (z_1, ..., z_r) -> (z_2, ..., z_r, 0)
template <typename Scalar>
DerivativeStack<Scalar> left_shift(const DerivativeStack<Scalar>& z) {
    DerivativeStack<Scalar> out(z.order(), z.dim());
    const auto r = z.order();
    if (r > 1) out.blocks().leftCols(r - 1) = z.blocks().rightCols(r - 1);
    return out;
}

/// All stages xi_1(z), ..., xi_r(z) as the columns of an m x r matrix.
///
/// Evaluates the recursion as written. Level i holds xi_i(shift^j z) for
/// j = 0..r-i; level i+1 is xi_i(shift^{j+1} z) + k xi_i(shift^j z), and
/// xi_1(shift^j z) = z_{j+1}. Shifted-out blocks are zero, so every
/// xi_i(shift^j z) with j > r - i vanishes and is never needed.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> xi_all(const ErrorChainParams& p,
                                                             const DerivativeStack<Scalar>& z) {
    detail::check_shape(p, z);
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Scalar k(p.k);
    Mat level = z.blocks();  // column j: xi_1(shift^j z)
    Mat out(p.m, p.r);
    out.col(0) = level.col(0);
    for (int i = 1; i < p.r; ++i) {
        const int n = p.r - i;
        Mat next(p.m, n);
        for (int j = 0; j < n; ++j) next.col(j) = level.col(j + 1) + k * level.col(j);
        level = std::move(next);
        out.col(i) = level.col(0);
    }
    return out;
}

/// xi_i(z) for a stage i in [1, r].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xi_eval(const ErrorChainParams& p, int i,
                                                 const DerivativeStack<Scalar>& z) {
    detail::check_stage<Scalar>(p, i);
    return xi_all(p, z).col(i - 1);
}

/// Binomial expansion sum_{j<i} C(i-1, j) k^{i-1-j} z_{j+1}. Independent of
/// the recursion; used to cross-check it.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xi_closed_form(const ErrorChainParams& p, int i,
                                                        const DerivativeStack<Scalar>& z) {
    detail::check_stage<Scalar>(p, i);
    detail::check_shape(p, z);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(p.m);
    for (int j = 0; j < i; ++j) {
        Scalar coeff(static_cast<double>(binomial(i - 1, j)));
        for (int e = 0; e < i - 1 - j; ++e) coeff *= Scalar(p.k);
        acc += coeff * z.block(j);
    }
    return acc;
}

/// The rm x rm matrix S with S * stacked(z) = stacked(xi_1(z), ..., xi_r(z)).
/// Block (i, j) = C(i-1, j-1) k^{i-j} I_m for j <= i; unit lower block-triangular.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> s_matrix(const ErrorChainParams& p) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = static_cast<Eigen::Index>(p.r) * p.m;
    Mat S = Mat::Zero(n, n);
    for (int i = 0; i < p.r; ++i) {
        for (int j = 0; j <= i; ++j) {
            Scalar c(static_cast<double>(binomial(i, j)));
            for (int e = 0; e < i - j; ++e) c *= Scalar(p.k);
            S.block(i * p.m, j * p.m, p.m, p.m) = c * Mat::Identity(p.m, p.m);
        }
    }
    return S;
}

struct FeasibilityReport {
    double t;
    std::vector<double> stage_norms;
    std::vector<double> stage_bounds;
    std::vector<double> margins;
    bool feasible;

    /// 1-based stages whose margin is not strictly positive.
    std::vector<int> violated_stages() const;
};

/// Membership of z in D_t: ||xi_1(z)|| < psi(t) and ||xi_i(z)|| < beta/alpha for i >= 2.
FeasibilityReport check_domain_D(double t, const Stack& z, const FunnelFunction& f,
                                 const ErrorChainParams& p);

/// Bounds mu[i][j] on ||xi_i^(j)|| (0-based i, j = 0..r-1-i) and the drift constant lambda.
struct MuTable {
    std::vector<std::vector<double>> mu;
    double lambda;

    double at(int stage, int order) const;  // 1-based stage, as written mu_i^j
};

MuTable mu_table(const ErrorChainParams& p, double psi_sup, double floor, double ref_rth_bound);
MuTable mu_table(const ErrorChainParams& p, const FunnelFunction& f, double ref_rth_bound);

}  // namespace funnelctl
