#include "funnelctl/errchain.hpp"

namespace funnelctl {

std::vector<int> FeasibilityReport::violated_stages() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < margins.size(); ++i)
        if (!(margins[i] > 0.0)) out.push_back(static_cast<int>(i) + 1);
    return out;
}

FeasibilityReport check_domain_D(double t, const Stack& z, const FunnelFunction& f,
                                 const ErrorChainParams& p) {
    const Eigen::MatrixXd xi = xi_all(p, z);
    FeasibilityReport rep{t, {}, {}, {}, true};
    const double floor = funnel_floor(f);
    for (int i = 0; i < p.r; ++i) {
        const double norm = xi.col(i).norm();
        const double bound = i == 0 ? f.value(t) : floor;
        rep.stage_norms.push_back(norm);
        rep.stage_bounds.push_back(bound);
        rep.margins.push_back(bound - norm);
        // strict: the boundary itself is outside D_t; NaN norms are infeasible too
        if (!(norm < bound)) rep.feasible = false;
    }
    return rep;
}

double MuTable::at(int stage, int order) const {
    if (stage < 1 || stage > static_cast<int>(mu.size())) throw UsageError("mu stage out of range");
    const auto& row = mu[static_cast<std::size_t>(stage - 1)];
    if (order < 0 || order >= static_cast<int>(row.size())) throw UsageError("mu order out of range");
    return row[static_cast<std::size_t>(order)];
}

MuTable mu_table(const ErrorChainParams& p, double psi_sup, double floor, double ref_rth_bound) {
    if (!(psi_sup > 0.0) || !(floor > 0.0) || !(ref_rth_bound >= 0.0))
        throw UsageError("mu_table: bounds must be positive");
    const int r = p.r;
    MuTable t;
    t.mu.resize(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        t.mu[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(r - i), 0.0);
        t.mu[static_cast<std::size_t>(i)][0] = i == 0 ? psi_sup : floor;
    }
    // mu_i^{j+1} = mu_{i+1}^j + k mu_i^j, filled by increasing j
    for (int j = 0; j + 1 < r; ++j)
        for (int i = 0; i + j + 1 < r; ++i)
            t.mu[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)] =
                t.mu[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(j)] +
                p.k * t.mu[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    t.lambda = ref_rth_bound;
    for (int j = 1; j <= r - 1; ++j) t.lambda += p.k * t.at(j, r - j);
    return t;
}

MuTable mu_table(const ErrorChainParams& p, const FunnelFunction& f, double ref_rth_bound) {
    return mu_table(p, f.sup_norm(), funnel_floor(f), ref_rth_bound);
}

}  // namespace funnelctl
