#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "funnelctl/derivative_stack.hpp"
#include "funnelctl/errchain.hpp"
#include "funnelctl/funnels.hpp"

namespace funnelctl {

enum class GainShape {
    NegIdentity,  // N(s) = -s
    Nussbaum,     // N(s) = s cos(s)
};

enum class GainBijection {
    Reciprocal,  // gamma(s) = 1 / (1 - s)
};

struct GainFunctions {
    GainShape shape = GainShape::NegIdentity;
    GainBijection bijection = GainBijection::Reciprocal;

    double N(double s) const;
    /// Defined on [0, 1); returns +inf at and beyond 1.
    double gamma(double s) const;
    bool surjective() const noexcept { return shape == GainShape::Nussbaum; }
};

struct ControlOutput {
    Eigen::VectorXd u;
    Eigen::VectorXd e_r;
    double w = 0.0;     // gain argument, in [0, 1) on success
    double gain = 0.0;  // N(gamma(w))
    Eigen::MatrixXd stages;          // m x r auxiliary errors
    std::vector<double> stage_gains;  // legacy k_1..k_{r-1}; empty for the constant-gain law
};

/// u = N(gamma(||(alpha/beta) e_r||^2)) e_r with e_r = xi_r(e_stack).
class NewFunnelController {
public:
    NewFunnelController(ErrorChainParams chain, const FunnelFunction& funnel, GainFunctions gains = {});

    const ErrorChainParams& chain() const noexcept { return chain_; }
    const GainFunctions& gains() const noexcept { return gains_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    /// k >= alpha + 2
    bool k_ok() const noexcept { return chain_.k >= alpha_ + 2.0; }

    /// Throws GainSingularity when w >= 1, NonFiniteError for a non-finite stack.
    ControlOutput operator()(const Stack& e_stack, double t = 0.0) const;

private:
    ErrorChainParams chain_;
    double alpha_;
    double beta_;
    GainFunctions gains_;
};

/// Time-varying-gain design: e_{i+1} = e_i' + k_i e_i with
/// k_i = 1 / (1 - ||e_i||^2 / psi_i^2) and u = N(gamma(||e_r / psi_r||^2)) e_r.
/// The derivatives e_i' are propagated exactly with jets.
class LegacyFunnelController {
public:
    LegacyFunnelController(std::vector<FunnelFunction> stage_funnels, int m, GainFunctions gains = {});

    /// psi_i = scale^{i-1} psi for i = 1..r.
    static LegacyFunnelController with_stage_scale(const FunnelFunction& psi, double scale, int r, int m,
                                                   GainFunctions gains = {});

    int order() const noexcept { return static_cast<int>(stage_funnels_.size()); }
    int dim() const noexcept { return m_; }
    const std::vector<FunnelFunction>& stage_funnels() const noexcept { return stage_funnels_; }
    const GainFunctions& gains() const noexcept { return gains_; }

    /// Throws StageSingularity if some ||e_i|| >= psi_i(t) for i < r, and
    /// GainSingularity if the final argument reaches 1.
    ControlOutput operator()(double t, const Stack& e_stack) const;

private:
    std::vector<FunnelFunction> stage_funnels_;
    int m_;
    GainFunctions gains_;
};

using Controller = std::variant<NewFunnelController, LegacyFunnelController>;

ControlOutput evaluate(const Controller& c, double t, const Stack& e_stack);
int controller_order(const Controller& c);
int controller_dim(const Controller& c);
std::string controller_kind(const Controller& c);

/// Convenience wrappers mirroring the two control laws.
ControlOutput new_fc_control(const NewFunnelController& c, const Stack& e_stack);
ControlOutput legacy_fc_control(const LegacyFunnelController& c, double t, const Stack& e_stack);

}  // namespace funnelctl
