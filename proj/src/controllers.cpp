#include "funnelctl/controllers.hpp"

#include <cmath>
#include <limits>

#include "funnelctl/errors.hpp"
#include "funnelctl/jet.hpp"

namespace funnelctl {

double GainFunctions::N(double s) const {
    switch (shape) {
        case GainShape::NegIdentity: return -s;
        case GainShape::Nussbaum: return s * std::cos(s);
    }
    return -s;
}

double GainFunctions::gamma(double s) const {
    if (!(s < 1.0)) return std::numeric_limits<double>::infinity();
    return 1.0 / (1.0 - s);
}

// constant-gain law

NewFunnelController::NewFunnelController(ErrorChainParams chain, const FunnelFunction& funnel, GainFunctions gains)
    : chain_(chain), alpha_(funnel.alpha()), beta_(funnel.beta()), gains_(gains) {}

ControlOutput NewFunnelController::operator()(const Stack& e_stack, double t) const {
    if (!e_stack.all_finite()) throw NonFiniteError("controller received a non-finite error stack");
    ControlOutput out;
    out.stages = xi_all(chain_, e_stack);
    out.e_r = out.stages.col(chain_.r - 1);
    out.w = (alpha_ / beta_ * out.e_r).squaredNorm();
    if (!(out.w < 1.0)) throw GainSingularity(t, out.w, out.e_r);
    out.gain = gains_.N(gains_.gamma(out.w));
    out.u = out.gain * out.e_r;
    return out;
}

// time-varying-gain law

LegacyFunnelController::LegacyFunnelController(std::vector<FunnelFunction> stage_funnels, int m, GainFunctions gains)
    : stage_funnels_(std::move(stage_funnels)), m_(m), gains_(gains) {
    if (stage_funnels_.empty() || static_cast<int>(stage_funnels_.size()) > kMaxOrder)
        throw UsageError("legacy controller needs 1..20 stage funnels");
    if (m_ < 1) throw UsageError("legacy controller needs m >= 1");
}

LegacyFunnelController LegacyFunnelController::with_stage_scale(const FunnelFunction& psi, double scale, int r,
                                                                 int m, GainFunctions gains) {
    if (!(scale > 0.0)) throw UsageError("stage scale must be positive");
    if (r < 1) throw UsageError("legacy controller needs r >= 1");
    std::vector<FunnelFunction> fs;
    double s = 1.0;
    for (int i = 0; i < r; ++i, s *= scale) fs.push_back(i == 0 ? psi : psi.scaled(s));
    return LegacyFunnelController(std::move(fs), m, gains);
}

ControlOutput LegacyFunnelController::operator()(double t, const Stack& e_stack) const {
    const int r = order();
    if (e_stack.order() != r || e_stack.dim() != m_) throw UsageError("error stack does not match (r, m)");
    if (!e_stack.all_finite()) throw NonFiniteError("controller received a non-finite error stack");
    using J = Jet<double>;

    ControlOutput out;
    out.stages = Eigen::MatrixXd::Zero(m_, r);
    std::vector<J> e = jet_lift(e_stack, r - 1);

    for (int i = 0; i < r; ++i) {
        const int ord = r - 1 - i;
        for (int c = 0; c < m_; ++c) out.stages(c, i) = e[static_cast<std::size_t>(c)].value();
        if (i == r - 1) break;

        const FunnelFunction& psi_i = stage_funnels_[static_cast<std::size_t>(i)];
        J psi(Eigen::Map<const Eigen::ArrayXd>(psi_i.derivatives(t, ord).data(), ord + 1));
        J norm2 = J::constant(0.0, ord);
        for (const J& ec : e) norm2 = norm2 + ec * ec;
        const double ratio = std::sqrt(norm2.value()) / psi.value();
        if (!(ratio < 1.0)) throw StageSingularity(t, i + 1, ratio);

        const J k = (J::constant(1.0, ord) - norm2 / (psi * psi)).reciprocal();
        out.stage_gains.push_back(k.value());
        for (J& ec : e) ec = ec.derivative() + k * ec;
    }

    out.e_r = out.stages.col(r - 1);
    const double psi_r = stage_funnels_.back().value(t);
    out.w = (out.e_r / psi_r).squaredNorm();
    if (!(out.w < 1.0)) throw GainSingularity(t, out.w, out.e_r);
    out.gain = gains_.N(gains_.gamma(out.w));
    out.u = out.gain * out.e_r;
    return out;
}

// dispatch

ControlOutput evaluate(const Controller& c, double t, const Stack& e_stack) {
    if (const auto* n = std::get_if<NewFunnelController>(&c)) return (*n)(e_stack, t);
    return std::get<LegacyFunnelController>(c)(t, e_stack);
}

int controller_order(const Controller& c) {
    if (const auto* n = std::get_if<NewFunnelController>(&c)) return n->chain().r;
    return std::get<LegacyFunnelController>(c).order();
}

int controller_dim(const Controller& c) {
    if (const auto* n = std::get_if<NewFunnelController>(&c)) return n->chain().m;
    return std::get<LegacyFunnelController>(c).dim();
}

std::string controller_kind(const Controller& c) {
    return std::holds_alternative<NewFunnelController>(c) ? "new_fc" : "legacy_fc";
}

ControlOutput new_fc_control(const NewFunnelController& c, const Stack& e_stack) { return c(e_stack); }

ControlOutput legacy_fc_control(const LegacyFunnelController& c, double t, const Stack& e_stack) {
    return c(t, e_stack);
}

}  // namespace funnelctl
