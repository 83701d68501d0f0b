#include "funnelctl/operators.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "funnelctl/errors.hpp"

namespace funnelctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

constexpr double kHurwitzMargin = 1e-9;

}  // namespace

// Delay

Delay::Delay(double tau, std::vector<double> times, std::vector<Eigen::VectorXd> values) : tau_(tau) {
    if (!(tau > 0.0)) throw UsageError("delay tau must be positive");
    if (times.empty() || times.size() != values.size()) throw UsageError("delay history is empty or ragged");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0 && !(times[i] > times[i - 1])) throw UsageError("delay history times must increase");
        if (values[i].size() != values.front().size()) throw UsageError("delay history has mixed widths");
    }
    times_.assign(times.begin(), times.end());
    values_.assign(values.begin(), values.end());
}

Eigen::VectorXd Delay::output(double t, const Eigen::VectorXd& input) const {
    const double q = t - tau_;
    if (q < times_.front()) throw UsageError("delay history shorter than required");
    if (input.size() != input_dim()) throw UsageError("delay input width mismatch");
    if (q >= times_.back()) {
        const double t0 = times_.back();
        if (t <= t0) return values_.back();
        const double s = (q - t0) / (t - t0);
        return (1.0 - s) * values_.back() + s * input;
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), q);
    const auto i1 = static_cast<std::size_t>(it - times_.begin());
    const std::size_t i0 = i1 - 1;
    const double s = (q - times_[i0]) / (times_[i1] - times_[i0]);
    return (1.0 - s) * values_[i0] + s * values_[i1];
}

void Delay::commit(double t, const Eigen::VectorXd& input) {
    if (input.size() != input_dim()) throw UsageError("delay input width mismatch");
    if (t <= times_.back()) {
        if (t == times_.back()) values_.back() = input;
        return;
    }
    times_.push_back(t);
    values_.push_back(input);
    // samples older than the last one at or before t - tau are never queried again
    while (times_.size() > 2 && times_[1] <= t - tau_) {
        times_.pop_front();
        values_.pop_front();
    }
}

// LinearInternalDynamics

LinearInternalDynamics::LinearInternalDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C,
                                               Eigen::MatrixXd D, Eigen::VectorXd eta0)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)), eta0_(std::move(eta0)) {
    const auto n = A_.rows();
    if (n < 1 || A_.cols() != n) throw UsageError("A must be square and nonempty");
    if (B_.rows() != n || C_.cols() != n || eta0_.size() != n)
        throw UsageError("B, C, eta0 must match the size of A");
    if (D_.rows() != C_.rows() || D_.cols() != B_.cols()) throw UsageError("D must be q x (input width)");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A_, false);
    if (es.info() != Eigen::Success) throw UsageError("eigenvalue computation for A failed");
    const double max_re = es.eigenvalues().real().maxCoeff();
    if (!(max_re < -kHurwitzMargin))
        throw UsageError("A is not Hurwitz (max real part " + std::to_string(max_re) + ")");
}

Eigen::VectorXd LinearInternalDynamics::output(const Eigen::VectorXd& eta, const Eigen::VectorXd& input) const {
    if (input.size() != input_dim()) throw UsageError("internal dynamics input width mismatch");
    return C_ * eta + D_ * input;
}

Eigen::VectorXd LinearInternalDynamics::state_rhs(const Eigen::VectorXd& eta,
                                                  const Eigen::VectorXd& input) const {
    if (input.size() != input_dim()) throw UsageError("internal dynamics input width mismatch");
    return A_ * eta + B_ * input;
}

// Play

Play::Play(double sigma, Eigen::VectorXd w0) : sigma_(sigma), w_(std::move(w0)) {
    if (!(sigma > 0.0)) throw UsageError("play half-deadband sigma must be positive");
    if (w_.size() < 1) throw UsageError("play memory must be nonempty");
}

Eigen::VectorXd Play::output(const Eigen::VectorXd& input) const {
    if (input.size() < w_.size()) throw UsageError("play input narrower than its memory");
    const auto y = input.head(w_.size()).array();
    Eigen::VectorXd w = w_.array().max(y - sigma_).min(y + sigma_);
    // y -+ sigma rounds; step toward y until |w - y| <= sigma holds in floating point too
    for (Eigen::Index i = 0; i < w.size(); ++i)
        while (std::abs(w(i) - input(i)) > sigma_) w(i) = std::nextafter(w(i), input(i));
    return w;
}

void Play::commit(const Eigen::VectorXd& input) { w_ = output(input); }

// Relay

Relay::Relay(double on_level, double off_level, double out_hi, double out_lo, std::vector<bool> state0)
    : on_level_(on_level), off_level_(off_level), out_hi_(out_hi), out_lo_(out_lo), state_(std::move(state0)) {
    if (!(off_level_ < on_level_)) throw UsageError("relay needs off_level < on_level");
    if (state_.empty()) throw UsageError("relay state must be nonempty");
}

std::vector<bool> Relay::next_state(const Eigen::VectorXd& input) const {
    const auto width = static_cast<Eigen::Index>(state_.size());
    if (input.size() < width) throw UsageError("relay input narrower than its state");
    std::vector<bool> s = state_;
    for (Eigen::Index i = 0; i < width; ++i) {
        if (input(i) >= on_level_) s[static_cast<std::size_t>(i)] = true;
        else if (input(i) <= off_level_) s[static_cast<std::size_t>(i)] = false;
    }
    return s;
}

Eigen::VectorXd Relay::output(const Eigen::VectorXd& input) const {
    const auto s = next_state(input);
    Eigen::VectorXd out(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) out(static_cast<Eigen::Index>(i)) = s[i] ? out_hi_ : out_lo_;
    return out;
}

void Relay::commit(const Eigen::VectorXd& input) { state_ = next_state(input); }

// variant dispatch

Eigen::Index operator_output_dim(const CausalOperator& op, Eigen::Index input_dim) {
    return std::visit(overloaded{
                          [&](const Delay&) { return input_dim; },
                          [](const LinearInternalDynamics& l) { return l.output_dim(); },
                          [](const Play& p) { return p.memory().size(); },
                          [](const Relay& r) { return static_cast<Eigen::Index>(r.state().size()); },
                      },
                      op);
}

Eigen::Index operator_state_dim(const CausalOperator& op) {
    if (const auto* l = std::get_if<LinearInternalDynamics>(&op)) return l->A().rows();
    return 0;
}

Eigen::VectorXd operator_initial_state(const CausalOperator& op) {
    if (const auto* l = std::get_if<LinearInternalDynamics>(&op)) return l->eta0();
    return Eigen::VectorXd(0);
}

Eigen::VectorXd operator_output(const CausalOperator& op, double t, const Eigen::VectorXd& input,
                                const Eigen::VectorXd& eta) {
    return std::visit(overloaded{
                          [&](const Delay& d) { return d.output(t, input); },
                          [&](const LinearInternalDynamics& l) { return l.output(eta, input); },
                          [&](const Play& p) { return p.output(input); },
                          [&](const Relay& r) { return r.output(input); },
                      },
                      op);
}

Eigen::VectorXd operator_state_rhs(const CausalOperator& op, const Eigen::VectorXd& input,
                                   const Eigen::VectorXd& eta) {
    if (const auto* l = std::get_if<LinearInternalDynamics>(&op)) return l->state_rhs(eta, input);
    return Eigen::VectorXd(0);
}

void operator_commit(CausalOperator& op, double t, const Eigen::VectorXd& input) {
    std::visit(overloaded{
                   [&](Delay& d) { d.commit(t, input); },
                   [](LinearInternalDynamics&) {},
                   [&](Play& p) { p.commit(input); },
                   [&](Relay& r) { r.commit(input); },
               },
               op);
}

std::vector<Eigen::VectorXd> operator_apply(CausalOperator op, std::span<const double> times,
                                            std::span<const Eigen::VectorXd> inputs) {
    if (times.size() != inputs.size()) throw UsageError("operator_apply: times and inputs differ in length");
    constexpr int kSubsteps = 4;
    std::vector<Eigen::VectorXd> out;
    out.reserve(times.size());
    Eigen::VectorXd eta = operator_initial_state(op);
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0) {
            const double t0 = times[i - 1], t1 = times[i];
            if (!(t1 > t0)) throw UsageError("operator_apply: times must increase");
            if (eta.size() > 0) {
                const auto& x0 = inputs[i - 1];
                const auto& x1 = inputs[i];
                auto x_at = [&](double t) -> Eigen::VectorXd { return x0 + (t - t0) / (t1 - t0) * (x1 - x0); };
                auto f = [&](double t, const Eigen::VectorXd& e) { return operator_state_rhs(op, x_at(t), e); };
                const double h = (t1 - t0) / kSubsteps;
                for (int s = 0; s < kSubsteps; ++s) {
                    const double t = t0 + s * h;
                    const Eigen::VectorXd k1 = f(t, eta);
                    const Eigen::VectorXd k2 = f(t + h / 2, eta + h / 2 * k1);
                    const Eigen::VectorXd k3 = f(t + h / 2, eta + h / 2 * k2);
                    const Eigen::VectorXd k4 = f(t + h, eta + h * k3);
                    eta += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
                }
            }
        }
        operator_commit(op, times[i], inputs[i]);
        out.push_back(operator_output(op, times[i], inputs[i], eta));
    }
    return out;
}

}  // namespace funnelctl
