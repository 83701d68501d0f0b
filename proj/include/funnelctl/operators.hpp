#pragma once

#include <deque>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace funnelctl {

// Causal operators T acting on the output stack x(t) = (y, y', ..., y^(r-1)).
//
// Each operator splits into a pure output map, evaluated at every integrator
// stage without side effects, and a commit step that advances its memory
// once a step is accepted. Continuous memory (the internal state eta of
// LinearInternalDynamics) is integrated alongside the plant instead.

/// Output x(t - tau), linearly interpolated between recorded samples.
class Delay {
public:
    /// history: samples (times ascending) of the input before the start time.
    Delay(double tau, std::vector<double> times, std::vector<Eigen::VectorXd> values);

    double tau() const noexcept { return tau_; }
    Eigen::Index input_dim() const noexcept { return values_.front().size(); }

    /// The current sample (t, input) acts as the newest history point.
    Eigen::VectorXd output(double t, const Eigen::VectorXd& input) const;
    void commit(double t, const Eigen::VectorXd& input);

private:
    double tau_;
    std::deque<double> times_;
    std::deque<Eigen::VectorXd> values_;
};

/// eta' = A eta + B x,  T(x) = C eta + D x,  with A Hurwitz.
class LinearInternalDynamics {
public:
    /// Throws UsageError on inconsistent shapes or if some eigenvalue of A has
    /// real part >= -1e-9.
    LinearInternalDynamics(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C, Eigen::MatrixXd D,
                           Eigen::VectorXd eta0);

    const Eigen::MatrixXd& A() const noexcept { return A_; }
    const Eigen::VectorXd& eta0() const noexcept { return eta0_; }
    Eigen::Index input_dim() const noexcept { return B_.cols(); }
    Eigen::Index output_dim() const noexcept { return C_.rows(); }

    Eigen::VectorXd output(const Eigen::VectorXd& eta, const Eigen::VectorXd& input) const;
    Eigen::VectorXd state_rhs(const Eigen::VectorXd& eta, const Eigen::VectorXd& input) const;

private:
    Eigen::MatrixXd A_, B_, C_, D_;
    Eigen::VectorXd eta0_;
};

/// Play (backlash) operator on the first w0.size() entries of the input:
/// w <- clamp(w, y - sigma, y + sigma).
class Play {
public:
    Play(double sigma, Eigen::VectorXd w0);

    double sigma() const noexcept { return sigma_; }
    const Eigen::VectorXd& memory() const noexcept { return w_; }

    Eigen::VectorXd output(const Eigen::VectorXd& input) const;
    void commit(const Eigen::VectorXd& input);

private:
    double sigma_;
    Eigen::VectorXd w_;
};

/// Two-level relay with hysteresis on the first state0.size() input entries.
/// Switches on at y >= on_level, off at y <= off_level, holds in between.
class Relay {
public:
    Relay(double on_level, double off_level, double out_hi, double out_lo, std::vector<bool> state0);

    const std::vector<bool>& state() const noexcept { return state_; }

    Eigen::VectorXd output(const Eigen::VectorXd& input) const;
    void commit(const Eigen::VectorXd& input);

private:
    std::vector<bool> next_state(const Eigen::VectorXd& input) const;

    double on_level_, off_level_, out_hi_, out_lo_;
    std::vector<bool> state_;
};

using CausalOperator = std::variant<Delay, LinearInternalDynamics, Play, Relay>;

Eigen::Index operator_output_dim(const CausalOperator& op, Eigen::Index input_dim);
/// Size of the continuous state the integrator must carry (0 unless linear dynamics).
Eigen::Index operator_state_dim(const CausalOperator& op);
Eigen::VectorXd operator_initial_state(const CausalOperator& op);

Eigen::VectorXd operator_output(const CausalOperator& op, double t, const Eigen::VectorXd& input,
                                const Eigen::VectorXd& eta);
Eigen::VectorXd operator_state_rhs(const CausalOperator& op, const Eigen::VectorXd& input,
                                   const Eigen::VectorXd& eta);
void operator_commit(CausalOperator& op, double t, const Eigen::VectorXd& input);

/// Replays a sampled input trajectory through a copy of op and returns its
/// output at every sample. eta is integrated between samples with RK4 on the
/// linearly interpolated input.
std::vector<Eigen::VectorXd> operator_apply(CausalOperator op, std::span<const double> times,
                                            std::span<const Eigen::VectorXd> inputs);

}  // namespace funnelctl
