#include "funnelctl/plants.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "funnelctl/errors.hpp"

namespace funnelctl {

// mass on car

Eigen::Matrix2d mass_matrix(const MassOnCarParams& p) {
    const double off = p.m2 * std::cos(p.theta);
    Eigen::Matrix2d M;
    M << p.m1 + p.m2, off, off, p.m2;
    return M;
}

Eigen::Vector4d mass_on_car_rhs(const MassOnCarParams& p, double /*t*/, const Eigen::Vector4d& x, double u) {
    const double s = x(1), sdot = x(3);
    const Eigen::Vector2d forcing(u, -(p.c * s + p.delta * sdot));
    // det M = m2 (m1 + m2 sin^2 theta) > 0
    const Eigen::Vector2d acc = mass_matrix(p).inverse() * forcing;
    Eigen::Vector4d dx;
    dx << x(2), x(3), acc(0), acc(1);
    return dx;
}

Stack mass_on_car_output_stack(const MassOnCarParams& p, const Eigen::Vector4d& x) {
    const double z = x(0), s = x(1), zdot = x(2), sdot = x(3);
    if (p.theta == 0.0) {
        Eigen::RowVector3d b(z + s, zdot + sdot, -(p.c * s + p.delta * sdot) / p.m2);
        return Stack(b);
    }
    const double ct = std::cos(p.theta);
    Eigen::RowVector2d b(z + s * ct, zdot + sdot * ct);
    return Stack(b);
}

double mass_on_car_energy(const MassOnCarParams& p, const Eigen::Vector4d& x) {
    const Eigen::Vector2d v = x.tail<2>();
    return 0.5 * v.dot(mass_matrix(p) * v) + 0.5 * p.c * x(1) * x(1);
}

MassOnCarPlant::MassOnCarPlant(MassOnCarParams p) : p_(p) {
    if (!(p.m1 > 0.0) || !(p.m2 > 0.0)) throw UsageError("mass-on-car masses must be positive");
    if (!(p.c > 0.0) || !(p.delta > 0.0)) throw UsageError("mass-on-car spring and damping must be positive");
    if (!(p.theta >= 0.0 && p.theta < std::numbers::pi / 2))
        throw UsageError("mass-on-car ramp angle must lie in [0, pi/2)");
    const double det = p.m2 * (p.m1 + p.m2 * std::sin(p.theta) * std::sin(p.theta));
    if (!(det > 0.0)) throw UsageError("mass matrix is singular");
}

Eigen::VectorXd MassOnCarPlant::rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (x.size() != 4 || u.size() != 1) throw UsageError("mass-on-car expects 4 states and 1 input");
    return mass_on_car_rhs(p_, t, x, u(0));
}

Stack MassOnCarPlant::output_stack(double /*t*/, const Eigen::VectorXd& x) const {
    if (x.size() != 4) throw UsageError("mass-on-car expects 4 states");
    return mass_on_car_output_stack(p_, x);
}

// disturbances

double disturbance_value(const Disturbance& d, double t) {
    if (const auto* c = std::get_if<ConstantDisturbance>(&d)) return c->level;
    if (const auto* s = std::get_if<SinusoidDisturbance>(&d))
        return s->amplitude * std::sin(s->frequency * t + s->phase);
    return 0.0;
}

// generic FDE plant

Eigen::VectorXd fde_rhs(const FdeFunction& f, const std::optional<CausalOperator>& op, const Disturbance& dist,
                        int r, int m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    const Eigen::Index n = static_cast<Eigen::Index>(r) * m;
    if (x.size() < n || u.size() != m) throw UsageError("fde_rhs: state or input has the wrong size");
    const Eigen::VectorXd stack = x.head(n);
    const Eigen::VectorXd eta = x.tail(x.size() - n);

    Eigen::VectorXd t_out(0);
    if (op) t_out = operator_output(*op, t, stack, eta);
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(1, disturbance_value(dist, t));
    const Eigen::VectorXd top = f(d, t_out, u);
    if (top.size() != m) throw UsageError("fde_rhs: f must return m entries");
    if (!top.allFinite()) throw NonFiniteError("fde_rhs: f returned a non-finite value at t = " + std::to_string(t));

    Eigen::VectorXd dx(x.size());
    dx.head(n - m) = stack.tail(n - m);  // y_i' = y_{i+1}
    dx.segment(n - m, m) = top;
    if (op && eta.size() > 0) dx.tail(eta.size()) = operator_state_rhs(*op, stack, eta);
    return dx;
}

FdePlant::FdePlant(int r, int m, FdeFunction f, std::optional<CausalOperator> op, Disturbance dist,
                   Eigen::VectorXd initial_stack)
    : r_(r), m_(m), f_(std::move(f)), op_(std::move(op)), dist_(dist), initial_stack_(std::move(initial_stack)) {
    if (r_ < 1 || m_ < 1) throw UsageError("FDE plant needs r >= 1 and m >= 1");
    if (!f_) throw UsageError("FDE plant needs a right-hand side f");
    if (initial_stack_.size() != static_cast<Eigen::Index>(r_) * m_)
        throw UsageError("FDE initial stack must have r*m entries");
    if (op_) {
        if (const auto* l = std::get_if<LinearInternalDynamics>(&*op_); l && l->input_dim() != initial_stack_.size())
            throw UsageError("internal dynamics input width must be r*m");
        if (const auto* d = std::get_if<Delay>(&*op_); d && d->input_dim() != initial_stack_.size())
            throw UsageError("delay history width must be r*m");
    }
}

Eigen::Index FdePlant::state_dim() const {
    return initial_stack_.size() + (op_ ? operator_state_dim(*op_) : 0);
}

std::vector<std::string> FdePlant::state_names() const {
    std::vector<std::string> names;
    for (int j = 0; j < r_; ++j)
        for (int c = 0; c < m_; ++c)
            names.push_back(m_ == 1 ? "y" + std::to_string(j) : "y" + std::to_string(j) + "_" + std::to_string(c + 1));
    const Eigen::Index ne = op_ ? operator_state_dim(*op_) : 0;
    for (Eigen::Index i = 0; i < ne; ++i) names.push_back("eta" + std::to_string(i + 1));
    return names;
}

Eigen::VectorXd FdePlant::initial_state() const {
    Eigen::VectorXd x(state_dim());
    x.head(initial_stack_.size()) = initial_stack_;
    if (op_) x.tail(operator_state_dim(*op_)) = operator_initial_state(*op_);
    return x;
}

Eigen::VectorXd FdePlant::rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return fde_rhs(f_, op_, dist_, r_, m_, t, x, u);
}

Stack FdePlant::output_stack(double /*t*/, const Eigen::VectorXd& x) const {
    return Stack::from_stacked(x.head(static_cast<Eigen::Index>(r_) * m_), m_);
}

void FdePlant::commit(double t, const Eigen::VectorXd& x) {
    if (op_) operator_commit(*op_, t, x.head(static_cast<Eigen::Index>(r_) * m_));
}

}  // namespace funnelctl
