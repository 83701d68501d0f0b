#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "funnelctl/derivative_stack.hpp"
#include "funnelctl/operators.hpp"

namespace funnelctl {

/// A simulable system whose output derivatives up to order r-1 are available
/// from its state. The input enters only through rhs().
class Plant {
public:
    virtual ~Plant() = default;

    virtual int output_dim() const = 0;
    virtual int relative_degree() const = 0;
    virtual Eigen::Index state_dim() const = 0;
    virtual std::vector<std::string> state_names() const = 0;

    /// Must not mutate the plant: called at every integrator stage.
    virtual Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
    virtual Stack output_stack(double t, const Eigen::VectorXd& x) const = 0;
    /// Advances discrete operator memory after an accepted step.
    virtual void commit(double /*t*/, const Eigen::VectorXd& /*x*/) {}

    virtual std::unique_ptr<Plant> clone() const = 0;
};

// ---------------------------------------------------------------------------
// Mass-spring system on a car
// ---------------------------------------------------------------------------

/// State layout (z, s, z', s'): car position, ramp-relative position of the
/// mass, and their velocities. Output y = z + s cos(theta).
struct MassOnCarParams {
    double m1;
    double m2;
    double c;
    double delta;
    double theta;
};

Eigen::Matrix2d mass_matrix(const MassOnCarParams& p);
Eigen::Vector4d mass_on_car_rhs(const MassOnCarParams& p, double t, const Eigen::Vector4d& x, double u);
/// (y, y', y'') for theta = 0, (y, y') for theta in (0, pi/2).
Stack mass_on_car_output_stack(const MassOnCarParams& p, const Eigen::Vector4d& x);
/// Kinetic plus spring energy; non-increasing along unforced motion.
double mass_on_car_energy(const MassOnCarParams& p, const Eigen::Vector4d& x);

class MassOnCarPlant final : public Plant {
public:
    /// Throws UsageError unless masses, spring and damping are positive and
    /// theta lies in [0, pi/2).
    explicit MassOnCarPlant(MassOnCarParams p);

    const MassOnCarParams& params() const noexcept { return p_; }

    int output_dim() const override { return 1; }
    int relative_degree() const override { return p_.theta == 0.0 ? 3 : 2; }
    Eigen::Index state_dim() const override { return 4; }
    std::vector<std::string> state_names() const override { return {"z", "s", "zdot", "sdot"}; }

    Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
    Stack output_stack(double t, const Eigen::VectorXd& x) const override;
    std::unique_ptr<Plant> clone() const override { return std::make_unique<MassOnCarPlant>(*this); }

private:
    MassOnCarParams p_;
};

// ---------------------------------------------------------------------------
// Generic functional differential equation y^(r) = f(d(t), T(x)(t), u(t))
// ---------------------------------------------------------------------------

struct ZeroDisturbance {};
struct ConstantDisturbance {
    double level;
};
/// amplitude * sin(frequency * t + phase)
struct SinusoidDisturbance {
    double amplitude;
    double frequency;
    double phase;
};
using Disturbance = std::variant<ZeroDisturbance, ConstantDisturbance, SinusoidDisturbance>;

double disturbance_value(const Disturbance& d, double t);

/// f(d, T_out, u) -> R^m
using FdeFunction =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& d, const Eigen::VectorXd& t_out, const Eigen::VectorXd& u)>;

/// Chain of integrators with an optional causal operator.
/// State layout: the stacked output stack (rm entries) followed by the
/// operator's continuous state.
class FdePlant final : public Plant {
public:
    FdePlant(int r, int m, FdeFunction f, std::optional<CausalOperator> op, Disturbance dist,
             Eigen::VectorXd initial_stack);

    int output_dim() const override { return m_; }
    int relative_degree() const override { return r_; }
    Eigen::Index state_dim() const override;
    std::vector<std::string> state_names() const override;

    /// (stacked initial output stack, operator initial state)
    Eigen::VectorXd initial_state() const;

    Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
    Stack output_stack(double t, const Eigen::VectorXd& x) const override;
    void commit(double t, const Eigen::VectorXd& x) override;
    std::unique_ptr<Plant> clone() const override { return std::make_unique<FdePlant>(*this); }

    const std::optional<CausalOperator>& op() const noexcept { return op_; }

private:
    int r_;
    int m_;
    FdeFunction f_;
    std::optional<CausalOperator> op_;
    Disturbance dist_;
    Eigen::VectorXd initial_stack_;
};

/// Derivative of the augmented FDE state; throws NonFiniteError if f does.
Eigen::VectorXd fde_rhs(const FdeFunction& f, const std::optional<CausalOperator>& op, const Disturbance& dist,
                        int r, int m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

}  // namespace funnelctl
