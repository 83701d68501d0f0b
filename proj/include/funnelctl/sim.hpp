#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "funnelctl/controllers.hpp"
#include "funnelctl/errchain.hpp"
#include "funnelctl/funnels.hpp"
#include "funnelctl/plants.hpp"
#include "funnelctl/reference.hpp"

namespace funnelctl {

struct Rk4Fixed {
    double dt = 1e-4;
};

struct Rk45Adaptive {
    double rtol = 1e-8;
    double atol = 1e-10;
    double dt_min = 1e-10;
    double dt_init = 1e-4;
    double dt_max = 1e-2;
};

struct IntegratorConfig {
    std::variant<Rk4Fixed, Rk45Adaptive> method = Rk4Fixed{};
    double t0 = 0.0;
    double t_end = 10.0;
    int log_stride = 10;  // accepted steps between logged samples
    bool hold = false;    // zero-order hold of u over each step instead of per-stage feedback

    void validate() const;
};

struct Sample {
    double t;
    Eigen::VectorXd state;
    Eigen::VectorXd y;
    Eigen::VectorXd yref;
    Eigen::VectorXd e;
    double psi;
    double norm_e;
    Eigen::MatrixXd e_stack;  // m x r
    Eigen::MatrixXd stages;   // m x r auxiliary errors of the active controller
    double w;
    double gain;
    Eigen::VectorXd u;
    std::vector<double> stage_gains;
};

struct Event {
    double t;
    std::string kind;  // funnel_violation | gain_singularity | stage_singularity | non_finite | step_underflow | usage
    std::string detail;
};

enum class RunStatus { Completed, FunnelViolation, Singularity, Aborted };

std::string to_string(RunStatus s);

struct TrajectoryLog {
    int r = 0;
    int m = 0;
    std::vector<std::string> state_names;
    std::vector<Sample> samples;
    std::vector<Event> events;
    RunStatus status = RunStatus::Completed;
    std::size_t accepted_steps = 0;
};

/// Integrates plant + controller against ref inside the funnel. The plant is
/// advanced in place (operator memory). The run stops at the first funnel
/// violation on a logged sample, or at a singularity or non-finite value;
/// the partial log is returned with the event attached.
TrajectoryLog integrate_closed_loop(Plant& plant, const Controller& controller, const ReferenceSignal& ref,
                                    const FunnelFunction& funnel, const IntegratorConfig& cfg,
                                    const Eigen::VectorXd& x0);

struct SampleFlag {
    std::size_t index;
    double t;
    std::string detail;
};

struct EventReport {
    std::vector<SampleFlag> funnel_violations;
    std::vector<SampleFlag> domain_D_exits;
    std::vector<SampleFlag> gain_singularity;
    std::vector<SampleFlag> stage_invariance_violations;
    std::vector<Event> aborts;  // run-terminating events other than funnel violations
    double max_gain = 0.0;      // sup |N(gamma(w))|
    double sup_u = 0.0;
    double max_w = 0.0;
    double min_funnel_margin = 0.0;  // min over samples of psi - ||e||
    double rms_error = 0.0;

    /// No funnel violation, no singularity, no abort, stage invariance intact.
    bool theorem_witness() const;
};

/// Post-hoc audit of a log: funnel membership, entries into the complement
/// of D_t (chain recomputed from the logged error stack), gain arguments
/// >= 1, and on every maximal run of samples with ||xi_r|| < beta/alpha that
/// starts inside D_t, membership of stages 1..r-1 in D_t.
EventReport monitor_trajectory(const TrajectoryLog& log, const FunnelFunction& funnel, const ErrorChainParams& chain);

/// sup over common sample times (within time_tol) of | ||e_a|| - ||e_b|| |;
/// NaN if the logs share no sample time.
double sup_error_difference(const TrajectoryLog& a, const TrajectoryLog& b, double time_tol = 1e-9);

/// t, state..., y, yref, e, psi, norm_e, xi1..xir, w, gain, u
/// (vector-valued columns are suffixed _1.._m when m > 1).
void write_csv(std::ostream& os, const TrajectoryLog& log);
std::vector<std::string> csv_header(const TrajectoryLog& log);

}  // namespace funnelctl
