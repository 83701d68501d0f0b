#include "funnelctl/sim.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "funnelctl/errors.hpp"
#include "funnelctl/integrators.hpp"

namespace funnelctl {

void IntegratorConfig::validate() const {
    if (!std::isfinite(t0) || !std::isfinite(t_end) || !(t_end > t0))
        throw UsageError("integrator horizon needs t_end > t0");
    if (t0 < 0.0) throw UsageError("integrator start time must be >= 0");
    if (log_stride < 1) throw UsageError("log_stride must be >= 1");
    if (const auto* f = std::get_if<Rk4Fixed>(&method)) {
        if (!(f->dt > 0.0)) throw UsageError("rk4 step dt must be positive");
    } else {
        const auto& a = std::get<Rk45Adaptive>(method);
        if (!(a.rtol > 0.0) || !(a.atol > 0.0)) throw UsageError("rk45 tolerances must be positive");
        if (!(a.dt_min > 0.0) || !(a.dt_init >= a.dt_min) || !(a.dt_max >= a.dt_init))
            throw UsageError("rk45 needs 0 < dt_min <= dt_init <= dt_max");
    }
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Completed: return "completed";
        case RunStatus::FunnelViolation: return "funnel_violation";
        case RunStatus::Singularity: return "singularity";
        case RunStatus::Aborted: return "aborted";
    }
    return "unknown";
}

namespace {

Stack reference_at(const ReferenceSignal& ref, double t, int r) {
    Stack s(r, ref.dim());
    for (int j = 0; j < r; ++j) s.block(j) = ref.derivative(t, j);
    return s;
}

class ClosedLoop {
public:
    ClosedLoop(Plant& plant, const Controller& ctrl, const ReferenceSignal& ref, const FunnelFunction& funnel)
        : plant_(plant), ctrl_(ctrl), ref_(ref), funnel_(funnel), r_(plant.relative_degree()), m_(plant.output_dim()) {}

    ControlOutput control(double t, const Eigen::VectorXd& x) const {
        const Stack e = plant_.output_stack(t, x) - reference_at(ref_, t, r_);
        return evaluate(ctrl_, t, e);
    }

    Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x) const { return plant_.rhs(t, x, control(t, x).u); }

    Sample sample(double t, const Eigen::VectorXd& x) const {
        const Stack ys = plant_.output_stack(t, x);
        const Stack rs = reference_at(ref_, t, r_);
        const Stack e = ys - rs;
        const double psi = funnel_.value(t);
        ControlOutput out;
        if (e.block(0).norm() < psi) {
            out = evaluate(ctrl_, t, e);
        } else {
            // outside the funnel the law may be undefined; the violation is what gets reported
            try {
                out = evaluate(ctrl_, t, e);
            } catch (const GainSingularity&) {
                out = undefined_output(e);
            } catch (const StageSingularity&) {
                out = undefined_output(e);
            }
        }
        Sample s;
        s.t = t;
        s.state = x;
        s.y = ys.block(0);
        s.yref = rs.block(0);
        s.e = e.block(0);
        s.psi = psi;
        s.norm_e = s.e.norm();
        s.e_stack = e.blocks();
        s.stages = out.stages;
        s.w = out.w;
        s.gain = out.gain;
        s.u = out.u;
        s.stage_gains = out.stage_gains;
        return s;
    }

    Plant& plant() const { return plant_; }

private:
    ControlOutput undefined_output(const Stack& e) const {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        ControlOutput out;
        out.u = Eigen::VectorXd::Constant(m_, nan);
        out.e_r = out.u;
        out.w = nan;
        out.gain = nan;
        out.stages = Eigen::MatrixXd::Constant(m_, e.order(), nan);
        return out;
    }

    Plant& plant_;
    const Controller& ctrl_;
    const ReferenceSignal& ref_;
    const FunnelFunction& funnel_;
    int r_;
    int m_;
};

// Returns false and records the event if the run must stop.
template <typename F>
bool guarded(TrajectoryLog& log, double t, F&& f) {
    try {
        f();
        return true;
    } catch (const GainSingularity& g) {
        log.events.push_back({g.time(), "gain_singularity", g.what()});
        log.status = RunStatus::Singularity;
    } catch (const StageSingularity& s) {
        log.events.push_back({s.time(), "stage_singularity", s.what()});
        log.status = RunStatus::Singularity;
    } catch (const NonFiniteError& n) {
        log.events.push_back({t, "non_finite", n.what()});
        log.status = RunStatus::Aborted;
    } catch (const UsageError& u) {
        log.events.push_back({t, "usage", u.what()});
        log.status = RunStatus::Aborted;
    }
    return false;
}

bool log_sample(TrajectoryLog& log, const ClosedLoop& loop, double t, const Eigen::VectorXd& x) {
    return guarded(log, t, [&] {
        Sample s = loop.sample(t, x);
        const bool inside = s.norm_e < s.psi;
        const double ne = s.norm_e, psi = s.psi;
        log.samples.push_back(std::move(s));
        if (!inside) {
            std::ostringstream msg;
            msg << std::setprecision(17) << "||e|| = " << ne << " >= psi = " << psi;
            log.events.push_back({t, "funnel_violation", msg.str()});
            log.status = RunStatus::FunnelViolation;
        }
    }) && log.status == RunStatus::Completed;
}

using StageRhs = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

// Per-stage feedback, or u frozen at (t, x) over the step when holding.
StageRhs make_rhs(const ClosedLoop& loop, bool hold, double t, const Eigen::VectorXd& x) {
    if (!hold) return [&loop](double tt, const Eigen::VectorXd& xx) { return loop.rhs(tt, xx); };
    Eigen::VectorXd u = loop.control(t, x).u;
    return [&loop, u = std::move(u)](double tt, const Eigen::VectorXd& xx) { return loop.plant().rhs(tt, xx, u); };
}

void run_fixed(TrajectoryLog& log, ClosedLoop& loop, const IntegratorConfig& cfg, double dt, Eigen::VectorXd x) {
    const double span = cfg.t_end - cfg.t0;
    const auto n_steps = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
    if (!log_sample(log, loop, cfg.t0, x)) return;
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t = cfg.t0 + static_cast<double>(i) * dt;
        const double t_next = i + 1 == n_steps ? cfg.t_end : cfg.t0 + static_cast<double>(i + 1) * dt;
        const double h = t_next - t;
        Eigen::VectorXd x_next;
        const bool ok = guarded(log, t, [&] {
            x_next = rk4_step(make_rhs(loop, cfg.hold, t, x), t, x, h);
            loop.plant().commit(t_next, x_next);
        });
        if (!ok) return;
        x = std::move(x_next);
        ++log.accepted_steps;
        const bool last = i + 1 == n_steps;
        if ((i + 1) % static_cast<std::size_t>(cfg.log_stride) == 0 || last)
            if (!log_sample(log, loop, t_next, x)) return;
    }
}

void run_adaptive(TrajectoryLog& log, ClosedLoop& loop, const IntegratorConfig& cfg, const Rk45Adaptive& a,
                  Eigen::VectorXd x) {
    if (!log_sample(log, loop, cfg.t0, x)) return;
    double t = cfg.t0;
    double h = a.dt_init;
    while (t < cfg.t_end) {
        h = std::min({h, a.dt_max, cfg.t_end - t});
        EmbeddedStep<Eigen::VectorXd> step;
        TrajectoryLog scratch;  // failed attempts are retried, not logged
        const bool ok = guarded(scratch, t, [&] {
            step = dormand_prince_step(make_rhs(loop, cfg.hold, t, x), t, x, h);
        });
        if (!ok) {
            h /= 2;
            if (h < a.dt_min) {
                log.events.insert(log.events.end(), scratch.events.begin(), scratch.events.end());
                log.status = scratch.status;
                return;
            }
            continue;
        }
        const double err = scaled_error(step.err, x, step.x, a.rtol, a.atol);
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        if (err <= 1.0) {
            const double t_next = cfg.t_end - t <= h ? cfg.t_end : t + h;
            x = step.x;
            t = t_next;
            if (!guarded(log, t, [&] { loop.plant().commit(t, x); })) return;
            ++log.accepted_steps;
            if (log.accepted_steps % static_cast<std::size_t>(cfg.log_stride) == 0 || t >= cfg.t_end)
                if (!log_sample(log, loop, t, x)) return;
        }
        h *= fac;
        if (h < a.dt_min && t < cfg.t_end) {
            log.events.push_back({t, "step_underflow", "adaptive step fell below dt_min"});
            log.status = RunStatus::Aborted;
            return;
        }
    }
}

}  // namespace

TrajectoryLog integrate_closed_loop(Plant& plant, const Controller& controller, const ReferenceSignal& ref,
                                    const FunnelFunction& funnel, const IntegratorConfig& cfg,
                                    const Eigen::VectorXd& x0) {
    cfg.validate();
    if (controller_order(controller) != plant.relative_degree() || controller_dim(controller) != plant.output_dim())
        throw UsageError("controller (r, m) does not match the plant");
    if (ref.dim() != plant.output_dim()) throw UsageError("reference dimension does not match the plant");
    if (x0.size() != plant.state_dim()) throw UsageError("initial state has the wrong size");

    TrajectoryLog log;
    log.r = plant.relative_degree();
    log.m = plant.output_dim();
    log.state_names = plant.state_names();
    ClosedLoop loop(plant, controller, ref, funnel);
    if (!guarded(log, cfg.t0, [&] { plant.commit(cfg.t0, x0); })) return log;
    if (const auto* f = std::get_if<Rk4Fixed>(&cfg.method)) run_fixed(log, loop, cfg, f->dt, x0);
    else run_adaptive(log, loop, cfg, std::get<Rk45Adaptive>(cfg.method), x0);
    return log;
}

bool EventReport::theorem_witness() const {
    return funnel_violations.empty() && gain_singularity.empty() && aborts.empty() && stage_invariance_violations.empty();
}

EventReport monitor_trajectory(const TrajectoryLog& log, const FunnelFunction& funnel, const ErrorChainParams& chain) {
    EventReport rep;
    rep.min_funnel_margin = std::numeric_limits<double>::infinity();
    const double floor = funnel_floor(funnel);
    bool prev_feasible = true;
    bool in_interval = false;
    double sq_sum = 0.0;

    for (std::size_t i = 0; i < log.samples.size(); ++i) {
        const Sample& s = log.samples[i];
        const double psi = funnel.value(s.t);
        const double ne = s.e.norm();
        sq_sum += ne * ne;
        rep.min_funnel_margin = std::min(rep.min_funnel_margin, psi - ne);
        rep.max_gain = std::max(rep.max_gain, std::abs(s.gain));
        rep.sup_u = std::max(rep.sup_u, s.u.norm());
        rep.max_w = std::max(rep.max_w, s.w);
        if (!(ne < psi)) {
            std::ostringstream msg;
            msg << std::setprecision(17) << "||e|| = " << ne << " >= psi = " << psi;
            rep.funnel_violations.push_back({i, s.t, msg.str()});
        }
        if (!(s.w < 1.0)) rep.gain_singularity.push_back({i, s.t, "w = " + std::to_string(s.w)});

        const FeasibilityReport fr = check_domain_D(s.t, Stack(s.e_stack), funnel, chain);
        if (!fr.feasible && (i == 0 || prev_feasible)) {
            std::string stages;
            for (int st : fr.violated_stages()) stages += (stages.empty() ? "" : ",") + std::to_string(st);
            rep.domain_D_exits.push_back({i, s.t, "stages " + stages});
        }
        prev_feasible = fr.feasible;

        // ||xi_r|| < beta/alpha on [t_start, t] with a D-feasible start
        // keeps stages 1..r-1 inside D_t.
        const bool hyp = fr.stage_norms.back() < floor;
        if (!hyp) {
            in_interval = false;
        } else if (!in_interval) {
            in_interval = fr.feasible;
        } else {
            for (int st = 0; st + 1 < chain.r; ++st) {
                if (!(fr.margins[static_cast<std::size_t>(st)] > 0.0)) {
                    rep.stage_invariance_violations.push_back({i, s.t, "stage " + std::to_string(st + 1) + " left D_t"});
                    break;
                }
            }
        }
    }
    if (log.samples.empty()) rep.min_funnel_margin = 0.0;
    else rep.rms_error = std::sqrt(sq_sum / static_cast<double>(log.samples.size()));
    for (const Event& e : log.events)
        if (e.kind != "funnel_violation") rep.aborts.push_back(e);
    return rep;
}

double sup_error_difference(const TrajectoryLog& a, const TrajectoryLog& b, double time_tol) {
    double sup = std::numeric_limits<double>::quiet_NaN();
    std::size_t j = 0;
    for (const Sample& sa : a.samples) {
        while (j < b.samples.size() && b.samples[j].t < sa.t - time_tol) ++j;
        if (j == b.samples.size()) break;
        if (std::abs(b.samples[j].t - sa.t) <= time_tol) {
            const double d = std::abs(sa.norm_e - b.samples[j].norm_e);
            sup = std::isnan(sup) ? d : std::max(sup, d);
        }
    }
    return sup;
}

std::vector<std::string> csv_header(const TrajectoryLog& log) {
    std::vector<std::string> h{"t"};
    h.insert(h.end(), log.state_names.begin(), log.state_names.end());
    auto vec = [&](const std::string& name) {
        if (log.m == 1) h.push_back(name);
        else
            for (int c = 1; c <= log.m; ++c) h.push_back(name + "_" + std::to_string(c));
    };
    vec("y");
    vec("yref");
    vec("e");
    h.push_back("psi");
    h.push_back("norm_e");
    for (int i = 1; i <= log.r; ++i) vec("xi" + std::to_string(i));
    h.push_back("w");
    h.push_back("gain");
    vec("u");
    return h;
}

void write_csv(std::ostream& os, const TrajectoryLog& log) {
    const auto header = csv_header(log);
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    os << std::setprecision(12);
    for (const Sample& s : log.samples) {
        os << s.t;
        auto put = [&](const Eigen::VectorXd& v) {
            for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << v(i);
        };
        put(s.state);
        put(s.y);
        put(s.yref);
        put(s.e);
        os << ',' << s.psi << ',' << s.norm_e;
        for (Eigen::Index i = 0; i < s.stages.cols(); ++i) put(s.stages.col(i));
        os << ',' << s.w << ',' << s.gain;
        put(s.u);
        os << '\n';
    }
}

}  // namespace funnelctl
