// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/LU>

#include "funnelctl/errchain.hpp"
#include "funnelctl/errors.hpp"
#include "funnelctl/integrators.hpp"
#include "funnelctl/operators.hpp"
#include "funnelctl/scenario.hpp"

using namespace funnelctl;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = FUNNELCTL_SCENARIO_DIR;

// Pinned tolerances.
constexpr double kExact = 1e-12;        // hand-derived values and residuals
constexpr double kRecursionRel = 1e-12;  // recursion vs closed form
constexpr double kDetTol = 1e-9;        // det S via LU
constexpr double kHalvingTol = 1e-6;    // sup ||e|| change under dt -> dt/2
constexpr double kOrderTol = 0.3;       // observed RK4 order
constexpr double kRk4Hand = 5e-8;       // 0.9048375 is printed to 7 places
constexpr double kRuntimeLimit = 10.0;  // seconds

struct Outcome {
    bool pass = true;
    std::ostringstream note;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            note << " [failed: " << what << "]";
        }
    }
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

ScenarioConfig load(const std::string& name) { return load_config(kScenarios / name); }

// AC1
Outcome nominal_benchmark() {
    Outcome o;
    const ScenarioConfig cfg = load("bench_nominal.json");
    const auto start = std::chrono::steady_clock::now();
    const RunResult r = run_scenario(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool strict = true, w_ok = true;
    double sup_u = 0.0;
    for (const Sample& s : r.log.samples) {
        strict = strict && s.e.norm() < cfg.funnel.value(s.t);
        w_ok = w_ok && s.w < 1.0;
        sup_u = std::max(sup_u, s.u.norm());
    }
    o.require(r.log.status == RunStatus::Completed, "run completed");
    o.require(!r.log.samples.empty() && near(r.log.samples.back().t, 10.0, 1e-12), "horizon [0,10] covered");
    o.require(strict && r.events.funnel_violations.empty(), "||e|| < psi at every sample");
    o.require(w_ok, "w < 1 throughout");
    o.require(std::isfinite(sup_u), "sup ||u|| finite");
    o.require(secs < kRuntimeLimit, "runtime < 10 s");
    o.note << " samples=" << r.log.samples.size() << " min_margin=" << r.events.min_funnel_margin
           << " max_w=" << r.events.max_w << " sup_u=" << sup_u << " runtime=" << secs << "s";
    return o;
}

// AC2
Outcome hypothesis_audit() {
    Outcome o;
    const ScenarioConfig cfg = load("bench_nominal.json");
    const TheoremCompliance tc = theorem_compliance(cfg, cfg.controllers[0]);
    const FeasibilityReport f = initial_feasibility(cfg);
    o.require(tc.k_ok, "k_ok");
    const double norms[] = {0.3, 0.11, 0.04}, bounds[] = {3.1, 0.1, 0.1};
    for (int i = 0; i < 3; ++i) {
        o.require(near(f.stage_norms[static_cast<std::size_t>(i)], norms[i], kExact), "stage norm " + std::to_string(i + 1));
        o.require(near(f.stage_bounds[static_cast<std::size_t>(i)], bounds[i], kExact), "stage bound " + std::to_string(i + 1));
    }
    o.require(!f.feasible, "reported infeasible");
    o.require(near(f.margins[1], -0.01, kExact), "stage-2 margin -0.01");
    o.note << " norms=(" << f.stage_norms[0] << ", " << f.stage_norms[1] << ", " << f.stage_norms[2]
           << ") margin2=" << f.margins[1];
    return o;
}

// AC3
Outcome feasible_benchmark() {
    Outcome o;
    const ScenarioConfig cfg = load("bench_feasible.json");
    const Stack e0 = initial_error_stack(cfg);
    o.require(e0.blocks().cwiseAbs().maxCoeff() <= kExact, "e-stack (0,0,0) at t0");
    o.require(initial_feasibility(cfg).feasible, "feasible at t0");
    const RunResult r = run_scenario(cfg);
    const EventReport& ev = r.events;
    o.require(r.exit_code == 0, "exit 0");
    o.require(ev.funnel_violations.empty(), "(i) error in funnel");
    o.require(ev.max_w < 1.0 && ev.gain_singularity.empty(), "(ii) w < 1");
    o.require(std::isfinite(ev.sup_u), "(iii) bounded input");
    o.require(ev.theorem_witness() && r.log.events.empty(), "zero events");
    o.note << " max|e0|=" << e0.blocks().cwiseAbs().maxCoeff() << " max_w=" << ev.max_w << " sup_u=" << ev.sup_u;
    return o;
}

// AC4
Outcome xi_machinery() {
    Outcome o;
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> K(0.0, 10.0), Z(-5.0, 5.0);
    std::uniform_int_distribution<int> R(1, 6), M(1, 3);
    double worst = 0.0;
    for (int n = 0; n < 10000; ++n) {
        const ErrorChainParams p(K(rng), R(rng), M(rng));
        Stack z(p.r, p.m);
        for (Eigen::Index c = 0; c < z.blocks().size(); ++c) z.blocks().data()[c] = Z(rng);
        const Eigen::MatrixXd rec = xi_all(p, z);
        for (int i = 1; i <= p.r; ++i) {
            const Eigen::VectorXd cf = xi_closed_form(p, i, z);
            worst = std::max(worst, (rec.col(i - 1) - cf).norm() / std::max(1.0, cf.norm()));
        }
    }
    o.require(worst <= kRecursionRel, "recursion == closed form");
    Eigen::MatrixXd expected(3, 3);
    expected << 1, 0, 0, 3, 1, 0, 9, 6, 1;
    o.require(s_matrix(ErrorChainParams(3.0, 3, 1)) == expected, "S(k=3,r=3,m=1) exact");
    double worst_det = 0.0;
    for (int n = 0; n < 100; ++n) {
        const ErrorChainParams p(K(rng), R(rng), M(rng));
        worst_det = std::max(worst_det, std::abs(s_matrix(p).partialPivLu().determinant() - 1.0));
    }
    o.require(worst_det <= kDetTol, "det S = 1");
    o.note << " worst_rel=" << worst << " worst_det_err=" << worst_det;
    return o;
}

// AC5
Outcome class_g() {
    Outcome o;
    const auto grid = uniform_grid(0.0, 10.0, 1001);
    const MembershipReport good = verify_class_G(FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1), grid, kExact);
    const MembershipReport bad = verify_class_G(FunnelFunction::exponential(3.0, 1.0, 0.1, 0.5, 0.1), grid, kExact);
    o.require(good.ok && std::abs(good.worst_residual) < kExact, "residual < 1e-12 for (1, 0.1)");
    o.require(!bad.ok, "(0.5, 0.1) rejected");
    o.require(near(bad.worst_residual, -1.55, kExact) && bad.worst_t == 0.0, "worst residual -1.55 at t=0");
    o.note << " residual=" << good.worst_residual << " bad_worst=" << bad.worst_residual << "@t=" << bad.worst_t;
    return o;
}

// AC6
Outcome mu_lambda() {
    Outcome o;
    const MuTable t = mu_table(ErrorChainParams(3.0, 3, 1), 3.1, 0.1, 1.0);
    o.require(near(t.at(1, 1), 9.4, kExact), "mu_1^1 = 9.4");
    o.require(near(t.at(2, 1), 0.4, kExact), "mu_2^1 = 0.4");
    o.require(near(t.at(1, 2), 28.6, kExact), "mu_1^2 = 28.6");
    o.require(near(t.lambda, 88.0, kExact), "lambda = 88");
    o.note << " mu11=" << t.at(1, 1) << " mu21=" << t.at(2, 1) << " mu12=" << t.at(1, 2) << " lambda=" << t.lambda;
    return o;
}

// AC7: the library monitor plus an independent scan of the same implication.
Outcome stage_invariance() {
    Outcome o;
    const ScenarioConfig cfg = load("bench_feasible.json");
    const RunResult r = run_scenario(cfg);
    const ErrorChainParams p = audit_chain(cfg);
    const double floor = cfg.funnel.beta() / cfg.funnel.alpha();
    int intervals = 0, violations = 0;
    bool active = false;
    for (const Sample& s : r.log.samples) {
        const Eigen::MatrixXd xi = xi_all(p, Stack(s.e_stack));
        const double psi = cfg.funnel.value(s.t);
        const bool hyp = xi.col(2).norm() < floor;
        const bool stages_ok = xi.col(1).norm() < floor && s.e.norm() < psi;
        if (!hyp) {
            active = false;
        } else if (!active) {
            active = stages_ok;
            intervals += active ? 1 : 0;
        } else if (!stages_ok) {
            ++violations;
        }
    }
    o.require(intervals > 0, "at least one qualifying interval");
    o.require(violations == 0, "independent scan");
    o.require(r.events.stage_invariance_violations.empty(), "monitor");
    o.note << " intervals=" << intervals << " violations=" << violations
           << " monitor_flags=" << r.events.stage_invariance_violations.size();
    return o;
}

// AC8
Outcome comparison() {
    Outcome o;
    const ScenarioConfig cfg = load("bench_compare.json");
    const std::vector<RunResult> runs = run_compare(cfg, 2);
    o.require(runs.size() == 2, "two runs");
    for (const auto& r : runs) {
        o.require(r.exit_code == 0, r.label + " exit 0");
        o.require(r.events.funnel_violations.empty(), r.label + " zero funnel violations");
        o.note << " " << r.label << ":rms=" << r.events.rms_error << ",sup_u=" << r.events.sup_u;
    }
    std::cout << compare_table(runs);
    return o;
}

double rk4_rel_error(double dt) {
    const auto rhs = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-5.0 * y); };
    Eigen::VectorXd y = Eigen::VectorXd::Ones(1);
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < n; ++i) y = rk4_step(rhs, i * dt, y, dt);
    return std::abs(y(0) - std::exp(-5.0)) / std::exp(-5.0);
}

// AC9
Outcome numerics() {
    Outcome o;
    const auto decay = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); };
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    const double hand = rk4_step(decay, 0.0, one, 0.1)(0);
    o.require(near(hand, 0.9048375, kRk4Hand), "rk4 hand example");

    const ScenarioConfig a = load_config(kScenarios / "bench_nominal.json");
    const ScenarioConfig b =
        load_config(kScenarios / "bench_nominal.json", {"integrator.dt=5e-5", "integrator.log_stride=20"});
    const RunResult ra = run_scenario(a), rb = run_scenario(b);
    double sup_a = 0.0, sup_b = 0.0;
    for (const Sample& s : ra.log.samples) sup_a = std::max(sup_a, s.norm_e);
    for (const Sample& s : rb.log.samples) sup_b = std::max(sup_b, s.norm_e);
    const double pointwise = sup_error_difference(ra.log, rb.log);
    o.require(ra.exit_code == 0 && rb.exit_code == 0, "both runs complete");
    o.require(std::abs(sup_a - sup_b) < kHalvingTol && pointwise < kHalvingTol, "step halving < 1e-6");

    const double e1 = rk4_rel_error(1e-2), e2 = rk4_rel_error(5e-3), e3 = rk4_rel_error(2.5e-3);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    o.require(std::abs(p1 - 4.0) <= kOrderTol && std::abs(p2 - 4.0) <= kOrderTol, "order 4 +- 0.3");
    o.note << " rk4(0.1)=" << hand << " d_sup=" << std::abs(sup_a - sup_b) << " d_pointwise=" << pointwise
           << " orders=(" << p1 << ", " << p2 << ")";
    return o;
}

bool causal(const CausalOperator& op, double t0, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    std::vector<double> t;
    std::vector<Eigen::VectorXd> in;
    for (int i = 0; i < 300; ++i) {
        t.push_back(t0 + 0.01 * i);
        in.push_back(Eigen::VectorXd::Constant(1, std::sin(2 * t.back()) + 0.5 * U(rng)));
    }
    const auto base = operator_apply(op, t, in);
    for (std::size_t cut = 0; cut + 1 < t.size(); cut += 23) {
        auto mod = in;
        for (std::size_t i = cut + 1; i < mod.size(); ++i) mod[i] = Eigen::VectorXd::Constant(1, 5.0 * U(rng));
        const auto out = operator_apply(op, t, mod);
        for (std::size_t i = 0; i <= cut; ++i)
            if ((out[i] - base[i]).norm() != 0.0) return false;
    }
    return true;
}

// AC10
Outcome operator_suite() {
    Outcome o;
    const Eigen::VectorXd z1 = Eigen::VectorXd::Zero(1);
    const LinearInternalDynamics lag(Eigen::MatrixXd::Constant(1, 1, -2.0), Eigen::MatrixXd::Ones(1, 1),
                                     Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Constant(1, 1, 0.5), z1);
    o.require(causal(Delay(0.4, {0.0, 0.4}, {z1, z1}), 0.4, 1), "Delay causal");
    o.require(causal(Play(0.3, z1), 0.0, 2), "Play causal");
    o.require(causal(Relay(0.5, -0.5, 1.0, -1.0, {false}), 0.0, 3), "Relay causal");
    o.require(causal(lag, 0.0, 4), "LinearInternalDynamics causal");

    std::mt19937 rng(10);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    Play play(0.5, z1);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, U(rng));
        play.commit(y);
        worst = std::max(worst, std::abs(play.memory()(0) - y(0)));
    }
    o.require(worst <= 0.5, "|w - y| <= sigma");

    Eigen::MatrixXd A(2, 2);
    A << 0, 1, -1, 0;
    bool rejected = false;
    try {
        LinearInternalDynamics(A, Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 1),
                               Eigen::VectorXd::Zero(2));
    } catch (const UsageError&) {
        rejected = true;
    }
    o.require(rejected, "Hurwitz rejection of [[0,1],[-1,0]]");
    o.note << " play_worst=" << worst;
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"AC1 nominal benchmark stays in the funnel", nominal_benchmark},
        {"AC2 hypothesis audit of the nominal initial data", hypothesis_audit},
        {"AC3 feasible-init benchmark", feasible_benchmark},
        {"AC4 auxiliary-error machinery", xi_machinery},
        {"AC5 class-G verification", class_g},
        {"AC6 mu/lambda diagnostics", mu_lambda},
        {"AC7 stage-invariance monitor", stage_invariance},
        {"AC8 comparison suite", comparison},
        {"AC9 numerics", numerics},
        {"AC10 operator suite", operator_suite},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.note << " [exception: " << e.what() << "]";
        }
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << " |" << o.note.str() << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
