#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "funnelctl/errors.hpp"
#include "funnelctl/integrators.hpp"
#include "funnelctl/sim.hpp"

using namespace funnelctl;

namespace {

const MassOnCarParams kBench{4.0, 1.0, 2.0, 1.0, 0.0};

FunnelFunction bench_funnel() { return FunnelFunction::exponential(3.0, 1.0, 0.1, 1.0, 0.1); }

Eigen::VectorXd v1(double x) { return Eigen::VectorXd::Constant(1, x); }

TrajectoryLog run_bench(const Eigen::Vector4d& x0, IntegratorConfig cfg, Controller ctrl) {
    MassOnCarPlant plant(kBench);
    return integrate_closed_loop(plant, ctrl, ReferenceSignal::cosine(1.0, 1.0, 0.0), bench_funnel(), cfg, x0);
}

Controller new_fc() { return NewFunnelController(ErrorChainParams(3.0, 3, 1), bench_funnel()); }

IntegratorConfig rk4(double dt, double t_end = 10.0, int stride = 10) {
    IntegratorConfig c;
    c.method = Rk4Fixed{dt};
    c.t_end = t_end;
    c.log_stride = stride;
    return c;
}

const Eigen::Vector4d kNominalInit(-0.3, 1.0, -0.21, 1.0);   // (z, s, zdot, sdot)
const Eigen::Vector4d kFeasibleInit(0.5, 0.5, 0.0, 0.0);

double rk4_error(double dt) {
    const auto rhs = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-5.0 * y); };
    Eigen::VectorXd y = v1(1.0);
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < n; ++i) y = rk4_step(rhs, i * dt, y, dt);
    return std::abs(y(0) - std::exp(-5.0)) / std::exp(-5.0);
}

}  // namespace

TEST_CASE("reference stacks") {
    const auto ref = ReferenceSignal::cosine(1.0, 1.0, 0.0);
    const RefStack a = ref_stack(ref, 0.0, 3);
    CHECK(a.stack.blocks()(0, 0) == 1.0);
    CHECK(a.stack.blocks()(0, 1) == doctest::Approx(0.0));
    CHECK(a.stack.blocks()(0, 2) == -1.0);
    CHECK(a.rth(0) == doctest::Approx(0.0));
    CHECK(a.rth_bound == 1.0);
    const RefStack b = ref_stack(ref, std::numbers::pi / 2, 3);
    CHECK(b.stack.blocks()(0, 0) == doctest::Approx(0.0));
    CHECK(b.stack.blocks()(0, 1) == doctest::Approx(-1.0));
    CHECK(b.stack.blocks()(0, 2) == doctest::Approx(0.0));
    CHECK_THROWS_AS(ref_stack(ref, -1.0, 3), UsageError);

    const ReferenceSignal zero({PolynomialSpline{{0.0, 5.0}, {{0.0}}, 6}});
    CHECK(ref_stack(zero, 2.0, 3).stack.blocks().isZero());
    CHECK_THROWS_AS(ref_stack(zero, 6.0, 3), UsageError);
    CHECK_THROWS_AS(ref_stack(zero, 1.0, 7), UsageError);
}

TEST_CASE("spline continuity is validated") {
    // t^2 on [0,1] then 1 + 2(t-1) + (t-1)^2: C^2
    const PolynomialSpline ok{{0.0, 1.0, 2.0}, {{0.0, 0.0, 1.0}, {1.0, 2.0, 1.0}}, 2};
    CHECK_NOTHROW(ReferenceSignal({ok}));
    const PolynomialSpline kink{{0.0, 1.0, 2.0}, {{0.0, 0.0, 1.0}, {1.0, 0.0, 1.0}}, 2};
    CHECK_THROWS_AS(ReferenceSignal({kink}), UsageError);
    const ReferenceSignal r({ok});
    CHECK(r.derivative(1.5, 1)(0) == doctest::Approx(3.0));
    CHECK(r.derivative_bound(2) >= 2.0);
}

TEST_CASE("rk4 hand examples") {
    const auto decay = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); };
    CHECK(rk4_step(decay, 0.0, v1(1.0), 0.1)(0) == doctest::Approx(0.9048375).epsilon(1e-7));
    const auto still = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd::Zero(y.size()).eval(); };
    CHECK(rk4_step(still, 0.0, v1(2.0), 0.1)(0) == 2.0);
    const auto ramp = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd::Ones(y.size()).eval(); };
    CHECK(rk4_step(ramp, 0.0, v1(2.0), 0.5)(0) == 2.5);
    const auto blow = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(y / 0.0); };
    CHECK_THROWS_AS(rk4_step(blow, 0.0, v1(1.0), 0.1), NonFiniteError);
}

TEST_CASE("rk4 observed order") {
    const double e1 = rk4_error(1e-2), e2 = rk4_error(5e-3), e3 = rk4_error(2.5e-3);
    const double p1 = std::log2(e1 / e2), p2 = std::log2(e2 / e3);
    CHECK(std::abs(p1 - 4.0) < 0.3);
    CHECK(std::abs(p2 - 4.0) < 0.3);
}

TEST_CASE("dormand-prince step is fifth order accurate") {
    const auto decay = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); };
    const auto s = dormand_prince_step(decay, 0.0, v1(1.0), 0.1);
    CHECK(std::abs(s.x(0) - std::exp(-0.1)) < 1e-9);
    CHECK(s.err.norm() < 1e-6);
}

TEST_CASE("equilibrium of the pure integrator") {
    FdeFunction f = [](const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd& u) { return u; };
    FdePlant plant(1, 1, f, std::nullopt, ZeroDisturbance{}, v1(0.0));
    const Controller c = NewFunnelController(ErrorChainParams(3.0, 1, 1), bench_funnel());
    const TrajectoryLog log = integrate_closed_loop(plant, c, ReferenceSignal::cosine(0.0, 1.0, 0.0), bench_funnel(),
                                                    rk4(1e-3, 5.0), plant.initial_state());
    CHECK(log.status == RunStatus::Completed);
    for (const Sample& s : log.samples) {
        REQUIRE(s.e(0) == 0.0);
        REQUIRE(s.u(0) == 0.0);
    }
}

TEST_CASE("nominal benchmark keeps the funnel") {
    const TrajectoryLog log = run_bench(kNominalInit, rk4(1e-4), new_fc());
    CHECK(log.status == RunStatus::Completed);
    REQUIRE(log.samples.size() == 10001);
    CHECK(log.samples.back().t == doctest::Approx(10.0).epsilon(1e-12));
    for (std::size_t i = 1; i < log.samples.size(); ++i) REQUIRE(log.samples[i].t > log.samples[i - 1].t);
    const EventReport rep = monitor_trajectory(log, bench_funnel(), ErrorChainParams(3.0, 3, 1));
    CHECK(rep.funnel_violations.empty());
    CHECK(rep.gain_singularity.empty());
    CHECK(rep.max_w < 1.0);
    CHECK(std::isfinite(rep.sup_u));
    REQUIRE(rep.domain_D_exits.size() >= 1);
    CHECK(rep.domain_D_exits.front().index == 0);
    CHECK(rep.domain_D_exits.front().detail == "stages 2");
}

TEST_CASE("feasible benchmark is a clean theorem witness") {
    const TrajectoryLog log = run_bench(kFeasibleInit, rk4(1e-4), new_fc());
    CHECK(log.samples.front().e_stack.norm() < 1e-15);
    const EventReport rep = monitor_trajectory(log, bench_funnel(), ErrorChainParams(3.0, 3, 1));
    CHECK(rep.theorem_witness());
    CHECK(rep.domain_D_exits.empty());
    CHECK(rep.stage_invariance_violations.empty());
    // dissipativity along the log
    for (const Sample& s : log.samples) {
        const Eigen::VectorXd er = s.stages.col(2);
        REQUIRE(s.u.dot(er) <= -er.squaredNorm() + 1e-15);
    }
}

TEST_CASE("step halving changes sup ||e|| by less than 1e-6") {
    const TrajectoryLog a = run_bench(kNominalInit, rk4(1e-4, 10.0, 10), new_fc());
    const TrajectoryLog b = run_bench(kNominalInit, rk4(5e-5, 10.0, 20), new_fc());
    const double d = sup_error_difference(a, b);
    CHECK(d < 1e-6);
}

TEST_CASE("fixed-step runs are bit-identical") {
    const TrajectoryLog a = run_bench(kNominalInit, rk4(1e-3, 2.0), new_fc());
    const TrajectoryLog b = run_bench(kNominalInit, rk4(1e-3, 2.0), new_fc());
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) REQUIRE(a.samples[i].state == b.samples[i].state);
}

TEST_CASE("adaptive integration agrees with fixed step") {
    IntegratorConfig cfg;
    cfg.method = Rk45Adaptive{1e-9, 1e-11, 1e-12, 1e-4, 1e-2};
    cfg.t_end = 3.0;
    cfg.log_stride = 1;
    const TrajectoryLog a = run_bench(kFeasibleInit, cfg, new_fc());
    CHECK(a.status == RunStatus::Completed);
    CHECK(a.samples.back().t == doctest::Approx(3.0));
    const TrajectoryLog b = run_bench(kFeasibleInit, rk4(1e-4, 3.0, 1), new_fc());
    CHECK(std::abs(a.samples.back().norm_e - b.samples.back().norm_e) < 1e-7);
}

TEST_CASE("legacy controller on the nominal benchmark") {
    const Controller legacy = LegacyFunnelController::with_stage_scale(bench_funnel(), 2.0, 3, 1);
    const TrajectoryLog log = run_bench(kNominalInit, rk4(1e-4), legacy);
    CHECK(log.status == RunStatus::Completed);
    const EventReport rep = monitor_trajectory(log, bench_funnel(), ErrorChainParams(3.0, 3, 1));
    CHECK(rep.funnel_violations.empty());
    CHECK(log.samples.back().stage_gains.size() == 2);
}

TEST_CASE("gain singularity aborts with an event") {
    // k = 0 turns the benchmark into a fast-blowing loop: e_r = e'' = -2 gives w = 400 at t0
    const Controller c = NewFunnelController(ErrorChainParams(0.0, 3, 1), bench_funnel());
    const TrajectoryLog log = run_bench(kNominalInit, rk4(1e-3, 1.0), c);
    CHECK(log.status == RunStatus::Singularity);
    REQUIRE_FALSE(log.events.empty());
    CHECK(log.events.back().kind == "gain_singularity");
    CHECK(monitor_trajectory(log, bench_funnel(), ErrorChainParams(0.0, 3, 1)).aborts.size() == 1);
}

TEST_CASE("monitor flags a constructed violation") {
    TrajectoryLog log;
    log.r = 1;
    log.m = 1;
    const auto band = FunnelFunction::constant(1.0, 1.0, 1.0);
    for (int i = 0; i < 12; ++i) {
        Sample s{};
        s.t = 0.1 * i;
        s.e = v1(i == 7 ? 1.2 : 0.1);
        s.norm_e = s.e.norm();
        s.e_stack = s.e;
        s.stages = s.e;
        s.u = v1(0.0);
        s.psi = 1.0;
        log.samples.push_back(s);
    }
    const EventReport rep = monitor_trajectory(log, band, ErrorChainParams(1.0, 1, 1));
    REQUIRE(rep.funnel_violations.size() == 1);
    CHECK(rep.funnel_violations[0].index == 7);
    CHECK(rep.domain_D_exits.size() == 1);
    CHECK_FALSE(rep.theorem_witness());
}

TEST_CASE("csv layout") {
    const TrajectoryLog log = run_bench(kFeasibleInit, rk4(1e-3, 0.05, 10), new_fc());
    const auto h = csv_header(log);
    const std::vector<std::string> expect{"t", "z", "s", "zdot", "sdot", "y", "yref", "e", "psi", "norm_e",
                                          "xi1", "xi2", "xi3", "w", "gain", "u"};
    CHECK(h == expect);
    std::ostringstream os;
    write_csv(os, log);
    const std::string text = os.str();
    CHECK(text.rfind("t,z,s,zdot,sdot,y,yref,e,psi,norm_e,xi1,xi2,xi3,w,gain,u\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + static_cast<long>(log.samples.size()));
}

TEST_CASE("integrator config validation") {
    IntegratorConfig c = rk4(-1.0);
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = rk4(1e-3);
    c.t_end = 0.0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = rk4(1e-3);
    c.method = Rk45Adaptive{0.0, 1e-9, 1e-10, 1e-4, 1e-2};
    CHECK_THROWS_AS(c.validate(), UsageError);
}
