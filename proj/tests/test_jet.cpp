#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "funnelctl/errors.hpp"
#include "funnelctl/jet.hpp"

using namespace funnelctl;
using J = Jet<double>;

namespace {

using Poly = std::vector<double>;  // ascending powers

Poly mul(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

Poly diff(const Poly& p) {
    if (p.size() <= 1) return {0.0};
    Poly out(p.size() - 1);
    for (std::size_t i = 1; i < p.size(); ++i) out[i - 1] = static_cast<double>(i) * p[i];
    return out;
}

double eval(const Poly& p, double t) {
    double acc = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) acc = acc * t + p[i];
    return acc;
}

// Raw derivatives 0..order of p at t, by repeated symbolic differentiation.
J poly_jet(Poly p, double t, int order) {
    J::Coeffs c(order + 1);
    for (int n = 0; n <= order; ++n) {
        c(n) = eval(p, t);
        p = diff(p);
    }
    return J(c);
}

}  // namespace

TEST_CASE("seeding from a derivative stack") {
    Stack s(3, 1);
    s.blocks() << 1, 2, 3;
    const auto jets = jet_lift(s, 2);
    REQUIRE(jets.size() == 1);
    CHECK(jets[0].order() == 2);
    CHECK(jets[0][0] == 1);
    CHECK(jets[0][1] == 2);
    CHECK(jets[0][2] == 3);
    CHECK_THROWS_AS(jet_lift(s, 3), UsageError);
}

TEST_CASE("quotient 1/(1-x)") {
    J::Coeffs c(2);
    c << 0.01, 0.2;
    const J x(c);
    const J q = J::constant(1.0, 1) / (J::constant(1.0, 1) - x);
    CHECK(q.value() == doctest::Approx(1.0 / 0.99).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.2 / (0.99 * 0.99)).epsilon(1e-14));
    CHECK(q.value() == doctest::Approx(1.010101).epsilon(1e-6));
    CHECK(q[1] == doctest::Approx(0.204061).epsilon(1e-6));
}

TEST_CASE("product and quotient match symbolic differentiation") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    std::uniform_int_distribution<int> D(0, 5);
    for (int n = 0; n < 500; ++n) {
        Poly a(static_cast<std::size_t>(D(rng) + 1)), b(static_cast<std::size_t>(D(rng) + 1));
        for (auto& v : a) v = U(rng);
        for (auto& v : b) v = U(rng);
        b[0] = 3.0 + std::abs(b[0]);  // keep b away from zero near t = 0
        const double t = U(rng) * 0.1;
        const int order = 4;
        const J ja = poly_jet(a, t, order), jb = poly_jet(b, t, order);
        const J prod = ja * jb;
        const J expect = poly_jet(mul(a, b), t, order);
        for (int q = 0; q <= order; ++q)
            CHECK(prod[q] == doctest::Approx(expect[q]).epsilon(1e-10).scale(1.0));
        // (a / b) * b recovers a
        const J back = (ja / jb) * jb;
        for (int q = 0; q <= order; ++q) CHECK(back[q] == doctest::Approx(ja[q]).epsilon(1e-10).scale(1.0));
        const J sum = ja + 2.0 * jb - ja;
        for (int q = 0; q <= order; ++q) CHECK(sum[q] == doctest::Approx(2.0 * jb[q]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("reciprocal against the closed form of 1/(1 - t)") {
    // d^n/dt^n (1 - t)^-1 = n! (1 - t)^-(n+1)
    J::Coeffs c = J::Coeffs::Zero(6);
    c(0) = 1.0 - 0.3;
    c(1) = -1.0;
    const J r = J(c).reciprocal();
    double fact = 1.0;
    for (int n = 0; n <= 5; ++n) {
        if (n > 0) fact *= n;
        CHECK(r[n] == doctest::Approx(fact / std::pow(0.7, n + 1)).epsilon(1e-12));
    }
}

TEST_CASE("orders truncate to the shorter operand") {
    const J a = J::constant(2.0, 4), b = J::constant(3.0, 2);
    CHECK((a * b).order() == 2);
    CHECK((a + b).order() == 2);
    CHECK(a.derivative().order() == 3);
    CHECK(a.truncated(1).order() == 1);
    CHECK_THROWS_AS(J::constant(1.0, 0).derivative(), UsageError);
    CHECK_THROWS_AS(J::constant(0.0, 2).reciprocal(), UsageError);
}
