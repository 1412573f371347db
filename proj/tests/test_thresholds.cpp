#include <doctest.h>

#include <cmath>
#include <random>

#include "kpnw/error.hpp"
#include "kpnw/thresholds.hpp"
#include "support.hpp"

using namespace kpnw;
using kpnw::test::rel;
using kpnw::test::scan_max;

namespace {

struct Draw {
    GNConstants gn;
    double mu;
};

Draw draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> Q(2.1, 10.0 / 3 - 0.05), P(10.0 / 3 + 0.05, 5.9), logC(-1.5, 1.5), logMu(-1, 1);
    Draw d;
    d.gn.q = Q(rng);
    d.gn.p = P(rng);
    d.gn.Cq = std::exp(logC(rng));
    d.gn.Cp = std::exp(logC(rng));
    d.mu = std::exp(logMu(rng));
    return d;
}


}  // namespace

TEST_CASE("beta") {
    CHECK(beta(2) == 0);
    CHECK(beta(6) == doctest::Approx(1).epsilon(1e-15));
    CHECK(beta(10.0 / 3) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(10.0 / 3 * beta(10.0 / 3) == doctest::Approx(2).epsilon(1e-15));
    CHECK_THROWS_AS(beta(1.9), DomainError);
    CHECK_THROWS_AS(beta(6.1), DomainError);
}

TEST_CASE("critical_mass") {
    CHECK(critical_mass(5.0 / 3) == doctest::Approx(1).epsilon(1e-15));
    CHECK(critical_mass(1) == doctest::Approx(1.4668).epsilon(1e-4));
    CHECK(rel(critical_mass(1), std::pow(0.6, -0.75)) < 1e-15);
    for (double C : {0.1, 0.5, 1.0, 3.0, 10.0}) CHECK(critical_mass(2 * C) < critical_mass(C));
    CHECK_THROWS_AS(critical_mass(0), DomainError);
    CHECK_THROWS_AS(critical_mass(-1), DomainError);
}

TEST_CASE("h limits and monotonicity in a") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 50; ++k) {
        const auto [gn, mu] = draw(rng);
        CHECK(h(1.0, 1e-300, gn, mu) < -1e3);
        CHECK(h(1.0, 1e300, gn, mu) < -1e3);
        for (double rho : {0.1, 1.0, 10.0})
            for (double a = 0.1; a < 3; a *= 1.5) CHECK(h(a * 1.5, rho, gn, mu) <= h(a, rho, gn, mu));
        // Combined regime exponents.
        const double q = gn.q, p = *gn.p;
        CHECK(q * beta(q) - 2 < 0);
        CHECK(p * beta(p) - 2 > 0);
    }
    const GNConstants gn{1, 1, Provenance::UserSupplied, 3, 4};
    CHECK_THROWS_AS(h(0, 1, gn, 1), DomainError);
    CHECK_THROWS_AS(h(1, 0, gn, 1), DomainError);
}

TEST_CASE("rho_max") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const auto [gn, mu] = draw(rng);
        const double a = 0.3 + k * 0.05;
        const double r = rho_max(a, gn, mu);
        // g'(rho_a) = 0: finite differences and the closed form.
        const double eps = 1e-6 * r;
        const double fd = (h(a, r + eps, gn, mu) - h(a, r - eps, gn, mu)) / (2 * eps);
        const double scale = std::abs(h(a, r, gn, mu) - 0.5) / r;
        CHECK(std::abs(fd) <= 1e-8 * scale);
        CHECK(std::abs(h_rho(a, r, gn, mu)) <= 1e-12 * scale);
        // Global maximum on a log grid.
        for (int j = 0; j <= 800; ++j) {
            const double rho = r * std::pow(10.0, -4 + 8.0 * j / 800);
            CHECK(h(a, r, gn, mu) >= h(a, rho, gn, mu));
        }
        // One sign change of g' on the grid.
        int changes = 0;
        double prev = h_rho(a, r * 1e-4, gn, mu);
        for (int j = 1; j <= 800; ++j) {
            const double v = h_rho(a, r * std::pow(10.0, -4 + 8.0 * j / 800), gn, mu);
            if ((prev > 0) != (v > 0)) ++changes;
            prev = v;
        }
        CHECK(changes == 1);
        // Power law in a.
        const double q = gn.q, p = *gn.p, bq = beta(q), bp = beta(p);
        const double e = ((1 - bq) * q - (1 - bp) * p) / (p * bp - q * bq);
        CHECK(rel(rho_max(2 * a, gn, mu), r * std::pow(2.0, e)) <= 1e-12);
        CHECK(e == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    const GNConstants pure{1, std::nullopt, Provenance::UserSupplied, 3, std::nullopt};
    CHECK_THROWS_AS(rho_max(1, pure, 1), DomainError);
}

TEST_CASE("K, a0 and the trichotomy") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const auto [gn, mu] = draw(rng);
        const auto [K, a0] = K_and_a0(gn, mu);
        CHECK(K > 0);
        CHECK(a0 > 0);
        const double r0 = rho_max(a0, gn, mu);
        CHECK(std::abs(h(a0, r0, gn, mu)) <= 1e-10);
        CHECK(std::abs(scan_max(a0, gn, mu, r0)) <= 1e-10);
        for (double f : {0.3, 0.9, 1.1, 2.0}) {
            const double a = f * a0;
            const auto rep = threshold_report(a, gn, mu);
            const double smax = scan_max(a, gn, mu, rho_max(a, gn, mu));
            CHECK(rel(*rep.gmax, smax) <= 1e-8);
            CHECK(rel(*rep.gmax, h(a, *rep.rho_a, gn, mu)) <= 1e-12);
            CHECK(*rep.trichotomy == (smax > 0 ? Trichotomy::Positive : Trichotomy::Negative));
        }
        CHECK(*threshold_report(a0, gn, mu).trichotomy == Trichotomy::Zero);
    }
}

TEST_CASE("threshold_report") {
    const GNConstants gn{0.51471, 0.26462, Provenance::Estimated, 3, 4};
    const auto r = threshold_report(0.5, gn, 1);
    CHECK(r.provenance == Provenance::Estimated);
    CHECK(r.beta_q == doctest::Approx(0.5));
    CHECK(*r.beta_p == doctest::Approx(0.75));
    CHECK(std::isfinite(*r.a0));
    CHECK(*r.a0 > 0);
    CHECK(*r.rho0 == doctest::Approx(rho_max(*r.a0, gn, 1)));
    CHECK(!r.a_star);

    const GNConstants crit{1, std::nullopt, Provenance::UserSupplied, 10.0 / 3, std::nullopt};
    const auto c = threshold_report(1, crit, 1);
    CHECK(*c.a_star == doctest::Approx(critical_mass(1)));
    CHECK(!c.a0);
    CHECK_THROWS_AS(threshold_report(1, GNConstants{0, 1, Provenance::UserSupplied, 3, 4}, 1), DomainError);
}

TEST_CASE("monotone_window_check") {
    const GNConstants gn{0.51471, 0.26462, Provenance::UserSupplied, 3, 4};
    const double mu = 1;
    const auto [K, a0] = K_and_a0(gn, mu);
    const double r0 = rho_max(a0, gn, mu);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0.05, 1);
    for (int k = 0; k < 50; ++k) {
        const double a1 = a0 * U(rng), a2 = a1 * U(rng);
        const double rho1 = rho_max(a1, gn, mu) * (0.5 + U(rng));
        if (h(a1, rho1, gn, mu) < 0) continue;
        CHECK(monotone_window_check(a1, rho1, a2, gn, mu));
    }
    CHECK(monotone_window_check(a0 / 2, r0, a0 / 2, gn, mu) == (h(a0 / 2, r0, gn, mu) >= 0));
    CHECK_THROWS_AS(monotone_window_check(2 * a0, r0, a0, gn, mu), DomainError);
    CHECK_THROWS_AS(monotone_window_check(a0 / 2, r0, a0, gn, mu), DomainError);
}
