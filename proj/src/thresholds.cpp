#include "kpnw/thresholds.hpp"

#include <cmath>

#include "kpnw/error.hpp"

namespace kpnw {

namespace {

using LD = long double;

LD beta_ld(LD q) { return 1.5L - 3.0L / q; }

bool has_p(const GNConstants& gn) { return gn.Cp.has_value() && gn.p.has_value(); }

void check_combined(const GNConstants& gn, double mu) {
    if (!has_p(gn)) throw DomainError("combined thresholds need Cp and p");
    const LD q = gn.q, p = *gn.p;
    if (!(q > 2 && q < 10.0L / 3 && p > 10.0L / 3 && p < 6)) throw DomainError("combined thresholds need 2 < q < 10/3 < p < 6");
    if (!(mu > 0) || !(gn.Cq > 0) || !(*gn.Cp > 0)) throw DomainError("combined thresholds need mu, Cq, Cp > 0");
}

// c in rho_a = c^{1/d} a^{1/3}, d = p bp - q bq.
LD rho_base(const GNConstants& gn, double mu) {
    const LD q = gn.q, p = *gn.p;
    const LD eq = q * beta_ld(q) - 2, ep = p * beta_ld(p) - 2;
    return -(eq / ep) * (p * LD(mu) / q) * (LD(gn.Cq) / LD(*gn.Cp));
}

}  // namespace

const char* to_string(Provenance p) { return p == Provenance::Estimated ? "estimated" : "user-supplied"; }

const char* to_string(Trichotomy t) {
    switch (t) {
        case Trichotomy::Positive: return "positive";
        case Trichotomy::Zero: return "zero";
        case Trichotomy::Negative: return "negative";
    }
    return "?";
}

double beta(double q) {
    if (!(q >= 2 && q <= 6)) throw DomainError("beta needs q in [2,6]");
    return double(beta_ld(q));
}

double critical_mass(double C) {
    if (!(C > 0)) throw DomainError("critical mass needs C > 0");
    return double(std::pow(3.0L * LD(C) / 5.0L, -0.75L));
}

double h(double a, double rho, const GNConstants& gn, double mu) {
    if (!(a > 0) || !(rho > 0)) throw DomainError("h needs a, rho > 0");
    const LD q = gn.q, bq = beta_ld(q);
    LD v = 0.5L - LD(mu) / q * LD(gn.Cq) * std::pow(LD(rho), q * bq - 2) * std::pow(LD(a), (1 - bq) * q);
    if (has_p(gn)) {
        const LD p = *gn.p, bp = beta_ld(p);
        v -= LD(*gn.Cp) / p * std::pow(LD(rho), p * bp - 2) * std::pow(LD(a), (1 - bp) * p);
    }
    return double(v);
}

double h_rho(double a, double rho, const GNConstants& gn, double mu) {
    if (!(a > 0) || !(rho > 0)) throw DomainError("h needs a, rho > 0");
    const LD q = gn.q, bq = beta_ld(q), eq = q * bq - 2;
    LD v = -LD(mu) / q * LD(gn.Cq) * eq * std::pow(LD(rho), eq - 1) * std::pow(LD(a), (1 - bq) * q);
    if (has_p(gn)) {
        const LD p = *gn.p, bp = beta_ld(p), ep = p * bp - 2;
        v -= LD(*gn.Cp) / p * ep * std::pow(LD(rho), ep - 1) * std::pow(LD(a), (1 - bp) * p);
    }
    return double(v);
}

double rho_max(double a, const GNConstants& gn, double mu) {
    check_combined(gn, mu);
    if (!(a > 0)) throw DomainError("rho_max needs a > 0");
    const LD q = gn.q, p = *gn.p;
    const LD d = p * beta_ld(p) - q * beta_ld(q);
    const LD e = ((1 - beta_ld(q)) * q - (1 - beta_ld(p)) * p) / d;
    return double(std::pow(rho_base(gn, mu), 1 / d) * std::pow(LD(a), e));
}

KA0 K_and_a0(const GNConstants& gn, double mu) {
    check_combined(gn, mu);
    const LD q = gn.q, p = *gn.p;
    const LD eq = q * beta_ld(q) - 2, ep = p * beta_ld(p) - 2, d = ep - eq;
    const LD c = rho_base(gn, mu);
    const LD K = LD(mu) / q * LD(gn.Cq) * std::pow(c, eq / d) + LD(*gn.Cp) / p * std::pow(c, ep / d);
    return {double(K), double(std::pow(2 * K, -0.75L))};
}

double gmax(double a, const GNConstants& gn, double mu) {
    const auto [K, a0] = K_and_a0(gn, mu);
    return double(0.5L - LD(K) * std::pow(LD(a), 4.0L / 3));
}

ThresholdReport threshold_report(double a, const GNConstants& gn, double mu) {
    if (!(gn.Cq > 0)) throw DomainError("thresholds need Cq > 0");
    ThresholdReport r;
    r.provenance = gn.provenance;
    r.beta_q = beta(gn.q);
    if (!has_p(gn)) {
        if (std::abs(gn.q - 10.0 / 3) <= 1e-12) r.a_star = critical_mass(gn.Cq);
        return r;
    }
    r.beta_p = beta(*gn.p);
    const auto [K, a0] = K_and_a0(gn, mu);
    r.Kconst = K;
    r.a0 = a0;
    r.rho0 = rho_max(a0, gn, mu);
    if (a > 0) {
        r.rho_a = rho_max(a, gn, mu);
        r.gmax = gmax(a, gn, mu);
        r.trichotomy = std::abs(*r.gmax) <= 1e-12 ? Trichotomy::Zero
                       : *r.gmax > 0              ? Trichotomy::Positive
                                                  : Trichotomy::Negative;
    }
    return r;
}

bool monotone_window_check(double a1, double rho1, double a2, const GNConstants& gn, double mu) {
    if (!(a2 > 0) || !(a2 <= a1)) throw DomainError("monotone window needs 0 < a2 <= a1");
    if (!(rho1 > 0)) throw DomainError("monotone window needs rho1 > 0");
    if (h(a1, rho1, gn, mu) < 0) throw DomainError("monotone window needs h(a1, rho1) >= 0");
    const double lo = a2 / a1 * rho1;
    for (int k = 0; k < 1000; ++k) {
        const double rho = lo + (rho1 - lo) * k / 999.0;
        if (h(a2, rho, gn, mu) < -1e-12) return false;
    }
    return true;
}

}  // namespace kpnw
