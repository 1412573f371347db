#pragma once

#include <optional>
#include <string>

namespace kpnw {

enum class Provenance { Estimated, UserSupplied };

const char* to_string(Provenance p);

struct GNConstants {
    double Cq = 0;
    std::optional<double> Cp;
    Provenance provenance = Provenance::UserSupplied;
    double q = 0;
    std::optional<double> p;
};

// beta_q = 3/2 - 3/q, q in [2,6].
double beta(double q);

// a* = (3C/5)^{-3/4}, the critical mass at q = 10/3.
double critical_mass(double C_tenthirds);

// h(a,rho) = 1/2 - (mu/q)Cq rho^{q bq - 2} a^{(1-bq)q} - (1/p)Cp rho^{p bp - 2} a^{(1-bp)p}.
// Without Cp the last term is dropped (pure power, mu = 1).
double h(double a, double rho, const GNConstants& gn, double mu);

inline double g_a(double a, double rho, const GNConstants& gn, double mu) { return h(a, rho, gn, mu); }

// dh/drho, closed form.
double h_rho(double a, double rho, const GNConstants& gn, double mu);

// The unique maximizer of g_a; proportional to a^{1/3}.
double rho_max(double a, const GNConstants& gn, double mu);

struct KA0 {
    double K = 0;
    double a0 = 0;
};

// K as displayed for h, and a0 with max_rho g_{a0} = 0, i.e. a0 = (2K)^{-3/4}.
KA0 K_and_a0(const GNConstants& gn, double mu);

// max_rho g_a = 1/2 - K a^{4/3}.
double gmax(double a, const GNConstants& gn, double mu);

enum class Trichotomy { Positive, Zero, Negative };

const char* to_string(Trichotomy t);

struct ThresholdReport {
    std::optional<double> a_star;  // pure q = 10/3 only
    double beta_q = 0;
    std::optional<double> beta_p;
    std::optional<double> rho_a;
    std::optional<double> Kconst;
    std::optional<double> a0;
    std::optional<double> rho0;
    std::optional<double> gmax;
    std::optional<Trichotomy> trichotomy;
    Provenance provenance = Provenance::UserSupplied;
};

// Everything the constants determine at mass a. Combined fields need Cp.
ThresholdReport threshold_report(double a, const GNConstants& gn, double mu);

// True iff h(a2, .) >= -1e-12 on 1000 points of [(a2/a1) rho1, rho1].
// Requires h(a1, rho1) >= 0 and 0 < a2 <= a1.
bool monotone_window_check(double a1, double rho1, double a2, const GNConstants& gn, double mu);

}  // namespace kpnw
