#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "kpnw/spectral.hpp"

namespace kpnw {

enum class Regime { Subcritical, Critical, Supercritical, Combined };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::Subcritical: return "subcritical";
        case Regime::Critical: return "critical";
        case Regime::Supercritical: return "supercritical";
        case Regime::Combined: return "combined";
    }
    return "?";
}

// Exponent of the L2-critical case, where q*beta(q) = 2.
template <class S>
constexpr S critical_exponent() {
    return S(10) / S(3);
}

template <class S>
bool is_critical_exponent(S q) {
    return std::abs(q - critical_exponent<S>()) <= S(1e-12);
}

// f(u) = |u|^{q-2}u, or mu|u|^{q-2}u + |u|^{p-2}u when combined.
template <class S>
struct NonlinearitySpec {
    bool combined = false;
    S q = 3;
    S p = 0;
    S mu = 1;
    bool dealias = false;  // 2/3-rule truncation of f(u) in the gradient

    static NonlinearitySpec pure(S q) {
        NonlinearitySpec n;
        n.q = q;
        n.validate();
        return n;
    }

    static NonlinearitySpec mixed(S mu, S q, S p) {
        NonlinearitySpec n;
        n.combined = true;
        n.mu = mu;
        n.q = q;
        n.p = p;
        n.validate();
        return n;
    }

    void validate() const {
        const S c = critical_exponent<S>();
        if (!combined) {
            if (!(q > 2 && q < 6)) throw DomainError("pure power needs q in (2,6)");
            return;
        }
        if (!(mu > 0)) throw DomainError("combined nonlinearity needs mu > 0");
        if (!(q > 2 && q < c && p > c && p < 6)) throw DomainError("combined nonlinearity needs 2 < q < 10/3 < p < 6");
    }

    S mu_eff() const { return combined ? mu : S(1); }

    Regime regime() const {
        if (combined) return Regime::Combined;
        if (is_critical_exponent(q)) return Regime::Critical;
        // q*beta = 3q/2 - 3 against 2
        return S(3) * q / 2 - 3 < 2 ? Regime::Subcritical : Regime::Supercritical;
    }

    Field<S> f(const Field<S>& u) const {
        Field<S> r = mu_eff() * u.abs().pow(q - 2) * u;
        if (combined) r += u.abs().pow(p - 2) * u;
        return r;
    }

    // f'(u), the multiplier of the linearized nonlinearity.
    Field<S> fprime(const Field<S>& u) const {
        Field<S> r = mu_eff() * (q - 1) * u.abs().pow(q - 2);
        if (combined) r += (p - 1) * u.abs().pow(p - 2);
        return r;
    }
};

template <class S>
struct FiberIntegrals {
    S mass2 = 0;  // |u|_2^2
    S A = 0;      // ||u||_0^2
    S Bq = 0;     // |u|_q^q
    S Bp = 0;     // |u|_p^p, zero for a pure power
};

template <class S>
FiberIntegrals<S> fiber_integrals(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    const auto& g = sp.grid();
    FiberIntegrals<S> fi;
    fi.mass2 = mass(g, u);
    fi.A = x_seminorm_sq(sp, u);
    fi.Bq = lp_norm_p(g, u, nl.q);
    fi.Bp = nl.combined ? lp_norm_p(g, u, nl.p) : S(0);
    return fi;
}

template <class S>
S energy(const FiberIntegrals<S>& fi, const NonlinearitySpec<S>& nl) {
    S e = fi.A / 2 - nl.mu_eff() / nl.q * fi.Bq;
    if (nl.combined) e -= fi.Bp / nl.p;
    return e;
}

template <class S>
S energy(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    return energy(fiber_integrals(sp, u, nl), nl);
}

// psi'_u(0): (2/3)A - mu(q-2)/q Bq - (p-2)/p Bp.
template <class S>
S pohozaev(const FiberIntegrals<S>& fi, const NonlinearitySpec<S>& nl) {
    S P = S(2) / 3 * fi.A - nl.mu_eff() * (nl.q - 2) / nl.q * fi.Bq;
    if (nl.combined) P -= (nl.p - 2) / nl.p * fi.Bp;
    return P;
}

template <class S>
S pohozaev(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    return pohozaev(fiber_integrals(sp, u, nl), nl);
}

// |P| / max(A, Bq, Bp).
template <class S>
S pohozaev_residual(const FiberIntegrals<S>& fi, const NonlinearitySpec<S>& nl) {
    const S scale = std::max({fi.A, fi.Bq, fi.Bp});
    return scale > 0 ? std::abs(pohozaev(fi, nl)) / scale : S(0);
}

// lambda = (||u||_0^2 - int f(u)u) / |u|_2^2.
template <class S>
S lagrange_multiplier(const FiberIntegrals<S>& fi, const NonlinearitySpec<S>& nl) {
    if (!(fi.mass2 > 0)) throw DomainError("lagrange multiplier of the zero field");
    return (fi.A - nl.mu_eff() * fi.Bq - fi.Bp) / fi.mass2;
}

template <class S>
S lagrange_multiplier(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    return lagrange_multiplier(fiber_integrals(sp, u, nl), nl);
}

template <class S>
S gn_beta(S q) {
    return S(3) / 2 - S(3) / q;
}

// W(u) = |u|_q^q / (|u|_2^{(1-beta)q} ||u||_0^{q beta}), from fiber integrals.
template <class S>
S gn_quotient(S mass2, S A, S Bq, S q) {
    if (!(mass2 > 0)) throw DomainError("Gagliardo-Nirenberg quotient of the zero field");
    if (!(q >= 2 && q <= 6)) throw DomainError("Gagliardo-Nirenberg quotient needs q in [2,6]");
    const S b = gn_beta(q);
    if (q == 2) return S(1);
    return Bq / (std::pow(mass2, (1 - b) * q / 2) * std::pow(A, q * b / 2));
}

template <class S>
S gn_quotient(const Spectral<S>& sp, const Field<S>& u, S q) {
    const auto& g = sp.grid();
    return gn_quotient(mass(g, u), x_seminorm_sq(sp, u), lp_norm_p(g, u, q), q);
}

template <class S>
Field<S> dealias_two_thirds(const Spectral<S>& sp, const Field<S>& f) {
    const auto& g = sp.grid();
    Spectrum<S> F = sp.forward(f);
    const S kx_cut = S(2) / 3 * g.kx.abs().maxCoeff();
    const S ky_cut = S(2) / 3 * g.ky.abs().maxCoeff();
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i)
            if (std::abs(g.kx(i)) > kx_cut || std::abs(g.ky(j)) > ky_cut) F(i, j) = 0;
    return sp.inverse(std::move(F));
}

// L2 gradient of J: symbol * u - f(u), projected admissible.
template <class S>
Field<S> l2_gradient(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    Field<S> nlin = nl.f(u);
    if (nl.dealias) nlin = dealias_two_thirds(sp, nlin);
    Spectrum<S> G = sp.forward(u) * sp.symbol().template cast<std::complex<S>>() - sp.forward(nlin);
    G.row(0).setZero();
    return sp.inverse(std::move(G));
}

// Weak-form identity ||u||_0^2 - lambda|u|_2^2 - int f(u)u, relative to max(A, int f(u)u).
template <class S>
S weak_form_residual(const FiberIntegrals<S>& fi, const NonlinearitySpec<S>& nl, S lambda) {
    const S fu = nl.mu_eff() * fi.Bq + fi.Bp;
    const S scale = std::max(fi.A, fu);
    return scale > 0 ? std::abs(fi.A - lambda * fi.mass2 - fu) / scale : S(0);
}

// ||grad J - lambda u||_2 / ||grad J||_2 with lambda from the formula: the
// pointwise (strong-form) residual of the Euler-Lagrange equation.
template <class S>
S equation_residual(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    const auto& g = sp.grid();
    const Field<S> gr = l2_gradient(sp, u, nl);
    const S lam = lagrange_multiplier(sp, u, nl);
    const S n = std::sqrt(mass(g, gr));
    return n > 0 ? std::sqrt(mass(g, Field<S>(gr - lam * u))) / n : S(0);
}

}  // namespace kpnw
