#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "kpnw/functionals.hpp"

namespace kpnw {

template <class S>
struct FiberMap {
    FiberIntegrals<S> fi;
    NonlinearitySpec<S> nl;
};

template <class S>
FiberMap<S> fiber_map(const Spectral<S>& sp, const Field<S>& u, const NonlinearitySpec<S>& nl) {
    return {fiber_integrals(sp, u, nl), nl};
}

// psi_u(t) = J(H(u,t)).
template <class S>
S psi(const FiberMap<S>& fm, S t) {
    const auto& [m, A, Bq, Bp] = fm.fi;
    const auto& nl = fm.nl;
    S v = std::exp(S(4) * t / 3) / 2 * A - nl.mu_eff() / nl.q * std::exp((nl.q - 2) * t) * Bq;
    if (nl.combined) v -= std::exp((nl.p - 2) * t) / nl.p * Bp;
    return v;
}

// psi_u'(t) = P(H(u,t)).
template <class S>
S psi_prime(const FiberMap<S>& fm, S t) {
    const auto& [m, A, Bq, Bp] = fm.fi;
    const auto& nl = fm.nl;
    S v = S(2) / 3 * std::exp(S(4) * t / 3) * A - nl.mu_eff() * (nl.q - 2) / nl.q * std::exp((nl.q - 2) * t) * Bq;
    if (nl.combined) v -= (nl.p - 2) / nl.p * std::exp((nl.p - 2) * t) * Bp;
    return v;
}

template <class S>
S psi_second(const FiberMap<S>& fm, S t) {
    const auto& [m, A, Bq, Bp] = fm.fi;
    const auto& nl = fm.nl;
    S v = S(8) / 9 * std::exp(S(4) * t / 3) * A -
          nl.mu_eff() * (nl.q - 2) * (nl.q - 2) / nl.q * std::exp((nl.q - 2) * t) * Bq;
    if (nl.combined) v -= (nl.p - 2) * (nl.p - 2) / nl.p * std::exp((nl.p - 2) * t) * Bp;
    return v;
}

namespace detail {

// Bisection on a sign change of psi' in [lo, hi].
template <class S>
S bisect_psi_prime(const FiberMap<S>& fm, S lo, S hi) {
    S flo = psi_prime(fm, lo);
    for (int k = 0; k < 400; ++k) {
        const S mid = (lo + hi) / 2;
        if (mid == lo || mid == hi) break;
        const S fm_ = psi_prime(fm, mid);
        if (fm_ == 0) return mid;
        if ((fm_ > 0) == (flo > 0)) {
            lo = mid;
            flo = fm_;
        } else {
            hi = mid;
        }
        if (std::abs(fm_) <= S(1e-12) * fm.fi.A * std::max(S(1), std::exp(S(4) * mid / 3)) && hi - lo < S(1e-10))
            return mid;
    }
    return (lo + hi) / 2;
}

}  // namespace detail

// Unique stationary point of a pure-power fiber, q != 10/3:
// t = ln(2qA / (3(q-2)Bq)) / (q - 10/3). Minimum for q < 10/3, maximum above.
template <class S>
S fiber_stationary_pure(const FiberMap<S>& fm) {
    const auto& nl = fm.nl;
    if (nl.combined) throw FiberError("closed-form stationary point needs a pure power");
    if (!(fm.fi.A > 0) || !(fm.fi.Bq > 0)) throw FiberError("degenerate fiber: A and Bq must be positive");
    const S d = nl.q - critical_exponent<S>();
    if (std::abs(d) < S(1e-8)) throw FiberError("exponent too close to 10/3: fiber has no isolated stationary point");
    const S t = std::log(S(2) * nl.q * fm.fi.A / (S(3) * (nl.q - 2) * fm.fi.Bq)) / d;
    if (!std::isfinite(t) || std::abs(t) > S(700)) throw FiberError("fiber stationary point out of range");
    return t;
}

template <class S>
S critical_t_pure_supercritical(const FiberMap<S>& fm) {
    if (fm.nl.combined || !(fm.nl.q > critical_exponent<S>())) throw FiberError("needs a supercritical pure power");
    const S t = fiber_stationary_pure(fm);
    // psi' > 0 on the left and < 0 on the right; bracket and bisect as a check.
    S lo = t - 1, hi = t + 1;
    while (psi_prime(fm, lo) <= 0) lo -= 2 * (t - lo);
    while (psi_prime(fm, hi) >= 0) hi += 2 * (hi - t);
    const S tb = detail::bisect_psi_prime(fm, lo, hi);
    if (std::abs(tb - t) > S(1e-7) * (1 + std::abs(t))) throw FiberError("closed form and bisection disagree");
    return t;
}

enum class CombinedStatus { TwoRoots, NoSecondCriticalPoint, DegenerateDoubleRoot };

inline const char* to_string(CombinedStatus s) {
    switch (s) {
        case CombinedStatus::TwoRoots: return "two-roots";
        case CombinedStatus::NoSecondCriticalPoint: return "no-second-critical-point";
        case CombinedStatus::DegenerateDoubleRoot: return "degenerate-double-root";
    }
    return "?";
}

template <class S>
struct CombinedCritical {
    CombinedStatus status = CombinedStatus::NoSecondCriticalPoint;
    S t1 = 0;  // local minimum
    S t2 = 0;  // local maximum
};

// Critical points of a combined fiber. psi'(t) = e^{4t/3} g(t) with g strictly
// concave, so there are 0, 1 (double) or 2 roots. Scan [-40, 40] in steps of
// 0.25, bracket sign changes and bisect; the vertex of g catches roots the
// scan misses.
template <class S>
CombinedCritical<S> critical_points_combined(const FiberMap<S>& fm) {
    const auto& nl = fm.nl;
    const auto& fi = fm.fi;
    CombinedCritical<S> r;
    if (!nl.combined) throw FiberError("needs a combined nonlinearity");
    if (!(fi.A > 0) || !(fi.Bq > 0)) throw FiberError("degenerate fiber: A and Bq must be positive");
    if (!(fi.Bp > 0)) return r;  // reduces to a subcritical pure power

    auto gfun = [&](S t) { return psi_prime(fm, t) * std::exp(-S(4) * t / 3); };
    const S c1 = nl.mu * (nl.q - 2) / nl.q * fi.Bq, c2 = (nl.p - 2) / nl.p * fi.Bp;
    const S al = critical_exponent<S>() - nl.q, ga = nl.p - critical_exponent<S>();
    const S tv = std::log(c1 * al / (c2 * ga)) / (al + ga);
    const S gv = gfun(tv);
    const S tol = S(1e-12) * S(2) / 3 * fi.A;
    if (std::abs(gv) <= tol) {
        r.status = CombinedStatus::DegenerateDoubleRoot;
        r.t1 = r.t2 = tv;
        return r;
    }
    if (gv < 0) return r;

    std::optional<std::pair<S, S>> b1, b2;
    S prev = S(-40);
    S gprev = gfun(prev);
    for (int k = 1; k <= 320; ++k) {
        const S t = S(-40) + S(k) / 4;
        const S gt = gfun(t);
        if (gprev < 0 && gt >= 0 && !b1) b1 = {prev, t};
        if (gprev >= 0 && gt < 0 && !b2) b2 = {prev, t};
        prev = t;
        gprev = gt;
    }
    if (!b1) {
        S w = 1;
        while (gfun(tv - w) >= 0) w *= 2;
        b1 = {tv - w, tv};
    }
    if (!b2) {
        S w = 1;
        while (gfun(tv + w) >= 0) w *= 2;
        b2 = {tv, tv + w};
    }
    r.status = CombinedStatus::TwoRoots;
    r.t1 = detail::bisect_psi_prime(fm, b1->first, b1->second);
    r.t2 = detail::bisect_psi_prime(fm, b2->first, b2->second);
    return r;
}

// H(u,t) = e^t u(e^{2t/3}x, e^{4t/3}y) on the same grid, by trigonometric
// evaluation at the stretched points. u is read as a whole-plane field that
// vanishes outside the box, so stretched points beyond it give zero rather
// than a periodic image. Sets *edge_fraction (if given) to the boundary-strip
// mass fraction of the result, the resolution/support guard.
template <class S>
Field<S> apply_scaling(const Spectral<S>& sp, const Field<S>& u, S t, S* edge_fraction = nullptr) {
    const auto& g = sp.grid();
    if (t == 0) return u;
    const Axis<S> xs = x_points(g) * std::exp(S(2) * t / 3);
    const Axis<S> ys = y_points(g) * std::exp(S(4) * t / 3);
    Field<S> w = evaluate_interpolant(sp, u, xs, ys);
    for (Index i = 0; i < g.nx; ++i)
        if (std::abs(xs(i)) > g.Lx / 2) w.row(i).setZero();
    for (Index j = 0; j < g.ny; ++j)
        if (std::abs(ys(j)) > g.Ly / 2) w.col(j).setZero();
    Field<S> v = project_admissible(sp, Field<S>(std::exp(t) * w));
    if (edge_fraction) *edge_fraction = boundary_mass_fraction(g, v);
    return v;
}

// H(u,t) realized exactly: same samples times e^t on the box
// (Lx e^{-2t/3}, Ly e^{-4t/3}). Every discrete fiber integral transforms
// exactly like its continuum counterpart.
template <class S>
std::pair<Grid<S>, Field<S>> rescale_box(const Grid<S>& g, const Field<S>& u, S t) {
    Grid<S> h = make_grid(g.nx, g.ny, g.Lx * std::exp(-S(2) * t / 3), g.Ly * std::exp(-S(4) * t / 3));
    return {std::move(h), Field<S>(u * std::exp(t))};
}

}  // namespace kpnw
