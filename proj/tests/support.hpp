#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "kpnw/fiber.hpp"
#include "kpnw/thresholds.hpp"

namespace kpnw::test {

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

template <class S = double>
Field<S> sample(const Grid<S>& g, auto&& f) {
    Field<S> u(g.nx, g.ny);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) u(i, j) = f(g.x(i), g.y(j));
    return u;
}

// u = d_x e^{-x^2-y^2}.
template <class S = double>
Field<S> gaussian_dx(const Grid<S>& g) {
    return sample<S>(g, [](S x, S y) { return -2 * x * std::exp(-x * x - y * y); });
}

// Closed forms for u = d_x e^{-x^2-y^2} on a box of x-period Lx, tails dropped.
// The zero-mean antiderivative subtracts the row mean of phi_y, which costs
// pi sqrt(pi/2)/Lx in ||u||_0^2.
struct GaussianDxIntegrals {
    double mass2, A, B3, B4;
};

inline GaussianDxIntegrals gaussian_dx_integrals(double Lx) {
    const double pi = std::numbers::pi;
    return {pi / 2, 2 * pi - pi * std::sqrt(pi / 2) / Lx, 8.0 / 9.0 * std::sqrt(pi / 3), 3 * pi / 16};
}

// Random admissible field with a Gaussian-damped spectrum, independent of the
// library's own generator.
inline Field<double> random_admissible(const Spectral<double>& sp, std::uint64_t seed, double width = 1.0) {
    const auto& g = sp.grid();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    Field<double> w(g.nx, g.ny);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) w(i, j) = n(rng);
    Spectrum<double> W = sp.forward(w);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const double k2 = g.kx(i) * g.kx(i) + g.ky(j) * g.ky(j);
            W(i, j) *= std::exp(-k2 * width * width);
        }
    W.row(0).setZero();
    Field<double> u = sp.inverse(W);
    // Localize so the field looks like a bump, then restore admissibility.
    u *= sample<double>(g, [&](double x, double y) { return std::exp(-(x * x + y * y) / (g.Lx * g.Ly / 64)); });
    u = project_admissible(sp, u);
    return u / std::sqrt(mass(g, u));
}

}  // namespace kpnw::test

namespace kpnw::test {

// u = d_xx e^{-(x^2+y^2)/s^2}, scaled to unit width in X = x/s. Even in x,
// so its antiderivative d_x phi has zero row means and the periodic D_x^{-1}
// introduces no artifact.
template <class S = double>
Field<S> gaussian_dxx(const Grid<S>& g, S s) {
    return sample<S>(g, [s](S x, S y) {
        const S X = x / s;
        return (4 * X * X - 2) * std::exp(-(x * x + y * y) / (s * s));
    });
}

// |u|_p^p of the trigonometric interpolant, by quadrature on a grid `factor`
// times denser. Resolves the kinks of |u|^p on the nodal lines.
inline double dense_lp(const Spectral<double>& sp, const Field<double>& u, double p, Index factor = 8) {
    const auto& g = sp.grid();
    const auto d = make_grid<double>(g.nx * factor, g.ny * factor, g.Lx, g.Ly);
    return lp_norm_p(d, resample(sp, u, d), p);
}

// Random admissible direction with unit mass.
inline Field<double> random_direction(const Spectral<double>& sp, std::uint64_t seed) {
    return random_admissible(sp, seed ^ 0x9e3779b97f4a7c15ULL, 0.5);
}

// Central difference of J along v against <grad J, v>.
inline double fd_gradient_error(const Spectral<double>& sp, const Field<double>& u, const Field<double>& v,
                                const NonlinearitySpec<double>& nl, double eps = 1e-5) {
    const double fd = (energy(sp, Field<double>(u + eps * v), nl) - energy(sp, Field<double>(u - eps * v), nl)) / (2 * eps);
    const double an = inner(sp.grid(), l2_gradient(sp, u, nl), v);
    return std::abs(fd - an) / std::max(std::abs(an), 1e-300);
}

// Max of g_a over a log grid around centre, refined by golden section.
inline double scan_max(double a, const GNConstants& gn, double mu, double centre) {
    double best = -INFINITY, arg = centre;
    for (int k = 0; k <= 4000; ++k) {
        const double rho = centre * std::pow(10.0, -4 + 8.0 * k / 4000);
        const double v = h(a, rho, gn, mu);
        if (v > best) best = v, arg = rho;
    }
    double lo = arg / 1.01, hi = arg * 1.01;
    const double r = (std::sqrt(5.0) - 1) / 2;
    for (int k = 0; k < 200; ++k) {
        const double m1 = hi - r * (hi - lo), m2 = lo + r * (hi - lo);
        if (h(a, m1, gn, mu) < h(a, m2, gn, mu))
            lo = m1;
        else
            hi = m2;
    }
    return std::max(best, h(a, (lo + hi) / 2, gn, mu));
}

// Sign changes of psi' on n + 1 equispaced points of [lo, hi].
inline int sign_changes(const FiberMap<double>& fm, double lo, double hi, int n) {
    int changes = 0;
    double prev = psi_prime(fm, lo);
    for (int k = 1; k <= n; ++k) {
        const double v = psi_prime(fm, lo + (hi - lo) * k / n);
        if ((prev > 0 && v <= 0) || (prev < 0 && v >= 0)) ++changes;
        if (v != 0) prev = v;
    }
    return changes;
}

}  // namespace kpnw::test
