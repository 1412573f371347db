#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "kpnw/error.hpp"

namespace kpnw {

using Index = Eigen::Index;

// nx rows by ny columns; column-major storage makes x the fastest index.
template <class S>
using Field = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
using Spectrum = Eigen::Array<std::complex<S>, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
using Axis = Eigen::Array<S, Eigen::Dynamic, 1>;

template <class S>
struct Grid {
    Index nx = 0;
    Index ny = 0;
    S Lx = 0;
    S Ly = 0;
    Axis<S> kx;  // FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1
    Axis<S> ky;

    S dx() const { return Lx / S(nx); }
    S dy() const { return Ly / S(ny); }
    S cell() const { return dx() * dy(); }
    S area() const { return Lx * Ly; }
    // Box is centred on the origin.
    S x(Index i) const { return -Lx / 2 + S(i) * dx(); }
    S y(Index j) const { return -Ly / 2 + S(j) * dy(); }

    bool same_shape(const Grid& o) const { return nx == o.nx && ny == o.ny && Lx == o.Lx && Ly == o.Ly; }
};

namespace detail {

template <class S>
Axis<S> wavenumbers(Index n, S L) {
    Axis<S> k(n);
    const S base = 2 * std::numbers::pi_v<S> / L;
    for (Index j = 0; j < n; ++j) k(j) = base * S(j < n / 2 ? j : j - n);
    return k;
}

}  // namespace detail

template <class S>
Grid<S> make_grid(Index nx, Index ny, S Lx, S Ly) {
    if (nx < 4 || ny < 4) throw GridError("grid needs at least 4 points per direction");
    if (nx % 2 != 0 || ny % 2 != 0) throw GridError("grid sizes must be even");
    if (!(Lx > 0) || !(Ly > 0) || !std::isfinite(double(Lx)) || !std::isfinite(double(Ly)))
        throw GridError("box lengths must be positive and finite");
    Grid<S> g;
    g.nx = nx;
    g.ny = ny;
    g.Lx = Lx;
    g.Ly = Ly;
    g.kx = detail::wavenumbers(nx, Lx);
    g.ky = detail::wavenumbers(ny, Ly);
    return g;
}

// Transform context for one grid. Holds FFT plans and scratch buffers, so an
// instance must not be shared between threads; construct one per worker.
template <class S>
class Spectral {
public:
    using C = std::complex<S>;

    explicit Spectral(Grid<S> g) : g_(std::move(g)), sym_(g_.nx, g_.ny) {
        for (Index j = 0; j < g_.ny; ++j)
            for (Index i = 0; i < g_.nx; ++i) {
                const S kx = g_.kx(i), ky = g_.ky(j);
                sym_(i, j) = (i == 0) ? S(0) : kx * kx + ky * ky / (kx * kx);
            }
        fft_.SetFlag(Eigen::FFT<S>::HalfSpectrum);
        in_.resize(std::max(g_.nx, g_.ny));
        out_.resize(in_.size());
    }

    const Grid<S>& grid() const { return g_; }

    // kx^2 + ky^2/kx^2 on kx != 0, zero on the kx = 0 plane.
    const Field<S>& symbol() const { return sym_; }

    Spectrum<S> forward(const Field<S>& u) const {
        check(u);
        const Index nx = g_.nx, ny = g_.ny, nh = nx / 2 + 1;
        Spectrum<S> U(nx, ny);
        // Real transforms down the columns give the half spectrum in x.
        for (Index j = 0; j < ny; ++j) {
            fft_.fwd(out_.data(), u.col(j).data(), nx);
            for (Index i = 0; i < nh; ++i) U(i, j) = out_[i];
        }
        for (Index i = 0; i < nh; ++i) {
            for (Index j = 0; j < ny; ++j) in_[j] = U(i, j);
            fft_.fwd(out_.data(), in_.data(), ny);
            for (Index j = 0; j < ny; ++j) U(i, j) = out_[j];
        }
        // Remaining rows by conjugate symmetry.
        for (Index i = nh; i < nx; ++i)
            for (Index j = 0; j < ny; ++j) U(i, j) = std::conj(U(nx - i, (ny - j) % ny));
        return U;
    }

    // Real part of the inverse DFT. Only the Hermitian part of U contributes,
    // so the half spectrum in x suffices after symmetrizing.
    Field<S> inverse(const Spectrum<S>& U) const {
        if (U.rows() != g_.nx || U.cols() != g_.ny) throw GridError("spectrum shape does not match grid");
        const Index nx = g_.nx, ny = g_.ny, nh = nx / 2 + 1;
        half_.resize(nh, ny);
        for (Index i = 0; i < nh; ++i) {
            const Index ic = (nx - i) % nx;
            for (Index j = 0; j < ny; ++j) in_[j] = (U(i, j) + std::conj(U(ic, (ny - j) % ny))) / S(2);
            fft_.inv(out_.data(), in_.data(), ny);
            for (Index j = 0; j < ny; ++j) half_(i, j) = out_[j];
        }
        Field<S> f(nx, ny);
        for (Index j = 0; j < ny; ++j) {
            for (Index i = 0; i < nh; ++i) in_[i] = half_(i, j);
            fft_.inv(f.col(j).data(), in_.data(), nx);
        }
        return f;
    }

    // Unnormalized DFT convention: Parseval reads sum|u|^2 = sum|U|^2/(nx*ny).
    S parseval_weight() const { return g_.cell() / S(g_.nx * g_.ny); }

    bool is_nyquist_x(Index i) const { return i == g_.nx / 2; }
    bool is_nyquist_y(Index j) const { return j == g_.ny / 2; }

    void check(const Field<S>& u) const {
        if (u.rows() != g_.nx || u.cols() != g_.ny) throw GridError("field shape does not match grid");
    }

private:
    Grid<S> g_;
    Field<S> sym_;
    mutable Eigen::FFT<S> fft_;
    mutable std::vector<C> in_, out_;
    mutable Spectrum<S> half_;
};

template <class S>
Field<S> project_admissible(const Spectral<S>& sp, const Field<S>& f) {
    Spectrum<S> F = sp.forward(f);
    F.row(0).setZero();
    return sp.inverse(std::move(F));
}

// Largest |F(0, m)| relative to max |F|; zero for an exactly admissible field.
template <class S>
S admissibility_defect(const Spectral<S>& sp, const Field<S>& f) {
    const Spectrum<S> F = sp.forward(f);
    const S all = F.abs().maxCoeff();
    return all > 0 ? F.row(0).abs().maxCoeff() / all : S(0);
}

template <class S>
Field<S> d_x(const Spectral<S>& sp, const Field<S>& f) {
    const auto& g = sp.grid();
    Spectrum<S> F = sp.forward(f);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i)
            F(i, j) *= sp.is_nyquist_x(i) ? std::complex<S>(0) : std::complex<S>(0, g.kx(i));
    return sp.inverse(std::move(F));
}

// D_x^{-1} d_y: multiplier ky/kx, zero on kx = 0 and on the Nyquist lines.
template <class S>
Field<S> dxinv_dy(const Spectral<S>& sp, const Field<S>& f) {
    const auto& g = sp.grid();
    Spectrum<S> F = sp.forward(f);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const bool drop = i == 0 || sp.is_nyquist_x(i) || sp.is_nyquist_y(j);
            F(i, j) *= drop ? S(0) : g.ky(j) / g.kx(i);
        }
    return sp.inverse(std::move(F));
}

// Fourier multiplier by the X-symbol: the linear part of the L2 gradient.
template <class S>
Field<S> apply_symbol(const Spectral<S>& sp, const Field<S>& f) {
    Spectrum<S> F = sp.forward(f);
    F *= sp.symbol().template cast<std::complex<S>>();
    return sp.inverse(std::move(F));
}

template <class S>
S x_seminorm_sq(const Spectral<S>& sp, const Field<S>& f) {
    const Spectrum<S> F = sp.forward(f);
    return (sp.symbol() * F.abs2()).sum() * sp.parseval_weight();
}

template <class S>
S lp_norm_p(const Grid<S>& g, const Field<S>& f, S p) {
    if (p == S(2)) return f.square().sum() * g.cell();
    return f.abs().pow(p).sum() * g.cell();
}

template <class S>
S mass(const Grid<S>& g, const Field<S>& f) {
    return f.square().sum() * g.cell();
}

template <class S>
S spectral_mass(const Spectral<S>& sp, const Field<S>& f) {
    return sp.forward(f).abs2().sum() * sp.parseval_weight();
}

template <class S>
S inner(const Grid<S>& g, const Field<S>& a, const Field<S>& b) {
    return (a * b).sum() * g.cell();
}

// Multiplier 1/(kx^2 + ky^2/kx^2 + shift) on kx != 0, zero on kx = 0.
template <class S>
Field<S> x_metric_precondition(const Spectral<S>& sp, const Field<S>& g, S shift = S(1)) {
    Spectrum<S> F = sp.forward(g);
    const Field<S> m = (sp.symbol() + shift).inverse();
    F *= m.template cast<std::complex<S>>();
    F.row(0).setZero();
    return sp.inverse(std::move(F));
}

// Evaluates the trigonometric interpolant of f at the tensor points xs x ys
// (periodic extension outside the box).
template <class S>
Field<S> evaluate_interpolant(const Spectral<S>& sp, const Field<S>& f, const Axis<S>& xs, const Axis<S>& ys) {
    using C = std::complex<S>;
    using CM = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
    const auto& g = sp.grid();
    const CM F = sp.forward(f).matrix() / C(S(g.nx * g.ny));
    CM Ex(xs.size(), g.nx), Ey(ys.size(), g.ny);
    const S x0 = g.x(0), y0 = g.y(0);
    for (Index k = 0; k < g.nx; ++k)
        for (Index i = 0; i < xs.size(); ++i) Ex(i, k) = std::polar(S(1), g.kx(k) * (xs(i) - x0));
    for (Index m = 0; m < g.ny; ++m)
        for (Index j = 0; j < ys.size(); ++j) Ey(j, m) = std::polar(S(1), g.ky(m) * (ys(j) - y0));
    const CM V = Ex * F * Ey.transpose();
    return V.real().array();
}

template <class S>
Axis<S> x_points(const Grid<S>& g) {
    Axis<S> xs(g.nx);
    for (Index i = 0; i < g.nx; ++i) xs(i) = g.x(i);
    return xs;
}

template <class S>
Axis<S> y_points(const Grid<S>& g) {
    Axis<S> ys(g.ny);
    for (Index j = 0; j < g.ny; ++j) ys(j) = g.y(j);
    return ys;
}

// Spectral energy fraction of f outside the band a target grid on the same
// box can represent.
template <class S>
S truncated_fraction(const Spectral<S>& sp, const Field<S>& f, const Grid<S>& target) {
    const auto& g = sp.grid();
    const Spectrum<S> F = sp.forward(f);
    const S kxmax = std::numbers::pi_v<S> * S(target.nx) / target.Lx;
    const S kymax = std::numbers::pi_v<S> * S(target.ny) / target.Ly;
    S lost = 0, all = 0;
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const S e = std::norm(F(i, j));
            all += e;
            if (std::abs(g.kx(i)) >= kxmax * (1 - S(1e-12)) || std::abs(g.ky(j)) >= kymax * (1 - S(1e-12))) lost += e;
        }
    return all > 0 ? lost / all : S(0);
}

struct ResampleInfo {
    bool truncated = false;
    double lost_fraction = 0;
};

// Trigonometric interpolation onto target. Identical grids return the input
// unchanged; a coarser target loses the modes it cannot represent and sets
// info->truncated.
template <class S>
Field<S> resample(const Spectral<S>& sp, const Field<S>& f, const Grid<S>& target, ResampleInfo* info = nullptr) {
    sp.check(f);
    if (info) *info = {};
    if (sp.grid().same_shape(target)) return f;
    if (target.Lx == sp.grid().Lx && target.Ly == sp.grid().Ly && (target.nx < sp.grid().nx || target.ny < sp.grid().ny)) {
        const S lost = truncated_fraction(sp, f, target);
        if (info && lost > S(1e-14)) *info = {true, double(lost)};
    }
    return evaluate_interpolant(sp, f, x_points(target), y_points(target));
}

// Fraction of |f|^2 in the outer strip of relative width `strip` on each side.
template <class S>
S boundary_mass_fraction(const Grid<S>& g, const Field<S>& f, S strip = S(1) / 16) {
    S edge = 0, all = 0;
    for (Index j = 0; j < g.ny; ++j) {
        const bool yin = std::abs(g.y(j)) < (S(0.5) - strip) * g.Ly;
        for (Index i = 0; i < g.nx; ++i) {
            const S e = f(i, j) * f(i, j);
            all += e;
            if (!yin || std::abs(g.x(i)) >= (S(0.5) - strip) * g.Lx) edge += e;
        }
    }
    return all > 0 ? edge / all : S(0);
}

}  // namespace kpnw
