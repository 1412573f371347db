#include "kpnw/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace kpnw {

namespace {

using Sp = Spectral<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

using Spec = Spectrum<double>;

// Everything below works on spectra of admissible fields (row kx = 0 zero):
// the preconditioner is diagonal there and inner products follow from Parseval.
double pinner(const Sp& sp, const Spec& F, const Spec& G) {
    return (F.real() * G.real() + F.imag() * G.imag()).sum() * sp.parseval_weight();
}

Spec admissible_spectrum(const Sp& sp, const RField& f) {
    Spec F = sp.forward(f);
    F.row(0).setZero();
    return F;
}

double seminorm_sq(const Sp& sp, const Spec& U) { return (sp.symbol() * U.abs2()).sum() * sp.parseval_weight(); }

FiberIntegrals<double> integrals(const Sp& sp, const RField& u, const Spec& U, const RSpec& nl) {
    const auto& g = sp.grid();
    FiberIntegrals<double> fi;
    fi.mass2 = mass(g, u);
    fi.A = seminorm_sq(sp, U);
    fi.Bq = lp_norm_p(g, u, nl.q);
    fi.Bp = nl.combined ? lp_norm_p(g, u, nl.p) : 0.0;
    return fi;
}

// Spectrum of the nonlinear term, 2/3-truncated on request.
Spec nonlinear_spectrum(const Sp& sp, const RField& f, bool dealias) {
    Spec F = admissible_spectrum(sp, f);
    if (dealias) {
        const auto& g = sp.grid();
        const double kx_cut = 2.0 / 3 * g.kx.abs().maxCoeff(), ky_cut = 2.0 / 3 * g.ky.abs().maxCoeff();
        for (Index j = 0; j < g.ny; ++j)
            for (Index i = 0; i < g.nx; ++i)
                if (std::abs(g.kx(i)) > kx_cut || std::abs(g.ky(j)) > ky_cut) F(i, j) = 0;
    }
    return F;
}

// Gradient split into the part linear in u and the nonlinear part, G = lin - nonlin.
// The preconditioner is 1/(c * symbol + shift).
struct Grad {
    Spec lin, nonlin;
    double c = 1;
    double shift_hint = 0;
};

struct Objective {
    virtual ~Objective() = default;
    virtual double value(const RField& u, const Spec& U) = 0;
    // Size of the terms that cancel in value(): the round-off scale.
    virtual double magnitude(const RField& u, const Spec& U) = 0;
    virtual Grad gradient(const RField& u, const Spec& U) = 0;
    virtual bool has_hessian() const { return false; }
    virtual void prepare_hessian(const RField&, const Spec&) {}
    virtual Spec hessian(const Spec& V) { return V; }
};

// J or J_mu on a fixed box.
struct EnergyObjective : Objective {
    const Sp& sp;
    const RSpec& nl;
    RField fp;

    EnergyObjective(const Sp& s, const RSpec& n) : sp(s), nl(n) {}

    double value(const RField& u, const Spec& U) override { return energy(integrals(sp, u, U, nl), nl); }

    double magnitude(const RField& u, const Spec& U) override {
        const auto fi = integrals(sp, u, U, nl);
        return fi.A / 2 + nl.mu_eff() * fi.Bq / nl.q + (nl.combined ? fi.Bp / nl.p : 0.0);
    }

    Grad gradient(const RField& u, const Spec& U) override {
        Grad r;
        r.lin = U * sp.symbol();
        r.nonlin = nonlinear_spectrum(sp, nl.f(u), nl.dealias);
        r.shift_hint = 1e-3 * seminorm_sq(sp, U) / mass(sp.grid(), u);
        return r;
    }

    bool has_hessian() const override { return true; }
    void prepare_hessian(const RField& u, const Spec&) override { fp = nl.fprime(u); }

    Spec hessian(const Spec& V) override {
        return V * sp.symbol() - admissible_spectrum(sp, RField(fp * sp.inverse(V)));
    }
};

// Reduced functional R(u) = psi_u(t*(u)) for a supercritical pure power. By
// stationarity in t its gradient is the u-gradient of psi at fixed t*, and
// its Hessian picks up the rank-one term w w^T / |psi''(t*)|.
struct ReducedObjective : Objective {
    const Sp& sp;
    const RSpec& nl;
    double t = 0, et = 1, eq = 1, ptt = -1;
    RField fp;
    Spec W;

    ReducedObjective(const Sp& s, const RSpec& n) : sp(s), nl(n) {}

    bool stationary(const RField& u, const Spec& U, FiberMap<double>& fm) {
        fm = {integrals(sp, u, U, nl), nl};
        if (!(fm.fi.Bq > 0) || !(fm.fi.A > 0)) return false;
        try {
            t = fiber_stationary_pure(fm);
        } catch (const FiberError&) {
            return false;
        }
        et = std::exp(4.0 * t / 3);
        eq = std::exp((nl.q - 2) * t);
        return true;
    }

    double value(const RField& u, const Spec& U) override {
        FiberMap<double> fm;
        if (!stationary(u, U, fm)) return kInf;
        return psi(fm, t);
    }

    double magnitude(const RField& u, const Spec& U) override {
        FiberMap<double> fm;
        if (!stationary(u, U, fm)) return kInf;
        return et * fm.fi.A / 2 + eq * fm.fi.Bq / nl.q;
    }

    Grad gradient(const RField& u, const Spec& U) override {
        FiberMap<double> fm;
        if (!stationary(u, U, fm)) throw FiberError("degenerate fiber in reduced gradient");
        Grad r;
        r.lin = et * (U * sp.symbol());
        r.nonlin = eq * admissible_spectrum(sp, nl.f(u));
        r.c = et;
        r.shift_hint = 1e-3 * et * fm.fi.A / fm.fi.mass2;
        return r;
    }

    bool has_hessian() const override { return true; }

    void prepare_hessian(const RField& u, const Spec& U) override {
        FiberMap<double> fm;
        if (!stationary(u, U, fm)) throw FiberError("degenerate fiber in reduced Hessian");
        fp = nl.fprime(u);
        W = 4.0 / 3 * et * (U * sp.symbol()) - (nl.q - 2) * eq * admissible_spectrum(sp, nl.f(u));
        ptt = psi_second(fm, t);
    }

    Spec hessian(const Spec& V) override {
        Spec r = et * (V * sp.symbol()) - eq * admissible_spectrum(sp, RField(fp * sp.inverse(V)));
        return r + (pinner(sp, W, V) / std::abs(ptt)) * W;
    }
};

// -log W(u); the quotient is invariant under u -> c u.
struct GNObjective : Objective {
    const Sp& sp;
    double q, b;

    GNObjective(const Sp& s, double q_) : sp(s), q(q_), b(gn_beta(q_)) {}

    double value(const RField& u, const Spec& U) override {
        const auto& g = sp.grid();
        const double W = gn_quotient(mass(g, u), seminorm_sq(sp, U), lp_norm_p(g, u, q), q);
        return W > 0 && std::isfinite(W) ? -std::log(W) : kInf;
    }

    double magnitude(const RField& u, const Spec& U) override { return std::abs(value(u, U)) + 1; }

    Grad gradient(const RField& u, const Spec& U) override {
        const auto& g = sp.grid();
        const double M = mass(g, u), A = seminorm_sq(sp, U), B = lp_norm_p(g, u, q);
        Grad r;
        r.lin = q * b / A * (U * sp.symbol()) + (1 - b) * q / M * U;
        r.nonlin = q / B * admissible_spectrum(sp, RField(u.abs().pow(q - 2) * u));
        r.c = q * b / A;
        r.shift_hint = q * b / M;
        return r;
    }
};

struct EngineConfig {
    int max_iters = 2000;
    double grad_tol = 1e-8;
    double step0 = 1;
    bool newton = true;
    int descent_iters = 300;
    double newton_switch = 1e-2;
    bool keep_trace = true;
    bool cg = true;  // Polak-Ribiere+ momentum on the descent steps
    // Stop once J falls by less than value_tol * max(1, |J|) over 50 steps; 0 disables.
    double value_tol = 0;
};

EngineConfig engine_config(const SolveOptions& o) {
    EngineConfig c;
    c.max_iters = o.max_iters;
    c.grad_tol = o.grad_tol;
    c.step0 = o.step0;
    c.newton = o.newton;
    c.descent_iters = o.descent_iters;
    c.newton_switch = o.newton_switch;
    c.keep_trace = o.keep_trace;
    return c;
}

// Hooks see the iterate and its spectrum.
struct EngineHooks {
    std::function<bool(const RField&, const Spec&)> regauge;  // stop and hand back for a box change
    std::function<bool(const RField&, const Spec&)> inside;   // false aborts with BallExit
    std::function<double(const RField&, const Spec&)> rep_pohozaev;
};

enum class Stop { Converged, MaxIters, Stall, Regauge, BallExit, Stagnated };

struct EngineOut {
    RField u;
    Stop stop = Stop::MaxIters;
    double rel = kInf;
};

// Minimization on the sphere |u|_2 = a over admissible fields on a fixed box:
// preconditioned projected descent with Armijo backtracking and exact mass
// retraction, switching to truncated Newton-CG on the tangent space near the
// minimizer. `iter` counts accepted steps across calls.
EngineOut run_sphere(const Sp& sp, Objective& obj, RField u, double a, const EngineConfig& cfg, int& iter,
                     std::vector<TracePoint>* trace, const EngineHooks& hooks) {
    const auto& g = sp.grid();
    const double M = a * a;
    Spec U = admissible_spectrum(sp, u);
    u = sp.inverse(U);
    {
        const double s = a / std::sqrt(mass(g, u));
        u *= s;
        U *= s;
    }
    double tau = cfg.step0;
    int local = 0;
    EngineOut out;
    Spec Dprev, Gprev, PGprev;
    bool have_prev = false;
    std::vector<double> history;

    for (;;) {
        if (hooks.regauge && hooks.regauge(u, U)) {
            out.stop = Stop::Regauge;
            break;
        }
        const Grad gr = obj.gradient(u, U);
        const Spec G = gr.lin - gr.nonlin;
        const double J = obj.value(u, U);
        const double lam = pinner(sp, G, U) / M;
        const Spec Gt = G - lam * U;
        const double shift = std::max(std::abs(lam), gr.shift_hint);
        RField pd = (gr.c * sp.symbol() + shift).inverse();
        pd.row(0).setZero();
        const Spec PU = U * pd;
        const double uPu = pinner(sp, PU, U);
        auto Mt = [&](const Spec& R) {
            const Spec Z = R * pd;
            return Spec(Z - (pinner(sp, Z, U) / uPu) * PU);
        };
        auto pnorm = [&](const Spec& R) { return std::sqrt(std::max(0.0, (R.abs2() * pd).sum() * sp.parseval_weight())); };
        const Spec PGt = Mt(Gt);
        const double scale = pnorm(gr.lin) + pnorm(gr.nonlin);
        out.rel = scale > 0 ? std::sqrt(std::max(0.0, pinner(sp, Gt, PGt))) / scale : 0.0;
        out.u = u;

        const bool use_newton =
            cfg.newton && obj.has_hessian() && (out.rel < cfg.newton_switch || local >= cfg.descent_iters);
        if (trace && cfg.keep_trace) {
            TracePoint tp;
            tp.iter = iter;
            tp.energy = J;
            tp.grad = out.rel;
            tp.step = tau;
            tp.seminorm = std::sqrt(seminorm_sq(sp, U));
            tp.mass = mass(g, u);
            tp.rep_pohozaev = hooks.rep_pohozaev ? hooks.rep_pohozaev(u, U) : 0.0;
            tp.newton = use_newton;
            trace->push_back(tp);
        }
        if (out.rel <= cfg.grad_tol) {
            out.stop = Stop::Converged;
            break;
        }
        if (iter >= cfg.max_iters) {
            out.stop = Stop::MaxIters;
            break;
        }
        if (cfg.value_tol > 0) {
            history.push_back(J);
            const std::size_t n = history.size();
            if (n > 50 && history[n - 51] - J <= cfg.value_tol * std::max(1.0, std::abs(J))) {
                out.stop = Stop::Stagnated;
                break;
            }
        }

        const double allowance = out.rel < 1e-6 ? 4 * kEps * obj.magnitude(u, U) : 0.0;
        RField v;
        Spec V;
        auto line_search = [&](const Spec& D, double t0, double& t_acc) {
            const double slope = pinner(sp, G, D);
            if (!(slope < 0)) return false;
            const RField d = sp.inverse(D);
            double t = t0;
            for (int k = 0; k < 60; ++k, t *= 0.5) {
                v = u + t * d;
                const double s = a / std::sqrt(mass(g, v));
                v *= s;
                V = s * (U + t * D);
                const double Jv = obj.value(v, V);
                // Near convergence the Armijo decrease drops below round-off in J.
                if (std::isfinite(Jv) && (Jv <= J + 1e-4 * t * slope || (allowance > 0 && Jv <= J + allowance))) {
                    t_acc = t;
                    return true;
                }
            }
            return false;
        };

        double t_acc = 0;
        bool ok = false;
        if (use_newton) {
            obj.prepare_hessian(u, U);
            auto Pi = [&](const Spec& R) { return Spec(R - (pinner(sp, R, U) / M) * U); };
            auto H = [&](const Spec& X) { return Pi(Spec(obj.hessian(X) - lam * X)); };
            Spec X = Spec::Zero(g.nx, g.ny), R = -Gt, Z = Mt(R), Pd = Z;
            double rz = pinner(sp, R, Z);
            const double rz0 = rz, eta = std::min(0.1, std::sqrt(out.rel));
            for (int j = 0; j < 200; ++j) {
                const Spec HP = H(Pd);
                const double pHp = pinner(sp, Pd, HP);
                if (!(pHp > 0)) {
                    if (j == 0) X = Z;
                    break;
                }
                const double al = rz / pHp;
                X += al * Pd;
                R -= al * HP;
                const Spec Zn = Mt(R);
                const double rzn = pinner(sp, R, Zn);
                if (rzn <= eta * eta * rz0) break;
                Pd = Zn + (rzn / rz) * Pd;
                rz = rzn;
            }
            ok = line_search(X, 1.0, t_acc);
        }
        Spec D = -PGt;
        if (!use_newton && cfg.cg && have_prev) {
            // Transport the previous direction by projecting onto the new tangent space.
            const double den = pinner(sp, Gprev, PGprev);
            const double b = den > 0 ? std::max(0.0, pinner(sp, Gt, Spec(PGt - PGprev)) / den) : 0.0;
            const Spec Dt = Dprev - (pinner(sp, Dprev, U) / M) * U;
            const Spec Dc = D + b * Dt;
            if (pinner(sp, G, Dc) < 0) D = Dc;
        }
        if (!ok) {
            ok = line_search(D, tau, t_acc);
            if (ok) {
                Dprev = D;
                Gprev = Gt;
                PGprev = PGt;
                have_prev = true;
            }
        }
        if (!ok && have_prev) {
            have_prev = false;
            ok = line_search(Spec(-PGt), tau, t_acc);
        }
        if (!ok) {
            out.stop = Stop::Stall;
            break;
        }
        if (!use_newton) tau = std::min(2 * t_acc, 1e6);
        u = std::move(v);
        // Fresh transform each step so U never drifts from u.
        U = admissible_spectrum(sp, u);
        ++iter;
        ++local;
        if (hooks.inside && !hooks.inside(u, U)) {
            out.u = u;
            out.stop = Stop::BallExit;
            return out;
        }
    }
    out.u = u;
    return out;
}

std::pair<RGrid, RField> starting_state(const RGrid& grid, const SolveOptions& o, double a) {
    if (o.init == InitKind::File) {
        if (!o.init_field) throw DomainError("init=file needs a starting field");
        const auto& [g, f] = *o.init_field;
        if (f.rows() != g.nx || f.cols() != g.ny) throw DomainError("starting field does not match its grid");
        const double m = mass(g, f);
        if (!(m > 0)) throw DomainError("starting field is zero");
        Sp sp(g);
        return {g, RField(project_admissible(sp, f) * (a / std::sqrt(m)))};
    }
    return {grid, initial_field(grid, o.init, a)};
}

void check_options(const SolveOptions& o, double a) {
    if (!(a > 0) || !std::isfinite(a)) throw DomainError("mass a must be positive");
    if (o.max_iters < 1) throw DomainError("max_iters must be at least 1");
    if (!(o.grad_tol > 0) || !(o.pohozaev_tol > 0) || !(o.step0 > 0)) throw DomainError("tolerances and step must be positive");
}

// Fills every scalar diagnostic of res from the final state.
void finalize(SolveResult& res, const RGrid& g, RField u, const RSpec& nl) {
    Sp sp(g);
    u = project_admissible(sp, u);
    const auto fi = fiber_integrals(sp, u, nl);
    res.grid = g;
    res.lambda = lagrange_multiplier(fi, nl);
    res.energy = energy(fi, nl);
    res.pohozaev_residual = pohozaev_residual(fi, nl);
    res.mass = fi.mass2;
    res.boundary_mass_fraction = boundary_mass_fraction(g, u);
    res.equation_residual = equation_residual(sp, u, nl);
    res.weak_residual = weak_form_residual(fi, nl, res.lambda);
    res.seminorm = std::sqrt(fi.A);
    res.u = std::move(u);
}

SolveStatus status_of(Stop s) {
    switch (s) {
        case Stop::Converged: return SolveStatus::Converged;
        case Stop::MaxIters: return SolveStatus::MaxIters;
        case Stop::Stall: return SolveStatus::LineSearchStall;
        case Stop::BallExit: return SolveStatus::BallExit;
        case Stop::Regauge: return SolveStatus::MaxIters;
        case Stop::Stagnated: return SolveStatus::LineSearchStall;
    }
    return SolveStatus::MaxIters;
}

// Inner-half-box mass fraction of a seed shape with width parameter s.
RField seed_shape(const RGrid& g, InitKind kind, double s) {
    const double sx = s / (g.Lx * g.Lx), sy = s / (g.Ly * g.Ly);
    RField u(g.nx, g.ny);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const double x = g.x(i), y = g.y(j);
            const double e = std::exp(-sx * x * x - sy * y * y);
            switch (kind) {
                case InitKind::GaussianDerivativeOdd: u(i, j) = -2 * sx * x * e; break;
                case InitKind::LumpLike: {
                    const double X2 = sx * x * x, Y2 = sy * y * y, d = 3 + X2 + Y2;
                    u(i, j) = 4 * (3 - X2 + Y2) / (d * d);
                    break;
                }
                default: u(i, j) = (4 * sx * sx * x * x - 2 * sx) * e; break;
            }
        }
    return u;
}

double inner_fraction(const RGrid& g, const RField& u) {
    double in = 0, all = 0;
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const double e = u(i, j) * u(i, j);
            all += e;
            if (std::abs(g.x(i)) < g.Lx / 4 && std::abs(g.y(j)) < g.Ly / 4) in += e;
        }
    return all > 0 ? in / all : 0.0;
}

}  // namespace

const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::GaussianDerivative: return "gaussian-derivative";
        case InitKind::GaussianDerivativeOdd: return "gaussian-derivative-odd";
        case InitKind::LumpLike: return "lump-like";
        case InitKind::File: return "file";
    }
    return "?";
}

InitKind parse_init_kind(const std::string& s) {
    for (InitKind k : {InitKind::GaussianDerivative, InitKind::GaussianDerivativeOdd, InitKind::LumpLike, InitKind::File})
        if (s == to_string(k)) return k;
    throw DomainError("unknown init kind: " + s);
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::MaxIters: return "max-iters";
        case SolveStatus::LineSearchStall: return "line-search-stall";
        case SolveStatus::BallExit: return "ball-exit";
        case SolveStatus::FiberFailure: return "fiber-failure";
    }
    return "?";
}

BallSpec ball_from_constants(const GNConstants& gn, double mu) {
    const auto [K, a0] = K_and_a0(gn, mu);
    return {rho_max(a0, gn, mu), a0};
}

// Widest seed of the family with at least 99% of its mass in the inner half box.
RField initial_field(const RGrid& g, InitKind kind, double a) {
    if (kind == InitKind::File) throw DomainError("init=file has no built-in field");
    Sp sp(g);
    auto frac = [&](double s) { return inner_fraction(g, project_admissible(sp, seed_shape(g, kind, s))); };
    double lo = std::log(1.0), hi = std::log(1e4);
    if (frac(std::exp(lo)) < 0.99)
        for (int k = 0; k < 60; ++k) {
            const double mid = (lo + hi) / 2;
            (frac(std::exp(mid)) >= 0.99 ? hi : lo) = mid;
        }
    else
        hi = lo;
    RField u = project_admissible(sp, seed_shape(g, kind, std::exp(hi)));
    return u * (a / std::sqrt(mass(g, u)));
}

namespace {

// One fixed-box solve at offset t along the box family.
struct BoxState {
    RGrid g;
    RField u;
    double t = 0;
    double P = 0;  // signed Pohozaev mismatch relative to max(A, Bq, Bp)
    Stop stop = Stop::MaxIters;
    double rel = kInf;
    int iterations = 0;
    std::vector<TracePoint> trace;
};

using BoxSolve = std::function<BoxState(const RGrid&, const RField&)>;

double signed_pohozaev(const RGrid& g, const RField& u, const RSpec& nl) {
    Sp sp(g);
    const auto fi = fiber_integrals(sp, u, nl);
    return pohozaev(fi, nl) / std::max({fi.A, fi.Bq, fi.Bp});
}

BoxState solve_at(const BoxSolve& solve, const BoxState& from, double t, int& solves) {
    auto [g, u] = rescale_box(from.g, from.u, t - from.t);
    BoxState s = solve(g, u);
    s.t = t;
    ++solves;
    return s;
}

// The discrete Pohozaev mismatch of the fixed-box critical point changes sign
// between box-limited (small) and under-resolved (large) boxes. Scan outward
// from t = 0 for the nearest sign change, then refine by Illinois false
// position. Returns the last state; it satisfies the tolerance iff found.
BoxState pohozaev_box_search(const BoxSolve& solve, BoxState s0, const SolveOptions& o, int& solves) {
    const double tol = 0.1 * o.pohozaev_tol;
    if (s0.stop != Stop::Converged || std::abs(s0.P) <= tol) return s0;
    std::optional<std::pair<BoxState, BoxState>> bracket;
    BoxState left = s0, right = s0;
    for (double d = o.box_search_step; d <= o.box_search_range + 1e-12 && !bracket; d += o.box_search_step) {
        for (int side : {1, -1}) {
            BoxState& last = side > 0 ? right : left;
            BoxState next = solve_at(solve, last, side * d, solves);
            if (next.stop != Stop::Converged) return next;
            if ((next.P > 0) != (last.P > 0)) {
                bracket = side > 0 ? std::make_pair(last, next) : std::make_pair(next, last);
                break;
            }
            last = std::move(next);
        }
    }
    if (!bracket) return s0;
    auto [lo, hi] = std::move(*bracket);
    double wlo = 1, whi = 1;
    int side = 0;
    for (int k = 0; k < 60; ++k) {
        const double t = (lo.t * whi * hi.P - hi.t * wlo * lo.P) / (whi * hi.P - wlo * lo.P);
        BoxState mid = solve_at(solve, std::abs(t - lo.t) < std::abs(t - hi.t) ? lo : hi, t, solves);
        if (mid.stop != Stop::Converged || std::abs(mid.P) <= tol || hi.t - lo.t < 1e-12) return mid;
        if ((mid.P > 0) == (lo.P > 0)) {
            lo = std::move(mid);
            wlo = 1;
            if (side == -1) whi *= 0.5;
            side = -1;
        } else {
            hi = std::move(mid);
            whi = 1;
            if (side == 1) wlo *= 0.5;
            side = 1;
        }
    }
    return std::abs(lo.P) < std::abs(hi.P) ? lo : hi;
}

void take_box_state(SolveResult& res, BoxState& s) {
    res.grad_norm = s.rel;
    res.status = status_of(s.stop);
    res.box_t = s.t;
    res.trace = std::move(s.trace);
}

}  // namespace

SolveResult minimize_global(const RGrid& grid, const RSpec& nl, double a, const SolveOptions& opts) {
    nl.validate();
    if (nl.combined || nl.regime() != Regime::Subcritical) throw DomainError("minimize_global needs a subcritical pure power");
    check_options(opts, a);
    auto [g, u] = starting_state(grid, opts, a);
    SolveResult res;
    res.regime = Regime::Subcritical;
    if (opts.fit_box) {
        Sp sp(g);
        res.fit_t = fiber_stationary_pure(fiber_map(sp, u, nl));
        std::tie(g, u) = rescale_box(g, u, res.fit_t);
    }
    int total = 0;
    const BoxSolve solve = [&](const RGrid& gb, const RField& ub) {
        Sp sp(gb);
        EnergyObjective obj(sp, nl);
        BoxState s;
        int iter = 0;
        EngineOut eo = run_sphere(sp, obj, ub, a, engine_config(opts), iter, &s.trace, {});
        total += iter;
        s.g = gb;
        s.u = std::move(eo.u);
        s.stop = eo.stop;
        s.rel = eo.rel;
        s.iterations = iter;
        s.P = signed_pohozaev(gb, s.u, nl);
        return s;
    };
    BoxState s0 = solve(g, u);
    res.fitted_pohozaev_residual = std::abs(s0.P);
    BoxState s = opts.fit_box ? pohozaev_box_search(solve, std::move(s0), opts, res.box_solves) : std::move(s0);
    ++res.box_solves;
    res.iterations = total;
    take_box_state(res, s);
    finalize(res, s.g, s.u, nl);
    res.converged = s.stop == Stop::Converged && res.pohozaev_residual <= opts.pohozaev_tol;
    if (s.stop == Stop::Converged && !res.converged)
        res.message = "no box on the scaling family brings the fixed-box minimizer onto the Pohozaev manifold";
    return res;
}

SolveResult minimize_local_ball(const RGrid& grid, const RSpec& nl, double a, const BallSpec& ball,
                                const SolveOptions& opts) {
    nl.validate();
    if (!nl.combined) throw DomainError("minimize_local_ball needs a combined nonlinearity");
    check_options(opts, a);
    if (!(ball.a0 > 0) || !(a < ball.a0)) throw DomainError("minimize_local_ball needs a < a0");
    const double rho0 = opts.ball_radius.value_or(ball.rho0);
    if (!(rho0 > 0)) throw DomainError("ball radius must be positive");

    auto [g, u] = starting_state(grid, opts, a);
    SolveResult res;
    res.regime = Regime::Combined;
    res.rho0 = rho0;
    if (opts.fit_box) {
        Sp sp(g);
        const auto cc = critical_points_combined(fiber_map(sp, u, nl));
        if (cc.status == CombinedStatus::TwoRoots) {
            res.fit_t = cc.t1;
            std::tie(g, u) = rescale_box(g, u, cc.t1);
        }
    }
    {
        // Start inside the window ||u||_0 < rho0 a / a0.
        Sp sp(g);
        const double A = x_seminorm_sq(sp, u), limit = rho0 * a / ball.a0;
        if (std::sqrt(A) >= limit) {
            const double t = 0.75 * std::log(0.81 * limit * limit / A);
            res.fit_t += t;
            std::tie(g, u) = rescale_box(g, u, t);
        }
    }
    int total = 0;
    const BoxSolve solve = [&](const RGrid& gb, const RField& ub) {
        Sp sp(gb);
        EnergyObjective obj(sp, nl);
        EngineHooks hooks;
        hooks.inside = [&](const RField&, const Spec& V) { return seminorm_sq(sp, V) < rho0 * rho0; };
        BoxState s;
        int iter = 0;
        EngineOut eo = run_sphere(sp, obj, ub, a, engine_config(opts), iter, &s.trace, hooks);
        total += iter;
        s.g = gb;
        s.u = std::move(eo.u);
        s.stop = eo.stop;
        s.rel = eo.rel;
        s.iterations = iter;
        s.P = signed_pohozaev(gb, s.u, nl);
        return s;
    };
    BoxState s0 = solve(g, u);
    res.fitted_pohozaev_residual = std::abs(s0.P);
    BoxState s = opts.fit_box ? pohozaev_box_search(solve, std::move(s0), opts, res.box_solves) : std::move(s0);
    ++res.box_solves;
    res.iterations = total;
    take_box_state(res, s);
    finalize(res, s.g, s.u, nl);
    if (s.stop == Stop::BallExit) {
        res.message = "iterate left the ball ||u||_0 < rho0";
        return res;
    }
    Sp sp(s.g);
    const auto fm = fiber_map(sp, res.u, nl);
    const auto cc = critical_points_combined(fm);
    if (cc.status != CombinedStatus::TwoRoots) {
        res.status = SolveStatus::FiberFailure;
        res.message = std::string("fiber of the result: ") + to_string(cc.status);
        return res;
    }
    // P = 0 puts t = 0 on a fiber critical point; it must be the local minimum.
    const bool at_t1 = psi_second(fm, 0.0) > 0;
    res.converged = s.stop == Stop::Converged && res.pohozaev_residual <= opts.pohozaev_tol &&
                    res.seminorm < rho0 && at_t1;
    if (!at_t1) res.message = "result sits at the fiber maximum, not the local minimum";
    return res;
}

SolveResult minimize_pohozaev_manifold(const RGrid& grid, const RSpec& nl, double a, const SolveOptions& opts) {
    nl.validate();
    if (nl.combined || nl.regime() != Regime::Supercritical)
        throw DomainError("minimize_pohozaev_manifold needs a supercritical pure power");
    check_options(opts, a);
    auto [g, u] = starting_state(grid, opts, a);
    SolveResult res;
    res.regime = Regime::Supercritical;
    {
        Sp sp(g);
        const double t = fiber_stationary_pure(fiber_map(sp, u, nl));
        if (opts.fit_box) {
            res.fit_t = t;
            std::tie(g, u) = rescale_box(g, u, t);
        }
    }
    int iter = 0;
    EngineOut eo;
    for (int regauges = 0;; ++regauges) {
        Sp sp(g);
        ReducedObjective obj(sp, nl);
        EngineHooks hooks;
        hooks.regauge = [&](const RField& v, const Spec& V) {
            return std::abs(fiber_stationary_pure(FiberMap<double>{integrals(sp, v, V, nl), nl})) > 0.5 &&
                   regauges < 10000;
        };
        hooks.rep_pohozaev = [&](const RField& v, const Spec& V) {
            const FiberMap<double> fm{integrals(sp, v, V, nl), nl};
            const double t = fiber_stationary_pure(fm);
            return std::abs(psi_prime(fm, t)) / (std::exp(4.0 * t / 3) * fm.fi.A);
        };
        eo = run_sphere(sp, obj, u, a, engine_config(opts), iter, &res.trace, hooks);
        u = eo.u;
        if (eo.stop != Stop::Regauge) break;
        const double t = fiber_stationary_pure(fiber_map(sp, u, nl));
        std::tie(g, u) = rescale_box(g, u, t);
    }
    res.iterations = iter;
    res.grad_norm = eo.rel;
    const bool stalled = eo.stop == Stop::Stall && eo.rel <= opts.stall_tol;
    res.status = stalled ? SolveStatus::Converged : status_of(eo.stop);

    Sp sp(g);
    const auto fm = fiber_map(sp, u, nl);
    res.fitted_pohozaev_residual = pohozaev_residual(fm.fi, nl);
    res.snap_t = fiber_stationary_pure(fm);
    auto [gs, us] = rescale_box(g, u, res.snap_t);
    finalize(res, gs, us, nl);
    res.converged = (eo.stop == Stop::Converged || stalled) && res.pohozaev_residual <= opts.pohozaev_tol;
    return res;
}

RField random_smooth_field(const RGrid& g, std::uint64_t seed) {
    // Coefficients are drawn over integer wave indices in a fixed order, so a
    // seed gives the same continuum field on every grid that resolves it.
    // The envelope is exp(-(mx^2 + my^2)/32), below 1e-17 past |m| = 36.
    constexpr int M = 36;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    Sp sp(g);
    Spectrum<double> F = Spectrum<double>::Zero(g.nx, g.ny);
    for (int mx = -M; mx <= M; ++mx)
        for (int my = -M; my <= M; ++my) {
            const double re = N(rng), im = N(rng);
            if (std::abs(mx) >= g.nx / 2 || std::abs(my) >= g.ny / 2) continue;
            const double env = std::exp(-double(mx * mx + my * my) / 32);
            F((mx + g.nx) % g.nx, (my + g.ny) % g.ny) = std::complex<double>(re, im) * env;
        }
    RField u = sp.inverse(F);
    const double wx = g.Lx / 8, wy = g.Ly / 8;
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) {
            const double x = g.x(i) / wx, y = g.y(j) / wy;
            u(i, j) *= std::exp(-(x * x + y * y) / 2);
        }
    u = project_admissible(sp, u);
    return u / std::sqrt(mass(g, u));
}

GNEstimate estimate_gn_constant(const RGrid& grid, double q, const SolveOptions& opts, const GNOptions& gopts) {
    if (!(q >= 2 && q < 6)) throw DomainError("GN estimate needs q in [2,6)");
    GNEstimate est;
    est.constants.q = q;
    est.constants.provenance = Provenance::Estimated;
    if (q == 2) {
        // W is identically 1; nothing to maximize or pad.
        est.constants.Cq = 1;
        est.max_observed = 1;
        return est;
    }
    const int starts = std::max(8, gopts.starts);
    Sp sp(grid);
    GNObjective obj(sp, q);
    EngineConfig cfg;
    cfg.max_iters = gopts.max_iters;
    cfg.grad_tol = gopts.tol;
    cfg.value_tol = gopts.value_tol;
    cfg.step0 = 1;
    cfg.newton = false;
    cfg.keep_trace = false;
    for (int s = 0; s < starts; ++s) {
        const RField u0 = random_smooth_field(grid, opts.seed * 1000003ULL + std::uint64_t(s));
        int iter = 0;
        const EngineOut eo = run_sphere(sp, obj, u0, 1.0, cfg, iter, nullptr, {});
        est.per_start.push_back(gn_quotient(sp, eo.u, q));
    }
    est.starts = starts;
    est.max_observed = *std::max_element(est.per_start.begin(), est.per_start.end());
    est.constants.Cq = est.max_observed * (1 + gopts.headroom);
    return est;
}

ProbeReport nonexistence_probe(const RGrid& grid, double a, double C, const SolveOptions& opts, double stop_ratio) {
    if (!(a > 0)) throw DomainError("nonexistence probe needs a > 0");
    if (!(C > 0)) throw DomainError("nonexistence probe needs C > 0");
    ProbeReport rep;
    rep.a = a;
    rep.C = C;
    rep.a_star = critical_mass(C);
    if (a > rep.a_star) throw DomainError("nonexistence probe needs a <= a*");
    const RSpec nl = RSpec::pure(critical_exponent<double>());
    auto [g, u] = starting_state(grid, opts, a);
    const double factor = 0.5 * (1 - std::pow(a / rep.a_star, 4.0 / 3));
    rep.min_margin = kInf;
    EngineConfig cfg = engine_config(opts);
    cfg.newton = false;
    cfg.keep_trace = false;

    auto record = [&](int k, const Sp& sp, const RField& v) {
        const auto fi = fiber_integrals(sp, v, nl);
        ProbePoint pp{k, fi.A, energy(fi, nl), factor * fi.A};
        const double margin = (pp.energy - pp.bound) / fi.A;
        rep.min_margin = std::min(rep.min_margin, margin);
        if (pp.energy - pp.bound < -1e-10 * fi.A) rep.coercivity_ok = false;
        rep.trace.push_back(pp);
        return pp;
    };

    {
        Sp sp(g);
        rep.initial_seminorm2 = record(0, sp, u).seminorm2;
    }
    int k = 0;
    for (; k < opts.max_iters; ++k) {
        Sp sp(g);
        EnergyObjective obj(sp, nl);
        int it = 0;
        cfg.max_iters = 1;
        u = run_sphere(sp, obj, u, a, cfg, it, nullptr, {}).u;
        const ProbePoint after = record(k + 1, sp, u);
        if (after.energy > 0) std::tie(g, u) = rescale_box(g, u, -0.5);
        Sp sp2(g);
        const ProbePoint p2 = record(k + 1, sp2, u);
        if (p2.seminorm2 <= stop_ratio * rep.initial_seminorm2) {
            ++k;
            break;
        }
    }
    rep.iterations = k;
    rep.final_seminorm2 = rep.trace.back().seminorm2;
    rep.ratio = rep.final_seminorm2 / rep.initial_seminorm2;
    rep.grid = g;
    return rep;
}

double mountain_pass_upper_bound(const SolveResult& base, const RSpec& nl) {
    Sp sp(base.grid);
    const auto fm = fiber_map(sp, base.u, nl);
    const auto cc = critical_points_combined(fm);
    if (cc.status != CombinedStatus::TwoRoots)
        throw FiberError(std::string("mountain-pass bound: ") + to_string(cc.status));
    return psi(fm, cc.t2);
}

}  // namespace kpnw
