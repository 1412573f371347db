#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kpnw/fiber.hpp"
#include "kpnw/thresholds.hpp"

namespace kpnw {

using RGrid = Grid<double>;
using RField = Field<double>;
using RSpec = NonlinearitySpec<double>;

// gaussian-derivative is the even field d_xx e^{-sx x^2 - sy y^2};
// gaussian-derivative-odd is d_x of the same Gaussian.
enum class InitKind { GaussianDerivative, GaussianDerivativeOdd, LumpLike, File };

const char* to_string(InitKind k);
InitKind parse_init_kind(const std::string& s);

struct SolveOptions {
    int max_iters = 2000;
    double step0 = 1.0;
    double pohozaev_tol = 1e-6;
    double grad_tol = 1e-8;  // relative preconditioned gradient norm
    std::uint64_t seed = 0;
    InitKind init = InitKind::GaussianDerivative;
    std::optional<double> ball_radius;

    // Starting field for InitKind::File, with the box it lives on.
    std::optional<std::pair<RGrid, RField>> init_field;
    // Rescale the box along the fiber family so the seed sits at its fiber
    // stationary point before iterating.
    bool fit_box = true;
    bool newton = true;
    int descent_iters = 300;      // descent steps before Newton-CG takes over
    double newton_switch = 1e-2;  // ... or once the relative gradient is below this
    // Subcritical and combined: search the box family within |t| <= box_search_range
    // of the fitted box, in steps of box_search_step, for a box on which the
    // fixed-box critical point satisfies P = 0.
    double box_search_range = 2.0;
    double box_search_step = 0.25;
    double stall_tol = 1e-6;      // supercritical: relative gradient accepted at a stall
    bool keep_trace = true;
};

enum class SolveStatus { Converged, MaxIters, LineSearchStall, BallExit, FiberFailure };

const char* to_string(SolveStatus s);

struct TracePoint {
    int iter = 0;
    double energy = 0;  // J, or the reduced energy psi_u(t*(u)) on the manifold
    double grad = 0;    // relative preconditioned gradient norm
    double step = 0;
    double seminorm = 0;  // ||u||_0
    double mass = 0;      // |u|_2^2
    double rep_pohozaev = 0;  // supercritical: |P| of the scaled representative / A
    bool newton = false;
};

struct SolveResult {
    RGrid grid;
    RField u;
    double lambda = 0;
    double energy = 0;
    double pohozaev_residual = 0;
    double mass = 0;  // |u|_2^2
    Regime regime = Regime::Subcritical;
    int iterations = 0;
    bool converged = false;
    double boundary_mass_fraction = 0;

    SolveStatus status = SolveStatus::MaxIters;
    double grad_norm = 0;
    double fit_t = 0;  // initial box fit along the fiber family
    double box_t = 0;  // offset of the final box from the fitted one
    int box_solves = 0;
    double fitted_pohozaev_residual = 0;  // P residual of the solve on the fitted box
    double snap_t = 0;                    // supercritical: scaling to the representative
    double equation_residual = 0;
    double weak_residual = 0;
    double seminorm = 0;  // ||u||_0
    std::optional<double> rho0;
    std::vector<TracePoint> trace;
    std::string message;
};

// Ball B_{rho0} of the combined problem and the mass threshold it belongs to.
struct BallSpec {
    double rho0 = 0;
    double a0 = 0;
};

BallSpec ball_from_constants(const GNConstants& gn, double mu);

// Admissible starting field of mass a^2 on g.
RField initial_field(const RGrid& g, InitKind kind, double a);

SolveResult minimize_global(const RGrid& grid, const RSpec& nl, double a, const SolveOptions& opts);

SolveResult minimize_local_ball(const RGrid& grid, const RSpec& nl, double a, const BallSpec& ball, const SolveOptions& opts);

SolveResult minimize_pohozaev_manifold(const RGrid& grid, const RSpec& nl, double a, const SolveOptions& opts);

struct GNEstimate {
    GNConstants constants;
    double max_observed = 0;
    std::vector<double> per_start;
    int starts = 0;
};

struct GNOptions {
    int starts = 8;
    double headroom = 0.05;
    int max_iters = 3000;
    double tol = 1e-7;        // relative gradient
    double value_tol = 1e-10; // relative change of log W over 50 steps
};

GNEstimate estimate_gn_constant(const RGrid& grid, double q, const SolveOptions& opts, const GNOptions& gopts = {});

// A random smooth admissible field, deterministic in seed.
RField random_smooth_field(const RGrid& g, std::uint64_t seed);

struct ProbePoint {
    int iter = 0;
    double seminorm2 = 0;
    double energy = 0;
    double bound = 0;  // 1/2 (1 - (a/a*)^{4/3}) ||u||_0^2
};

struct ProbeReport {
    double a = 0;
    double a_star = 0;
    double C = 0;
    double initial_seminorm2 = 0;
    double final_seminorm2 = 0;
    double ratio = 0;
    bool coercivity_ok = true;
    double min_margin = 0;  // min over iterates of (J - bound) / ||u||_0^2
    int iterations = 0;
    RGrid grid;  // box of the last iterate
    std::vector<ProbePoint> trace;
};

// Critical case q = 10/3 with a <= a*(C). Each iteration takes one fixed-box
// descent step and one exact fiber step t -> t - 0.5 while J > 0.
ProbeReport nonexistence_probe(const RGrid& grid, double a, double C_tenthirds, const SolveOptions& opts,
                               double stop_ratio = 1e-8);

// psi_{u_a}(t2), the fiber upper bound on the mountain-pass level.
double mountain_pass_upper_bound(const SolveResult& base, const RSpec& nl);

}  // namespace kpnw
