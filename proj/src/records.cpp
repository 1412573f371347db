#include "kpnw/records.hpp"

#ifndef KPNW_VERSION
#define KPNW_VERSION "unknown"
#endif

namespace kpnw {

namespace {

template <class T>
Json opt(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

Json list_or_null(const std::optional<std::vector<double>>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

const char* version_string() { return KPNW_VERSION; }

Json config_json(const RunConfig& c) {
    Json j;
    j["grid"] = {c.nx, c.ny};
    j["box"] = {c.Lx, c.Ly};
    j["a"] = c.a;
    j["q"] = c.q;
    j["p"] = opt(c.p);
    j["mu"] = c.mu;
    j["dealias"] = c.dealias;
    j["seed"] = c.seed;
    j["max_iters"] = c.max_iters;
    j["tol"] = c.tol;
    j["pohozaev_tol"] = c.pohozaev_tol;
    j["eq_tol"] = c.eq_tol;
    j["init"] = to_string(c.init);
    j["init_file"] = c.init_file;
    j["estimate"] = c.estimate;
    j["Cq"] = opt(c.Cq);
    j["Cp"] = opt(c.Cp);
    j["gn_starts"] = c.gn_starts;
    j["gn_headroom"] = c.gn_headroom;
    j["probe_stop"] = c.probe_stop;
    j["field"] = c.field;
    j["sweep"] = {{"a", list_or_null(c.sweep_a)},
                  {"q", list_or_null(c.sweep_q)},
                  {"p", list_or_null(c.sweep_p)},
                  {"mu", list_or_null(c.sweep_mu)}};
    return j;
}

Json params_json(const RunConfig& c) {
    return {{"grid", {c.nx, c.ny}}, {"box", {c.Lx, c.Ly}}, {"a", c.a}, {"q", c.q}, {"p", opt(c.p)}, {"mu", c.mu}};
}

Json grid_json(const RGrid& g) { return {{"nx", g.nx}, {"ny", g.ny}, {"Lx", g.Lx}, {"Ly", g.Ly}}; }

Json constants_json(const GNConstants& gn) {
    return {{"Cq", gn.Cq}, {"Cp", opt(gn.Cp)}, {"q", gn.q}, {"p", opt(gn.p)}, {"provenance", to_string(gn.provenance)}};
}

Json provenance_json(const RunConfig& c, const std::optional<GNConstants>& gn) {
    return {{"seed", c.seed}, {"version", version_string()}, {"constants", gn ? constants_json(*gn) : Json(nullptr)}};
}

Json result_json(const SolveResult& r, bool with_trace) {
    Json j;
    j["regime"] = to_string(r.regime);
    j["status"] = to_string(r.status);
    j["converged"] = r.converged;
    j["message"] = r.message;
    j["energy"] = r.energy;
    j["lambda"] = r.lambda;
    j["mass"] = r.mass;
    j["seminorm"] = r.seminorm;
    j["pohozaev_residual"] = r.pohozaev_residual;
    j["equation_residual"] = r.equation_residual;
    j["weak_residual"] = r.weak_residual;
    j["grad_norm"] = r.grad_norm;
    j["iterations"] = r.iterations;
    j["boundary_mass_fraction"] = r.boundary_mass_fraction;
    j["fit_t"] = r.fit_t;
    j["box_t"] = r.box_t;
    j["box_solves"] = r.box_solves;
    j["fitted_pohozaev_residual"] = r.fitted_pohozaev_residual;
    j["snap_t"] = r.snap_t;
    j["rho0"] = opt(r.rho0);
    j["grid"] = grid_json(r.grid);
    if (with_trace) {
        Json t = Json::array();
        for (const auto& p : r.trace)
            t.push_back({{"iter", p.iter},
                         {"energy", p.energy},
                         {"grad", p.grad},
                         {"step", p.step},
                         {"seminorm", p.seminorm},
                         {"mass", p.mass},
                         {"rep_pohozaev", p.rep_pohozaev},
                         {"newton", p.newton}});
        j["trace"] = std::move(t);
    } else {
        j["trace_length"] = r.trace.size();
    }
    return j;
}

Json probe_json(const ProbeReport& r, bool with_trace) {
    Json j;
    j["regime"] = to_string(Regime::Critical);
    j["a"] = r.a;
    j["a_star"] = r.a_star;
    j["C"] = r.C;
    j["initial_seminorm2"] = r.initial_seminorm2;
    j["final_seminorm2"] = r.final_seminorm2;
    j["ratio"] = r.ratio;
    j["coercivity_ok"] = r.coercivity_ok;
    j["min_margin"] = r.min_margin;
    j["iterations"] = r.iterations;
    j["grid"] = grid_json(r.grid);
    if (with_trace) {
        Json t = Json::array();
        for (const auto& p : r.trace)
            t.push_back({{"iter", p.iter}, {"seminorm2", p.seminorm2}, {"energy", p.energy}, {"bound", p.bound}});
        j["trace"] = std::move(t);
    } else {
        j["trace_length"] = r.trace.size();
    }
    return j;
}

Json threshold_json(const ThresholdReport& r) {
    Json j;
    j["a_star"] = opt(r.a_star);
    j["beta_q"] = r.beta_q;
    j["beta_p"] = opt(r.beta_p);
    j["rho_a"] = opt(r.rho_a);
    j["K"] = opt(r.Kconst);
    j["a0"] = opt(r.a0);
    j["rho0"] = opt(r.rho0);
    j["gmax"] = opt(r.gmax);
    j["trichotomy"] = r.trichotomy ? Json(to_string(*r.trichotomy)) : Json(nullptr);
    j["provenance"] = to_string(r.provenance);
    return j;
}

}  // namespace kpnw
