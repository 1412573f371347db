#include "kpnw/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <spdlog/spdlog.h>

#include "kpnw/error.hpp"
#include "kpnw/field_file.hpp"
#include "kpnw/records.hpp"
#include "kpnw/sweep.hpp"

namespace kpnw {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool needs_constants(const RunConfig& c) {
    const RSpec nl = c.nonlinearity();
    return nl.regime() == Regime::Critical || nl.regime() == Regime::Combined;
}

// Fails before any compute when the constants a run needs are missing.
void require_constants(const RunConfig& c) {
    if (c.estimate) return;
    if (!c.Cq) throw ConfigError("this run needs Cq; supply it or pass --estimate");
    if (c.p && !c.Cp) throw ConfigError("combined runs need Cp; supply it or pass --estimate");
}

GNOptions gn_options(const RunConfig& c) {
    GNOptions g;
    g.starts = c.gn_starts;
    g.headroom = c.gn_headroom;
    return g;
}

// Estimates are memoized per exponent; the memo is filled before any
// parallel work starts.
using Estimates = std::map<double, double>;

double estimate_for(const RunConfig& c, double q, Estimates& memo) {
    if (auto it = memo.find(q); it != memo.end()) return it->second;
    spdlog::info("estimating the Gagliardo-Nirenberg constant for q = {}", q);
    const auto est = estimate_gn_constant(c.grid(), q, c.solve_options(), gn_options(c));
    spdlog::info("q = {}: max observed {:.8f}, working constant {:.8f}", q, est.max_observed, est.constants.Cq);
    return memo[q] = est.constants.Cq;
}

GNConstants resolve_constants(const RunConfig& c, const Estimates& memo) {
    GNConstants gn;
    gn.q = c.q;
    gn.p = c.p;
    if (c.estimate) {
        gn.provenance = Provenance::Estimated;
        gn.Cq = memo.at(c.q);
        if (c.p) gn.Cp = memo.at(*c.p);
    } else {
        gn.provenance = Provenance::UserSupplied;
        gn.Cq = c.Cq.value();
        gn.Cp = c.Cp;
    }
    return gn;
}

void fill_estimates(const RunConfig& c, Estimates& memo) {
    if (!c.estimate) return;
    estimate_for(c, c.q, memo);
    if (c.p) estimate_for(c, *c.p, memo);
}

struct SolveOutcome {
    Json outputs;
    bool converged = false;
    std::optional<GNConstants> gn;
    std::optional<FieldFile> field;
};

SolveOutcome solve_point(const RunConfig& c, const Estimates& memo, bool with_trace) {
    const RSpec nl = c.nonlinearity();
    const RGrid grid = c.grid();
    SolveOptions opts = c.solve_options();
    if (c.init == InitKind::File) {
        FieldFile f = read_field(c.init_file);
        opts.init_field = std::make_pair(f.grid, f.u);
    }
    SolveOutcome out;
    switch (nl.regime()) {
        case Regime::Subcritical:
        case Regime::Supercritical: {
            const SolveResult r = nl.regime() == Regime::Subcritical ? minimize_global(grid, nl, c.a, opts)
                                                                     : minimize_pohozaev_manifold(grid, nl, c.a, opts);
            out.outputs = result_json(r, with_trace);
            out.converged = r.converged;
            out.field = FieldFile{r.grid, r.u};
            break;
        }
        case Regime::Critical: {
            out.gn = resolve_constants(c, memo);
            const ProbeReport r = nonexistence_probe(grid, c.a, out.gn->Cq, opts, c.probe_stop);
            out.outputs = probe_json(r, with_trace);
            out.converged = r.coercivity_ok && r.ratio <= c.probe_stop;
            break;
        }
        case Regime::Combined: {
            out.gn = resolve_constants(c, memo);
            const BallSpec ball = ball_from_constants(*out.gn, c.mu);
            const SolveResult r = minimize_local_ball(grid, nl, c.a, ball, opts);
            out.outputs = result_json(r, with_trace);
            out.outputs["a0"] = ball.a0;
            Json mp = nullptr;
            if (r.converged) {
                try {
                    mp = mountain_pass_upper_bound(r, nl);
                } catch (const FiberError& e) {
                    out.outputs["mountain_pass_note"] = e.what();
                }
            }
            out.outputs["mountain_pass_upper_bound"] = mp;
            out.converged = r.converged;
            out.field = FieldFile{r.grid, r.u};
            break;
        }
    }
    return out;
}

void append_line(const fs::path& path, const std::string& line) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw Error("cannot open " + path.string() + " for appending");
    f << line << '\n';
    f.flush();
    if (!f) throw Error("write to " + path.string() + " failed");
}

FieldFile field_input(const RunConfig& c) {
    if (c.field.empty()) throw ConfigError("this command needs a field file");
    FieldFile f = read_field(c.field);
    if (!(mass(f.grid, f.u) > 0)) throw FiberError("the field is identically zero");
    return f;
}

// Sweep keys in output order: q, then p (pure first), then mu, then a.
struct SweepKey {
    double a, q;
    std::optional<double> p;
    double mu;

    auto tie() const { return std::make_tuple(q, p.has_value(), p.value_or(0.0), mu, a); }
    bool operator<(const SweepKey& o) const { return tie() < o.tie(); }
    bool operator==(const SweepKey& o) const { return tie() == o.tie(); }
};

Json key_json(const SweepKey& k) {
    return {{"a", k.a}, {"q", k.q}, {"p", k.p ? Json(*k.p) : Json(nullptr)}, {"mu", k.mu}};
}

std::optional<SweepKey> key_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("key")) return std::nullopt;
    const Json& k = j["key"];
    SweepKey s{k.at("a").get<double>(), k.at("q").get<double>(), std::nullopt, k.at("mu").get<double>()};
    if (!k.at("p").is_null()) s.p = k.at("p").get<double>();
    return s;
}

std::vector<SweepKey> sweep_keys(const RunConfig& c) {
    const std::vector<double> as = c.sweep_a.value_or(std::vector<double>{c.a});
    const std::vector<double> qs = c.sweep_q.value_or(std::vector<double>{c.q});
    const std::vector<double> mus = c.sweep_mu.value_or(std::vector<double>{c.mu});
    std::vector<std::optional<double>> ps;
    if (c.sweep_p)
        for (double p : *c.sweep_p) ps.emplace_back(p);
    else
        ps.push_back(c.p);
    std::set<SweepKey> keys;
    for (double q : qs)
        for (const auto& p : ps)
            for (double mu : mus)
                for (double a : as) keys.insert({a, q, p, mu});
    return {keys.begin(), keys.end()};
}

RunConfig key_config(const RunConfig& c, const SweepKey& k) {
    RunConfig kc = c;
    kc.a = k.a;
    kc.q = k.q;
    kc.p = k.p;
    kc.mu = k.mu;
    return kc;
}

// Existing sweep output: keeps complete lines, drops a partial trailing line.
std::set<SweepKey> resume_keys(const fs::path& path) {
    std::set<SweepKey> present;
    if (!fs::exists(path)) return present;
    std::string text;
    {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    const auto last = text.rfind('\n');
    const std::size_t keep = last == std::string::npos ? 0 : last + 1;
    if (keep != text.size()) {
        spdlog::warn("dropping a partial trailing record in {}", path.string());
        fs::resize_file(path, keep);
        text.resize(keep);
    }
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(n) + ": unreadable record");
        }
        const auto k = key_from_json(j);
        if (!k) throw FormatError(path.string() + ":" + std::to_string(n) + ": record has no sweep key");
        present.insert(*k);
    }
    return present;
}

struct KeyResult {
    Json record;
    bool ok = false;
};

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"solve", "thresholds", "fiber", "sweep", "check", "gn-estimate"};
    return names;
}

int cmd_solve(const RunConfig& c, std::ostream& os) {
    const auto t0 = std::chrono::steady_clock::now();
    if (needs_constants(c)) require_constants(c);
    if (c.init == InitKind::File) (void)read_field(c.init_file);
    Estimates memo;
    fill_estimates(c, memo);
    spdlog::info("solve: {} regime, a = {}", to_string(c.nonlinearity().regime()), c.a);
    SolveOutcome s = solve_point(c, memo, true);

    const fs::path dir(c.out);
    fs::create_directories(dir);
    Json rec;
    rec["command"] = "solve";
    rec["params"] = params_json(c);
    rec["outputs"] = std::move(s.outputs);
    if (s.field) {
        const fs::path fp = dir / "solution.kpnw";
        write_field(fp.string(), s.field->grid, s.field->u);
        rec["outputs"]["field_file"] = fp.filename().string();
    }
    rec["provenance"] = provenance_json(c, s.gn);
    rec["config"] = config_json(c);
    rec["wall_time"] = seconds_since(t0);
    const std::string line = rec.dump();
    append_line(dir / "solve.jsonl", line);
    os << line << '\n';
    if (!s.converged) spdlog::warn("solve did not converge; record written");
    return s.converged ? kExitOk : kExitNotConverged;
}

int cmd_thresholds(const RunConfig& c, std::ostream& os) {
    const auto t0 = std::chrono::steady_clock::now();
    require_constants(c);
    Estimates memo;
    fill_estimates(c, memo);
    const GNConstants gn = resolve_constants(c, memo);
    ThresholdReport rep;
    try {
        rep = threshold_report(c.a, gn, c.mu);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    Json rec;
    rec["command"] = "thresholds";
    rec["params"] = params_json(c);
    rec["outputs"] = threshold_json(rep);
    rec["provenance"] = provenance_json(c, gn);
    rec["config"] = config_json(c);
    rec["wall_time"] = seconds_since(t0);
    os << rec.dump() << '\n';
    return kExitOk;
}

int cmd_fiber(const RunConfig& c, std::ostream& os) {
    const auto t0 = std::chrono::steady_clock::now();
    const FieldFile f = field_input(c);
    const RSpec nl = c.nonlinearity();
    Spectral<double> sp(f.grid);
    const FiberMap<double> fm = fiber_map(sp, f.u, nl);
    if (!(fm.fi.A > 0)) throw FiberError("degenerate fiber: ||u||_0 = 0");

    Json out;
    out["regime"] = to_string(nl.regime());
    out["integrals"] = {{"mass2", fm.fi.mass2}, {"A", fm.fi.A}, {"Bq", fm.fi.Bq}, {"Bp", fm.fi.Bp}};
    Json samples = Json::array();
    for (int k = -16; k <= 16; ++k) {
        const double t = 0.25 * k;
        samples.push_back({{"t", t}, {"psi", psi(fm, t)}, {"psi_prime", psi_prime(fm, t)}});
    }
    out["samples"] = std::move(samples);
    Json crit;
    switch (nl.regime()) {
        case Regime::Subcritical: {
            const double t = fiber_stationary_pure(fm);
            crit = {{"kind", "minimum"}, {"t", t}, {"psi", psi(fm, t)}};
            break;
        }
        case Regime::Supercritical: {
            const double t = critical_t_pure_supercritical(fm);
            crit = {{"kind", "maximum"}, {"t", t}, {"psi", psi(fm, t)}};
            break;
        }
        case Regime::Critical:
            // psi(t) = e^{4t/3} J(u): monotone, no isolated stationary point.
            crit = {{"kind", "none"}, {"energy", energy(fm.fi, nl)}};
            break;
        case Regime::Combined: {
            const auto cc = critical_points_combined(fm);
            crit = {{"kind", to_string(cc.status)}};
            if (cc.status != CombinedStatus::NoSecondCriticalPoint) {
                crit["t1"] = cc.t1;
                crit["t2"] = cc.t2;
                crit["psi_t1"] = psi(fm, cc.t1);
                crit["psi_t2"] = psi(fm, cc.t2);
            }
            break;
        }
    }
    out["critical"] = std::move(crit);

    Json rec;
    rec["command"] = "fiber";
    rec["params"] = params_json(c);
    rec["outputs"] = std::move(out);
    rec["provenance"] = provenance_json(c, std::nullopt);
    rec["config"] = config_json(c);
    rec["wall_time"] = seconds_since(t0);
    os << rec.dump() << '\n';
    return kExitOk;
}

int cmd_check(const RunConfig& c, std::ostream& os) {
    const auto t0 = std::chrono::steady_clock::now();
    const FieldFile f = field_input(c);
    const RSpec nl = c.nonlinearity();
    Spectral<double> sp(f.grid);
    const auto fi = fiber_integrals(sp, f.u, nl);
    const double lam = lagrange_multiplier(fi, nl);
    const double P = pohozaev_residual(fi, nl), eq = equation_residual(sp, f.u, nl);
    const bool pass = P <= c.pohozaev_tol && eq <= c.eq_tol;

    Json out;
    out["regime"] = to_string(nl.regime());
    out["grid"] = grid_json(f.grid);
    out["mass"] = fi.mass2;
    out["a"] = std::sqrt(fi.mass2);
    out["lambda"] = lam;
    out["energy"] = energy(fi, nl);
    out["seminorm"] = std::sqrt(fi.A);
    out["pohozaev_residual"] = P;
    out["equation_residual"] = eq;
    out["weak_residual"] = weak_form_residual(fi, nl, lam);
    out["admissibility_defect"] = admissibility_defect(sp, f.u);
    out["boundary_mass_fraction"] = boundary_mass_fraction(f.grid, f.u);
    out["pass"] = pass;

    Json rec;
    rec["command"] = "check";
    rec["params"] = params_json(c);
    rec["outputs"] = std::move(out);
    rec["provenance"] = provenance_json(c, std::nullopt);
    rec["config"] = config_json(c);
    rec["wall_time"] = seconds_since(t0);
    os << rec.dump() << '\n';
    return pass ? kExitOk : kExitCheckFailed;
}

int cmd_gn_estimate(const RunConfig& c, std::ostream& os) {
    const auto t0 = std::chrono::steady_clock::now();
    Json out = Json::array();
    GNConstants gn;
    gn.provenance = Provenance::Estimated;
    std::vector<double> exps{c.q};
    if (c.p) exps.push_back(*c.p);
    for (double q : exps) {
        spdlog::info("estimating the Gagliardo-Nirenberg constant for q = {}", q);
        const auto est = estimate_gn_constant(c.grid(), q, c.solve_options(), gn_options(c));
        out.push_back({{"q", q},
                       {"C", est.constants.Cq},
                       {"max_observed", est.max_observed},
                       {"starts", est.starts},
                       {"per_start", est.per_start}});
        if (q == c.q) {
            gn.q = q;
            gn.Cq = est.constants.Cq;
        } else {
            gn.p = q;
            gn.Cp = est.constants.Cq;
        }
    }
    Json rec;
    rec["command"] = "gn-estimate";
    rec["params"] = params_json(c);
    rec["outputs"] = std::move(out);
    rec["provenance"] = provenance_json(c, gn);
    rec["config"] = config_json(c);
    rec["wall_time"] = seconds_since(t0);
    os << rec.dump() << '\n';
    return kExitOk;
}

int cmd_sweep(const RunConfig& c, std::ostream& os) {
    const std::vector<SweepKey> keys = sweep_keys(c);
    // Validate every key and the constants it needs before any compute.
    bool any_constants = false;
    for (const auto& k : keys) {
        const RunConfig kc = key_config(c, k);
        try {
            any_constants |= needs_constants(kc);
        } catch (const DomainError&) {
            // Invalid exponent combinations become per-key error records.
        }
    }
    if (any_constants) require_constants(c);
    if (c.init == InitKind::File) (void)read_field(c.init_file);

    const fs::path dir(c.out);
    fs::create_directories(dir);
    const fs::path path = dir / "sweep.jsonl";
    const std::set<SweepKey> present = resume_keys(path);
    if (!fs::exists(path)) std::ofstream(path).flush();

    std::vector<SweepKey> todo;
    for (const auto& k : keys)
        if (!present.count(k)) todo.push_back(k);
    spdlog::info("sweep: {} keys, {} already present, {} to run on {} workers", keys.size(),
                 keys.size() - todo.size(), todo.size(), c.workers);

    Estimates memo;
    if (c.estimate)
        for (const auto& k : todo) {
            const RunConfig kc = key_config(c, k);
            try {
                if (needs_constants(kc)) fill_estimates(kc, memo);
            } catch (const DomainError&) {
            }
        }

    const std::function<KeyResult(std::size_t)> task = [&](std::size_t i) {
        const auto t0 = std::chrono::steady_clock::now();
        const SweepKey& k = todo[i];
        const RunConfig kc = key_config(c, k);
        KeyResult r;
        Json& rec = r.record;
        rec["command"] = "sweep";
        rec["key"] = key_json(k);
        try {
            SolveOutcome s = solve_point(kc, memo, false);
            rec["status"] = s.converged ? "converged" : "not-converged";
            rec["params"] = params_json(kc);
            rec["outputs"] = std::move(s.outputs);
            rec["provenance"] = provenance_json(kc, s.gn);
            r.ok = s.converged;
        } catch (const Error& e) {
            rec["status"] = "error";
            rec["error"] = e.what();
            rec["params"] = params_json(kc);
            rec["outputs"] = nullptr;
            rec["provenance"] = provenance_json(kc, std::nullopt);
        }
        rec["config"] = config_json(c);
        rec["wall_time"] = seconds_since(t0);
        return r;
    };
    std::size_t failed = 0;
    const std::function<void(std::size_t, KeyResult&&)> sink = [&](std::size_t i, KeyResult&& r) {
        append_line(path, r.record.dump());
        if (!r.ok) {
            ++failed;
            spdlog::warn("sweep key {}: {}", key_json(todo[i]).dump(), r.record["status"].get<std::string>());
        }
    };
    ordered_parallel<KeyResult>(todo.size(), c.workers, task, sink);

    Json summary = {{"command", "sweep"},
                    {"output", path.string()},
                    {"keys", keys.size()},
                    {"skipped", keys.size() - todo.size()},
                    {"ran", todo.size()},
                    {"failed", failed}};
    os << summary.dump() << '\n';
    return failed == 0 ? kExitOk : kExitNotConverged;
}

int run_command(const std::string& name, const KeyValues& kv, std::ostream& out) {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        spdlog::error("unknown command: {}", name);
        return kExitInput;
    }
    try {
        const RunConfig c = make_config(kv);
        if (name == "solve") return cmd_solve(c, out);
        if (name == "thresholds") return cmd_thresholds(c, out);
        if (name == "fiber") return cmd_fiber(c, out);
        if (name == "sweep") return cmd_sweep(c, out);
        if (name == "check") return cmd_check(c, out);
        return cmd_gn_estimate(c, out);
    } catch (const ConfigError& e) {
        spdlog::error("config: {}", e.what());
    } catch (const FormatError& e) {
        spdlog::error("input file: {}", e.what());
    } catch (const FiberError& e) {
        spdlog::error("fiber: {}", e.what());
    } catch (const DomainError& e) {
        spdlog::error("domain: {}", e.what());
    } catch (const GridError& e) {
        spdlog::error("grid: {}", e.what());
    }
    return kExitInput;
}

}  // namespace kpnw
