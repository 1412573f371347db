#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kpnw/optimize.hpp"

namespace kpnw {

using KeyValues = std::map<std::string, std::string>;

// Plain key = value lines; '#' starts a comment. Duplicate keys and lines
// without '=' are errors.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "config");
KeyValues read_key_values(const std::string& path);

// Every key a config file or flag may set.
const std::vector<std::string>& known_keys();

struct RunConfig {
    Index nx = 128, ny = 128;
    double Lx = 40, Ly = 40;
    double a = 1;
    double q = 3;
    std::optional<double> p;  // set: combined nonlinearity mu|u|^{q-2}u + |u|^{p-2}u
    double mu = 1;
    bool dealias = false;

    std::uint64_t seed = 0;
    int max_iters = 2000;
    double tol = 1e-8;
    double pohozaev_tol = 1e-6;
    double eq_tol = 1e-6;  // check: strong equation residual
    InitKind init = InitKind::GaussianDerivative;
    std::string init_file;

    bool estimate = false;
    std::optional<double> Cq, Cp;
    int gn_starts = 8;
    double gn_headroom = 0.05;
    double probe_stop = 1e-8;

    std::string field;  // input field for fiber and check
    std::string out = "out";
    int workers = 1;

    // Sweep axes; an unset axis is the single scalar value above.
    std::optional<std::vector<double>> sweep_a, sweep_q, sweep_p, sweep_mu;

    RGrid grid() const { return make_grid<double>(nx, ny, Lx, Ly); }
    RSpec nonlinearity() const;
    SolveOptions solve_options() const;
};

// Parses and validates; throws ConfigError naming the key. KPNW_WORKERS
// supplies workers when the key is absent.
RunConfig make_config(const KeyValues& kv);

// Value lists: "0.5, 1, 2", or "lo:hi:n" for n evenly spaced points. An empty
// string is an empty list.
std::vector<double> parse_list(const std::string& key, const std::string& s);

}  // namespace kpnw
