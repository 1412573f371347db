#include "kpnw/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kpnw/error.hpp"

namespace kpnw {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

long long to_int(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

// "AxB" with both parts parsed by f.
template <class F>
auto pair_of(const std::string& key, const std::string& s, F f) {
    const auto x = s.find_first_of("xX");
    if (x == std::string::npos) throw ConfigError(key + ": expected AxB, got '" + s + "'");
    return std::make_pair(f(key, s.substr(0, x)), f(key, s.substr(x + 1)));
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(n);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(where + ": duplicate key " + key);
    }
    return kv;
}

KeyValues read_key_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str(), path);
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "grid",     "box",       "a",         "q",          "p",        "mu",          "dealias",    "seed",
        "max_iters", "tol",      "pohozaev_tol", "eq_tol",  "init",     "init_file",   "estimate",   "Cq",
        "Cp",       "gn_starts", "gn_headroom", "probe_stop", "field",  "out",         "workers",    "sweep.a",
        "sweep.q",  "sweep.p",   "sweep.mu"};
    return keys;
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    std::vector<double> v;
    if (t.empty()) return v;
    if (t.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(t);
        for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
        if (parts.size() != 3) throw ConfigError(key + ": expected lo:hi:n");
        const double lo = to_double(key, parts[0]), hi = to_double(key, parts[1]);
        const long long n = to_int(key, parts[2]);
        if (n < 0) throw ConfigError(key + ": negative point count");
        for (long long k = 0; k < n; ++k) v.push_back(n == 1 ? lo : lo + (hi - lo) * double(k) / double(n - 1));
        return v;
    }
    std::stringstream ss(t);
    for (std::string part; std::getline(ss, part, ',');) v.push_back(to_double(key, part));
    return v;
}

RSpec RunConfig::nonlinearity() const {
    RSpec nl = p ? RSpec::mixed(mu, q, *p) : RSpec::pure(q);
    nl.dealias = dealias;
    return nl;
}

SolveOptions RunConfig::solve_options() const {
    SolveOptions o;
    o.max_iters = max_iters;
    o.grad_tol = tol;
    o.pohozaev_tol = pohozaev_tol;
    o.seed = seed;
    o.init = init;
    return o;
}

RunConfig make_config(const KeyValues& kv) {
    const auto& keys = known_keys();
    for (const auto& [k, v] : kv)
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown key: " + k);

    RunConfig c;
    auto get = [&](const std::string& k) -> const std::string* {
        const auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("grid")) std::tie(c.nx, c.ny) = pair_of("grid", *v, to_int);
    if (auto v = get("box")) std::tie(c.Lx, c.Ly) = pair_of("box", *v, to_double);
    if (auto v = get("a")) c.a = to_double("a", *v);
    if (auto v = get("q")) c.q = to_double("q", *v);
    if (auto v = get("p"); v && !trim(*v).empty()) c.p = to_double("p", *v);
    if (auto v = get("mu")) c.mu = to_double("mu", *v);
    if (auto v = get("dealias")) c.dealias = to_bool("dealias", *v);
    if (auto v = get("seed")) {
        const long long s = to_int("seed", *v);
        if (s < 0) throw ConfigError("seed: must be non-negative");
        c.seed = std::uint64_t(s);
    }
    if (auto v = get("max_iters")) c.max_iters = int(to_int("max_iters", *v));
    if (auto v = get("tol")) c.tol = to_double("tol", *v);
    if (auto v = get("pohozaev_tol")) c.pohozaev_tol = to_double("pohozaev_tol", *v);
    if (auto v = get("eq_tol")) c.eq_tol = to_double("eq_tol", *v);
    if (auto v = get("init")) {
        try {
            c.init = parse_init_kind(trim(*v));
        } catch (const DomainError& e) {
            throw ConfigError(std::string("init: ") + e.what());
        }
    }
    if (auto v = get("init_file")) c.init_file = trim(*v);
    if (auto v = get("estimate")) c.estimate = to_bool("estimate", *v);
    if (auto v = get("Cq")) c.Cq = to_double("Cq", *v);
    if (auto v = get("Cp")) c.Cp = to_double("Cp", *v);
    if (auto v = get("gn_starts")) c.gn_starts = int(to_int("gn_starts", *v));
    if (auto v = get("gn_headroom")) c.gn_headroom = to_double("gn_headroom", *v);
    if (auto v = get("probe_stop")) c.probe_stop = to_double("probe_stop", *v);
    if (auto v = get("field")) c.field = trim(*v);
    if (auto v = get("out")) c.out = trim(*v);
    if (auto v = get("workers")) {
        c.workers = int(to_int("workers", *v));
    } else if (const char* env = std::getenv("KPNW_WORKERS"); env && *env) {
        c.workers = int(to_int("KPNW_WORKERS", env));
    }
    if (auto v = get("sweep.a")) c.sweep_a = parse_list("sweep.a", *v);
    if (auto v = get("sweep.q")) c.sweep_q = parse_list("sweep.q", *v);
    if (auto v = get("sweep.p")) c.sweep_p = parse_list("sweep.p", *v);
    if (auto v = get("sweep.mu")) c.sweep_mu = parse_list("sweep.mu", *v);

    try {
        (void)c.grid();
    } catch (const GridError& e) {
        throw ConfigError(std::string("grid/box: ") + e.what());
    }
    if (!(c.a > 0)) throw ConfigError("a: must be positive");
    try {
        (void)c.nonlinearity();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("q/p/mu: ") + e.what());
    }
    if (c.max_iters < 1) throw ConfigError("max_iters: must be at least 1");
    if (!(c.tol > 0) || !(c.pohozaev_tol > 0) || !(c.eq_tol > 0)) throw ConfigError("tolerances must be positive");
    if (c.Cq && !(*c.Cq > 0)) throw ConfigError("Cq: must be positive");
    if (c.Cp && !(*c.Cp > 0)) throw ConfigError("Cp: must be positive");
    if (c.gn_starts < 8) throw ConfigError("gn_starts: at least 8 starts");
    if (!(c.gn_headroom >= 0)) throw ConfigError("gn_headroom: must be non-negative");
    if (!(c.probe_stop > 0 && c.probe_stop < 1)) throw ConfigError("probe_stop: must lie in (0,1)");
    if (c.workers < 1) throw ConfigError("workers: must be at least 1");
    if (c.init == InitKind::File && c.init_file.empty()) throw ConfigError("init=file needs init_file");
    if (c.out.empty()) throw ConfigError("out: empty path");
    for (const auto* axis : {&c.sweep_a, &c.sweep_mu})
        if (*axis)
            for (double v : **axis)
                if (!(v > 0)) throw ConfigError("sweep.a and sweep.mu values must be positive");
    if (c.sweep_q)
        for (double v : *c.sweep_q)
            if (!(v > 2 && v < 6)) throw ConfigError("sweep.q values must lie in (2,6)");
    if (c.sweep_p)
        for (double v : *c.sweep_p)
            if (!(v > 2 && v < 6)) throw ConfigError("sweep.p values must lie in (2,6)");
    return c;
}

}  // namespace kpnw
