#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kpnw/commands.hpp"
#include "kpnw/config.hpp"
#include "kpnw/error.hpp"
#include "kpnw/records.hpp"

namespace {

// Flag name -> config key. Flags are kept as strings and validated with the
// config file, so both paths report errors the same way.
const std::map<std::string, std::string> kFlagKeys = {
    {"grid", "grid"},       {"box", "box"},           {"a", "a"},
    {"q", "q"},             {"p", "p"},               {"mu", "mu"},
    {"seed", "seed"},       {"max-iters", "max_iters"}, {"tol", "tol"},
    {"workers", "workers"}, {"Cq", "Cq"},             {"Cp", "Cp"},
    {"init", "init"},       {"init-file", "init_file"}, {"out", "out"},
    {"pohozaev-tol", "pohozaev_tol"}, {"eq-tol", "eq_tol"},
    {"sweep-a", "sweep.a"}, {"sweep-q", "sweep.q"},   {"sweep-p", "sweep.p"},
    {"sweep-mu", "sweep.mu"},
};

const std::map<std::string, std::string> kAbout = {
    {"solve", "solve for a normalized solution in the regime the exponents select"},
    {"thresholds", "report a*, K, a0, rho0 and the trichotomy for the given constants"},
    {"fiber", "analyse the fiber map of a stored field"},
    {"sweep", "solve over a product of parameter lists, resumable"},
    {"check", "residuals of a stored field against the equation and P = 0"},
    {"gn-estimate", "estimate Gagliardo-Nirenberg constants by ascent from random starts"},
};

}  // namespace

int main(int argc, char** argv) {
    auto log = spdlog::stderr_color_mt("kpnw");
    spdlog::set_default_logger(log);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

    CLI::App app{"Normalized solutions of the generalized KP equation"};
    app.set_version_flag("--version", std::string(kpnw::version_string()));
    app.require_subcommand(1);

    std::string config_path, field_path, log_level = "info";
    bool estimate = false;
    std::map<std::string, std::string> flag_values;

    for (const auto& name : kpnw::command_names()) {
        CLI::App* sub = app.add_subcommand(name, kAbout.at(name));
        sub->add_option("--config", config_path, "key=value config file");
        for (const auto& [flag, key] : kFlagKeys) sub->add_option("--" + flag, flag_values[flag], "sets " + key);
        sub->add_flag("--estimate", estimate, "estimate the Gagliardo-Nirenberg constants");
        sub->add_option("--log-level", log_level, "trace, debug, info, warn, error, off");
        if (name == "fiber" || name == "check") sub->add_option("field", field_path, "field file")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kpnw::kExitInput;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    const CLI::App* sub = app.get_subcommands().front();
    kpnw::KeyValues kv;
    try {
        if (!config_path.empty()) kv = kpnw::read_key_values(config_path);
    } catch (const kpnw::Error& e) {
        spdlog::error("config: {}", e.what());
        return kpnw::kExitInput;
    }
    for (const auto& [flag, key] : kFlagKeys)
        if (sub->count("--" + flag) > 0) kv[key] = flag_values[flag];
    if (estimate) kv["estimate"] = "true";
    if (!field_path.empty()) kv["field"] = field_path;

    return kpnw::run_command(sub->get_name(), kv, std::cout);
}
