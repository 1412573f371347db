#include <doctest.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "kpnw/field_file.hpp"
#include "kpnw/records.hpp"

using namespace kpnw;
namespace fs = std::filesystem;

namespace {

const std::string kBinary = KPNW_BINARY;

// Fresh scratch directory per test case.
struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("kpnw_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const Scratch& s, const std::string& args) {
    const std::string o = s / "stdout.txt", e = s / "stderr.txt";
    const std::string cmd = kBinary + " " + args + " > " + o + " 2> " + e;
    const int st = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::vector<Json> lines(const std::string& text) {
    std::vector<Json> v;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) v.push_back(Json::parse(l));
    return v;
}

Json strip_timing(Json j) {
    j.erase("wall_time");
    return j;
}

std::size_t count_lines(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) n += !l.empty();
    return n;
}

const char* kSweep = "sweep --q 3 --sweep-a 0.5,1,1.5,2 --grid 128x128 --box 40x40";

}  // namespace

TEST_CASE("malformed input exits 2 before any output") {
    Scratch s("malformed");
    const std::string out = s / "out";

    Run r = run(s, "solve --a abc --out " + out);
    CHECK(r.code == 2);
    CHECK(!fs::exists(out));
    CHECK(r.err.find("a:") != std::string::npos);

    std::ofstream(s / "bad.cfg") << "a = 1\nwhat\n";
    r = run(s, "solve --config " + s / "bad.cfg" + " --out " + out);
    CHECK(r.code == 2);
    CHECK(!fs::exists(out));

    std::ofstream(s / "unknown.cfg") << "alpha = 1\n";
    r = run(s, "solve --config " + s / "unknown.cfg" + " --out " + out);
    CHECK(r.code == 2);
    CHECK(!fs::exists(out));

    r = run(s, "solve --grid 99x64 --out " + out);
    CHECK(r.code == 2);
    CHECK(!fs::exists(out));

    r = run(s, "solve --no-such-flag");
    CHECK(r.code == 2);

    r = run(s, "check");  // missing field argument
    CHECK(r.code == 2);

    // combined and critical solves need constants
    r = run(s, "solve --q 3 --p 4 --a 0.5 --out " + out);
    CHECK(r.code == 2);
    CHECK(!fs::exists(out));
    r = run(s, "thresholds --q 3 --p 4 --Cq 0.5");
    CHECK(r.code == 2);
    r = run(s, "solve --q 3.3333333333333333 --a 0.5 --out " + out);
    CHECK(r.code == 2);

    r = run(s, "--version");
    CHECK(r.code == 0);
    CHECK(r.out.rfind("0.1.0", 0) == 0);
}

TEST_CASE("solve, check and fiber on the stored field") {
    Scratch s("solve");
    const std::string out = s / "out";
    Run r = run(s, "solve --q 3 --a 1 --out " + out);
    REQUIRE(r.code == 0);
    const Json rec = Json::parse(r.out);
    for (const char* k : {"command", "params", "outputs", "provenance", "config", "wall_time"}) CHECK(rec.contains(k));
    CHECK(rec["outputs"]["converged"] == true);
    CHECK(rec["outputs"]["energy"].get<double>() < 0);
    CHECK(rec["outputs"]["lambda"].get<double>() < 0);
    CHECK(std::abs(rec["outputs"]["pohozaev_residual"].get<double>()) <= 1e-6);
    CHECK(rec["provenance"]["seed"] == 0);
    CHECK(rec["provenance"]["version"] == version_string());
    CHECK(rec["provenance"]["constants"].is_null());
    const std::string field = out + "/solution.kpnw";
    REQUIRE(fs::exists(field));
    CHECK(count_lines(out + "/solve.jsonl") == 1);

    // same seed, same record except wall time
    const std::string out2 = s / "out2";
    Run r2 = run(s, "solve --q 3 --a 1 --out " + out2);
    REQUIRE(r2.code == 0);
    Json a = strip_timing(rec), b = strip_timing(Json::parse(r2.out));
    a["outputs"].erase("field_file");
    b["outputs"].erase("field_file");
    CHECK(a.dump() == b.dump());
    CHECK(slurp(field) == slurp(out2 + "/solution.kpnw"));

    r = run(s, "check --q 3 --a 1 " + field);
    CHECK(r.code == 0);
    const Json chk = Json::parse(r.out);
    CHECK(chk["outputs"]["pass"] == true);

    r = run(s, "check --q 3 --a 1 --eq-tol 1e-14 " + field);
    CHECK(r.code == 1);

    // 1% noise breaks the equation
    FieldFile f = read_field(field);
    {
        std::mt19937_64 gen(11);
        std::normal_distribution<double> n(0, 1);
        RField noise(f.u.rows(), f.u.cols());
        for (Index k = 0; k < noise.size(); ++k) noise(k) = n(gen);
        Spectral<double> sp(f.grid);
        noise = project_admissible(sp, noise);
        noise *= 0.01 * std::sqrt((f.u * f.u).sum() / (noise * noise).sum());
        write_field(s / "noisy.kpnw", f.grid, RField(f.u + noise));
    }
    r = run(s, "check --q 3 --a 1 " + s / "noisy.kpnw");
    CHECK(r.code == 1);
    CHECK(Json::parse(r.out)["outputs"]["pass"] == false);

    // subcritical fiber: stationary minimum near t = 0 on a converged solution
    r = run(s, "fiber --q 3 " + field);
    REQUIRE(r.code == 0);
    const Json fib = Json::parse(r.out);
    CHECK(fib["outputs"]["regime"] == "subcritical");
    CHECK(fib["outputs"]["critical"]["kind"] == "minimum");
    CHECK(std::abs(fib["outputs"]["critical"]["t"].get<double>()) < 1e-3);
    CHECK(fib["outputs"]["samples"].size() == 33);

    // corrupt magic
    std::string bytes = slurp(field);
    bytes[0] = 'Z';
    std::ofstream(s / "corrupt.kpnw", std::ios::binary) << bytes;
    r = run(s, "check --q 3 --a 1 " + s / "corrupt.kpnw");
    CHECK(r.code == 2);
    CHECK(r.out.empty());
    // truncated
    std::ofstream(s / "short.kpnw", std::ios::binary) << slurp(field).substr(0, 1000);
    r = run(s, "fiber --q 3 " + s / "short.kpnw");
    CHECK(r.code == 2);

    // zero field has no fiber
    write_field(s / "zero.kpnw", f.grid, RField::Zero(f.u.rows(), f.u.cols()));
    r = run(s, "fiber --q 4 " + s / "zero.kpnw");
    CHECK(r.code == 2);
    CHECK(r.out.empty());
}

TEST_CASE("fiber on supercritical and combined fields") {
    Scratch s("fiber");
    Run r = run(s, "solve --q 4 --a 1 --out " + s / "sup");
    REQUIRE(r.code == 0);
    r = run(s, "fiber --q 4 " + s / "sup/solution.kpnw");
    REQUIRE(r.code == 0);
    Json crit = Json::parse(r.out)["outputs"]["critical"];
    CHECK(crit["kind"] == "maximum");
    CHECK(std::abs(crit["t"].get<double>()) < 1e-6);
    CHECK(crit["psi"].get<double>() > 0);

    r = run(s, "solve --q 3 --p 4 --mu 1 --a 0.878 --Cq 0.51471 --Cp 0.26462 --out " + s / "comb");
    REQUIRE(r.code == 0);
    const Json rec = Json::parse(r.out);
    CHECK(rec["provenance"]["constants"]["provenance"] == "user-supplied");
    CHECK(rec["outputs"]["a0"].get<double>() > 0);
    r = run(s, "fiber --q 3 --p 4 --mu 1 " + s / "comb/solution.kpnw");
    REQUIRE(r.code == 0);
    crit = Json::parse(r.out)["outputs"]["critical"];
    CHECK(crit["kind"] == "two-roots");
    CHECK(crit["t1"].get<double>() < crit["t2"].get<double>());
    CHECK(crit["psi_t1"].get<double>() < 0);
    CHECK(crit["psi_t2"].get<double>() >= 0);

    r = run(s, "thresholds --q 3 --p 4 --mu 1 --a 0.878 --Cq 0.51471 --Cp 0.26462");
    REQUIRE(r.code == 0);
    const Json th = Json::parse(r.out)["outputs"];
    CHECK(std::abs(th["a0"].get<double>() - 1.75606) < 1e-5);
    CHECK(th["trichotomy"] == "positive");
}

TEST_CASE("sweep is ordered, deterministic and resumable") {
    Scratch s("sweep");
    Run r = run(s, std::string(kSweep) + " --workers 1 --out " + s / "w1");
    REQUIRE(r.code == 0);
    const auto w1 = lines(slurp(s / "w1/sweep.jsonl"));
    REQUIRE(w1.size() == 4);
    double prev = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(w1[i]["key"]["a"] == 0.5 * double(i + 1));
        CHECK(w1[i]["status"] == "converged");
        const double e = w1[i]["outputs"]["energy"].get<double>();
        CHECK(e < 0);
        if (i > 0) CHECK(e < prev);
        prev = e;
    }

    r = run(s, std::string(kSweep) + " --workers 3 --out " + s / "w3");
    REQUIRE(r.code == 0);
    const auto w3 = lines(slurp(s / "w3/sweep.jsonl"));
    REQUIRE(w3.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(strip_timing(w1[i]).dump() == strip_timing(w3[i]).dump());

    // rerun on a complete file adds nothing
    r = run(s, std::string(kSweep) + " --out " + s / "w1");
    REQUIRE(r.code == 0);
    CHECK(Json::parse(r.out)["ran"] == 0);
    CHECK(count_lines(s / "w1/sweep.jsonl") == 4);

    // interrupted mid-line: the partial record is dropped and recomputed
    fs::create_directories(s / "cut");
    {
        std::ofstream o(s / "cut/sweep.jsonl", std::ios::binary);
        o << w1[0].dump() << '\n' << w1[1].dump().substr(0, 40);
    }
    r = run(s, std::string(kSweep) + " --out " + s / "cut");
    REQUIRE(r.code == 0);
    CHECK(Json::parse(r.out)["ran"] == 3);
    const auto cut = lines(slurp(s / "cut/sweep.jsonl"));
    REQUIRE(cut.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(strip_timing(w1[i]).dump() == strip_timing(cut[i]).dump());

    // killed process
    const std::string killed = s / "killed";
    const pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        const std::string log = s / "killed.log";
        const std::string cmd = kBinary + " " + kSweep + " --out " + killed + " 2> " + log + " > /dev/null";
        execl("/bin/sh", "sh", "-c", ("exec " + cmd).c_str(), (char*)nullptr);
        _exit(127);
    }
    for (int k = 0; k < 600 && count_lines(killed + "/sweep.jsonl") < 1; ++k)
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    const std::size_t before = count_lines(killed + "/sweep.jsonl");
    CHECK(before >= 1);
    r = run(s, std::string(kSweep) + " --out " + killed);
    REQUIRE(r.code == 0);
    const auto res = lines(slurp(killed + "/sweep.jsonl"));
    REQUIRE(res.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(strip_timing(w1[i]).dump() == strip_timing(res[i]).dump());

    // an empty axis is an empty sweep
    r = run(s, "sweep --q 3 --sweep-a 1:2:0 --out " + s / "empty");
    CHECK(r.code == 0);
    CHECK(Json::parse(r.out)["keys"] == 0);
    CHECK(count_lines(s / "empty/sweep.jsonl") == 0);

    // an invalid exponent pair is a per-key error, the rest still run
    r = run(s, "sweep --a 0.5 --q 3 --sweep-p 3.2,4 --Cq 0.51471 --Cp 0.26462 --out " + s / "mixed");
    CHECK(r.code == 3);
    const auto mixed = lines(slurp(s / "mixed/sweep.jsonl"));
    REQUIRE(mixed.size() == 2);
    CHECK(mixed[0]["status"] == "error");
    CHECK(mixed[1]["status"] == "converged");
}

TEST_CASE("config file and flags") {
    Scratch s("config");
    std::ofstream(s / "run.cfg") << "# pure power\nq = 4\na = 2   # overridden\nseed = 0\n";
    Run r = run(s, "thresholds --config " + s / "run.cfg" + " --a 1 --Cq 0.3");
    REQUIRE(r.code == 0);
    const Json rec = Json::parse(r.out);
    CHECK(rec["params"]["q"] == 4);
    CHECK(rec["params"]["a"] == 1);
    CHECK(rec["config"]["Cq"] == 0.3);
    CHECK(rec["outputs"]["a_star"].is_null());

    r = run(s, "thresholds --q 3.3333333333333333 --Cq 0.41063");
    REQUIRE(r.code == 0);
    CHECK(std::abs(Json::parse(r.out)["outputs"]["a_star"].get<double>() - std::pow(3 * 0.41063 / 5, -0.75)) < 1e-12);
}
