#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qscf/hamiltonian.hpp"
#include "qscf/qest.hpp"
#include "qscf/scf.hpp"

namespace qscf {

enum class Experiment { run, sweep_damping, compare, approx_error, mu_track };
enum class SystemKind { chain, frozen, surrogate };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fully resolved experiment configuration. Parsed from a flat key = value
/// file; every key is listed in config_help() together with its default.
struct RunConfig {
    Experiment experiment = Experiment::run;  // set by the CLI subcommand
    SystemKind system = SystemKind::chain;
    double beta = 4.0;

    std::vector<int> grid_points = {256};
    std::vector<double> grid_length = {32.0};
    std::vector<Bc> grid_bc = {Bc::periodic};
    std::vector<int> grid_stride = {8};
    int grid_order = 2;

    int chain_atoms = 8;
    std::vector<double> chain_charges = {2.0, 1.0};
    double chain_sigma = 0.5;

    int surrogate_dim = 64;
    double surrogate_c = 0.9;
    double surrogate_design_a = 1.0;
    double surrogate_offset = 30.0;
    double surrogate_shot_sigma = 0.5;
    double surrogate_e0 = 1.0;

    ScfMode mode = ScfMode::fcfp;
    double damping = 0.3;
    int block_size = 4;
    double tol = 1e-6;
    int max_iter = 500;
    double eps_poly = 1e-6;

    MuPolicy::Kind mu_mode = MuPolicy::Kind::fixed;
    double mu_value = 0.0;
    double eta = 0.1;
    double electron_count = 0.0;  // <= 0: sum of the chain charges

    NoiseModel::Kind noise = NoiseModel::Kind::exact;
    long long shots = 10000;
    double noise_eps = 0.01;
    double noise_delta = 0.05;

    BoundsMethod bounds = BoundsMethod::lanczos;
    int bounds_k = 20;

    std::uint64_t seed = 1;
    std::string reference = "auto";  // auto | none | path to a density file
    std::string weights;             // optional path: diagnostic weighted norm
    int ensemble = 1;

    std::vector<double> sweep_a = {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    std::vector<int> compare_m = {1, 4, 8};
    double compare_a_fcfp = 0.3;
    double compare_a_rbcfp = 0.95;
    std::vector<int> approx_degrees = {50, 200, 500};
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

[[noreturn]] inline void bad_value(const std::string& key, int line, const std::string& why) {
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key + "': " + why);
}

inline double parse_double(const std::string& key, int line, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) bad_value(key, line, "trailing characters in number '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, line, "expected a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, int line, const std::string& v) {
    long long x = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        bad_value(key, line, "expected an integer, got '" + v + "'");
    return x;
}

inline std::uint64_t parse_u64(const std::string& key, int line, const std::string& v) {
    std::uint64_t x = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        bad_value(key, line, "expected an unsigned integer, got '" + v + "'");
    return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

}  // namespace detail

/// Parses the flat key = value config format ('#' starts a comment). Unknown
/// keys, malformed values and out-of-range values are errors that name the
/// offending key and line.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    using Handler = std::function<void(const std::string&, int, const std::string&)>;
    std::map<std::string, Handler> keys;

    auto int_key = [&](const std::string& name, int& slot, long long lo, long long hi) {
        keys[name] = [&slot, lo, hi](const std::string& k, int line, const std::string& v) {
            const long long x = detail::parse_int(k, line, v);
            if (x < lo || x > hi)
                detail::bad_value(k, line, "value " + v + " outside [" + std::to_string(lo) + ", " +
                                               std::to_string(hi) + "]");
            slot = static_cast<int>(x);
        };
    };
    auto double_key = [&](const std::string& name, double& slot, double lo, double hi,
                          bool lo_open, bool hi_open) {
        keys[name] = [&slot, lo, hi, lo_open, hi_open](const std::string& k, int line,
                                                       const std::string& v) {
            const double x = detail::parse_double(k, line, v);
            const bool below = lo_open ? x <= lo : x < lo;
            const bool above = hi_open ? x >= hi : x > hi;
            if (below || above) {
                std::ostringstream why;
                why << "value " << v << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi
                    << (hi_open ? ")" : "]");
                detail::bad_value(k, line, why.str());
            }
            slot = x;
        };
    };
    const double inf = std::numeric_limits<double>::infinity();

    keys["system"] = [&](const std::string& k, int line, const std::string& v) {
        const std::string s = detail::lower(v);
        if (s == "chain") cfg.system = SystemKind::chain;
        else if (s == "frozen") cfg.system = SystemKind::frozen;
        else if (s == "surrogate") cfg.system = SystemKind::surrogate;
        else detail::bad_value(k, line, "expected chain | frozen | surrogate");
    };
    double_key("beta", cfg.beta, 0.0, inf, true, true);

    keys["grid.points"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.grid_points.clear();
        for (const auto& p : detail::split_list(v)) {
            const long long x = detail::parse_int(k, line, p);
            if (x < 3) detail::bad_value(k, line, "each extent must be >= 3");
            cfg.grid_points.push_back(static_cast<int>(x));
        }
        if (cfg.grid_points.empty() || cfg.grid_points.size() > 3)
            detail::bad_value(k, line, "expected 1 to 3 comma-separated extents");
    };
    keys["grid.length"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.grid_length.clear();
        for (const auto& p : detail::split_list(v)) {
            const double x = detail::parse_double(k, line, p);
            if (!(x > 0.0)) detail::bad_value(k, line, "each length must be positive");
            cfg.grid_length.push_back(x);
        }
        if (cfg.grid_length.empty() || cfg.grid_length.size() > 3)
            detail::bad_value(k, line, "expected 1 to 3 comma-separated lengths");
    };
    keys["grid.bc"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.grid_bc.clear();
        for (const auto& p : detail::split_list(v)) {
            const std::string s = detail::lower(p);
            if (s == "periodic") cfg.grid_bc.push_back(Bc::periodic);
            else if (s == "dirichlet") cfg.grid_bc.push_back(Bc::dirichlet);
            else detail::bad_value(k, line, "expected periodic | dirichlet per axis");
        }
        if (cfg.grid_bc.empty() || cfg.grid_bc.size() > 3)
            detail::bad_value(k, line, "expected 1 to 3 comma-separated conditions");
    };
    keys["grid.stride"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.grid_stride.clear();
        for (const auto& p : detail::split_list(v)) {
            const long long x = detail::parse_int(k, line, p);
            if (x < 1) detail::bad_value(k, line, "each stride must be >= 1");
            cfg.grid_stride.push_back(static_cast<int>(x));
        }
        if (cfg.grid_stride.empty() || cfg.grid_stride.size() > 3)
            detail::bad_value(k, line, "expected 1 to 3 comma-separated strides");
    };
    keys["grid.order"] = [&](const std::string& k, int line, const std::string& v) {
        const long long x = detail::parse_int(k, line, v);
        if (x != 2 && x != 4) detail::bad_value(k, line, "order must be 2 or 4");
        cfg.grid_order = static_cast<int>(x);
    };

    int_key("chain.atoms", cfg.chain_atoms, 1, 1 << 20);
    keys["chain.charges"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.chain_charges.clear();
        for (const auto& p : detail::split_list(v)) {
            const double x = detail::parse_double(k, line, p);
            if (!(x > 0.0)) detail::bad_value(k, line, "charges must be positive");
            cfg.chain_charges.push_back(x);
        }
        if (cfg.chain_charges.empty()) detail::bad_value(k, line, "expected at least one charge");
    };
    double_key("chain.sigma", cfg.chain_sigma, 0.0, inf, true, true);

    int_key("surrogate.dim", cfg.surrogate_dim, 1, 1 << 20);
    double_key("surrogate.c", cfg.surrogate_c, 0.0, 1.0, false, true);
    double_key("surrogate.design_a", cfg.surrogate_design_a, 0.0, 1.0, true, false);
    double_key("surrogate.offset", cfg.surrogate_offset, -inf, inf, true, true);
    double_key("surrogate.shot_sigma", cfg.surrogate_shot_sigma, 0.0, inf, true, true);
    double_key("surrogate.e0", cfg.surrogate_e0, 0.0, inf, true, true);

    keys["mode"] = [&](const std::string& k, int line, const std::string& v) {
        const std::string s = detail::lower(v);
        if (s == "fcfp") cfg.mode = ScfMode::fcfp;
        else if (s == "rbcfp") cfg.mode = ScfMode::rbcfp;
        else detail::bad_value(k, line, "expected fcfp | rbcfp");
    };
    double_key("a", cfg.damping, 0.0, 1.0, true, false);
    int_key("m", cfg.block_size, 1, 1 << 20);
    double_key("tol", cfg.tol, 0.0, inf, true, true);
    int_key("max_iter", cfg.max_iter, 1, 1 << 30);
    double_key("eps_poly", cfg.eps_poly, 0.0, 1.0, true, true);

    keys["mu.mode"] = [&](const std::string& k, int line, const std::string& v) {
        const std::string s = detail::lower(v);
        if (s == "fixed") cfg.mu_mode = MuPolicy::Kind::fixed;
        else if (s == "constrained") cfg.mu_mode = MuPolicy::Kind::constrained;
        else detail::bad_value(k, line, "expected fixed | constrained");
    };
    double_key("mu.value", cfg.mu_value, -inf, inf, true, true);
    double_key("mu.eta", cfg.eta, 0.0, 1.0, true, true);
    double_key("mu.ne", cfg.electron_count, -inf, inf, true, true);

    keys["noise"] = [&](const std::string& k, int line, const std::string& v) {
        const std::string s = detail::lower(v);
        if (s == "exact") cfg.noise = NoiseModel::Kind::exact;
        else if (s == "born") cfg.noise = NoiseModel::Kind::born_shots;
        else if (s == "bounded") cfg.noise = NoiseModel::Kind::bounded;
        else detail::bad_value(k, line, "expected exact | born | bounded");
    };
    keys["noise.shots"] = [&](const std::string& k, int line, const std::string& v) {
        const long long x = detail::parse_int(k, line, v);
        if (x < 1) detail::bad_value(k, line, "shots must be >= 1");
        cfg.shots = x;
    };
    double_key("noise.eps", cfg.noise_eps, 0.0, inf, true, true);
    double_key("noise.delta", cfg.noise_delta, 0.0, 1.0, true, true);

    keys["bounds"] = [&](const std::string& k, int line, const std::string& v) {
        const std::string s = detail::lower(v);
        if (s == "gershgorin") cfg.bounds = BoundsMethod::gershgorin;
        else if (s == "lanczos") cfg.bounds = BoundsMethod::lanczos;
        else detail::bad_value(k, line, "expected gershgorin | lanczos");
    };
    int_key("bounds.k", cfg.bounds_k, 2, 10000);

    keys["seed"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.seed = detail::parse_u64(k, line, v);
    };
    keys["reference"] = [&](const std::string&, int, const std::string& v) { cfg.reference = v; };
    keys["weights"] = [&](const std::string&, int, const std::string& v) { cfg.weights = v; };
    int_key("ensemble", cfg.ensemble, 1, 1 << 20);

    keys["sweep.a"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.sweep_a.clear();
        for (const auto& p : detail::split_list(v)) {
            const double x = detail::parse_double(k, line, p);
            if (!(x > 0.0 && x <= 1.0)) detail::bad_value(k, line, "each damping must lie in (0, 1]");
            cfg.sweep_a.push_back(x);
        }
        if (cfg.sweep_a.empty()) detail::bad_value(k, line, "expected at least one damping value");
    };
    keys["compare.m"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.compare_m.clear();
        for (const auto& p : detail::split_list(v)) {
            const long long x = detail::parse_int(k, line, p);
            if (x < 1) detail::bad_value(k, line, "block sizes must be >= 1");
            cfg.compare_m.push_back(static_cast<int>(x));
        }
        if (cfg.compare_m.empty()) detail::bad_value(k, line, "expected at least one block size");
    };
    double_key("compare.a_fcfp", cfg.compare_a_fcfp, 0.0, 1.0, true, false);
    double_key("compare.a_rbcfp", cfg.compare_a_rbcfp, 0.0, 1.0, true, false);
    keys["approx.degrees"] = [&](const std::string& k, int line, const std::string& v) {
        cfg.approx_degrees.clear();
        for (const auto& p : detail::split_list(v)) {
            const long long x = detail::parse_int(k, line, p);
            if (x < 0) detail::bad_value(k, line, "degrees must be nonnegative");
            cfg.approx_degrees.push_back(static_cast<int>(x));
        }
        if (cfg.approx_degrees.empty()) detail::bad_value(k, line, "expected at least one degree");
    };

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (value.empty()) detail::bad_value(key, line_no, "empty value");
        it->second(key, line_no, value);
    }
    return cfg;
}

/// One line per config key: name, default, meaning. Printed by --help.
inline std::string config_help() {
    return
        "Config file format: one 'key = value' pair per line, '#' comments.\n"
        "Unknown keys are errors. Keys and defaults:\n"
        "  system            chain      chain | frozen | surrogate\n"
        "  beta              4.0        inverse temperature\n"
        "  grid.points       256        fine points per axis (1-3 comma-separated)\n"
        "  grid.length       32.0       box lengths per axis (Bohr)\n"
        "  grid.bc           periodic   periodic | dirichlet per axis\n"
        "  grid.stride       8          coarse stride per axis (interpolation points)\n"
        "  grid.order        2          finite-difference order, 2 | 4\n"
        "  chain.atoms       8          atoms in the chain\n"
        "  chain.charges     2,1        alternating charge pattern\n"
        "  chain.sigma       0.5        pseudocharge Gaussian width\n"
        "  surrogate.dim     64         surrogate dimension N_I\n"
        "  surrogate.c       0.9        target contraction factor in [0,1)\n"
        "  surrogate.design_a 1.0       damping the contraction is calibrated at\n"
        "  surrogate.offset  30.0       fixed-point offset (keeps the clip inactive)\n"
        "  surrogate.shot_sigma 0.5     per-shot noise scale of the Born proxy\n"
        "  surrogate.e0      1.0        ||n_0 - n_*|| of the start\n"
        "  mode              fcfp       fcfp | rbcfp\n"
        "  a                 0.3        mixing damping, (0, 1]\n"
        "  m                 4          RBCFP block size\n"
        "  tol               1e-6       relative-error stopping threshold\n"
        "  max_iter          500        iteration cap\n"
        "  eps_poly          1e-6       Chebyshev approximation target\n"
        "  mu.mode           fixed      fixed | constrained\n"
        "  mu.value          0.0        chemical potential (fixed mode)\n"
        "  mu.eta            0.1        mu damping (constrained mode), (0,1)\n"
        "  mu.ne             0          electron target; <= 0 means sum of charges\n"
        "  noise             exact      exact | born | bounded\n"
        "  noise.shots       10000      Born shots per coordinate\n"
        "  noise.eps         0.01       bounded-noise accuracy\n"
        "  noise.delta       0.05       bounded-noise failure probability, (0,1)\n"
        "  bounds            lanczos    lanczos | gershgorin\n"
        "  bounds.k          20         Lanczos steps\n"
        "  seed              1          base seed (all randomness derives from it)\n"
        "  reference         auto       auto | none | path (ground-truth density)\n"
        "  weights           (empty)    optional path: weights for a diagnostic norm\n"
        "  ensemble          1          independent runs for `run`\n"
        "  sweep.a           0.1,...    damping values for sweep-damping\n"
        "  compare.m         1,4,8      RBCFP block sizes for compare\n"
        "  compare.a_fcfp    0.3        FCFP damping for compare\n"
        "  compare.a_rbcfp   0.95       RBCFP damping for compare\n"
        "  approx.degrees    50,200,500 degrees for approx-error\n";
}

}  // namespace qscf
