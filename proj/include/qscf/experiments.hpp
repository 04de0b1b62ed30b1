#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qscf/config.hpp"
#include "qscf/oracle.hpp"
#include "qscf/toymodels.hpp"

namespace qscf {

constexpr const char* kToolVersion = "0.2.0";

/// Round-trip-exact float serialization (17 significant digits).
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string trace_csv(const ConvergenceTrace& trace) {
    std::ostringstream out;
    out << "# schema=qscf.trace.v1\n";
    out << "iter,coord_evals,err,err_w,mu,ghat,queries,clips\n";
    for (const auto& r : trace.rows) {
        out << r.iteration << ',' << r.coordinate_evaluations << ',' << format_g17(r.error) << ','
            << format_g17(r.error_weighted) << ',' << format_g17(r.mu) << ',' << format_g17(r.ghat)
            << ',' << r.queries << ',' << r.clips << '\n';
    }
    return out.str();
}

inline std::vector<double> read_density_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open density file " + path);
    std::vector<double> v;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = qscf::detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        v.push_back(std::stod(t));
    }
    if (v.empty()) throw std::runtime_error("density file " + path + " is empty");
    return v;
}

}  // namespace detail

inline std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::run: return "run";
        case Experiment::sweep_damping: return "sweep-damping";
        case Experiment::compare: return "compare";
        case Experiment::approx_error: return "approx-error";
        case Experiment::mu_track: return "mu-track";
    }
    return "?";
}

inline KsOptions ks_options_from(const RunConfig& cfg) {
    KsOptions opt;
    opt.eps_poly = cfg.eps_poly;
    opt.bounds = cfg.bounds;
    opt.lanczos_k = cfg.bounds_k;
    opt.bounds_seed = derive_seed(cfg.seed, 0xb0d5ull);
    return opt;
}

inline std::unique_ptr<FixedPointSystem> build_system(const RunConfig& cfg) {
    if (cfg.system == SystemKind::surrogate) {
        return std::make_unique<LinearSurrogate>(make_linear_surrogate(
            cfg.surrogate_dim, cfg.surrogate_c, derive_seed(cfg.seed, 0x5a6eull),
            cfg.surrogate_design_a, cfg.surrogate_offset, cfg.surrogate_shot_sigma, cfg.surrogate_e0));
    }
    if (cfg.grid_points.size() != 1)
        throw std::invalid_argument("chain systems need a one-dimensional grid");
    ChainParams p;
    p.n_atoms = cfg.chain_atoms;
    p.length = cfg.grid_length[0];
    p.points = cfg.grid_points[0];
    p.beta = cfg.beta;
    p.stride = cfg.grid_stride[0];
    p.charge_pattern = cfg.chain_charges;
    p.sigma = cfg.chain_sigma;
    p.electron_count = cfg.electron_count > 0.0 ? cfg.electron_count : -1.0;
    p.fd_order = cfg.grid_order;
    p.options = ks_options_from(cfg);
    return std::make_unique<KohnShamSystem>(make_chain(p, cfg.system == SystemKind::frozen));
}

inline MuPolicy mu_policy_from(const RunConfig& cfg, const FixedPointSystem& sys) {
    if (cfg.mu_mode == MuPolicy::Kind::fixed) return MuPolicy::fixed(cfg.mu_value);
    double n_e = cfg.electron_count;
    if (n_e <= 0.0) {
        const auto* ks = dynamic_cast<const KohnShamSystem*>(&sys);
        if (!ks) throw std::invalid_argument("constrained mode needs mu.ne for surrogate systems");
        n_e = ks->electron_count();
    }
    return MuPolicy::constrained(n_e, cfg.eta);
}

inline NoiseModel noise_from(const RunConfig& cfg) {
    switch (cfg.noise) {
        case NoiseModel::Kind::exact: return NoiseModel::exact(cfg.seed);
        case NoiseModel::Kind::born_shots: return NoiseModel::born(cfg.shots, cfg.seed);
        case NoiseModel::Kind::bounded: return NoiseModel::bounded(cfg.noise_eps, cfg.noise_delta, cfg.seed);
    }
    return NoiseModel::exact(cfg.seed);
}

inline ScfConfig scf_config_from(const RunConfig& cfg, const FixedPointSystem& sys) {
    ScfConfig s;
    s.mode = cfg.mode;
    s.damping = cfg.damping;
    s.block_size = cfg.block_size;
    s.mu = mu_policy_from(cfg, sys);
    s.tol = cfg.tol;
    s.max_iter = cfg.max_iter;
    s.eps_poly = cfg.eps_poly;
    s.noise = noise_from(cfg);
    s.seed = cfg.seed;
    return s;
}

/// Ground truth for error curves: the surrogate fixed point is closed-form;
/// Kohn-Sham systems run the dense-oracle iteration.
inline std::vector<double> resolve_reference(const RunConfig& cfg, const FixedPointSystem& sys) {
    if (cfg.reference == "none") return {};
    if (cfg.reference != "auto") return detail::read_density_file(cfg.reference);
    if (const auto* sur = dynamic_cast<const LinearSurrogate*>(&sys)) {
        return {sur->fixed_point.data(), sur->fixed_point.data() + sur->fixed_point.size()};
    }
    GroundTruthOptions opts;
    opts.constrained = cfg.mu_mode == MuPolicy::Kind::constrained;
    opts.mu = cfg.mu_value;
    opts.eta = cfg.eta;
    if (opts.constrained) {
        const auto* ks = dynamic_cast<const KohnShamSystem*>(&sys);
        opts.electron_target = cfg.electron_count > 0.0 ? cfg.electron_count : ks->electron_count();
    }
    return ground_truth(sys, opts).density;
}

/// Canonical dump of the resolved configuration; part of the manifest so a
/// run is reproducible from its outputs alone.
inline std::string dump_config(const RunConfig& cfg) {
    std::ostringstream o;
    auto list_i = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    auto list_d = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_g17(v[i]);
        return s;
    };
    o << "system = "
      << (cfg.system == SystemKind::chain ? "chain"
                                          : cfg.system == SystemKind::frozen ? "frozen" : "surrogate")
      << '\n';
    o << "beta = " << format_g17(cfg.beta) << '\n';
    o << "grid.points = " << list_i(cfg.grid_points) << '\n';
    o << "grid.length = " << list_d(cfg.grid_length) << '\n';
    o << "grid.bc = ";
    for (std::size_t i = 0; i < cfg.grid_bc.size(); ++i)
        o << (i ? "," : "") << (cfg.grid_bc[i] == Bc::periodic ? "periodic" : "dirichlet");
    o << '\n';
    o << "grid.stride = " << list_i(cfg.grid_stride) << '\n';
    o << "grid.order = " << cfg.grid_order << '\n';
    o << "chain.atoms = " << cfg.chain_atoms << '\n';
    o << "chain.charges = " << list_d(cfg.chain_charges) << '\n';
    o << "chain.sigma = " << format_g17(cfg.chain_sigma) << '\n';
    o << "surrogate.dim = " << cfg.surrogate_dim << '\n';
    o << "surrogate.c = " << format_g17(cfg.surrogate_c) << '\n';
    o << "surrogate.design_a = " << format_g17(cfg.surrogate_design_a) << '\n';
    o << "surrogate.offset = " << format_g17(cfg.surrogate_offset) << '\n';
    o << "surrogate.shot_sigma = " << format_g17(cfg.surrogate_shot_sigma) << '\n';
    o << "surrogate.e0 = " << format_g17(cfg.surrogate_e0) << '\n';
    o << "mode = " << (cfg.mode == ScfMode::fcfp ? "fcfp" : "rbcfp") << '\n';
    o << "a = " << format_g17(cfg.damping) << '\n';
    o << "m = " << cfg.block_size << '\n';
    o << "tol = " << format_g17(cfg.tol) << '\n';
    o << "max_iter = " << cfg.max_iter << '\n';
    o << "eps_poly = " << format_g17(cfg.eps_poly) << '\n';
    o << "mu.mode = " << (cfg.mu_mode == MuPolicy::Kind::fixed ? "fixed" : "constrained") << '\n';
    o << "mu.value = " << format_g17(cfg.mu_value) << '\n';
    o << "mu.eta = " << format_g17(cfg.eta) << '\n';
    o << "mu.ne = " << format_g17(cfg.electron_count) << '\n';
    o << "noise = "
      << (cfg.noise == NoiseModel::Kind::exact
              ? "exact"
              : cfg.noise == NoiseModel::Kind::born_shots ? "born" : "bounded")
      << '\n';
    o << "noise.shots = " << cfg.shots << '\n';
    o << "noise.eps = " << format_g17(cfg.noise_eps) << '\n';
    o << "noise.delta = " << format_g17(cfg.noise_delta) << '\n';
    o << "bounds = " << (cfg.bounds == BoundsMethod::gershgorin ? "gershgorin" : "lanczos") << '\n';
    o << "bounds.k = " << cfg.bounds_k << '\n';
    o << "seed = " << cfg.seed << '\n';
    o << "reference = " << cfg.reference << '\n';
    o << "weights = " << cfg.weights << '\n';
    o << "ensemble = " << cfg.ensemble << '\n';
    o << "sweep.a = " << list_d(cfg.sweep_a) << '\n';
    o << "compare.m = " << list_i(cfg.compare_m) << '\n';
    o << "compare.a_fcfp = " << format_g17(cfg.compare_a_fcfp) << '\n';
    o << "compare.a_rbcfp = " << format_g17(cfg.compare_a_rbcfp) << '\n';
    o << "approx.degrees = " << list_i(cfg.approx_degrees) << '\n';
    return o.str();
}

struct ExperimentResult {
    int exit_code = 0;
    std::vector<std::string> files;  // emitted CSVs, relative to out_dir
};

namespace detail {

inline RunOptions run_options(const std::vector<double>& reference, const std::vector<double>& weights) {
    RunOptions opts;
    if (!reference.empty()) opts.reference = &reference;
    if (!weights.empty()) opts.weights = &weights;
    return opts;
}

}  // namespace detail

/// Executes one experiment, writing CSVs and a manifest into out_dir.
/// Returns exit code 0 on success, 2 when the only anomaly is a divergence
/// flag; hard errors propagate as exceptions (the CLI maps them to 1).
inline ExperimentResult run_experiment(const RunConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    ExperimentResult result;
    auto emit = [&](const std::string& name, const std::string& content) {
        detail::write_file(out / name, content);
        result.files.push_back(name);
    };

    const auto sys = build_system(cfg);
    std::vector<double> weights;
    if (!cfg.weights.empty()) weights = detail::read_density_file(cfg.weights);

    switch (cfg.experiment) {
        case Experiment::run:
        case Experiment::mu_track: {
            if (cfg.experiment == Experiment::mu_track && cfg.mu_mode != MuPolicy::Kind::constrained)
                throw std::invalid_argument("mu-track requires mu.mode = constrained");
            const std::vector<double> reference = resolve_reference(cfg, *sys);
            const std::string stem = cfg.experiment == Experiment::run ? "trace" : "mu_track";
            bool any_diverged = false;
            for (int k = 0; k < cfg.ensemble; ++k) {
                ScfConfig scf = scf_config_from(cfg, *sys);
                scf.seed = cfg.seed + static_cast<std::uint64_t>(k);
                scf.noise.rng_seed = scf.seed;
                const ConvergenceTrace trace = run_scf(scf, *sys, detail::run_options(reference, weights));
                any_diverged = any_diverged || trace.diverged;
                char name[64];
                std::snprintf(name, sizeof(name), "%s_%03d.csv", stem.c_str(), k);
                emit(name, detail::trace_csv(trace));
            }
            if (any_diverged) result.exit_code = 2;
            break;
        }
        case Experiment::sweep_damping: {
            const std::vector<double> reference = resolve_reference(cfg, *sys);
            std::ostringstream csv;
            csv << "# schema=qscf.sweep.v1\n";
            csv << "a,status,iterations,final_err\n";
            for (double a : cfg.sweep_a) {
                ScfConfig scf = scf_config_from(cfg, *sys);
                scf.mode = ScfMode::fcfp;
                scf.damping = a;
                const ConvergenceTrace trace = run_scf(scf, *sys, detail::run_options(reference, weights));
                const std::string status = trace.converged ? "converged" : "DIVERGED";
                const double final_err = trace.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                            : trace.rows.back().error;
                csv << format_g17(a) << ',' << status << ',' << trace.rows.size() << ','
                    << format_g17(final_err) << '\n';
            }
            emit("sweep.csv", csv.str());
            break;
        }
        case Experiment::compare: {
            const std::vector<double> reference = resolve_reference(cfg, *sys);
            bool any_diverged = false;
            {
                ScfConfig scf = scf_config_from(cfg, *sys);
                scf.mode = ScfMode::fcfp;
                scf.damping = cfg.compare_a_fcfp;
                const ConvergenceTrace trace = run_scf(scf, *sys, detail::run_options(reference, weights));
                any_diverged = any_diverged || trace.diverged;
                emit("compare_fcfp.csv", detail::trace_csv(trace));
            }
            for (int m : cfg.compare_m) {
                ScfConfig scf = scf_config_from(cfg, *sys);
                scf.mode = ScfMode::rbcfp;
                scf.damping = cfg.compare_a_rbcfp;
                scf.block_size = m;
                const ConvergenceTrace trace = run_scf(scf, *sys, detail::run_options(reference, weights));
                any_diverged = any_diverged || trace.diverged;
                char name[64];
                std::snprintf(name, sizeof(name), "compare_rbcfp_m%03d.csv", m);
                emit(name, detail::trace_csv(trace));
            }
            if (any_diverged) result.exit_code = 2;
            break;
        }
        case Experiment::approx_error: {
            const auto* ks = dynamic_cast<const KohnShamSystem*>(sys.get());
            if (!ks) throw std::invalid_argument("approx-error requires a Kohn-Sham system");
            const std::vector<double> n0 = ks->initial_density();
            const double mu = cfg.mu_mode == MuPolicy::Kind::constrained
                                  ? ks->bisect_mu(n0, mu_policy_from(cfg, *sys).electron_target)
                                  : cfg.mu_value;
            const RescaledHamiltonian resc = ks->rescaled(ks->hamiltonian(n0), mu);
            std::ostringstream csv;
            csv << "# schema=qscf.approx.v1\n";
            csv << "degree,measured_max_error,certified_bound\n";
            for (int degree : cfg.approx_degrees) {
                const ChebyshevExpansion exp = cheb_coefficients(resc.beta_hat, resc.log_c, degree);
                double measured = 0.0;
                const int samples = 10000;
                for (int s = 0; s < samples; ++s) {
                    const double x = -1.0 + 2.0 * s / (samples - 1.0);
                    measured = std::max(measured, std::abs(cheb_eval(exp, x) -
                                                           qscf::detail::scaled_fermi(
                                                               x, resc.beta_hat, resc.log_c)));
                }
                csv << degree << ',' << format_g17(measured) << ',' << format_g17(exp.certified_bound)
                    << '\n';
            }
            emit("approx.csv", csv.str());
            break;
        }
    }

    std::ostringstream manifest;
    manifest << "tool = qscf " << kToolVersion << '\n';
    manifest << "experiment = " << experiment_name(cfg.experiment) << '\n';
    manifest << "exit_code = " << result.exit_code << '\n';
    for (const auto& f : result.files) manifest << "output = " << f << '\n';
    manifest << "--- resolved config ---\n" << dump_config(cfg);
    detail::write_file(out / "manifest.txt", manifest.str());
    return result;
}

}  // namespace qscf
