#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "qscf/qest.hpp"
#include "qscf/rng.hpp"

namespace qscf {

/// A discrete fixed-point problem n = F(n) whose components can be estimated
/// under simulated measurement noise. estimate() must derive its randomness
/// from (noise.rng_seed, iteration, coordinate) only, so that evaluating a
/// subset of coordinates reproduces the corresponding entries of a full
/// evaluation bit for bit.
class FixedPointSystem {
  public:
    virtual ~FixedPointSystem() = default;

    virtual int coords() const = 0;

    virtual std::vector<double> estimate(const std::vector<double>& n, double mu,
                                         std::span<const int> selected, const NoiseModel& noise,
                                         QueryMeter& meter, std::uint64_t iteration) const = 0;

    /// Noise-free estimator route (the polynomial map for Kohn-Sham systems).
    virtual std::vector<double> exact_map(const std::vector<double>& n, double mu) const = 0;

    /// Brute-force oracle route (dense Fermi-Dirac for Kohn-Sham systems).
    virtual std::vector<double> dense_map(const std::vector<double>& n, double mu) const = 0;

    virtual std::vector<double> initial_density() const = 0;

    /// Integral of |n| over the domain (prolongated fine-grid quadrature for
    /// grid-based systems, a plain sum otherwise).
    virtual double occupation_sum(const std::vector<double>& n) const = 0;

    virtual double bisect_mu(const std::vector<double>& /*n*/, double /*electron_target*/) const {
        throw std::logic_error("bisect_mu: unsupported by this system");
    }
};

enum class ScfMode { fcfp, rbcfp };

struct MuPolicy {
    enum class Kind { fixed, constrained };
    Kind kind = Kind::fixed;
    double mu0 = 0.0;             // fixed value, or the start before bisection
    double eta = 0.1;             // Robbins-Monro damping for mu
    double electron_target = 0.0;

    static MuPolicy fixed(double mu) { return {Kind::fixed, mu, 0.1, 0.0}; }
    static MuPolicy constrained(double n_e, double eta = 0.1) {
        return {Kind::constrained, 0.0, eta, n_e};
    }
};

struct ScfConfig {
    ScfMode mode = ScfMode::fcfp;
    double damping = 0.3;    // a in (0, 1]
    int block_size = 1;      // m, RBCFP only
    MuPolicy mu;
    double tol = 1e-6;
    int max_iter = 500;
    double eps_poly = 1e-6;
    NoiseModel noise;
    std::uint64_t seed = 1;

    void validate(int n_coords) const {
        if (!(damping > 0.0 && damping <= 1.0))
            throw std::invalid_argument("ScfConfig: damping must lie in (0, 1]");
        if (mode == ScfMode::rbcfp && (block_size < 1 || block_size > n_coords))
            throw std::invalid_argument("ScfConfig: block_size must lie in [1, N_I]");
        if (mu.kind == MuPolicy::Kind::constrained && !(mu.eta > 0.0 && mu.eta < 1.0))
            throw std::invalid_argument("ScfConfig: eta must lie in (0, 1)");
        if (!(tol > 0.0)) throw std::invalid_argument("ScfConfig: tol must be positive");
        if (max_iter < 1) throw std::invalid_argument("ScfConfig: max_iter must be >= 1");
    }
};

struct ScfState {
    std::vector<double> density;
    double mu = 0.0;
    std::uint64_t iteration = 0;
    int last_clips = 0;   // negative components clipped in the latest step
    double last_ghat = 0.0;
};

struct TraceRow {
    std::uint64_t iteration = 0;
    long long coordinate_evaluations = 0;  // cumulative
    double error = 0.0;                    // vs reference, or successive change
    double error_weighted = std::numeric_limits<double>::quiet_NaN();
    double mu = 0.0;
    double ghat = std::numeric_limits<double>::quiet_NaN();
    long long queries = 0;  // cumulative metered queries
    int clips = 0;          // clips in this step
};

struct ConvergenceTrace {
    std::vector<TraceRow> rows;
    bool converged = false;
    bool diverged = false;
    ScfState final_state;
    QueryMeter meter;
};

/// sqrt(sum_j w(j) |x(j)|^2)
inline double weighted_norm(std::span<const double> x, std::span<const double> w) {
    if (x.size() != w.size()) throw std::invalid_argument("weighted_norm: length mismatch");
    bool any = false;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (w[i] < 0.0) throw std::invalid_argument("weighted_norm: weights must be nonnegative");
        if (w[i] > 0.0) any = true;
        acc += w[i] * x[i] * x[i];
    }
    if (!any) throw std::invalid_argument("weighted_norm: weight vector must be nonzero");
    return std::sqrt(acc);
}

namespace detail {

inline int clip_negative(std::vector<double>& n) {
    int clips = 0;
    for (double& v : n) {
        if (v < 0.0) {
            v = 0.0;
            ++clips;
        }
    }
    return clips;
}

inline void check_finite(const std::vector<double>& estimates) {
    for (double v : estimates)
        if (std::isnan(v)) throw std::runtime_error("scf: estimator returned NaN");
}

}  // namespace detail

/// mu_{k+1} = mu_k - eta * G(n_{k+1}) with G(n) = integral of |n| minus the
/// electron target.
inline double mu_step(const ScfState& state, const ScfConfig& cfg, const FixedPointSystem& sys) {
    if (cfg.mu.kind != MuPolicy::Kind::constrained)
        throw std::logic_error("mu_step: only defined in constrained mode");
    const double g_hat = sys.occupation_sum(state.density) - cfg.mu.electron_target;
    return state.mu - cfg.mu.eta * g_hat;
}

/// Full-coordinate step: n_{k+1} = (1-a) n_k + a F_hat(n_k), then the mu
/// update in constrained mode.
inline ScfState fcfp_step(const ScfState& state, const ScfConfig& cfg, const FixedPointSystem& sys,
                          QueryMeter& meter) {
    const int n_i = sys.coords();
    std::vector<int> all(n_i);
    for (int j = 0; j < n_i; ++j) all[j] = j;

    const NoiseModel noise = cfg.noise.with_seed(cfg.seed);
    const auto est = sys.estimate(state.density, state.mu, all, noise, meter, state.iteration);
    detail::check_finite(est);

    ScfState next = state;
    const double a = cfg.damping;
    for (int j = 0; j < n_i; ++j) next.density[j] = (1.0 - a) * state.density[j] + a * est[j];
    next.last_clips = detail::clip_negative(next.density);
    next.iteration = state.iteration + 1;
    if (cfg.mu.kind == MuPolicy::Kind::constrained) {
        next.last_ghat = sys.occupation_sum(next.density) - cfg.mu.electron_target;
        next.mu = state.mu - cfg.mu.eta * next.last_ghat;
    }
    return next;
}

/// Randomized block step: m indices sampled uniformly without replacement
/// are mixed toward their estimates; unsampled coordinates are copied
/// unchanged (the mapping acts as the identity on them).
inline ScfState rbcfp_step(const ScfState& state, const ScfConfig& cfg, const FixedPointSystem& sys,
                           QueryMeter& meter) {
    const int n_i = sys.coords();
    const int m = cfg.block_size;
    if (m < 1 || m > n_i) throw std::invalid_argument("rbcfp_step: block_size out of range");

    Rng pick(derive_seed(cfg.seed, state.iteration, 0x5a3cull));
    std::vector<int> selected = sample_without_replacement(m, n_i, pick);

    const NoiseModel noise = cfg.noise.with_seed(cfg.seed);
    const auto est = sys.estimate(state.density, state.mu, selected, noise, meter, state.iteration);
    detail::check_finite(est);

    ScfState next = state;
    const double a = cfg.damping;
    for (std::size_t s = 0; s < selected.size(); ++s) {
        const int j = selected[s];
        next.density[j] = (1.0 - a) * state.density[j] + a * est[s];
    }
    next.last_clips = detail::clip_negative(next.density);
    next.iteration = state.iteration + 1;
    if (cfg.mu.kind == MuPolicy::Kind::constrained) {
        next.last_ghat = sys.occupation_sum(next.density) - cfg.mu.electron_target;
        next.mu = state.mu - cfg.mu.eta * next.last_ghat;
    }
    return next;
}

/// Central-difference Jacobian of the noise-free estimator map at n_ref.
inline Eigen::MatrixXd jacobian_fd(const FixedPointSystem& sys, const std::vector<double>& n_ref,
                                   double mu, double h = 1e-4) {
    if (!(h > 0.0)) throw std::invalid_argument("jacobian_fd: step must be positive");
    const int m = static_cast<int>(n_ref.size());
    Eigen::MatrixXd jac(m, m);
    std::vector<double> n_p(n_ref), n_m(n_ref);
    for (int j = 0; j < m; ++j) {
        n_p[j] = n_ref[j] + h;
        n_m[j] = std::max(0.0, n_ref[j] - h);
        const double dh = n_p[j] - n_m[j];
        const auto f_p = sys.exact_map(n_p, mu);
        const auto f_m = sys.exact_map(n_m, mu);
        for (int i = 0; i < m; ++i) {
            const double v = (f_p[i] - f_m[i]) / dh;
            if (!std::isfinite(v)) throw std::runtime_error("jacobian_fd: non-finite entry");
            jac(i, j) = v;
        }
        n_p[j] = n_ref[j];
        n_m[j] = n_ref[j];
    }
    return jac;
}

inline double max_real_eigenvalue(const Eigen::MatrixXd& jac) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < jac.rows(); ++i) worst = std::max(worst, es.eigenvalues()[i].real());
    return worst;
}

/// Spectral radius of (1-a) I + a J.
inline double damped_spectral_radius(const Eigen::MatrixXd& jac, double a) {
    return detail::spectral_radius_damped(jac, a);
}

/// Largest damping with all damped eigenvalues strictly inside the unit
/// circle: min over eigenvalues of 2 (1 - Re mu) / |mu - 1|^2.
inline double max_stable_damping(const Eigen::MatrixXd& jac) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
    double a_max = std::numeric_limits<double>::infinity();
    for (int i = 0; i < jac.rows(); ++i) {
        const std::complex<double> mu = es.eigenvalues()[i];
        const double dist2 = std::norm(mu - 1.0);
        if (dist2 < 1e-28) {
            if (mu.real() >= 1.0) return 0.0;
            continue;
        }
        if (mu.real() >= 1.0) return 0.0;
        a_max = std::min(a_max, 2.0 * (1.0 - mu.real()) / dist2);
    }
    return a_max;
}

struct RunOptions {
    const std::vector<double>* reference = nullptr;  // ground-truth density
    const std::vector<double>* weights = nullptr;    // diagnostic weighted norm
    double divergence_threshold = 1e6;
};

/// Drives FCFP/RBCFP iterations until the relative error (vs the reference
/// when given, the successive change otherwise) drops below tol, max_iter is
/// hit, or the iterate diverges. Divergence is recorded in the trace, not
/// thrown.
inline ConvergenceTrace run_scf(const ScfConfig& cfg, const FixedPointSystem& sys,
                                const RunOptions& opts = {}) {
    cfg.validate(sys.coords());
    const int n_i = sys.coords();
    if (opts.reference && static_cast<int>(opts.reference->size()) != n_i)
        throw std::invalid_argument("run_scf: reference length mismatch");
    if (opts.weights && static_cast<int>(opts.weights->size()) != n_i)
        throw std::invalid_argument("run_scf: weights length mismatch");

    ConvergenceTrace trace;
    ScfState state;
    state.density = sys.initial_density();
    state.mu = cfg.mu.kind == MuPolicy::Kind::constrained
                   ? sys.bisect_mu(state.density, cfg.mu.electron_target)
                   : cfg.mu.mu0;

    auto norm2 = [](std::span<const double> v) {
        double acc = 0.0;
        for (double x : v) acc += x * x;
        return std::sqrt(acc);
    };

    const double ref_norm = opts.reference ? std::max(1e-300, norm2(*opts.reference)) : 1.0;
    long long coord_evals = 0;
    const int per_step = cfg.mode == ScfMode::fcfp ? n_i : cfg.block_size;

    for (int k = 0; k < cfg.max_iter; ++k) {
        trace.meter.begin_iteration();
        const ScfState prev = state;
        state = cfg.mode == ScfMode::fcfp ? fcfp_step(state, cfg, sys, trace.meter)
                                          : rbcfp_step(state, cfg, sys, trace.meter);
        coord_evals += per_step;

        double err;
        std::vector<double> diff(n_i);
        if (opts.reference) {
            for (int j = 0; j < n_i; ++j) diff[j] = state.density[j] - (*opts.reference)[j];
            err = norm2(diff) / ref_norm;
        } else {
            for (int j = 0; j < n_i; ++j) diff[j] = state.density[j] - prev.density[j];
            err = norm2(diff) / std::max(1e-300, norm2(prev.density));
        }

        TraceRow row;
        row.iteration = state.iteration;
        row.coordinate_evaluations = coord_evals;
        row.error = err;
        if (opts.weights) row.error_weighted = weighted_norm(diff, *opts.weights);
        row.mu = state.mu;
        if (cfg.mu.kind == MuPolicy::Kind::constrained) row.ghat = state.last_ghat;
        row.queries = trace.meter.total_queries;
        row.clips = state.last_clips;
        trace.rows.push_back(row);

        bool finite = std::isfinite(err) && std::isfinite(state.mu);
        for (double v : state.density) finite = finite && std::isfinite(v);
        if (!finite || err > opts.divergence_threshold) {
            trace.diverged = true;
            break;
        }
        if (err < cfg.tol) {
            trace.converged = true;
            break;
        }
    }
    trace.final_state = state;
    return trace;
}

}  // namespace qscf
