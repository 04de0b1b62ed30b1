#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "qscf/cheb.hpp"
#include "qscf/hamiltonian.hpp"
#include "qscf/oracle.hpp"
#include "qscf/rng.hpp"

namespace qscf {

/// How diagonal estimates are corrupted. Every random draw is a pure
/// function of rng_seed and the coordinate/iteration labels.
struct NoiseModel {
    enum class Kind { exact, born_shots, bounded };
    Kind kind = Kind::exact;
    long long shots = 1;       // born_shots
    double eps_est = 0.01;     // bounded
    double delta_fail = 0.05;  // bounded
    std::uint64_t rng_seed = 0;

    static NoiseModel exact(std::uint64_t seed = 0) { return {Kind::exact, 1, 0.0, 0.0, seed}; }
    static NoiseModel born(long long n_shots, std::uint64_t seed) {
        if (n_shots < 1) throw std::invalid_argument("NoiseModel: shots must be >= 1");
        return {Kind::born_shots, n_shots, 0.0, 0.0, seed};
    }
    static NoiseModel bounded(double eps, double delta, std::uint64_t seed) {
        if (!(eps > 0.0)) throw std::invalid_argument("NoiseModel: eps_est must be positive");
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("NoiseModel: delta_fail must lie in (0,1)");
        return {Kind::bounded, 1, eps, delta, seed};
    }

    NoiseModel with_seed(std::uint64_t seed) const {
        NoiseModel m = *this;
        m.rng_seed = seed;
        return m;
    }
};

/// Counts simulated oracle queries: l per coordinate in exact mode (the
/// circuit length of one degree-l polynomial application), l * N_s under
/// Born sampling, and l * ceil((alpha/eps) ln(1/delta)) rounds of amplitude
/// estimation in bounded-noise mode.
struct QueryMeter {
    long long total_queries = 0;
    std::vector<long long> per_iteration;

    void begin_iteration() { per_iteration.push_back(0); }
    void add(long long q) {
        if (per_iteration.empty()) per_iteration.push_back(0);
        per_iteration.back() += q;
        total_queries += q;
    }
};

/// Amplitude-estimation repetitions for one coordinate at accuracy eps and
/// failure probability delta, with observable norm alpha.
inline long long bounded_noise_rounds(double eps_est, double delta_fail, double alpha) {
    return static_cast<long long>(std::ceil(alpha / eps_est * std::log(1.0 / delta_fail)));
}

inline long long queries_per_coordinate(const NoiseModel& model, const ChebyshevExpansion& exp) {
    const long long ell = std::max(1, exp.degree());
    switch (model.kind) {
        case NoiseModel::Kind::exact:
            return ell;
        case NoiseModel::Kind::born_shots:
            return ell * model.shots;
        case NoiseModel::Kind::bounded:
            return ell * bounded_noise_rounds(model.eps_est, model.delta_fail, 1.0 + exp.certified_bound);
    }
    return ell;
}

/// Noise-free diagonal e_j^T p_l(H~) e_j through the matrix-polynomial route.
inline double exact_diag(const SparseHamiltonian& h_tilde, const ChebyshevExpansion& exp, int j) {
    if (j < 0 || j >= h_tilde.n_rows) throw std::out_of_range("exact_diag: index out of range");
    std::vector<double> e(h_tilde.n_rows, 0.0);
    e[j] = 1.0;
    return apply_matrix_poly(h_tilde, exp, e)[j];
}

namespace detail {

/// p_l evaluated at every eigenvalue.
inline std::vector<double> poly_on_spectrum(const DenseEigensystem& es, const ChebyshevExpansion& exp) {
    std::vector<double> p(es.eigenvalues.size());
    for (int i = 0; i < es.eigenvalues.size(); ++i) p[i] = cheb_eval(exp, es.eigenvalues[i]);
    return p;
}

/// Born weights |U_{j xi}|^2 as a cumulative distribution.
inline std::vector<double> born_cdf(const DenseEigensystem& es, int j) {
    const int n = static_cast<int>(es.eigenvalues.size());
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (int xi = 0; xi < n; ++xi) {
        const double u = es.eigenvectors(j, xi);
        acc += u * u;
        cdf[xi] = acc;
    }
    // guard against rounding: the last entry is the total weight (=1)
    for (double& c : cdf) c /= acc;
    return cdf;
}

inline int draw_from_cdf(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform();
    return static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

/// Mean of `shots` Born draws of p_l(lambda_xi). Beyond the threshold the
/// categorical counts are drawn as sequential binomials, which has the same
/// joint law as aggregating individual shots at O(spectrum) cost.
inline double born_mean_from_cdf(const std::vector<double>& cdf, const std::vector<double>& poly,
                                 long long shots, Rng& rng) {
    constexpr long long kMultinomialThreshold = 100000;
    double acc = 0.0;
    if (shots <= kMultinomialThreshold) {
        for (long long s = 0; s < shots; ++s) acc += poly[draw_from_cdf(cdf, rng)];
        return acc / static_cast<double>(shots);
    }
    long long remaining = shots;
    double prev = 0.0, mass_left = 1.0;
    for (std::size_t xi = 0; xi < cdf.size() && remaining > 0; ++xi) {
        const double w = cdf[xi] - prev;
        prev = cdf[xi];
        if (w <= 0.0) continue;
        long long count;
        if (w >= mass_left) {
            count = remaining;
        } else {
            std::binomial_distribution<long long> bin(remaining, std::min(1.0, w / mass_left));
            count = bin(rng.engine());
        }
        acc += static_cast<double>(count) * poly[xi];
        remaining -= count;
        mass_left -= w;
    }
    return acc / static_cast<double>(shots);
}

}  // namespace detail

/// One simulated measurement run: N_s projective measurements in the
/// eigenbasis, each returning p_l at the observed eigenvalue. Unbiased for
/// the exact diagonal.
inline double born_sample(const DenseEigensystem& es, const ChebyshevExpansion& exp, int j,
                          long long shots, Rng& rng) {
    if (j < 0 || j >= es.eigenvalues.size()) throw std::out_of_range("born_sample: index out of range");
    if (shots < 1) throw std::invalid_argument("born_sample: shots must be >= 1");
    const auto poly = detail::poly_on_spectrum(es, exp);
    const auto cdf = detail::born_cdf(es, j);
    return detail::born_mean_from_cdf(cdf, poly, shots, rng);
}

/// Abstract bounded-noise oracle of amplitude estimation: within eps_est of
/// the truth with probability 1 - delta_fail, within alpha otherwise.
inline double bounded_noise_estimate(double true_value, double eps_est, double delta_fail,
                                     double alpha, Rng& rng) {
    const bool failed = rng.uniform() < delta_fail;
    const double width = failed ? alpha : eps_est;
    return true_value + rng.uniform(-width, width);
}

/// Diagonal estimates of p_l(H~) at the selected interpolation points,
/// routed through the chosen noise model. Each coordinate draws from an
/// independent stream derived from (rng_seed, coarse index), so results do
/// not depend on evaluation order. Negative estimates are not clipped here.
inline std::vector<double> estimate_density(const SparseHamiltonian& h_tilde,
                                            const ChebyshevExpansion& exp,
                                            std::span<const int> interp_points,
                                            std::span<const int> selected,
                                            const NoiseModel& model, QueryMeter& meter,
                                            int dense_cap = kDenseCap) {
    for (std::size_t a = 0; a < selected.size(); ++a) {
        if (selected[a] < 0 || selected[a] >= static_cast<int>(interp_points.size()))
            throw std::out_of_range("estimate_density: coarse index out of range");
        for (std::size_t b = a + 1; b < selected.size(); ++b)
            if (selected[a] == selected[b])
                throw std::invalid_argument("estimate_density: indices must be distinct");
    }

    std::vector<double> out(selected.size());
    const long long per_coordinate = queries_per_coordinate(model, exp);

    if (model.kind == NoiseModel::Kind::born_shots) {
        const DenseEigensystem es = dense_eigensystem(h_tilde, dense_cap);
        const auto poly = detail::poly_on_spectrum(es, exp);
        for (std::size_t a = 0; a < selected.size(); ++a) {
            Rng rng(derive_seed(model.rng_seed, 0xb047ull, static_cast<std::uint64_t>(selected[a])));
            const auto cdf = detail::born_cdf(es, interp_points[selected[a]]);
            out[a] = detail::born_mean_from_cdf(cdf, poly, model.shots, rng);
            meter.add(per_coordinate);
        }
        return out;
    }

    const double alpha = 1.0 + exp.certified_bound;
    for (std::size_t a = 0; a < selected.size(); ++a) {
        const double truth = exact_diag(h_tilde, exp, interp_points[selected[a]]);
        if (model.kind == NoiseModel::Kind::exact) {
            out[a] = truth;
        } else {
            Rng rng(derive_seed(model.rng_seed, 0xb047ull, static_cast<std::uint64_t>(selected[a])));
            out[a] = bounded_noise_estimate(truth, model.eps_est, model.delta_fail, alpha, rng);
        }
        meter.add(per_coordinate);
    }
    return out;
}

}  // namespace qscf
