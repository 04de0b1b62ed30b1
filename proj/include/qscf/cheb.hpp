#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "qscf/grid.hpp"
#include "qscf/sparse.hpp"

namespace qscf {

/// Fermi-Dirac occupation 1/(1 + exp(beta (x - mu))), overflow-safe.
inline double fermi_dirac(double x, double beta, double mu) {
    if (beta < 0.0) throw std::invalid_argument("fermi_dirac: beta must be nonnegative");
    const double t = beta * (x - mu);
    if (t > 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

namespace detail {

/// g(x) = 1/(1 + C exp(beta_hat x)) with C carried as log C.
inline double scaled_fermi(double x, double beta_hat, double log_c) {
    const double t = log_c + beta_hat * x;
    if (t > 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

/// |g(z)| on the Bernstein ellipse boundary point z = (w + 1/w)/2, w = r e^{i theta}.
inline double scaled_fermi_abs(double re, double im, double beta_hat, double log_c) {
    const double t = log_c + beta_hat * re;
    const double phase = beta_hat * im;
    // |1 + e^{t + i phase}|^2 = 1 + 2 e^t cos(phase) + e^{2t}
    if (t > 40.0) return std::exp(-t);
    if (t < -40.0) return 1.0;
    const double q = 1.0 + 2.0 * std::exp(t) * std::cos(phase) + std::exp(2.0 * t);
    if (q <= 1e-300) return 1e150;
    return 1.0 / std::sqrt(q);
}

/// Max |g| over 256 equispaced points of the ellipse boundary.
inline double ellipse_sup(double r, double beta_hat, double log_c) {
    const int samples = 256;
    const double a = 0.5 * (r + 1.0 / r);
    const double b = 0.5 * (r - 1.0 / r);
    double sup = 0.0;
    for (int k = 0; k < samples; ++k) {
        const double theta = 2.0 * M_PI * k / samples;
        sup = std::max(sup, scaled_fermi_abs(a * std::cos(theta), b * std::sin(theta), beta_hat, log_c));
    }
    return sup;
}

/// Ellipse parameter: 0.9 of the way from 1 to the pole radius
/// r_max = (c + sqrt(c^2 + 4))/2, c = 2 pi / beta_hat.
inline double ellipse_radius(double beta_hat) {
    const double c = 2.0 * M_PI / beta_hat;
    const double r_max = 0.5 * (c + std::sqrt(c * c + 4.0));
    return 1.0 + 0.9 * (r_max - 1.0);
}

}  // namespace detail

struct DegreeSelection {
    int degree = 0;
    double ellipse_r = 1.0;
    double k_sup = 0.0;  // sampled sup of |g| on the ellipse boundary
};

/// Smallest degree with 2 K r^{-l} / (r - 1) <= eps_poly.
inline DegreeSelection select_degree(double beta_hat, double log_c, double eps_poly,
                                     int degree_cap = 100000) {
    if (!(beta_hat > 0.0)) throw std::invalid_argument("select_degree: beta_hat must be positive");
    if (!(eps_poly > 0.0 && eps_poly < 1.0))
        throw std::invalid_argument("select_degree: eps_poly must lie in (0,1)");
    const double r = detail::ellipse_radius(beta_hat);
    const double k_sup = detail::ellipse_sup(r, beta_hat, log_c);
    const double lead = 2.0 * k_sup / (r - 1.0);
    // lead * r^{-l} <= eps  <=>  l >= log(lead/eps) / log r
    int degree = 1;
    if (lead > eps_poly)
        degree = std::max(1, static_cast<int>(std::ceil(std::log(lead / eps_poly) / std::log(r))));
    if (degree > degree_cap)
        throw std::runtime_error("select_degree: required degree " + std::to_string(degree) +
                                 " exceeds the cap " + std::to_string(degree_cap));
    return {degree, r, k_sup};
}

/// Chebyshev interpolant of g(x) = 1/(1 + C e^{beta_hat x}) on [-1,1],
/// with a certified sup-norm error bound from the Bernstein-ellipse estimate.
struct ChebyshevExpansion {
    std::vector<double> coeffs;  // a_0 .. a_l
    double beta_hat = 0.0;
    double log_c = 0.0;
    double certified_bound = 0.0;
    double ellipse_r = std::numeric_limits<double>::infinity();

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }
    double c_factor() const { return std::exp(log_c); }
};

/// Coefficients of the degree-l interpolant at the Chebyshev-Gauss points,
/// computed by DCT-II quadrature.
inline ChebyshevExpansion cheb_coefficients(double beta_hat, double log_c, int degree) {
    if (degree < 0) throw std::invalid_argument("cheb_coefficients: degree must be nonnegative");
    if (beta_hat < 0.0) throw std::invalid_argument("cheb_coefficients: beta_hat must be nonnegative");

    ChebyshevExpansion out;
    out.beta_hat = beta_hat;
    out.log_c = log_c;

    const int n = degree + 1;
    std::vector<double> samples(n);
    for (int k = 0; k < n; ++k) {
        const double x = std::cos(M_PI * (k + 0.5) / n);
        samples[k] = detail::scaled_fermi(x, beta_hat, log_c);
    }
    std::vector<double> spectrum(n);
    {
        std::lock_guard<std::mutex> lock(detail::fftw_mutex());
        fftw_plan plan = fftw_plan_r2r_1d(n, samples.data(), spectrum.data(), FFTW_REDFT10, FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    }
    out.coeffs.resize(n);
    out.coeffs[0] = spectrum[0] / (2.0 * n);
    for (int j = 1; j < n; ++j) out.coeffs[j] = spectrum[j] / n;

    if (beta_hat > 0.0) {
        const double r = detail::ellipse_radius(beta_hat);
        const double k_sup = detail::ellipse_sup(r, beta_hat, log_c);
        out.ellipse_r = r;
        out.certified_bound = 2.0 * k_sup * std::pow(r, -degree) / (r - 1.0);
    } else {
        out.certified_bound = 0.0;  // g is constant
    }
    // Floor so the bound also covers floating-point interpolation noise.
    out.certified_bound = std::max(out.certified_bound, 1e-15 * n);
    return out;
}

/// Clenshaw evaluation of the expansion at a scalar x.
inline double cheb_eval(const ChebyshevExpansion& exp, double x) {
    double b1 = 0.0, b2 = 0.0;
    for (int j = exp.degree(); j >= 1; --j) {
        const double b0 = exp.coeffs[j] + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    return exp.coeffs[0] + x * b1 - b2;
}

/// p_l(H) v via the three-term recurrence; exactly l sparse matrix-vector
/// products for a degree-l expansion.
inline std::vector<double> apply_matrix_poly(const SparseHamiltonian& h, const ChebyshevExpansion& exp,
                                             std::span<const double> v) {
    const int n = h.n_rows;
    if (static_cast<int>(v.size()) != n)
        throw std::invalid_argument("apply_matrix_poly: vector length must equal the matrix dimension");
    std::vector<double> t_prev(v.begin(), v.end());  // T_0 v
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = exp.coeffs[0] * t_prev[i];
    if (exp.degree() == 0) return out;

    std::vector<double> t_cur = h.multiply(t_prev);  // T_1 v
    for (int i = 0; i < n; ++i) out[i] += exp.coeffs[1] * t_cur[i];

    std::vector<double> t_next(n);
    for (int j = 2; j <= exp.degree(); ++j) {
        h.multiply(t_cur, t_next);
        for (int i = 0; i < n; ++i) t_next[i] = 2.0 * t_next[i] - t_prev[i];
        const double a = exp.coeffs[j];
        for (int i = 0; i < n; ++i) out[i] += a * t_next[i];
        std::swap(t_prev, t_cur);
        std::swap(t_cur, t_next);
    }
    return out;
}

}  // namespace qscf
