#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qscf/cheb.hpp"
#include "qscf/sparse.hpp"

namespace qscf {

constexpr int kDenseCap = 4096;

inline Eigen::MatrixXd densify(const SparseHamiltonian& h) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h.n_rows, h.n_rows);
    for (int i = 0; i < h.n_rows; ++i)
        for (int k = h.row_offsets[i]; k < h.row_offsets[i + 1]; ++k)
            m(i, h.col_indices[k]) += h.values[k];
    return m;
}

struct DenseEigensystem {
    Eigen::VectorXd eigenvalues;  // ascending
    Eigen::MatrixXd eigenvectors;
};

inline DenseEigensystem dense_eigensystem(const SparseHamiltonian& h, int cap = kDenseCap) {
    if (h.n_rows > cap)
        throw std::runtime_error("dense_eigensystem: dimension " + std::to_string(h.n_rows) +
                                 " exceeds the dense cap " + std::to_string(cap));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(densify(h));
    if (es.info() != Eigen::Success) throw std::runtime_error("dense_eigensystem: eigensolver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Diagonal of f(H) by brute-force diagonalization; every entry lies in (0,1).
inline std::vector<double> dense_fermi_diag(const SparseHamiltonian& h, double beta, double mu,
                                            int cap = kDenseCap) {
    const DenseEigensystem es = dense_eigensystem(h, cap);
    const int n = h.n_rows;
    Eigen::VectorXd occ(n);
    for (int j = 0; j < n; ++j) occ[j] = fermi_dirac(es.eigenvalues[j], beta, mu);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double u = es.eigenvectors(i, j);
            acc += occ[j] * u * u;
        }
        diag[i] = acc;
    }
    return diag;
}

/// ||A||_max <= ||A||_2, checked via singular values.
inline bool maxnorm_le_2norm_check(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("maxnorm_le_2norm_check: matrix must be square");
    const double max_norm = a.cwiseAbs().maxCoeff();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double two_norm = svd.singularValues()(0);
    return max_norm <= two_norm * (1.0 + 1e-12) + 1e-300;
}

struct GroundTruthOptions {
    double damping = 0.0;  // 0: tune from a finite-difference Jacobian
    double tol = 1e-12;
    int max_iter = 100000;
    bool constrained = false;
    double mu = 0.0;              // fixed-mu value, and the start for constrained runs
    double electron_target = 0.0;  // constrained mode
    double eta = 0.1;
    double fd_step = 1e-5;
};

struct GroundTruthResult {
    std::vector<double> density;
    double mu = 0.0;
    int iterations = 0;
    double residual_inf = 0.0;  // ||n - F(n)||_inf under the dense map
    double damping_used = 0.0;
};

namespace detail {

template <class System>
Eigen::MatrixXd dense_route_jacobian(const System& sys, const std::vector<double>& n_ref, double mu,
                                     double h) {
    const int m = static_cast<int>(n_ref.size());
    Eigen::MatrixXd jac(m, m);
    std::vector<double> n_p(n_ref), n_m(n_ref);
    for (int j = 0; j < m; ++j) {
        n_p[j] = n_ref[j] + h;
        n_m[j] = std::max(0.0, n_ref[j] - h);
        const double dh = n_p[j] - n_m[j];
        const auto f_p = sys.dense_map(n_p, mu);
        const auto f_m = sys.dense_map(n_m, mu);
        for (int i = 0; i < m; ++i) jac(i, j) = (f_p[i] - f_m[i]) / dh;
        n_p[j] = n_ref[j];
        n_m[j] = n_ref[j];
    }
    return jac;
}

inline double spectral_radius_damped(const Eigen::MatrixXd& jac, double a) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
    double rho = 0.0;
    for (int i = 0; i < jac.rows(); ++i)
        rho = std::max(rho, std::abs(1.0 + a * (es.eigenvalues()[i] - 1.0)));
    return rho;
}

inline double scan_optimal_damping(const Eigen::MatrixXd& jac) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(jac, false);
    const auto eig = es.eigenvalues();
    double best_a = 0.05, best_rho = std::numeric_limits<double>::infinity();
    for (int step = 1; step <= 200; ++step) {
        const double a = step * 0.005;
        double rho = 0.0;
        for (int i = 0; i < eig.size(); ++i) rho = std::max(rho, std::abs(1.0 + a * (eig[i] - 1.0)));
        if (rho < best_rho) {
            best_rho = rho;
            best_a = a;
        }
    }
    return best_a;
}

}  // namespace detail

/// Reference fixed point by damped iteration of the brute-force dense map,
/// iterated to a successive relative change below opts.tol.
template <class System>
GroundTruthResult ground_truth(const System& sys, GroundTruthOptions opts) {
    std::vector<double> n = sys.initial_density();
    double mu = opts.mu;
    if (opts.constrained) mu = sys.bisect_mu(n, opts.electron_target);

    double a = opts.damping;
    if (a <= 0.0) a = detail::scan_optimal_damping(detail::dense_route_jacobian(sys, n, mu, opts.fd_step));

    GroundTruthResult out;
    out.damping_used = a;
    std::vector<double> next(n.size());
    for (int k = 1; k <= opts.max_iter; ++k) {
        const auto f = sys.dense_map(n, mu);
        double delta2 = 0.0, norm2 = 0.0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            next[i] = std::max(0.0, (1.0 - a) * n[i] + a * f[i]);
            delta2 += (next[i] - n[i]) * (next[i] - n[i]);
            norm2 += n[i] * n[i];
        }
        n.swap(next);
        double g_hat = 0.0;
        if (opts.constrained) {
            g_hat = sys.occupation_sum(n) - opts.electron_target;
            mu -= opts.eta * g_hat;
        }
        out.iterations = k;
        const bool mu_settled =
            !opts.constrained || std::abs(g_hat) <= 1e-9 * std::max(1.0, opts.electron_target);
        if (mu_settled && std::sqrt(delta2) <= opts.tol * std::max(1e-300, std::sqrt(norm2))) {
            const auto f_star = sys.dense_map(n, mu);
            double res = 0.0;
            for (std::size_t i = 0; i < n.size(); ++i) res = std::max(res, std::abs(n[i] - f_star[i]));
            out.residual_inf = res;
            out.density = std::move(n);
            out.mu = mu;
            return out;
        }
    }
    throw std::runtime_error("ground_truth: no convergence within " + std::to_string(opts.max_iter) +
                             " iterations");
}

}  // namespace qscf
