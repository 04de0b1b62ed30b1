#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qscf/grid.hpp"
#include "qscf/rng.hpp"
#include "qscf/sparse.hpp"

namespace qscf {

/// Gaussian pseudo-atoms: position, charge Z > 0 and smearing width sigma.
struct AtomSystem {
    struct Atom {
        std::array<double, 3> position = {0.0, 0.0, 0.0};
        double charge = 1.0;
        double sigma = 0.4;
    };
    std::vector<Atom> atoms;

    int count() const { return static_cast<int>(atoms.size()); }

    double total_charge() const {
        double z = 0.0;
        for (const auto& a : atoms) z += a.charge;
        return z;
    }

    void validate(const Grid& grid) const {
        for (const auto& a : atoms) {
            if (a.charge <= 0.0) throw std::invalid_argument("AtomSystem: charges must be positive");
            if (a.sigma <= 0.0) throw std::invalid_argument("AtomSystem: sigma must be positive");
            for (int ax = 0; ax < grid.dims; ++ax)
                if (a.position[ax] < 0.0 || a.position[ax] > grid.lengths[ax])
                    throw std::invalid_argument("AtomSystem: atom outside the box");
        }
    }
};

namespace detail {

/// Displacement along one axis, wrapped to the nearest image on periodic axes.
inline double axis_displacement(const Grid& grid, int axis, double x, double x_atom) {
    double d = x - x_atom;
    if (grid.bc[axis] == Bc::periodic) {
        const double L = grid.lengths[axis];
        d -= L * std::round(d / L);
    }
    return d;
}

inline double gauss1(double x, double sigma) {
    return std::exp(-0.5 * x * x / (sigma * sigma)) / (std::sqrt(2.0 * M_PI) * sigma);
}

/// Free-space potential of a unit Gaussian charge, -(1/4pi) lap phi = g_sigma,
/// in 1, 2 or 3 dimensions.
inline double gaussian_potential(int dims, double r, double sigma) {
    const double u = r / (std::sqrt(2.0) * sigma);
    switch (dims) {
        case 1:
            return -2.0 * M_PI * (r * std::erf(u) + std::sqrt(2.0 / M_PI) * sigma * std::exp(-u * u));
        case 2: {
            const double t = u * u;
            if (t < 1e-14) return 0.5772156649015329 - std::log(2.0 * sigma * sigma);
            return -2.0 * std::log(r) + std::expint(-t);  // -E1(t) = Ei(-t)
        }
        default:
            if (r < 1e-12) return std::sqrt(2.0 / M_PI) / sigma;
            return std::erf(u) / r;
    }
}

}  // namespace detail

/// Pseudocharge density b(r) = -sum_a Z_a g_sigma(r - r_a) on the fine grid
/// (nearest periodic image per axis).
inline FieldVector pseudocharge_field(const Grid& grid, const AtomSystem& atoms) {
    grid.validate();
    atoms.validate(grid);
    const int n = grid.n_fine();
    std::vector<double> b(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto idx = grid.unravel(i);
        for (const auto& a : atoms.atoms) {
            double g = 1.0;
            for (int ax = 0; ax < grid.dims; ++ax) {
                const double d = detail::axis_displacement(grid, ax, grid.coord(ax, idx[ax]), a.position[ax]);
                g *= detail::gauss1(d, a.sigma);
            }
            b[i] -= a.charge * g;
        }
    }
    return {std::move(b), FieldRole::density};
}

/// Potential energy of an electron in the field of the Gaussian pseudocharges.
/// All-periodic grids solve the discrete Poisson problem against the
/// background-neutralized pseudocharge (zero-mean gauge); otherwise the
/// analytic free-space potential is summed per atom.
inline FieldVector external_potential(const Grid& grid, const AtomSystem& atoms) {
    grid.validate();
    atoms.validate(grid);
    const int n = grid.n_fine();
    if (atoms.atoms.empty()) return {std::vector<double>(n, 0.0), FieldRole::potential};

    if (grid.all_periodic()) {
        FieldVector b = pseudocharge_field(grid, atoms);
        double mean = 0.0;
        for (double v : b.values) mean += v;
        mean /= n;
        for (double& v : b.values) v -= mean;
        return {detail::poisson_periodic(grid, b.values), FieldRole::potential};
    }

    std::vector<double> v(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto idx = grid.unravel(i);
        for (const auto& a : atoms.atoms) {
            double r2 = 0.0;
            for (int ax = 0; ax < grid.dims; ++ax) {
                const double d = detail::axis_displacement(grid, ax, grid.coord(ax, idx[ax]), a.position[ax]);
                r2 += d * d;
            }
            v[i] -= a.charge * detail::gaussian_potential(grid.dims, std::sqrt(r2), a.sigma);
        }
    }
    return {std::move(v), FieldRole::potential};
}

/// LDA exchange potential, v_x(n) = -(3 n / pi)^(1/3).
inline double lda_vx(double n) { return -std::cbrt(3.0 * n / M_PI); }

/// Perdew-Zunger correlation potential (unpolarized).
inline double lda_vc(double n) {
    if (n <= 0.0) return 0.0;
    const double rs = std::cbrt(3.0 / (4.0 * M_PI * n));
    if (rs >= 1.0) {
        const double gamma = -0.1423, beta1 = 1.0529, beta2 = 0.3334;
        const double sq = std::sqrt(rs);
        const double denom = 1.0 + beta1 * sq + beta2 * rs;
        const double ec = gamma / denom;
        return ec * (1.0 + 7.0 / 6.0 * beta1 * sq + 4.0 / 3.0 * beta2 * rs) / denom;
    }
    const double A = 0.0311, B = -0.048, C = 0.0020, D = -0.0116;
    const double ln_rs = std::log(rs);
    return A * ln_rs + (B - A / 3.0) + 2.0 / 3.0 * C * rs * ln_rs + (2.0 * D - C) / 3.0 * rs;
}

/// Pointwise exchange-correlation potential of a nonnegative density.
inline FieldVector lda_xc(const FieldVector& n) {
    n.check_density();
    std::vector<double> v(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) v[i] = lda_vx(n[i]) + lda_vc(n[i]);
    return {std::move(v), FieldRole::potential};
}

/// Assembles H(n) = -1/2 lap_delta + diag(V_H + V_xc + V_ext) from a coarse
/// density. Caches the density-independent pieces (stencil, pseudocharge,
/// external potential) so repeated assembly only redoes the density terms.
class HamiltonianBuilder {
  public:
    HamiltonianBuilder(Grid grid, AtomSystem atoms, int fd_order = 2)
        : grid_(std::move(grid)), atoms_(std::move(atoms)), order_(fd_order) {
        grid_.validate();
        atoms_.validate(grid_);
        kinetic_ = build_laplacian(grid_, order_);
        pseudo_ = pseudocharge_field(grid_, atoms_);
        v_ext_ = external_potential(grid_, atoms_);
    }

    const Grid& grid() const { return grid_; }
    const AtomSystem& atoms() const { return atoms_; }
    const SparseHamiltonian& kinetic() const { return kinetic_; }
    const FieldVector& v_ext() const { return v_ext_; }
    const FieldVector& pseudocharge() const { return pseudo_; }

    SparseHamiltonian assemble(std::span<const double> coarse_density) const {
        if (static_cast<int>(coarse_density.size()) != grid_.n_coarse())
            throw std::invalid_argument("assemble: coarse density length must equal the coarse point count");
        for (double v : coarse_density)
            if (v < 0.0) throw std::domain_error("assemble: coarse density must be nonnegative");

        const int n = grid_.n_fine();
        FieldVector n_fine = prolongate(coarse_density, grid_);
        n_fine.role = FieldRole::density;

        std::vector<double> source(n);
        for (int i = 0; i < n; ++i) source[i] = n_fine[i] + pseudo_[i];
        std::vector<double> v_h;
        if (grid_.all_periodic()) {
            // Neutralizing background: iterates need not integrate to the
            // pseudocharge exactly, so the incompatible mean is removed.
            double mean = 0.0;
            for (double v : source) mean += v;
            mean /= n;
            for (double& v : source) v -= mean;
            v_h = detail::poisson_periodic(grid_, source);
        } else {
            v_h = detail::poisson_cg(grid_, source, 1e-10, 100000);
        }

        const FieldVector v_xc = lda_xc(n_fine);
        std::vector<double> v_total(n);
        for (int i = 0; i < n; ++i) v_total[i] = v_h[i] + v_xc[i] + v_ext_[i];

        SparseHamiltonian h = kinetic_;
        h.add_to_diagonal(v_total);
        return h;
    }

  private:
    Grid grid_;
    AtomSystem atoms_;
    int order_;
    SparseHamiltonian kinetic_;
    FieldVector pseudo_;
    FieldVector v_ext_;
};

inline SparseHamiltonian assemble(const Grid& grid, std::span<const double> coarse_density,
                                  const AtomSystem& atoms, int fd_order = 2) {
    return HamiltonianBuilder(grid, atoms, fd_order).assemble(coarse_density);
}

enum class BoundsMethod { gershgorin, lanczos };

/// Interval [lambda_minus, lambda_plus] covering the spectrum of H.
struct SpectralBounds {
    double lambda_minus = 0.0;
    double lambda_plus = 0.0;
    BoundsMethod method = BoundsMethod::gershgorin;
    double margin = 1.0;
};

inline SpectralBounds gershgorin_bounds(const SparseHamiltonian& h) {
    const auto diag = h.diagonal();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < h.n_rows; ++i) {
        const double r = h.row_radius(i);
        lo = std::min(lo, diag[i] - r);
        hi = std::max(hi, diag[i] + r);
    }
    return {lo, hi, BoundsMethod::gershgorin, 1.0};
}

/// Spectral enclosure. Gershgorin gives the exact disc enclosure; Lanczos
/// runs k steps with full reorthogonalization from a seeded random start
/// vector, widens the Ritz interval by the margin factor about its midpoint
/// and clamps to the Gershgorin enclosure. Breakdown before two Lanczos
/// steps falls back to Gershgorin (visible in the method tag).
inline SpectralBounds spectral_bounds(const SparseHamiltonian& h, BoundsMethod method,
                                      int k_lanczos = 20, std::uint64_t seed = 0x5eedb0a7ull,
                                      double margin = 1.05) {
    if (h.n_rows == 0) throw std::invalid_argument("spectral_bounds: empty matrix");
    const SpectralBounds gersh = gershgorin_bounds(h);
    if (method == BoundsMethod::gershgorin) return gersh;

    const int n = h.n_rows;
    const int k = std::min(k_lanczos, n);
    Rng rng(derive_seed(seed, 0x1a2cull));
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    v.normalize();

    std::vector<Eigen::VectorXd> basis;
    basis.reserve(k);
    Eigen::VectorXd alpha(k), beta(k);
    int steps = 0;
    Eigen::VectorXd w(n);
    for (int j = 0; j < k; ++j) {
        basis.push_back(v);
        h.multiply(std::span<const double>(basis[j].data(), n), std::span<double>(w.data(), n));
        alpha[j] = basis[j].dot(w);
        w -= alpha[j] * basis[j];
        if (j > 0) w -= beta[j - 1] * basis[j - 1];
        for (const auto& q : basis) w -= q.dot(w) * q;  // full reorthogonalization
        steps = j + 1;
        const double nw = w.norm();
        if (nw < 1e-12 * std::max(1.0, std::abs(alpha[j]))) break;  // Krylov space exhausted
        if (j + 1 < k) {
            beta[j] = nw;
            v = w / nw;
        }
    }
    if (steps < 2) return gersh;

    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(steps, steps);
    for (int j = 0; j < steps; ++j) {
        tri(j, j) = alpha[j];
        if (j + 1 < steps) tri(j, j + 1) = tri(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
    const double ritz_lo = es.eigenvalues().minCoeff();
    const double ritz_hi = es.eigenvalues().maxCoeff();
    const double mid = 0.5 * (ritz_lo + ritz_hi);
    const double half = 0.5 * (ritz_hi - ritz_lo) * margin;
    SpectralBounds out{mid - half, mid + half, BoundsMethod::lanczos, margin};
    out.lambda_minus = std::max(out.lambda_minus, gersh.lambda_minus);
    out.lambda_plus = std::min(out.lambda_plus, gersh.lambda_plus);
    if (!(out.lambda_minus < out.lambda_plus)) return gersh;
    return out;
}

/// H rescaled to spectrum inside [-1,1] together with the scaled inverse
/// temperature and the chemical-potential factor. C can overflow a double at
/// low temperature, so its logarithm is the stored quantity:
///   f(H) = (1 + C exp(beta_hat * H_tilde))^{-1},  log C = beta * (shift - mu).
struct RescaledHamiltonian {
    SparseHamiltonian matrix;
    double beta_hat = 0.0;
    double log_c = 0.0;
    double shift = 0.0;      // (lambda_plus + lambda_minus) / 2
    double half_span = 1.0;  // (lambda_plus - lambda_minus) / 2

    double c_factor() const { return std::exp(log_c); }
    double to_original(double x_tilde) const { return shift + half_span * x_tilde; }
    double to_scaled(double x) const { return (x - shift) / half_span; }
};

inline RescaledHamiltonian rescale(const SparseHamiltonian& h, const SpectralBounds& bounds,
                                   double beta, double mu) {
    if (beta <= 0.0) throw std::invalid_argument("rescale: beta must be positive");
    const double span = bounds.lambda_plus - bounds.lambda_minus;
    if (!(span > 0.0) || !std::isfinite(span))
        throw std::invalid_argument("rescale: degenerate spectral interval");
    const double shift = 0.5 * (bounds.lambda_plus + bounds.lambda_minus);
    const double half = 0.5 * span;

    RescaledHamiltonian out;
    out.matrix = h;
    for (double& v : out.matrix.values) v /= half;
    std::vector<double> diag_shift(h.n_rows, -shift / half);
    out.matrix.add_to_diagonal(diag_shift);
    out.beta_hat = beta * half;
    out.log_c = beta * (shift - mu);
    out.shift = shift;
    out.half_span = half;
    return out;
}

}  // namespace qscf
