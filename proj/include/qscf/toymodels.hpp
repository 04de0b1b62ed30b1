#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "qscf/scf.hpp"

namespace qscf {

struct KsOptions {
    double eps_poly = 1e-6;
    BoundsMethod bounds = BoundsMethod::lanczos;
    int lanczos_k = 20;
    std::uint64_t bounds_seed = 0x5eedb0a7ull;
    int degree_cap = 100000;
    int dense_cap = kDenseCap;
};

/// The discrete Kohn-Sham fixed-point problem n(j) = [f(H(n))]_{jj} on the
/// interpolation points, with the estimator realized as a Chebyshev
/// polynomial of the rescaled Hamiltonian. A frozen system keeps H fixed at
/// the initial density (the potential no longer responds to n), which makes
/// the map constant and is handy for tests.
class KohnShamSystem : public FixedPointSystem {
  public:
    KohnShamSystem(Grid grid, AtomSystem atoms, double beta, KsOptions options = {},
                   bool frozen = false, double electron_count = -1.0, int fd_order = 2)
        : builder_(std::move(grid), std::move(atoms), fd_order),
          beta_(beta),
          opt_(options),
          frozen_(frozen) {
        if (!(beta > 0.0)) throw std::invalid_argument("KohnShamSystem: beta must be positive");
        interp_ = select_interpolation_points(builder_.grid());
        electron_count_ = electron_count > 0.0 ? electron_count : builder_.atoms().total_charge();
        initial_ = unnormalized_atom_density();
        const double s = occupation_sum(initial_);
        if (s <= 0.0) throw std::runtime_error("KohnShamSystem: degenerate initial density");
        for (double& v : initial_) v *= electron_count_ / s;
        if (frozen_) {
            frozen_h_ = builder_.assemble(initial_);
            frozen_bounds_ = spectral_bounds(frozen_h_, opt_.bounds, opt_.lanczos_k, opt_.bounds_seed);
        }
    }

    const Grid& grid() const { return builder_.grid(); }
    const AtomSystem& atoms() const { return builder_.atoms(); }
    double beta() const { return beta_; }
    double electron_count() const { return electron_count_; }
    const std::vector<int>& interp_points() const { return interp_; }
    bool frozen() const { return frozen_; }
    const KsOptions& options() const { return opt_; }

    int coords() const override { return static_cast<int>(interp_.size()); }

    SparseHamiltonian hamiltonian(const std::vector<double>& n) const {
        return frozen_ ? frozen_h_ : builder_.assemble(n);
    }

    RescaledHamiltonian rescaled(const SparseHamiltonian& h, double mu) const {
        const SpectralBounds bounds =
            frozen_ ? frozen_bounds_ : spectral_bounds(h, opt_.bounds, opt_.lanczos_k, opt_.bounds_seed);
        return rescale(h, bounds, beta_, mu);
    }

    ChebyshevExpansion expansion(const RescaledHamiltonian& resc) const {
        const DegreeSelection sel =
            select_degree(resc.beta_hat, resc.log_c, opt_.eps_poly, opt_.degree_cap);
        return cheb_coefficients(resc.beta_hat, resc.log_c, sel.degree);
    }

    std::vector<double> estimate(const std::vector<double>& n, double mu,
                                 std::span<const int> selected, const NoiseModel& noise,
                                 QueryMeter& meter, std::uint64_t iteration) const override {
        const SparseHamiltonian h = hamiltonian(n);
        const RescaledHamiltonian resc = rescaled(h, mu);
        const ChebyshevExpansion exp = expansion(resc);
        const NoiseModel stream = noise.with_seed(derive_seed(noise.rng_seed, iteration));
        return estimate_density(resc.matrix, exp, interp_, selected, stream, meter, opt_.dense_cap);
    }

    /// Diagonals of p_l(H~) at every interpolation point, evaluated through
    /// the eigendecomposition: the same polynomial as the exact estimator,
    /// at O(N^3) total instead of O(l N N_I) matrix-vector passes.
    std::vector<double> exact_map(const std::vector<double>& n, double mu) const override {
        const SparseHamiltonian h = hamiltonian(n);
        const RescaledHamiltonian resc = rescaled(h, mu);
        const ChebyshevExpansion exp = expansion(resc);
        const DenseEigensystem es = dense_eigensystem(resc.matrix, opt_.dense_cap);
        const auto poly = detail::poly_on_spectrum(es, exp);
        std::vector<double> out(interp_.size());
        for (std::size_t a = 0; a < interp_.size(); ++a) {
            double acc = 0.0;
            for (int xi = 0; xi < es.eigenvalues.size(); ++xi) {
                const double u = es.eigenvectors(interp_[a], xi);
                acc += poly[xi] * u * u;
            }
            out[a] = acc;
        }
        return out;
    }

    std::vector<double> dense_map(const std::vector<double>& n, double mu) const override {
        const auto diag = dense_fermi_diag(hamiltonian(n), beta_, mu, opt_.dense_cap);
        std::vector<double> out(interp_.size());
        for (std::size_t a = 0; a < interp_.size(); ++a) out[a] = diag[interp_[a]];
        return out;
    }

    std::vector<double> initial_density() const override { return initial_; }

    double occupation_sum(const std::vector<double>& n) const override {
        std::vector<double> abs_n(n.size());
        for (std::size_t i = 0; i < n.size(); ++i) abs_n[i] = std::abs(n[i]);
        const FieldVector fine = prolongate(abs_n, builder_.grid());
        double acc = 0.0;
        for (double v : fine.values) acc += v;
        return acc * builder_.grid().cell_volume();
    }

    double bisect_mu(const std::vector<double>& n, double electron_target) const override {
        const SparseHamiltonian h = hamiltonian(n);
        const DenseEigensystem es = dense_eigensystem(h, opt_.dense_cap);
        const double vol = builder_.grid().cell_volume();
        const int ng = h.n_rows;
        if (electron_target >= vol * ng)
            throw std::invalid_argument("bisect_mu: electron target exceeds the grid capacity");
        auto occupation = [&](double mu) {
            double acc = 0.0;
            for (int j = 0; j < ng; ++j) acc += fermi_dirac(es.eigenvalues[j], beta_, mu);
            return vol * acc;
        };
        const double pad = (50.0 + std::log(static_cast<double>(ng))) / beta_;
        double lo = es.eigenvalues.minCoeff() - pad;
        double hi = es.eigenvalues.maxCoeff() + pad;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi) + std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (occupation(mid) < electron_target ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

  private:
    std::vector<double> unnormalized_atom_density() const {
        const Grid& g = builder_.grid();
        std::vector<double> coarse(interp_.size(), 0.0);
        for (std::size_t a = 0; a < interp_.size(); ++a) {
            const auto idx = g.unravel(interp_[a]);
            for (const auto& atom : builder_.atoms().atoms) {
                double gg = 1.0;
                for (int ax = 0; ax < g.dims; ++ax) {
                    const double d =
                        detail::axis_displacement(g, ax, g.coord(ax, idx[ax]), atom.position[ax]);
                    gg *= detail::gauss1(d, atom.sigma);
                }
                coarse[a] += atom.charge * gg;
            }
        }
        if (builder_.atoms().atoms.empty()) coarse.assign(interp_.size(), 1.0);
        return coarse;
    }

    HamiltonianBuilder builder_;
    double beta_;
    KsOptions opt_;
    bool frozen_;
    double electron_count_ = 0.0;
    std::vector<int> interp_;
    std::vector<double> initial_;
    SparseHamiltonian frozen_h_;
    SpectralBounds frozen_bounds_;
};

struct ChainParams {
    int n_atoms = 8;
    double length = 32.0;
    int points = 256;
    double beta = 4.0;
    int stride = 8;
    std::vector<double> charge_pattern = {2.0, 1.0};  // alternating Z values
    double sigma = 0.5;
    double electron_count = -1.0;  // default: sum of charges
    int fd_order = 2;
    KsOptions options = {};
};

/// Periodic 1D chain of equally spaced pseudo-atoms with alternating charges.
inline KohnShamSystem make_chain(const ChainParams& p, bool frozen = false) {
    if (p.n_atoms < 1) throw std::invalid_argument("make_chain: need at least one atom");
    if (p.charge_pattern.empty()) throw std::invalid_argument("make_chain: empty charge pattern");
    if ((p.points & (p.points - 1)) != 0)
        std::cerr << "make_chain: warning: " << p.points << " grid points (not a power of two)\n";
    const double delta = p.length / p.points;
    const double atom_spacing = p.length / p.n_atoms;
    if (atom_spacing < 3.0 * delta)
        throw std::invalid_argument("make_chain: atoms denser than the grid resolution");

    Grid grid;
    grid.dims = 1;
    grid.extents = {p.points, 1, 1};
    grid.lengths = {p.length, 1.0, 1.0};
    grid.bc = {Bc::periodic, Bc::periodic, Bc::periodic};
    grid.coarse_stride = {p.stride, 1, 1};

    AtomSystem atoms;
    for (int i = 0; i < p.n_atoms; ++i) {
        AtomSystem::Atom a;
        a.position = {(i + 0.5) * atom_spacing, 0.0, 0.0};
        a.charge = p.charge_pattern[i % p.charge_pattern.size()];
        a.sigma = p.sigma;
        atoms.atoms.push_back(a);
    }
    return KohnShamSystem(grid, atoms, p.beta, p.options, frozen, p.electron_count, p.fd_order);
}

inline KohnShamSystem make_chain(int n_atoms, double length, int points, double beta) {
    ChainParams p;
    p.n_atoms = n_atoms;
    p.length = length;
    p.points = points;
    p.beta = beta;
    return make_chain(p);
}

/// Linear fixed-point problem F(n) = J n + b with a prescribed contraction:
/// every eigenvalue of the damped map (1-a) I + a J has magnitude exactly
/// target_c at the design damping, so error norms contract by target_c per
/// full step regardless of direction. The fixed point (I - J)^{-1} b is known
/// by construction.
class LinearSurrogate : public FixedPointSystem {
  public:
    Eigen::MatrixXd j_matrix;
    Eigen::VectorXd offset_b;
    Eigen::VectorXd fixed_point;
    Eigen::VectorXd start;      // initial iterate handed to run_scf
    double shot_sigma = 0.5;    // per-shot noise scale of the Born proxy

    int coords() const override { return static_cast<int>(offset_b.size()); }

    std::vector<double> full_map(const std::vector<double>& n) const {
        Eigen::Map<const Eigen::VectorXd> x(n.data(), n.size());
        Eigen::VectorXd f = j_matrix * x + offset_b;
        return {f.data(), f.data() + f.size()};
    }

    std::vector<double> estimate(const std::vector<double>& n, double /*mu*/,
                                 std::span<const int> selected, const NoiseModel& noise,
                                 QueryMeter& meter, std::uint64_t iteration) const override {
        const auto f = full_map(n);
        const NoiseModel stream = noise.with_seed(derive_seed(noise.rng_seed, iteration));
        std::vector<double> out(selected.size());
        for (std::size_t s = 0; s < selected.size(); ++s) {
            const int j = selected[s];
            if (j < 0 || j >= coords()) throw std::out_of_range("LinearSurrogate: index out of range");
            switch (noise.kind) {
                case NoiseModel::Kind::exact:
                    out[s] = f[j];
                    meter.add(1);
                    break;
                case NoiseModel::Kind::born_shots: {
                    // Shot-averaged measurement proxy: zero-mean Gaussian with
                    // the variance of a mean of N_s bounded single shots.
                    Rng rng(derive_seed(stream.rng_seed, 0xb047ull, static_cast<std::uint64_t>(j)));
                    out[s] = f[j] + shot_sigma / std::sqrt(static_cast<double>(noise.shots)) * rng.normal();
                    meter.add(noise.shots);
                    break;
                }
                case NoiseModel::Kind::bounded: {
                    Rng rng(derive_seed(stream.rng_seed, 0xb047ull, static_cast<std::uint64_t>(j)));
                    out[s] = bounded_noise_estimate(f[j], noise.eps_est, noise.delta_fail, 1.0, rng);
                    meter.add(bounded_noise_rounds(noise.eps_est, noise.delta_fail, 1.0));
                    break;
                }
            }
        }
        return out;
    }

    std::vector<double> exact_map(const std::vector<double>& n, double /*mu*/) const override {
        return full_map(n);
    }
    std::vector<double> dense_map(const std::vector<double>& n, double /*mu*/) const override {
        return full_map(n);
    }
    std::vector<double> initial_density() const override {
        return {start.data(), start.data() + start.size()};
    }
    double occupation_sum(const std::vector<double>& n) const override {
        double acc = 0.0;
        for (double v : n) acc += std::abs(v);
        return acc;
    }
};

/// Builds the surrogate from a seed. design_a is the damping the contraction
/// factor is calibrated for; offset shifts the fixed point away from zero so
/// the nonnegativity clip stays inactive; e0_norm sets ||start - n_*||.
inline LinearSurrogate make_linear_surrogate(int dim, double target_c, std::uint64_t seed,
                                             double design_a = 1.0, double offset = 30.0,
                                             double shot_sigma = 0.5, double e0_norm = 1.0) {
    if (dim < 1) throw std::invalid_argument("make_linear_surrogate: dim must be positive");
    if (!(target_c >= 0.0 && target_c < 1.0))
        throw std::invalid_argument("make_linear_surrogate: target_c must lie in [0,1)");
    if (!(design_a > 0.0 && design_a <= 1.0))
        throw std::invalid_argument("make_linear_surrogate: design_a must lie in (0,1]");

    Rng rng(derive_seed(seed, 0x10afull));
    Eigen::MatrixXd gauss(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) gauss(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < dim; ++i)
        if (r(i, i) < 0.0) q.col(i) *= -1.0;

    // Damped eigenvalue (1-a) + a*lambda = +-c  =>  lambda = (+-c - (1-a)) / a
    Eigen::VectorXd lambda(dim);
    for (int i = 0; i < dim; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        lambda[i] = (sign * target_c - (1.0 - design_a)) / design_a;
    }
    LinearSurrogate sys;
    sys.j_matrix = q * lambda.asDiagonal() * q.transpose();
    sys.j_matrix = 0.5 * (sys.j_matrix + sys.j_matrix.transpose().eval());

    sys.fixed_point.resize(dim);
    for (int i = 0; i < dim; ++i) sys.fixed_point[i] = offset + rng.uniform(-0.5, 0.5);
    sys.offset_b = (Eigen::MatrixXd::Identity(dim, dim) - sys.j_matrix) * sys.fixed_point;

    Eigen::VectorXd dir(dim);
    for (int i = 0; i < dim; ++i) dir[i] = rng.normal();
    dir.normalize();
    sys.start = sys.fixed_point + e0_norm * dir;
    sys.shot_sigma = shot_sigma;
    return sys;
}

}  // namespace qscf
