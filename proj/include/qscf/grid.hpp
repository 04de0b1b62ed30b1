#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qscf/sparse.hpp"

namespace qscf {

enum class Bc { periodic, dirichlet };

/// Uniform real-space grid in 1-3 dimensions. Linear (row-major) indexing
/// with axis 0 slowest. Fine points are D_delta; the per-axis coarse stride
/// defines the interpolation subset D_Delta.
struct Grid {
    int dims = 1;
    std::array<int, 3> extents = {1, 1, 1};
    std::array<double, 3> lengths = {1.0, 1.0, 1.0};
    std::array<Bc, 3> bc = {Bc::periodic, Bc::periodic, Bc::periodic};
    std::array<int, 3> coarse_stride = {1, 1, 1};

    double spacing(int axis) const { return lengths[axis] / extents[axis]; }

    int n_fine() const {
        int n = 1;
        for (int a = 0; a < dims; ++a) n *= extents[a];
        return n;
    }

    int coarse_extent(int axis) const {
        // indices 0, s, 2s, ... < N
        return (extents[axis] + coarse_stride[axis] - 1) / coarse_stride[axis];
    }

    int n_coarse() const {
        int n = 1;
        for (int a = 0; a < dims; ++a) n *= coarse_extent(a);
        return n;
    }

    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dims; ++a) v *= spacing(a);
        return v;
    }

    bool all_periodic() const {
        for (int a = 0; a < dims; ++a)
            if (bc[a] != Bc::periodic) return false;
        return true;
    }

    /// Physical coordinate of fine point i along an axis. Periodic axes put
    /// point 0 at the origin; Dirichlet axes shift by one spacing so the
    /// homogeneous boundary values sit at virtual points -1 and N.
    double coord(int axis, int index) const {
        const double d = spacing(axis);
        return bc[axis] == Bc::periodic ? d * index : d * (index + 1);
    }

    std::array<int, 3> unravel(int linear) const {
        std::array<int, 3> idx = {0, 0, 0};
        for (int a = dims - 1; a >= 0; --a) {
            idx[a] = linear % extents[a];
            linear /= extents[a];
        }
        return idx;
    }

    int ravel(const std::array<int, 3>& idx) const {
        int linear = 0;
        for (int a = 0; a < dims; ++a) linear = linear * extents[a] + idx[a];
        return linear;
    }

    void validate() const {
        if (dims < 1 || dims > 3) throw std::invalid_argument("Grid: dims must be 1, 2 or 3");
        for (int a = 0; a < dims; ++a) {
            if (extents[a] < 1) throw std::invalid_argument("Grid: extents must be positive");
            if (lengths[a] <= 0.0) throw std::invalid_argument("Grid: lengths must be positive");
            if (coarse_stride[a] < 1 || coarse_stride[a] > extents[a])
                throw std::invalid_argument("Grid: coarse_stride out of range");
            if (bc[a] == Bc::periodic && extents[a] % coarse_stride[a] != 0)
                throw std::invalid_argument("Grid: coarse_stride must divide extents on periodic axes");
        }
    }
};

enum class FieldRole { density, potential, wavefunction };

/// One real value per fine grid point.
struct FieldVector {
    std::vector<double> values;
    FieldRole role = FieldRole::potential;

    FieldVector() = default;
    FieldVector(std::vector<double> v, FieldRole r) : values(std::move(v)), role(r) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    void check_density() const {
        for (double v : values)
            if (v < 0.0) throw std::domain_error("FieldVector: density entries must be nonnegative");
    }
};

/// Matrix of -1/2 * discrete Laplacian. Periodic axes wrap, Dirichlet axes
/// drop out-of-range couplings. Sparsity is 1+2*dims (order 2) or 1+4*dims
/// (order 4) on interior rows.
inline SparseHamiltonian build_laplacian(const Grid& grid, int order) {
    grid.validate();
    if (order != 2 && order != 4) throw std::invalid_argument("build_laplacian: order must be 2 or 4");
    const int width = order == 2 ? 3 : 5;
    for (int a = 0; a < grid.dims; ++a)
        if (grid.extents[a] < width)
            throw std::invalid_argument("build_laplacian: extent smaller than stencil width");

    const int n = grid.n_fine();
    std::vector<std::pair<std::pair<int, int>, double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * (1 + 2 * grid.dims * (order / 2)));

    // 1D stencils of -1/2 d^2/dx^2 (unit spacing): offsets and weights.
    struct Tap {
        int offset;
        double weight;
    };
    std::vector<Tap> taps;
    if (order == 2) {
        taps = {{-1, -0.5}, {0, 1.0}, {1, -0.5}};
    } else {
        taps = {{-2, 1.0 / 24.0}, {-1, -2.0 / 3.0}, {0, 5.0 / 4.0}, {1, -2.0 / 3.0}, {2, 1.0 / 24.0}};
    }

    for (int i = 0; i < n; ++i) {
        const auto idx = grid.unravel(i);
        for (int a = 0; a < grid.dims; ++a) {
            const double inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
            for (const Tap& t : taps) {
                auto nb = idx;
                int p = idx[a] + t.offset;
                if (grid.bc[a] == Bc::periodic) {
                    p = ((p % grid.extents[a]) + grid.extents[a]) % grid.extents[a];
                } else if (p < 0 || p >= grid.extents[a]) {
                    continue;  // homogeneous Dirichlet: coupling falls off the grid
                }
                nb[a] = p;
                triplets.push_back({{i, grid.ravel(nb)}, t.weight * inv_h2});
            }
        }
    }
    return SparseHamiltonian::from_triplets(n, triplets);
}

namespace detail {

inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

/// Eigenvalue of the order-2 -d^2/dx^2 stencil for periodic mode k.
inline double periodic_symbol(int k, int n, double h) {
    return (2.0 - 2.0 * std::cos(2.0 * M_PI * k / n)) / (h * h);
}

/// Discrete-spectral solve of -(1/4pi) lap2 V = rhs on an all-periodic grid.
/// The rhs mean is removed (zero-mean gauge); pass a neutral rhs to solve the
/// equation exactly.
inline std::vector<double> poisson_periodic(const Grid& grid, std::span<const double> rhs) {
    const int n = grid.n_fine();
    std::array<int, 3> ext = grid.extents;
    const int last = grid.dims - 1;
    const int n_complex = n / ext[last] * (ext[last] / 2 + 1);

    double* in = fftw_alloc_real(n);
    fftw_complex* mid = fftw_alloc_complex(n_complex);
    fftw_plan fwd, bwd;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fwd = fftw_plan_dft_r2c(grid.dims, ext.data(), in, mid, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_c2r(grid.dims, ext.data(), mid, in, FFTW_ESTIMATE);
    }
    for (int i = 0; i < n; ++i) in[i] = rhs[i];
    fftw_execute(fwd);

    std::array<int, 3> cext = ext;
    cext[last] = ext[last] / 2 + 1;
    for (int c = 0; c < n_complex; ++c) {
        int rem = c;
        std::array<int, 3> k = {0, 0, 0};
        for (int a = last; a >= 0; --a) {
            k[a] = rem % cext[a];
            rem /= cext[a];
        }
        double symbol = 0.0;
        for (int a = 0; a < grid.dims; ++a) symbol += periodic_symbol(k[a], ext[a], grid.spacing(a));
        if (symbol == 0.0) {
            mid[c][0] = 0.0;  // zero mode: gauge fixed to zero mean
            mid[c][1] = 0.0;
        } else {
            const double factor = 4.0 * M_PI / symbol;
            mid[c][0] *= factor;
            mid[c][1] *= factor;
        }
    }
    fftw_execute(bwd);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = in[i] / n;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    fftw_free(in);
    fftw_free(mid);
    return out;
}

/// Conjugate gradient for -(1/4pi) lap2 V = rhs; positive definite whenever
/// at least one axis is Dirichlet.
inline std::vector<double> poisson_cg(const Grid& grid, std::span<const double> rhs, double rel_tol,
                                      int max_iter) {
    const int n = grid.n_fine();
    const SparseHamiltonian half_lap = build_laplacian(grid, 2);  // = -1/2 lap2
    auto apply = [&](std::span<const double> x, std::span<double> y) {
        half_lap.multiply(x, y);
        for (int i = 0; i < n; ++i) y[i] /= 2.0 * M_PI;  // -(1/4pi) lap2 = (1/2pi) * (-1/2 lap2)
    };

    std::vector<double> x(n, 0.0), r(rhs.begin(), rhs.end()), p(r), ap(n);
    double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    const double b_norm = std::sqrt(rr);
    if (b_norm == 0.0) return x;
    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(rr) <= rel_tol * b_norm) return x;
        apply(p, ap);
        const double pap = std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
        if (pap <= 0.0) throw std::runtime_error("solve_poisson: operator not positive definite");
        const double alpha = rr / pap;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
        for (int i = 0; i < n; ++i) p[i] = r[i] + (rr_new / rr) * p[i];
        rr = rr_new;
    }
    throw std::runtime_error("solve_poisson: conjugate gradient did not converge");
}

}  // namespace detail

/// Solves -(1/4pi) lap2_delta V = rhs (order-2 stencil). All-periodic grids
/// use the discrete spectral solver and return the zero-mean solution; any
/// Dirichlet axis switches to conjugate gradient with relative tolerance
/// 1e-10. Periodic right-hand sides must be charge neutral.
inline FieldVector solve_poisson(const Grid& grid, const FieldVector& rhs) {
    grid.validate();
    const int n = grid.n_fine();
    if (static_cast<int>(rhs.size()) != n)
        throw std::invalid_argument("solve_poisson: rhs length must equal the fine point count");
    if (grid.all_periodic()) {
        double total = 0.0;
        for (double v : rhs.values) total += v;
        if (std::abs(total) > 1e-10 * n)
            throw std::invalid_argument(
                "solve_poisson: periodic right-hand side is not charge neutral (sum = " +
                std::to_string(total) + ")");
        return {detail::poisson_periodic(grid, rhs.values), FieldRole::potential};
    }
    return {detail::poisson_cg(grid, rhs.values, 1e-10, 100000), FieldRole::potential};
}

/// Fine-grid indices of the coarse uniform subgrid D_Delta, sorted ascending.
inline std::vector<int> select_interpolation_points(const Grid& grid) {
    grid.validate();
    std::vector<int> out;
    out.reserve(grid.n_coarse());
    std::array<int, 3> c = {0, 0, 0};
    const int nc = grid.n_coarse();
    for (int lin = 0; lin < nc; ++lin) {
        int rem = lin;
        for (int a = grid.dims - 1; a >= 0; --a) {
            c[a] = rem % grid.coarse_extent(a);
            rem /= grid.coarse_extent(a);
        }
        std::array<int, 3> f = {0, 0, 0};
        for (int a = 0; a < grid.dims; ++a) f[a] = c[a] * grid.coarse_stride[a];
        out.push_back(grid.ravel(f));
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace detail {

/// 1D hat-function weights: fine index -> (left coarse cell, fraction).
/// Periodic axes wrap the last cell; Dirichlet axes clamp beyond the last
/// coarse point so the shape functions still sum to one everywhere.
inline void hat_locate(const Grid& grid, int axis, int fine, int& left, double& frac) {
    const int s = grid.coarse_stride[axis];
    const int nc = grid.coarse_extent(axis);
    left = fine / s;
    const int rem = fine - left * s;
    if (left >= nc - 1 && grid.bc[axis] != Bc::periodic) {
        left = nc - 1;
        frac = 0.0;  // clamp: hold the last coarse value
        return;
    }
    frac = static_cast<double>(rem) / s;
}

}  // namespace detail

/// Tensor-product piecewise-linear interpolation from coarse values on
/// D_Delta to the fine grid. Reproduces coarse values exactly and constants
/// everywhere (partition of unity).
inline FieldVector prolongate(std::span<const double> coarse_values, const Grid& grid) {
    grid.validate();
    if (static_cast<int>(coarse_values.size()) != grid.n_coarse())
        throw std::invalid_argument("prolongate: coarse vector length must equal the coarse point count");
    const int n = grid.n_fine();
    std::vector<double> fine(n, 0.0);

    std::array<int, 3> cext = {1, 1, 1};
    for (int a = 0; a < grid.dims; ++a) cext[a] = grid.coarse_extent(a);
    auto coarse_ravel = [&](const std::array<int, 3>& c) {
        int lin = 0;
        for (int a = 0; a < grid.dims; ++a) lin = lin * cext[a] + c[a];
        return lin;
    };

    for (int i = 0; i < n; ++i) {
        const auto idx = grid.unravel(i);
        std::array<int, 3> left = {0, 0, 0};
        std::array<double, 3> frac = {0.0, 0.0, 0.0};
        for (int a = 0; a < grid.dims; ++a) detail::hat_locate(grid, a, idx[a], left[a], frac[a]);
        // sum over the 2^dims corners of the coarse cell
        const int corners = 1 << grid.dims;
        double acc = 0.0;
        for (int mask = 0; mask < corners; ++mask) {
            double w = 1.0;
            std::array<int, 3> c = {0, 0, 0};
            for (int a = 0; a < grid.dims; ++a) {
                const bool hi = (mask >> a) & 1;
                w *= hi ? frac[a] : 1.0 - frac[a];
                int ca = left[a] + (hi ? 1 : 0);
                if (ca >= cext[a]) ca = grid.bc[a] == Bc::periodic ? 0 : cext[a] - 1;
                c[a] = ca;
            }
            if (w != 0.0) acc += w * coarse_values[coarse_ravel(c)];
        }
        fine[i] = acc;
    }
    return {std::move(fine), FieldRole::potential};
}

/// Injection onto D_Delta: the left inverse of prolongate on the
/// shape-function space.
inline std::vector<double> restrict_to_coarse(std::span<const double> fine, const Grid& grid) {
    if (static_cast<int>(fine.size()) != grid.n_fine())
        throw std::invalid_argument("restrict_to_coarse: fine vector length must equal the fine point count");
    const auto points = select_interpolation_points(grid);
    std::vector<double> out(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) out[k] = fine[points[k]];
    return out;
}

}  // namespace qscf
