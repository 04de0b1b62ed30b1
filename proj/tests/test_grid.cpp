#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "qscf/grid.hpp"
#include "qscf/oracle.hpp"
#include "qscf/rng.hpp"

using namespace qscf;

namespace {

Grid grid_1d(int n, double length, Bc bc = Bc::periodic, int stride = 1) {
    Grid g;
    g.dims = 1;
    g.extents = {n, 1, 1};
    g.lengths = {length, 1.0, 1.0};
    g.bc = {bc, bc, bc};
    g.coarse_stride = {stride, 1, 1};
    return g;
}

// Independent order-2 application of -(1/4pi) lap on a 1D grid, written
// directly against the index arithmetic rather than the CSR matrix.
std::vector<double> apply_quarter_pi_lap_1d(const Grid& g, const std::vector<double>& v) {
    const int n = g.extents[0];
    const double h2 = g.spacing(0) * g.spacing(0);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        double left = 0.0, right = 0.0;
        if (g.bc[0] == Bc::periodic) {
            left = v[(i + n - 1) % n];
            right = v[(i + 1) % n];
        } else {
            if (i > 0) left = v[i - 1];
            if (i + 1 < n) right = v[i + 1];
        }
        out[i] = -(left - 2.0 * v[i] + right) / (4.0 * M_PI * h2);
    }
    return out;
}

}  // namespace

TEST_CASE("laplacian: 1D periodic 4-point stencil and spectrum") {
    const Grid g = grid_1d(4, 4.0);  // delta = 1
    const SparseHamiltonian h = build_laplacian(g, 2);

    REQUIRE(h.n_rows == 4);
    REQUIRE(h.sparsity == 3);
    const auto diag = h.diagonal();
    for (double d : diag) CHECK(d == 1.0);
    // wraparound couplings present: row 0 touches column 3
    bool wrap = false;
    for (int k = h.row_offsets[0]; k < h.row_offsets[1]; ++k) {
        if (h.col_indices[k] == 3) {
            wrap = true;
            CHECK(h.values[k] == -0.5);
        }
    }
    CHECK(wrap);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(densify(h));
    std::vector<double> expected = {0.0, 1.0, 1.0, 2.0};
    for (int i = 0; i < 4; ++i) CHECK(es.eigenvalues()[i] == Catch::Approx(expected[i]).margin(1e-12));
}

TEST_CASE("laplacian: sparsity per dimension and order") {
    Grid g3;
    g3.dims = 3;
    g3.extents = {6, 6, 6};
    g3.lengths = {6.0, 6.0, 6.0};
    g3.coarse_stride = {1, 1, 1};
    CHECK(build_laplacian(g3, 2).sparsity == 7);
    CHECK(build_laplacian(g3, 4).sparsity == 13);

    Grid g2 = g3;
    g2.dims = 2;
    CHECK(build_laplacian(g2, 2).sparsity == 5);
    CHECK(build_laplacian(g2, 4).sparsity == 9);
}

TEST_CASE("laplacian: Dirichlet corners truncate the stencil") {
    const Grid g = grid_1d(4, 4.0, Bc::dirichlet);
    const SparseHamiltonian h = build_laplacian(g, 2);
    CHECK(h.row_offsets[1] - h.row_offsets[0] == 2);
    CHECK(h.row_offsets[4] - h.row_offsets[3] == 2);
    for (int k = h.row_offsets[0]; k < h.row_offsets[1]; ++k) CHECK(h.col_indices[k] <= 1);
}

TEST_CASE("laplacian: exact symmetry and analytic dispersion") {
    for (int n : {8, 16, 64}) {
        const Grid g = grid_1d(n, static_cast<double>(n));  // delta = 1
        const SparseHamiltonian h = build_laplacian(g, 2);
        CHECK(h.max_asymmetry() == 0.0);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(densify(h));
        std::vector<double> analytic(n);
        for (int k = 0; k < n; ++k) analytic[k] = 1.0 - std::cos(2.0 * M_PI * k / n);
        std::sort(analytic.begin(), analytic.end());
        for (int i = 0; i < n; ++i) CHECK(es.eigenvalues()[i] == Catch::Approx(analytic[i]).margin(1e-12));
    }
    Grid g2;
    g2.dims = 2;
    g2.extents = {8, 6, 1};
    g2.lengths = {8.0, 9.0, 1.0};
    g2.bc = {Bc::periodic, Bc::dirichlet, Bc::periodic};
    g2.coarse_stride = {1, 1, 1};
    CHECK(build_laplacian(g2, 2).max_asymmetry() == 0.0);
    CHECK(build_laplacian(g2, 4).max_asymmetry() == 0.0);
}

TEST_CASE("laplacian: rejects grids smaller than the stencil") {
    CHECK_THROWS_AS(build_laplacian(grid_1d(4, 4.0), 4), std::invalid_argument);
    CHECK_THROWS_AS(build_laplacian(grid_1d(2, 2.0), 2), std::invalid_argument);
    CHECK_THROWS_AS(build_laplacian(grid_1d(8, 8.0), 3), std::invalid_argument);
}

TEST_CASE("poisson: zero source gives zero potential") {
    const Grid g = grid_1d(16, 8.0);
    const FieldVector rhs{std::vector<double>(16, 0.0), FieldRole::density};
    const FieldVector v = solve_poisson(g, rhs);
    for (double x : v.values) CHECK(x == 0.0);
}

TEST_CASE("poisson: cosine mode on a periodic ring") {
    const int n = 64;
    const Grid g = grid_1d(n, 2.0 * M_PI);
    std::vector<double> rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = std::cos(g.coord(0, i));
    const FieldVector v = solve_poisson(g, {rhs, FieldRole::density});
    // analytic solution of -(1/4pi) V'' = cos is 4 pi cos; order-2 stencil error ~ delta^2/12
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(v[i] - 4.0 * M_PI * std::cos(g.coord(0, i))));
    CHECK(worst <= 1e-3 * 4.0 * M_PI);
}

TEST_CASE("poisson: non-neutral periodic source is rejected") {
    const Grid g = grid_1d(16, 8.0);
    const FieldVector rhs{std::vector<double>(16, 1.0), FieldRole::density};
    CHECK_THROWS_AS(solve_poisson(g, rhs), std::invalid_argument);
}

TEST_CASE("poisson: discrete residual below 1e-10") {
    SECTION("periodic, spectral route") {
        const int n = 48;
        const Grid g = grid_1d(n, 12.0);
        Rng rng(11);
        std::vector<double> rhs(n);
        double mean = 0.0;
        for (double& v : rhs) mean += (v = rng.uniform(-1.0, 1.0));
        for (double& v : rhs) v -= mean / n;
        const FieldVector sol = solve_poisson(g, {rhs, FieldRole::density});
        const auto back = apply_quarter_pi_lap_1d(g, sol.values);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            num += (back[i] - rhs[i]) * (back[i] - rhs[i]);
            den += rhs[i] * rhs[i];
        }
        CHECK(std::sqrt(num / den) <= 1e-10);
    }
    SECTION("Dirichlet, conjugate-gradient route") {
        const int n = 40;
        const Grid g = grid_1d(n, 10.0, Bc::dirichlet);
        Rng rng(12);
        std::vector<double> rhs(n);
        for (double& v : rhs) v = rng.uniform(-1.0, 1.0);
        const FieldVector sol = solve_poisson(g, {rhs, FieldRole::density});
        const auto back = apply_quarter_pi_lap_1d(g, sol.values);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
            num += (back[i] - rhs[i]) * (back[i] - rhs[i]);
            den += rhs[i] * rhs[i];
        }
        CHECK(std::sqrt(num / den) <= 1e-10);
    }
}

TEST_CASE("interpolation points: uniform subgrids") {
    SECTION("1D stride 2") {
        const Grid g = grid_1d(8, 8.0, Bc::periodic, 2);
        const auto pts = select_interpolation_points(g);
        REQUIRE(pts == std::vector<int>{0, 2, 4, 6});
        CHECK(g.n_coarse() == 4);
    }
    SECTION("stride 1 degenerates to the fine grid") {
        const Grid g = grid_1d(8, 8.0, Bc::periodic, 1);
        const auto pts = select_interpolation_points(g);
        REQUIRE(static_cast<int>(pts.size()) == g.n_fine());
        for (int i = 0; i < 8; ++i) CHECK(pts[i] == i);
    }
    SECTION("2D 4x4 stride 2") {
        Grid g;
        g.dims = 2;
        g.extents = {4, 4, 1};
        g.lengths = {4.0, 4.0, 1.0};
        g.coarse_stride = {2, 2, 1};
        const auto pts = select_interpolation_points(g);
        REQUIRE(pts == std::vector<int>{0, 2, 8, 10});
    }
}

TEST_CASE("prolongate: constants, ramps and convergence order") {
    SECTION("partition of unity reproduces constants") {
        const Grid g = grid_1d(16, 16.0, Bc::periodic, 4);
        std::vector<double> coarse(g.n_coarse(), 3.25);
        const FieldVector fine = prolongate(coarse, g);
        for (double v : fine.values) CHECK(v == Catch::Approx(3.25).margin(1e-14));
    }
    SECTION("linear ramp is exact where hats are interior") {
        const Grid g = grid_1d(9, 9.0, Bc::dirichlet, 2);
        std::vector<double> coarse(g.n_coarse());
        for (int j = 0; j < g.n_coarse(); ++j) coarse[j] = 0.5 * (2 * j) + 1.0;
        const FieldVector fine = prolongate(coarse, g);
        for (int i = 0; i < g.n_fine(); ++i) CHECK(fine[i] == Catch::Approx(0.5 * i + 1.0).margin(1e-14));
    }
    SECTION("second order in the coarse spacing") {
        auto max_err = [](int stride) {
            const Grid g = grid_1d(64, 64.0, Bc::periodic, stride);
            std::vector<double> field(64);
            for (int i = 0; i < 64; ++i) field[i] = std::sin(2.0 * M_PI * i / 64.0);
            const auto coarse = restrict_to_coarse(field, g);
            const FieldVector back = prolongate(coarse, g);
            double err = 0.0;
            for (int i = 0; i < 64; ++i) err = std::max(err, std::abs(back[i] - field[i]));
            return err;
        };
        const double ratio = max_err(4) / max_err(2);
        CHECK(ratio > 3.0);
        CHECK(ratio < 5.0);
    }
    SECTION("prolongate then restrict is the identity on coarse data") {
        const Grid g = grid_1d(24, 24.0, Bc::periodic, 3);
        Rng rng(5);
        std::vector<double> coarse(g.n_coarse());
        for (double& v : coarse) v = rng.uniform(-2.0, 2.0);
        const FieldVector fine = prolongate(coarse, g);
        const auto back = restrict_to_coarse(fine.values, g);
        for (int j = 0; j < g.n_coarse(); ++j) CHECK(back[j] == coarse[j]);
    }
    SECTION("length mismatch is an error") {
        const Grid g = grid_1d(8, 8.0, Bc::periodic, 2);
        std::vector<double> wrong(3, 0.0);
        CHECK_THROWS_AS(prolongate(wrong, g), std::invalid_argument);
    }
}

TEST_CASE("grid invariants") {
    Grid g = grid_1d(8, 8.0, Bc::periodic, 3);
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);  // stride must divide periodic extents
    g = grid_1d(8, 8.0, Bc::dirichlet, 3);
    CHECK_NOTHROW(g.validate());
    CHECK(g.n_coarse() == 3);  // indices 0, 3, 6
    g.lengths[0] = -1.0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
