#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qscf {

/// Real-symmetric sparse matrix in compressed-row layout. Column indices
/// within each row are sorted ascending and the row pattern always contains
/// the diagonal for matrices produced by the stencil builders.
struct SparseHamiltonian {
    int n_rows = 0;
    std::vector<int> row_offsets;  // size n_rows + 1
    std::vector<int> col_indices;
    std::vector<double> values;
    int sparsity = 0;  // max nonzeros per row

    int nnz() const { return static_cast<int>(col_indices.size()); }

    static SparseHamiltonian from_triplets(
        int n, const std::vector<std::pair<std::pair<int, int>, double>>& triplets) {
        std::vector<std::map<int, double>> rows(n);
        for (const auto& t : triplets) {
            const int i = t.first.first;
            const int j = t.first.second;
            if (i < 0 || i >= n || j < 0 || j >= n)
                throw std::out_of_range("SparseHamiltonian::from_triplets: index out of range");
            rows[i][j] += t.second;
        }
        SparseHamiltonian out;
        out.n_rows = n;
        out.row_offsets.assign(n + 1, 0);
        for (int i = 0; i < n; ++i) out.row_offsets[i + 1] = out.row_offsets[i] + static_cast<int>(rows[i].size());
        out.col_indices.reserve(out.row_offsets[n]);
        out.values.reserve(out.row_offsets[n]);
        for (int i = 0; i < n; ++i) {
            out.sparsity = std::max(out.sparsity, static_cast<int>(rows[i].size()));
            for (const auto& [j, v] : rows[i]) {
                out.col_indices.push_back(j);
                out.values.push_back(v);
            }
        }
        return out;
    }

    /// y = H x
    void multiply(std::span<const double> x, std::span<double> y) const {
        if (static_cast<int>(x.size()) != n_rows || static_cast<int>(y.size()) != n_rows)
            throw std::invalid_argument("SparseHamiltonian::multiply: dimension mismatch");
        for (int i = 0; i < n_rows; ++i) {
            double acc = 0.0;
            for (int k = row_offsets[i]; k < row_offsets[i + 1]; ++k)
                acc += values[k] * x[col_indices[k]];
            y[i] = acc;
        }
    }

    std::vector<double> multiply(std::span<const double> x) const {
        std::vector<double> y(n_rows);
        multiply(x, y);
        return y;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(n_rows, 0.0);
        for (int i = 0; i < n_rows; ++i)
            for (int k = row_offsets[i]; k < row_offsets[i + 1]; ++k)
                if (col_indices[k] == i) d[i] = values[k];
        return d;
    }

    /// Adds v onto the diagonal; every row of a stencil matrix carries its
    /// diagonal entry, so the pattern never changes.
    void add_to_diagonal(std::span<const double> v) {
        if (static_cast<int>(v.size()) != n_rows)
            throw std::invalid_argument("SparseHamiltonian::add_to_diagonal: dimension mismatch");
        for (int i = 0; i < n_rows; ++i) {
            bool found = false;
            for (int k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
                if (col_indices[k] == i) {
                    values[k] += v[i];
                    found = true;
                    break;
                }
            }
            if (!found) throw std::logic_error("SparseHamiltonian::add_to_diagonal: missing diagonal entry");
        }
    }

    /// max_ij |H(i,j) - H(j,i)|, 0 for exactly symmetric matrices.
    double max_asymmetry() const {
        double worst = 0.0;
        for (int i = 0; i < n_rows; ++i) {
            for (int k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
                const int j = col_indices[k];
                double vt = 0.0;
                for (int kk = row_offsets[j]; kk < row_offsets[j + 1]; ++kk)
                    if (col_indices[kk] == i) vt = values[kk];
                worst = std::max(worst, std::abs(values[k] - vt));
            }
        }
        return worst;
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs_value() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }

    /// Gershgorin row radius sum_{j != i} |H(i,j)|.
    double row_radius(int i) const {
        double r = 0.0;
        for (int k = row_offsets[i]; k < row_offsets[i + 1]; ++k)
            if (col_indices[k] != i) r += std::abs(values[k]);
        return r;
    }
};

}  // namespace qscf
