#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rlq/error.hpp"

namespace rlq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix identity(Eigen::Index n) { return Matrix::Identity(n, n); }

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Relative asymmetry ‖M − Mᵀ‖_F / max(‖M‖_F, 1).
inline double asymmetry(const Matrix& m) {
    if (m.rows() != m.cols()) return INFINITY;
    return (m - m.transpose()).norm() / std::max(m.norm(), 1.0);
}

inline double min_eigenvalue(const Matrix& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sym), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Matrix& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(sym), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

/// Largest real part among the eigenvalues of a general square matrix.
inline double spectral_abscissa(const Matrix& m) {
    if (m.size() == 0) return -INFINITY;
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().real().maxCoeff();
}

/// Positive definiteness by Cholesky: every pivot must exceed 1e-12·‖M‖_F.
/// An unpivoted LDLᵀ is run by hand so that the pivots themselves are visible.
inline bool is_positive_definite(const Matrix& m, double rel_threshold = 1e-12) {
    const Eigen::Index n = m.rows();
    if (n != m.cols() || n == 0) return false;
    const double threshold = rel_threshold * std::max(m.norm(), 1e-300);
    Matrix l = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (!(pivot > threshold)) return false;
        l(j, j) = std::sqrt(pivot);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return true;
}

/// Row-major flattening, the layout used by every file format in the project.
inline std::vector<double> flatten_row_major(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

inline Matrix from_row_major(std::span<const double> data, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw Error(ErrorCode::DimensionMismatch, "linalg", "from_row_major",
                    "expected " + std::to_string(rows * cols) + " entries, got " +
                        std::to_string(data.size()));
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)];
    return m;
}

/// Pairwise summation; the reduction order depends only on the length.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct MeanAndError {
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean and standard error of the mean (unbiased variance).
inline MeanAndError mean_and_se(std::span<const double> v) {
    MeanAndError r;
    if (v.empty()) return r;
    const double n = static_cast<double>(v.size());
    r.mean = pairwise_sum(v) / n;
    if (v.size() < 2) return r;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
    const double var = pairwise_sum(sq) / (n - 1.0);
    r.se = std::sqrt(var / n);
    return r;
}

}  // namespace rlq
