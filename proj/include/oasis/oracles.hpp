#pragma once

// Reference computations used to check the main code paths.
//
// Every routine here is written with plain scalar loops and shares no code
// with the implementation it checks beyond the Matrix container.

#include <cstddef>
#include <functional>
#include <vector>

#include "oasis/numerics.hpp"

namespace oasis::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b);
Matrix naive_transpose(const Matrix& a);
double naive_fro_norm(const Matrix& a);
/// Sum_n X_ni X_nj / N per entry.
Matrix naive_covariance(const Matrix& x);

/// Modified Gram-Schmidt on the columns of A.
Matrix gram_schmidt(const Matrix& a);

/// Orthogonal projector Q Q^T for orthonormal Q.
Matrix projector(const Matrix& q);

/// Largest `k` eigenvalues of a symmetric PSD matrix by power iteration with
/// Hotelling deflation.
std::vector<double> power_iteration_eigenvalues(const Matrix& sym, std::size_t k,
                                                int max_iterations = 20000);

/// Singular values of B (descending) via power iteration on B^T B.
std::vector<double> power_iteration_singular_values(const Matrix& b, std::size_t k);

/// Singular values of A, descending, as ||A v_i|| along the eigenvectors v_i of
/// A^T A. Small singular values keep absolute accuracy near eps * ||A||, which
/// the square roots of the Gram eigenvalues would not.
std::vector<double> gram_singular_values(const Matrix& a);

/// Per-coordinate textbook Adam. Feeds `grads` in order and returns the
/// parameter trajectory (one entry per step, after the update).
struct ScalarAdam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    std::vector<Matrix> run(Matrix w, const std::vector<Matrix>& grads) const;
};

/// Central finite differences of f at entry (i, j) of w.
double central_difference(const std::function<double(const Matrix&)>& f, const Matrix& w,
                          std::size_t i, std::size_t j, double h);

}  // namespace oasis::oracle
