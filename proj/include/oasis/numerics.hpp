#pragma once

// Dense double-precision linear algebra used throughout the toolkit.
//
// Everything here is a pure function of its inputs with a fixed loop order,
// so results are bitwise reproducible for a given input.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oasis {

/// Thrown when operand shapes do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for numerically invalid input (NaN, rank deficiency, asymmetry).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major dense matrix. Never empty: rows >= 1 and cols >= 1.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    std::vector<double> column(std::size_t j) const;
    void set_column(std::size_t j, std::span<const double> values);

    /// "RxC" for error messages.
    std::string shape_string() const;
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// A * B with a fixed i-k-j accumulation order.
Matrix matmul(const Matrix& a, const Matrix& b);
/// A^T * B without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// A * B^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix square(const Matrix& a);
Matrix abs(const Matrix& a);

double fro_norm(const Matrix& a);
double fro_norm_squared(const Matrix& a);
/// Largest absolute entry.
double max_abs(const Matrix& a);
/// Largest eigenvalue magnitude of a symmetric matrix by a fixed number of
/// power iterations from a deterministic start vector.
double spectral_norm_estimate(const Matrix& sym, int iterations = 100);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& a, const std::string& what);

/// Thin Householder QR, returning the d x r factor Q with Q^T Q = I and
/// span(Q) = span(A). The R diagonal is made nonnegative so Q is unique.
Matrix qr_orthonormalize(const Matrix& a);

/// Eigenpairs of a symmetric matrix, values descending, vectors as columns.
struct EigenPair {
    std::vector<double> values;
    Matrix vectors;
};

/// Full cyclic-Jacobi eigendecomposition of a symmetric matrix.
///
/// Values are sorted in descending order with ties kept in index order. Each
/// eigenvector is oriented so that its first entry of largest magnitude is
/// nonnegative. Throws NumericError when the input is asymmetric beyond
/// 1e-10 relative to its largest entry.
EigenPair sym_eig(const Matrix& c);

/// Top-r slice of sym_eig.
EigenPair sym_eig_topr(const Matrix& c, std::size_t r);

/// Deterministic generator. The bit stream comes from mt19937_64, whose output
/// sequence is fixed by the standard; the real-valued transforms are done here
/// rather than by the platform's distribution classes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    /// Independent stream derived from (seed, a, b) by splitmix mixing.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal by the Marsaglia polar method.
    double normal();

    Matrix normal_matrix(std::size_t rows, std::size_t cols);
    Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);
    /// Random d x r matrix with orthonormal columns (QR of a Gaussian matrix).
    Matrix orthonormal(std::size_t d, std::size_t r);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace oasis
