#include "oasis/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace oasis {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("Matrix: dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
    if (rows_ == 0 || cols_ == 0) throw ShapeError("Matrix: empty initializer");
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

std::vector<double> Matrix::column(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
}

void Matrix::set_column(std::size_t j, std::span<const double> values) {
    if (values.size() != rows_) throw ShapeError("set_column: length mismatch");
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " * " +
                         b.shape_string());
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ, " + a.shape_string() + "^T * " +
                         b.shape_string());
    }
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k).data();
        const double* bk = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column counts differ, " + a.shape_string() + " * " +
                         b.shape_string() + "^T");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= bd[i];
    return c;
}

Matrix square(const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v *= v;
    return c;
}

Matrix abs(const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v = std::fabs(v);
    return c;
}

double fro_norm_squared(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

double fro_norm(const Matrix& a) { return std::sqrt(fro_norm_squared(a)); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

double spectral_norm_estimate(const Matrix& sym, int iterations) {
    if (sym.rows() != sym.cols()) throw ShapeError("spectral_norm_estimate: not square");
    const std::size_t n = sym.rows();
    Matrix v(n, 1);
    for (std::size_t i = 0; i < n; ++i) v(i, 0) = 1.0 + 0.5 * static_cast<double>(i) / n;
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double nv = fro_norm(v);
        if (nv == 0.0) return 0.0;
        v *= 1.0 / nv;
        Matrix w = matmul(sym, v);
        lambda = fro_norm(w);
        v = std::move(w);
    }
    return lambda;
}

void require_finite(const Matrix& a, const std::string& what) {
    if (!a.all_finite()) throw NumericError(what + ": non-finite entry");
}

Matrix qr_orthonormalize(const Matrix& a) {
    const std::size_t d = a.rows();
    const std::size_t r = a.cols();
    if (d < r) {
        throw ShapeError("qr_orthonormalize: need rows >= cols, got " + a.shape_string());
    }

    double largest_col = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a(i, j) * a(i, j);
        largest_col = std::max(largest_col, std::sqrt(s));
    }
    const double tol = 1e-12 * largest_col;

    Matrix work = a;
    std::vector<std::vector<double>> reflectors(r);
    std::vector<double> rdiag(r);
    for (std::size_t j = 0; j < r; ++j) {
        double norm_x = 0.0;
        for (std::size_t i = j; i < d; ++i) norm_x += work(i, j) * work(i, j);
        norm_x = std::sqrt(norm_x);
        if (norm_x <= tol || norm_x == 0.0) {
            throw NumericError("qr_orthonormalize: column " + std::to_string(j) +
                               " is numerically rank deficient");
        }
        const double alpha = work(j, j) > 0.0 ? -norm_x : norm_x;
        std::vector<double> v(d - j);
        for (std::size_t i = j; i < d; ++i) v[i - j] = work(i, j);
        v[0] -= alpha;
        double vnorm = 0.0;
        for (double x : v) vnorm += x * x;
        vnorm = std::sqrt(vnorm);
        for (double& x : v) x /= vnorm;

        for (std::size_t k = j; k < r; ++k) {
            double dot = 0.0;
            for (std::size_t i = j; i < d; ++i) dot += v[i - j] * work(i, k);
            for (std::size_t i = j; i < d; ++i) work(i, k) -= 2.0 * dot * v[i - j];
        }
        rdiag[j] = alpha;
        reflectors[j] = std::move(v);
    }

    // Q = H_0 ... H_{r-1} [I_r; 0]
    Matrix q(d, r);
    for (std::size_t j = 0; j < r; ++j) q(j, j) = 1.0;
    for (std::size_t jj = r; jj-- > 0;) {
        const auto& v = reflectors[jj];
        for (std::size_t k = 0; k < r; ++k) {
            double dot = 0.0;
            for (std::size_t i = jj; i < d; ++i) dot += v[i - jj] * q(i, k);
            if (dot == 0.0) continue;
            for (std::size_t i = jj; i < d; ++i) q(i, k) -= 2.0 * dot * v[i - jj];
        }
    }
    for (std::size_t j = 0; j < r; ++j) {
        if (rdiag[j] < 0.0) {
            for (std::size_t i = 0; i < d; ++i) q(i, j) = -q(i, j);
        }
    }
    return q;
}

EigenPair sym_eig(const Matrix& c) {
    if (c.rows() != c.cols()) {
        throw ShapeError("sym_eig: matrix must be square, got " + c.shape_string());
    }
    require_finite(c, "sym_eig");
    const std::size_t n = c.rows();
    const double scale = max_abs(c);
    double asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::fabs(c(i, j) - c(j, i)));
    if (asym > 1e-10 * scale) {
        std::ostringstream msg;
        msg << "sym_eig: matrix is not symmetric, max asymmetry " << asym;
        throw NumericError(msg.str());
    }

    Matrix a = c;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (c(i, j) + c(j, i));
    Matrix v = Matrix::identity(n);

    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off == 0.0) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double g = 100.0 * std::fabs(apq);
                if (sweep > 3 && std::fabs(app) + g == std::fabs(app) &&
                    std::fabs(aqq) + g == std::fabs(aqq)) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (aqq - app) / (2.0 * apq);
                double t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                if (theta < 0.0) t = -t;
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = cs * akp - sn * akq;
                    a(k, q) = sn * akp + cs * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = cs * apk - sn * aqk;
                    a(q, k) = sn * apk + cs * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = cs * vkp - sn * vkq;
                    v(k, q) = sn * vkp + cs * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenPair out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.values[k] = a(src, src);
        std::size_t lead = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::fabs(v(i, src)) > std::fabs(v(lead, src))) lead = i;
        const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = sign * v(i, src);
    }
    return out;
}

EigenPair sym_eig_topr(const Matrix& c, std::size_t r) {
    if (r < 1 || r > c.rows()) {
        throw ShapeError("sym_eig_topr: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(c.rows()) + "]");
    }
    EigenPair full = sym_eig(c);
    EigenPair out{std::vector<double>(full.values.begin(), full.values.begin() + r),
                  Matrix(c.rows(), r)};
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) out.vectors(i, j) = full.vectors(i, j);
    return out;
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ splitmix64(a + 0x632be59bd9b4e019ULL));
    s = splitmix64(s ^ splitmix64(b + 0x85157af5ULL));
    return Rng(s);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = normal();
    return m;
}

Matrix Rng::uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = uniform(lo, hi);
    return m;
}

Matrix Rng::orthonormal(std::size_t d, std::size_t r) {
    return qr_orthonormalize(normal_matrix(d, r));
}

}  // namespace oasis
