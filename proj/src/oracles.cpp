#include "oasis/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace oasis::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("naive_matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

double naive_fro_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

Matrix naive_covariance(const Matrix& x) {
    const std::size_t d = x.cols();
    Matrix c(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t n = 0; n < x.rows(); ++n) s += x(n, i) * x(n, j);
            c(i, j) = s / static_cast<double>(x.rows());
        }
    return c;
}

Matrix gram_schmidt(const Matrix& a) {
    Matrix q = a;
    for (std::size_t j = 0; j < q.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < q.rows(); ++i) dot += q(i, k) * q(i, j);
            for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) -= dot * q(i, k);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < q.rows(); ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw NumericError("gram_schmidt: dependent columns");
        for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) /= norm;
    }
    return q;
}

Matrix projector(const Matrix& q) { return naive_matmul(q, naive_transpose(q)); }

std::vector<double> power_iteration_eigenvalues(const Matrix& sym, std::size_t k,
                                                int max_iterations) {
    const std::size_t n = sym.rows();
    Matrix a = sym;
    std::vector<double> out;
    for (std::size_t e = 0; e < k; ++e) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.37 * static_cast<double>((i * 7 + e) % 5);
        double lambda = 0.0;
        for (int it = 0; it < max_iterations; ++it) {
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            for (double& x : v) x /= norm;
            std::vector<double> w(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) w[i] += a(i, j) * v[j];
            double next = 0.0;
            for (std::size_t i = 0; i < n; ++i) next += v[i] * w[i];
            v = std::move(w);
            const bool converged = std::fabs(next - lambda) <= 1e-15 * std::fabs(next);
            lambda = next;
            if (converged && it > 10) break;
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x : v) x /= norm;
        out.push_back(lambda);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a(i, j) -= lambda * v[i] * v[j];
    }
    return out;
}

std::vector<double> power_iteration_singular_values(const Matrix& b, std::size_t k) {
    std::vector<double> eig = power_iteration_eigenvalues(naive_matmul(naive_transpose(b), b), k);
    for (double& v : eig) v = std::sqrt(std::max(0.0, v));
    return eig;
}

std::vector<double> gram_singular_values(const Matrix& a) {
    const EigenPair e = sym_eig(naive_matmul(naive_transpose(a), a));
    std::vector<double> out;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) dot += a(i, j) * e.vectors(j, k);
            s += dot * dot;
        }
        out.push_back(std::sqrt(s));
    }
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

std::vector<Matrix> ScalarAdam::run(Matrix w, const std::vector<Matrix>& grads) const {
    std::vector<double> m(w.size(), 0.0);
    std::vector<double> v(w.size(), 0.0);
    std::vector<Matrix> trajectory;
    trajectory.reserve(grads.size());
    double b1t = 1.0;
    double b2t = 1.0;
    for (const Matrix& g : grads) {
        b1t *= beta1;
        b2t *= beta2;
        for (std::size_t i = 0; i < w.rows(); ++i) {
            for (std::size_t j = 0; j < w.cols(); ++j) {
                const std::size_t k = i * w.cols() + j;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g(i, j);
                v[k] = beta2 * v[k] + (1.0 - beta2) * g(i, j) * g(i, j);
                const double mhat = m[k] / (1.0 - b1t);
                const double vhat = v[k] / (1.0 - b2t);
                w(i, j) -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        trajectory.push_back(w);
    }
    return trajectory;
}

double central_difference(const std::function<double(const Matrix&)>& f, const Matrix& w,
                          std::size_t i, std::size_t j, double h) {
    Matrix plus = w;
    Matrix minus = w;
    plus(i, j) += h;
    minus(i, j) -= h;
    return (f(plus) - f(minus)) / (2.0 * h);
}

}  // namespace oasis::oracle
