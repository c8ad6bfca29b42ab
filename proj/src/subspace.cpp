#include "oasis/subspace.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oasis {

namespace {

[[maybe_unused]] bool is_orthonormal(const Matrix& u, double tol) {
    return fro_norm(matmul_tn(u, u) - Matrix::identity(u.cols())) < tol;
}

void check_step_inputs(const SubspaceBasis& prev, const Matrix& c, const char* op) {
    if (c.rows() != c.cols() || c.rows() != prev.dim()) {
        throw ShapeError(std::string(op) + ": covariance " + c.shape_string() +
                         " does not match basis " + prev.u.shape_string());
    }
    require_finite(c, op);
}

TrackerStep unchanged(const SubspaceBasis& prev) {
    SubspaceBasis next{prev.u, prev.step + 1};
    return {std::move(next), TransitionMatrix::identity(prev.rank(), prev.step), 0.0};
}

TrackerStep replaced(const SubspaceBasis& prev, Matrix u_new) {
    TransitionMatrix tm{matmul_tn(u_new, prev.u), prev.step, prev.step + 1};
    SubspaceBasis next{std::move(u_new), prev.step + 1};
    assert(is_orthonormal(next.u, 1e-8));
    return {std::move(next), std::move(tm), 0.0};
}

}  // namespace

TransitionMatrix TransitionMatrix::identity(std::size_t r, std::size_t step) {
    return {Matrix::identity(r), step, step + 1};
}

std::string tracker_name(const TrackerKind& kind) {
    struct Visitor {
        std::string operator()(const OjaConfig&) const { return "oja"; }
        std::string operator()(const PeriodicPca&) const { return "periodic_pca"; }
        std::string operator()(const FixedBasis&) const { return "fixed"; }
    };
    return std::visit(Visitor{}, kind);
}

void validate(const TrackerKind& kind) {
    if (const auto* oja = std::get_if<OjaConfig>(&kind)) {
        if (!(oja->gamma > 0.0)) throw std::invalid_argument("oja: gamma must be > 0");
        if (!(oja->norm_floor >= 0.0)) throw std::invalid_argument("oja: norm_floor must be >= 0");
    } else if (const auto* pca = std::get_if<PeriodicPca>(&kind)) {
        if (pca->interval < 1) throw std::invalid_argument("periodic_pca: interval must be >= 1");
    }
}

Matrix covariance(const Matrix& x) {
    Matrix c = matmul_tn(x, x);
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    const std::size_t d = c.rows();
    for (std::size_t i = 0; i < d; ++i) {
        c(i, i) *= inv_n;
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (c(i, j) + c(j, i)) * inv_n;
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    return c;
}

SubspaceBasis init_basis(const Matrix& x0, std::size_t r) {
    if (r < 1 || r > x0.cols()) {
        throw ShapeError("init_basis: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(x0.cols()) + "]");
    }
    require_finite(x0, "init_basis");
    if (max_abs(x0) == 0.0) {
        throw NumericError("init_basis: activations are all zero, no principal directions");
    }
    return {sym_eig_topr(covariance(x0), r).vectors, 0};
}

TrackerStep oja_step(const SubspaceBasis& prev, const Matrix& c, const OjaConfig& cfg) {
    check_step_inputs(prev, c, "oja_step");
    const double norm =
        cfg.norm == CovNorm::Frobenius ? fro_norm(c) : spectral_norm_estimate(c);
    if (norm <= cfg.norm_floor || norm == 0.0) return unchanged(prev);

    const Matrix& u = prev.u;
    const Matrix cu = matmul(c, u);
    // (I - U U^T) C U without forming the d x d projector.
    Matrix residual = cu - matmul(u, matmul_tn(u, cu));
    const double step = cfg.gamma / norm;
    residual *= step;
    TrackerStep out = replaced(prev, qr_orthonormalize(u + residual));
    out.effective_step = step;
    return out;
}

TrackerStep periodic_pca_step(const SubspaceBasis& prev, const Matrix& c, std::size_t interval,
                              std::size_t t) {
    if (interval < 1) throw std::invalid_argument("periodic_pca_step: interval must be >= 1");
    check_step_inputs(prev, c, "periodic_pca_step");
    if (t % interval != 0 || max_abs(c) == 0.0) return unchanged(prev);
    return replaced(prev, sym_eig_topr(c, prev.rank()).vectors);
}

TrackerStep fixed_step(const SubspaceBasis& prev) { return unchanged(prev); }

TrackerStep tracker_step(const TrackerKind& kind, const SubspaceBasis& prev, const Matrix& c,
                         std::size_t t) {
    struct Visitor {
        const SubspaceBasis& prev;
        const Matrix& c;
        std::size_t t;
        TrackerStep operator()(const OjaConfig& cfg) const { return oja_step(prev, c, cfg); }
        TrackerStep operator()(const PeriodicPca& p) const {
            return periodic_pca_step(prev, c, p.interval, t);
        }
        TrackerStep operator()(const FixedBasis&) const { return fixed_step(prev); }
    };
    return std::visit(Visitor{prev, c, t}, kind);
}

double drift(const Matrix& t, std::size_t r) {
    if (r == 0) throw std::invalid_argument("drift: rank must be >= 1");
    const double v = 1.0 - fro_norm_squared(t) / static_cast<double>(r);
    // ||T||_F^2 / r carries O(r eps) rounding from T itself; below that the
    // square root would only amplify noise (sqrt(1e-16) = 1e-8).
    const double roundoff = 16.0 * static_cast<double>(r) * std::numeric_limits<double>::epsilon();
    if (v <= roundoff) return 0.0;
    return std::min(1.0, std::sqrt(v));
}

std::vector<double> principal_cosines(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("principal_cosines: ambient dimensions differ");
    const Matrix m = matmul_tn(a, b);
    const Matrix gram = m.rows() <= m.cols() ? matmul_nt(m, m) : matmul_tn(m, m);
    EigenPair eig = sym_eig(gram);
    std::vector<double> out;
    out.reserve(eig.values.size());
    for (double v : eig.values) out.push_back(std::min(1.0, std::sqrt(std::max(0.0, v))));
    return out;
}

double max_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("max_principal_angle: ambient dimensions differ");
    // Sines of the angles are the singular values of (I - A A^T) B; this stays
    // accurate for tiny angles where acos of the cosines would not.
    const Matrix resid = b - matmul(a, matmul_tn(a, b));
    const EigenPair eig = sym_eig(matmul_tn(resid, resid));
    const double s = std::sqrt(std::max(0.0, eig.values.front()));
    return std::asin(std::min(1.0, s));
}

}  // namespace oasis
