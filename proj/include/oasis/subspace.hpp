#pragma once

// Activation-subspace trackers and the drift metric.
//
// A tracker owns nothing but its configuration; the basis is passed in and a
// new basis plus the transition matrix T = U_new^T U_prev is returned. T is
// always formed from the re-orthonormalized basis, since that is the basis the
// optimizer sees.

#include <cstddef>
#include <string>
#include <utility>
#include <variant>

#include "oasis/numerics.hpp"

namespace oasis {

/// Orthonormal d x r basis of a tracked subspace.
struct SubspaceBasis {
    Matrix u;
    std::size_t step = 0;

    std::size_t dim() const noexcept { return u.rows(); }
    std::size_t rank() const noexcept { return u.cols(); }
};

/// T = U_to^T U_from, used to carry optimizer moments between bases.
struct TransitionMatrix {
    Matrix t;
    std::size_t from_step = 0;
    std::size_t to_step = 0;

    static TransitionMatrix identity(std::size_t r, std::size_t step);
    std::size_t rank() const noexcept { return t.rows(); }
};

/// Which norm scales the Oja step (gamma / ||C||).
enum class CovNorm { Frobenius, SpectralEstimate };

struct OjaConfig {
    double gamma = 0.1;
    double norm_floor = 1e-30;
    CovNorm norm = CovNorm::Frobenius;
};

struct PeriodicPca {
    std::size_t interval = 10;
};

struct FixedBasis {};

using TrackerKind = std::variant<OjaConfig, PeriodicPca, FixedBasis>;

std::string tracker_name(const TrackerKind& kind);
/// Throws std::invalid_argument on gamma <= 0, negative floor or interval 0.
void validate(const TrackerKind& kind);

/// Result of one tracker step.
struct TrackerStep {
    SubspaceBasis basis;
    TransitionMatrix transition;
    /// gamma / ||C|| actually applied; 0 when the step was skipped or the
    /// tracker is not Oja.
    double effective_step = 0.0;
};

/// C = X^T X / N, symmetrized exactly.
Matrix covariance(const Matrix& x);

/// U_0 = top-r eigenvectors of covariance(x0).
SubspaceBasis init_basis(const Matrix& x0, std::size_t r);

/// One normalized Oja update followed by re-orthonormalization.
///
/// U_hat = U + (gamma / ||C||) (I - U U^T) C U, U_new = orth(U_hat). When
/// ||C|| <= norm_floor the update is skipped and T = I.
TrackerStep oja_step(const SubspaceBasis& prev, const Matrix& c, const OjaConfig& cfg);

/// Every `interval` steps (t mod interval == 0) replace the basis by the top-r
/// eigenvectors of the current batch covariance; otherwise keep it.
TrackerStep periodic_pca_step(const SubspaceBasis& prev, const Matrix& c, std::size_t interval,
                              std::size_t t);

TrackerStep fixed_step(const SubspaceBasis& prev);

/// Dispatches on the tracker kind. `t` is the index of the step being taken.
TrackerStep tracker_step(const TrackerKind& kind, const SubspaceBasis& prev, const Matrix& c,
                         std::size_t t);

/// sqrt(1 - ||T||_F^2 / r), clamped to [0, 1]. When 1 - ||T||_F^2 / r is within
/// rounding of zero (16 r eps) the result is exactly 0.
double drift(const Matrix& t, std::size_t r);
inline double drift(const TransitionMatrix& tm) { return drift(tm.t, tm.rank()); }

/// Cosines of the principal angles between span(a) and span(b), descending.
/// Both inputs must have orthonormal columns.
std::vector<double> principal_cosines(const Matrix& a, const Matrix& b);
/// Largest principal angle in radians.
double max_principal_angle(const Matrix& a, const Matrix& b);

}  // namespace oasis
