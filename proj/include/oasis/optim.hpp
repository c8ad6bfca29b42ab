#pragma once

// Projection-aware low-rank Adam and the plain full-space Adam baseline.

#include <cstdint>
#include <string>

#include "oasis/numerics.hpp"
#include "oasis/subspace.hpp"

namespace oasis {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Throws std::invalid_argument when a hyperparameter is out of range.
void validate(const AdamHyper& h);

/// How the moments inside the second-moment transport are read.
///
/// BiasCorrected uses M_hat, V_hat of the previous step, which reduces exactly
/// to Adam when T = I. Raw uses M, V directly; it exists only so the oracle
/// suite can confirm the equivalence check rejects it.
enum class MomentReading { BiasCorrected, Raw };

/// First and second moments in r x m subspace coordinates.
struct LowRankAdamState {
    Matrix m;
    Matrix v;
    std::uint64_t t = 0;

    LowRankAdamState(std::size_t rank, std::size_t cols) : m(rank, cols), v(rank, cols) {}
};

struct FullAdamState {
    Matrix m;
    Matrix v;
    std::uint64_t t = 0;

    FullAdamState(std::size_t rows, std::size_t cols) : m(rows, cols), v(rows, cols) {}
};

/// Advances `state` by one projection-aware step and returns the normalized
/// direction N = M_hat / (sqrt(V_hat) + eps) in subspace coordinates.
///
/// The previous moments are first carried into the new basis through T:
///   M_t = b1 (T M_{t-1}) + (1 - b1) G
///   V_t = b2 (1 - b2^{t-1}) | T.^2 (V_hat - M_hat.^2) + (T M_hat).^2 | + (1 - b2) G.^2
/// where the hatted moments are those of step t-1 and the transport terms
/// vanish at t = 1. `label` names the parameter in error messages.
Matrix lowrank_adam_step(LowRankAdamState& state, const Matrix& grad, const TransitionMatrix& tm,
                         const AdamHyper& hyper, const std::string& label = "layer",
                         MomentReading reading = MomentReading::BiasCorrected);

/// W - lr * U * N.
Matrix apply_update(const Matrix& w, const SubspaceBasis& basis, const Matrix& direction,
                    double lr);

/// Textbook Adam with bias correction. Returns the additive update
/// -lr * M_hat / (sqrt(V_hat) + eps).
Matrix full_adam_step(FullAdamState& state, const Matrix& grad, const AdamHyper& hyper,
                      const std::string& label = "param");

}  // namespace oasis
