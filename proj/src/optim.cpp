#include "oasis/optim.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oasis {

namespace {

void check_gradient(const Matrix& grad, const Matrix& expected_shape, const std::string& label) {
    if (!grad.same_shape(expected_shape)) {
        throw ShapeError(label + ": gradient " + grad.shape_string() + " does not match state " +
                         expected_shape.shape_string());
    }
    if (!grad.all_finite()) throw NumericError(label + ": non-finite gradient");
}

void advance_counter(std::uint64_t& t, const std::string& label) {
    if (t == std::numeric_limits<std::uint64_t>::max()) {
        throw std::overflow_error(label + ": optimizer step counter overflow");
    }
    ++t;
}

}  // namespace

void validate(const AdamHyper& h) {
    if (!(h.lr > 0.0)) throw std::invalid_argument("adam: lr must be > 0");
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) throw std::invalid_argument("adam: beta1 not in [0,1)");
    if (!(h.beta2 >= 0.0 && h.beta2 < 1.0)) throw std::invalid_argument("adam: beta2 not in [0,1)");
    if (!(h.eps > 0.0)) throw std::invalid_argument("adam: eps must be > 0");
}

Matrix lowrank_adam_step(LowRankAdamState& state, const Matrix& grad, const TransitionMatrix& tm,
                         const AdamHyper& hyper, const std::string& label, MomentReading reading) {
    check_gradient(grad, state.m, label);
    const std::size_t r = state.m.rows();
    if (tm.t.rows() != r || tm.t.cols() != r) {
        throw ShapeError(label + ": transition " + tm.t.shape_string() + " does not match rank " +
                         std::to_string(r));
    }
    advance_counter(state.t, label);
    const double t = static_cast<double>(state.t);
    const double b1 = hyper.beta1;
    const double b2 = hyper.beta2;

    // Transported first moment, always from the raw M.
    Matrix m_new = matmul(tm.t, state.m);
    m_new *= b1;
    {
        auto md = m_new.data();
        auto gd = grad.data();
        for (std::size_t i = 0; i < md.size(); ++i) md[i] += (1.0 - b1) * gd[i];
    }

    Matrix v_new(r, state.v.cols());
    if (state.t >= 2) {
        Matrix m_prev = state.m;
        Matrix v_prev = state.v;
        if (reading == MomentReading::BiasCorrected) {
            m_prev *= 1.0 / (1.0 - std::pow(b1, t - 1.0));
            v_prev *= 1.0 / (1.0 - std::pow(b2, t - 1.0));
        }
        const Matrix variance = v_prev - square(m_prev);
        Matrix transported = matmul(square(tm.t), variance) + square(matmul(tm.t, m_prev));
        const double carry = b2 * (1.0 - std::pow(b2, t - 1.0));
        auto vd = v_new.data();
        auto td = transported.data();
        for (std::size_t i = 0; i < vd.size(); ++i) vd[i] = carry * std::fabs(td[i]);
    }
    {
        auto vd = v_new.data();
        auto gd = grad.data();
        for (std::size_t i = 0; i < vd.size(); ++i) vd[i] += (1.0 - b2) * gd[i] * gd[i];
    }

    const double c1 = 1.0 / (1.0 - std::pow(b1, t));
    const double c2 = 1.0 / (1.0 - std::pow(b2, t));
    Matrix direction(r, state.m.cols());
    auto nd = direction.data();
    auto md = m_new.data();
    auto vd = v_new.data();
    for (std::size_t i = 0; i < nd.size(); ++i) {
        assert(vd[i] >= 0.0);
        nd[i] = (md[i] * c1) / (std::sqrt(vd[i] * c2) + hyper.eps);
    }

    state.m = std::move(m_new);
    state.v = std::move(v_new);
    return direction;
}

Matrix apply_update(const Matrix& w, const SubspaceBasis& basis, const Matrix& direction,
                    double lr) {
    if (basis.dim() != w.rows() || direction.rows() != basis.rank() ||
        direction.cols() != w.cols()) {
        throw ShapeError("apply_update: W " + w.shape_string() + ", U " +
                         basis.u.shape_string() + ", N " + direction.shape_string());
    }
    Matrix step = matmul(basis.u, direction);
    step *= lr;
    return w - step;
}

Matrix full_adam_step(FullAdamState& state, const Matrix& grad, const AdamHyper& hyper,
                      const std::string& label) {
    check_gradient(grad, state.m, label);
    advance_counter(state.t, label);
    const double t = static_cast<double>(state.t);
    const double b1 = hyper.beta1;
    const double b2 = hyper.beta2;
    const double c1 = 1.0 / (1.0 - std::pow(b1, t));
    const double c2 = 1.0 / (1.0 - std::pow(b2, t));

    Matrix update(grad.rows(), grad.cols());
    auto md = state.m.data();
    auto vd = state.v.data();
    auto gd = grad.data();
    auto ud = update.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
        md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
        vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
        ud[i] = -hyper.lr * ((md[i] * c1) / (std::sqrt(vd[i] * c2) + hyper.eps));
    }
    return update;
}

}  // namespace oasis
