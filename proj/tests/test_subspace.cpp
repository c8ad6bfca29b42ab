#include "doctest.h"

#include <cmath>
#include <vector>

#include "oasis/oracles.hpp"
#include "oasis/subspace.hpp"

using namespace oasis;

namespace {

Matrix stationary_covariance() {
    std::vector<double> diag(8, 0.25);
    diag[0] = 4.0;
    diag[1] = 1.0;
    return Matrix::diagonal(diag);
}

Matrix e12(std::size_t d) {
    Matrix e(d, 2);
    e(0, 0) = 1.0;
    e(1, 1) = 1.0;
    return e;
}

double orth_error(const Matrix& u) { return fro_norm(matmul_tn(u, u) - Matrix::identity(u.cols())); }

}  // namespace

TEST_CASE("covariance") {
    CHECK(covariance(Matrix{{1, 0}, {0, 1}}) == Matrix{{0.5, 0}, {0, 0.5}});
    CHECK(covariance(Matrix(4, 3)) == Matrix(3, 3));
    Rng rng(2);
    const Matrix x = rng.normal_matrix(32, 8);
    const Matrix c = covariance(x);
    CHECK(fro_norm(c - oracle::naive_covariance(x)) < 1e-12);
    CHECK(c == transpose(c));
}

TEST_CASE("init_basis") {
    SUBCASE("rows drawn from span(e1, e2)") {
        Rng rng(4);
        Matrix x(20, 5);
        for (std::size_t i = 0; i < 20; ++i) {
            x(i, 0) = rng.normal();
            x(i, 1) = rng.normal();
        }
        const SubspaceBasis b = init_basis(x, 2);
        CHECK(b.step == 0);
        CHECK(max_principal_angle(b.u, e12(5)) < 1e-8);
    }
    SUBCASE("full rank gives a complete basis") {
        Rng rng(5);
        const SubspaceBasis b = init_basis(rng.normal_matrix(30, 4), 4);
        CHECK(fro_norm(matmul_nt(b.u, b.u) - Matrix::identity(4)) < 1e-12);
    }
    SUBCASE("single row e3") {
        Matrix x(1, 4);
        x(0, 2) = 1.0;
        const SubspaceBasis b = init_basis(x, 1);
        CHECK(std::fabs(std::fabs(b.u(2, 0)) - 1.0) < 1e-15);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(init_basis(Matrix(3, 2, 1.0), 3), ShapeError);
        CHECK_THROWS_AS(init_basis(Matrix(3, 2), 1), NumericError);
    }
}

TEST_CASE("oja_step") {
    const OjaConfig cfg{0.1, 1e-30};
    SUBCASE("invariant subspace is a fixed point") {
        Rng rng(6);
        const Matrix q = rng.orthonormal(6, 6);
        Matrix u(6, 2);
        for (std::size_t i = 0; i < 6; ++i) {
            u(i, 0) = q(i, 0);
            u(i, 1) = q(i, 1);
        }
        const std::vector<double> lambda{5, 3, 1, 0.5, 0.2, 0.1};
        const Matrix c = matmul(q, matmul_nt(Matrix::diagonal(lambda), q));
        const TrackerStep s = oja_step({u, 3}, 0.5 * (c + transpose(c)), cfg);
        CHECK(fro_norm(s.basis.u - u) < 1e-12);
        CHECK(fro_norm(s.transition.t - Matrix::identity(2)) < 1e-12);
        CHECK(s.basis.step == 4);
        CHECK(s.transition.from_step == 3);
        CHECK(s.transition.to_step == 4);
    }
    SUBCASE("zero covariance skips the update") {
        Rng rng(7);
        const Matrix u = rng.orthonormal(5, 2);
        const TrackerStep s = oja_step({u, 0}, Matrix(5, 5), cfg);
        CHECK(s.basis.u == u);
        CHECK(s.transition.t == Matrix::identity(2));
        CHECK(s.effective_step == 0.0);
    }
    SUBCASE("effective step is gamma over the Frobenius norm") {
        Rng rng(8);
        const TrackerStep s = oja_step({rng.orthonormal(8, 2), 0}, stationary_covariance(), cfg);
        CHECK(s.effective_step == doctest::Approx(0.1 / std::sqrt(17.375)));
    }
    SUBCASE("errors") {
        Rng rng(9);
        const Matrix u = rng.orthonormal(5, 2);
        CHECK_THROWS_AS(oja_step({u, 0}, Matrix(4, 4), cfg), ShapeError);
        Matrix c = Matrix::identity(5);
        c(1, 1) = std::nan("");
        CHECK_THROWS_AS(oja_step({u, 0}, c, cfg), NumericError);
    }
}

TEST_CASE("oja_step converges on a stationary covariance") {
    const Matrix c = stationary_covariance();
    const OjaConfig cfg{0.1, 1e-30};
    const Matrix target = sym_eig_topr(c, 2).vectors;
    // Asymptotic contraction of tan(angle) per step, power-iteration style:
    // (1 + s lambda_3) / (1 + s lambda_2) with s = gamma / ||C||_F.
    const double s = 0.1 / fro_norm(c);
    const double rate = (1.0 + 0.25 * s) / (1.0 + 1.0 * s);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        SubspaceBasis b{rng.orthonormal(8, 2), 0};
        double prev = max_principal_angle(b.u, target);
        bool monotone = true;
        int reached = -1;
        double at_1000 = 0.0;
        double at_1100 = 0.0;
        for (int k = 1; k <= 1100; ++k) {
            b = oja_step(b, c, cfg).basis;
            CHECK(orth_error(b.u) < 1e-8);
            const double angle = max_principal_angle(b.u, target);
            if (k > 10 && angle > prev + 1e-15) monotone = false;
            prev = angle;
            if (angle < 1e-3 && reached < 0) reached = k;
            if (k == 1000) at_1000 = angle;
            if (k == 1100) at_1100 = angle;
        }
        CHECK_MESSAGE(reached > 0, "seed " << seed);
        CHECK_MESSAGE(monotone, "seed " << seed);
        const double observed = std::pow(std::tan(at_1100) / std::tan(at_1000), 1.0 / 100.0);
        CHECK(observed == doctest::Approx(rate).epsilon(1e-3));
    }
}

TEST_CASE("oja_step is scale equivariant") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 50);
        const Matrix x = rng.normal_matrix(40, 10);
        const Matrix c = covariance(x);
        const SubspaceBasis b{rng.orthonormal(10, 3), 0};
        const OjaConfig cfg{0.1, 1e-30};
        const TrackerStep ref = oja_step(b, c, cfg);
        const double alpha = std::exp(rng.uniform(-5.0, 5.0));
        CHECK(fro_norm(oja_step(b, alpha * c, cfg).basis.u - ref.basis.u) < 1e-12);
        // Powers of two scale exactly.
        CHECK(oja_step(b, 8.0 * c, cfg).basis.u == ref.basis.u);
    }
}

TEST_CASE("spectral-estimate norm keeps the invariants") {
    Rng rng(12);
    const Matrix c = covariance(rng.normal_matrix(50, 6));
    OjaConfig cfg{0.1, 1e-30, CovNorm::SpectralEstimate};
    const TrackerStep s = oja_step({rng.orthonormal(6, 2), 0}, c, cfg);
    CHECK(orth_error(s.basis.u) < 1e-8);
    CHECK(s.effective_step == doctest::Approx(0.1 / sym_eig(c).values[0]).epsilon(1e-8));
}

TEST_CASE("periodic_pca_step") {
    const Matrix c = stationary_covariance();
    Rng rng(13);
    const SubspaceBasis b{rng.orthonormal(8, 2), 0};
    SUBCASE("off-interval steps keep the basis") {
        const TrackerStep s = periodic_pca_step(b, c, 10, 3);
        CHECK(s.basis.u == b.u);
        CHECK(s.transition.t == Matrix::identity(2));
    }
    SUBCASE("refresh takes the batch top-r") {
        const TrackerStep s = periodic_pca_step(b, c, 10, 10);
        CHECK(s.basis.u == sym_eig_topr(c, 2).vectors);
        CHECK(fro_norm(s.transition.t - matmul_tn(s.basis.u, b.u)) == 0.0);
    }
    SUBCASE("interval one is per-step PCA") {
        SubspaceBasis cur = b;
        for (std::size_t t = 1; t <= 5; ++t) {
            const Matrix x = rng.normal_matrix(30, 8);
            const Matrix ct = covariance(x);
            cur = periodic_pca_step(cur, ct, 1, t).basis;
            CHECK(cur.u == sym_eig_topr(ct, 2).vectors);
        }
    }
    SUBCASE("stationary task matches the oracle after the first refresh") {
        SubspaceBasis cur = b;
        for (std::size_t t = 1; t <= 30; ++t) {
            cur = periodic_pca_step(cur, c, 10, t).basis;
            if (t >= 10) CHECK(max_principal_angle(cur.u, e12(8)) < 1e-12);
        }
    }
    CHECK_THROWS_AS(periodic_pca_step(b, c, 0, 1), std::invalid_argument);
}

TEST_CASE("fixed_step") {
    Rng rng(14);
    const SubspaceBasis b{rng.orthonormal(6, 3), 2};
    const TrackerStep s = fixed_step(b);
    CHECK(s.basis.u == b.u);
    CHECK(s.transition.t == Matrix::identity(3));
    CHECK(drift(s.transition) == 0.0);
    const auto sv = principal_cosines(s.transition.t, Matrix::identity(3));
    for (double v : sv) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("drift") {
    CHECK(drift(Matrix::identity(3), 3) == 0.0);
    CHECK(drift(Matrix(3, 3), 3) == 1.0);
    CHECK(std::fabs(drift(Matrix{{1, 0}, {0, 0}}, 2) - std::sqrt(0.5)) < 1e-12);
}

TEST_CASE("drift properties on random orthonormal pairs") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 200);
        const std::size_t d = 3 + rng.next_u64() % 20;
        const std::size_t r = 1 + rng.next_u64() % d;
        const Matrix a = rng.orthonormal(d, r);
        const Matrix b = rng.orthonormal(d, r);
        const double v = drift(matmul_tn(b, a), r);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);

        // In-span rotation: U_new = U R gives T = R^T and zero drift.
        const Matrix rot = rng.orthonormal(r, r);
        const Matrix rotated = matmul(a, rot);
        const Matrix t = matmul_tn(rotated, a);
        CHECK(fro_norm(t - transpose(rot)) < 1e-12);
        CHECK(drift(t, r) < 1e-8);
        CHECK(fro_norm(oracle::projector(rotated) - oracle::projector(a)) < 1e-8);
    }
}

TEST_CASE("tracker validation") {
    CHECK_THROWS(validate(TrackerKind{OjaConfig{0.0}}));
    CHECK_THROWS(validate(TrackerKind{OjaConfig{0.1, -1.0}}));
    CHECK_THROWS(validate(TrackerKind{PeriodicPca{0}}));
    CHECK_NOTHROW(validate(TrackerKind{FixedBasis{}}));
    CHECK(tracker_name(TrackerKind{PeriodicPca{3}}) == "periodic_pca");
}

TEST_CASE("orthonormality holds after every step of every tracker kind") {
    Rng rng(300);
    const std::vector<TrackerKind> kinds{OjaConfig{0.1}, OjaConfig{1.0}, PeriodicPca{3},
                                         FixedBasis{}};
    for (const auto& kind : kinds) {
        SubspaceBasis b = init_basis(rng.normal_matrix(16, 12), 4);
        for (std::size_t t = 1; t <= 60; ++t) {
            const TrackerStep s = tracker_step(kind, b, covariance(rng.normal_matrix(16, 12)), t);
            CHECK(orth_error(s.basis.u) < 1e-8);
            const double v = drift(s.transition);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            b = s.basis;
        }
    }
}
