#include <algorithm>
#include <cmath>
#include <ostream>

#include "oasis/harness.hpp"
#include "oasis/optim.hpp"
#include "oasis/oracles.hpp"

namespace oasis {

namespace {

OracleRow bound(std::string suite, std::string name, double measured, double tol) {
    return {std::move(suite), std::move(name), measured, tol, true, measured <= tol};
}

OracleRow exceeds(std::string suite, std::string name, double measured, double tol) {
    return {std::move(suite), std::move(name), measured, tol, false, measured > tol};
}

/// Largest relative Frobenius gap between low-rank Adam on U = T = I and the
/// scalar reference, over 150 steps of a random gradient stream.
double adam_equivalence_gap(MomentReading reading) {
    const AdamHyper h{1e-2, 0.9, 0.999, 1e-8};
    Rng rng(1);
    const Matrix w0 = rng.normal_matrix(6, 5);
    std::vector<Matrix> grads;
    for (int k = 0; k < 150; ++k) grads.push_back(rng.normal_matrix(6, 5));
    const auto expected = oracle::ScalarAdam{h.lr, h.beta1, h.beta2, h.eps}.run(w0, grads);

    const SubspaceBasis basis{Matrix::identity(6), 0};
    LowRankAdamState state(6, 5);
    Matrix w = w0;
    double worst = 0.0;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const Matrix n = lowrank_adam_step(state, grads[k], TransitionMatrix::identity(6, k), h,
                                           "oracle", reading);
        w = apply_update(w, basis, n, h.lr);
        worst = std::max(worst, fro_norm(w - expected[k]) / fro_norm(expected[k]));
    }
    return worst;
}

std::vector<OracleRow> adam_suite() {
    return {
        bound("adam", "full_rank_equivalence", adam_equivalence_gap(MomentReading::BiasCorrected),
              1e-10),
        // The suite must notice a wrong transport reading.
        exceeds("adam", "raw_reading_mutation_detected",
                adam_equivalence_gap(MomentReading::Raw), 1e-6),
    };
}

std::vector<OracleRow> eig_suite() {
    double residual = 0.0;
    double orth = 0.0;
    double power_gap = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        const std::size_t d = 4 + seed;
        const Matrix b = rng.normal_matrix(d, d);
        const Matrix c = matmul_nt(b, b);
        const EigenPair e = sym_eig(c);
        const Matrix r = matmul(c, e.vectors) - matmul(e.vectors, Matrix::diagonal(e.values));
        residual = std::max(residual, fro_norm(r) / fro_norm(c));
        orth = std::max(orth, fro_norm(matmul_tn(e.vectors, e.vectors) - Matrix::identity(d)));

        // Planted, well separated spectrum so power iteration converges.
        const Matrix q = rng.orthonormal(d, d);
        std::vector<double> lambda(d);
        for (std::size_t i = 0; i < d; ++i) lambda[i] = std::pow(2.0, -static_cast<double>(i));
        const Matrix planted = matmul(q, matmul_nt(Matrix::diagonal(lambda), q));
        const Matrix sym = 0.5 * (planted + transpose(planted));
        const auto ref = oracle::power_iteration_eigenvalues(sym, 3);
        const EigenPair pe = sym_eig(sym);
        for (std::size_t i = 0; i < 3; ++i)
            power_gap = std::max(power_gap, std::fabs(pe.values[i] - ref[i]) / ref[i]);
    }
    return {
        bound("eig", "residual", residual, 1e-10),
        bound("eig", "orthonormality", orth, 1e-10),
        bound("eig", "power_iteration_top3", power_gap, 1e-8),
    };
}

std::vector<OracleRow> qr_suite() {
    double gap = 0.0;
    double orth = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(200 + seed);
        const std::size_t rows = 5 + seed;
        const std::size_t cols = 1 + seed % 5;
        const Matrix a = rng.normal_matrix(rows, cols);
        const Matrix q = qr_orthonormalize(a);
        gap = std::max(gap, fro_norm(q - oracle::gram_schmidt(a)));
        orth = std::max(orth, fro_norm(matmul_tn(q, q) - Matrix::identity(cols)));
    }
    return {bound("qr", "matches_gram_schmidt", gap, 1e-10), bound("qr", "orthonormality", orth, 1e-12)};
}

std::vector<OracleRow> projection_suite() {
    double proj = 0.0;
    double normal = 0.0;
    double g_in = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(300 + seed);
        const std::size_t d = 2 + rng.next_u64() % 63;
        const std::size_t m = 1 + rng.next_u64() % 32;
        const std::size_t n = 1 + rng.next_u64() % 256;
        const std::size_t r = 1 + rng.next_u64() % d;
        LinearLayer layer("oracle", rng.normal_matrix(d, m), r, OjaConfig{0.1});
        const Matrix x = rng.normal_matrix(n, d);
        const Matrix g = rng.normal_matrix(n, m);
        layer.init_basis(rng.normal_matrix(n + d, d));
        (void)layer.forward(x);
        const Matrix gi = layer.backward(g);
        const Matrix& u = layer.basis().u;
        const Matrix full = oracle::naive_matmul(oracle::naive_transpose(x), g);
        const Matrix lifted = layer.materialized_gradient();
        proj = std::max(proj, fro_norm(lifted - oracle::naive_matmul(oracle::projector(u), full)));
        normal = std::max(normal, fro_norm(oracle::naive_matmul(oracle::naive_transpose(u),
                                                                lifted - full)));
        g_in = std::max(g_in, fro_norm(gi - oracle::naive_matmul(
                                                g, oracle::naive_transpose(layer.weights()))));
    }

    // r = d with an identity basis stores X itself, so the gradient is exact.
    Rng rng(399);
    LinearLayer full_rank("oracle", rng.normal_matrix(7, 3), 7, FixedBasis{});
    full_rank.set_basis({Matrix::identity(7), 0});
    const Matrix x = rng.normal_matrix(11, 7);
    const Matrix g = rng.normal_matrix(11, 3);
    (void)full_rank.forward(x);
    (void)full_rank.backward(g);
    const double exact = fro_norm(full_rank.materialized_gradient() -
                                  oracle::naive_matmul(oracle::naive_transpose(x), g));
    return {
        bound("projection", "lift_equals_projector", proj, 1e-10),
        bound("projection", "normal_equations", normal, 1e-10),
        bound("projection", "input_gradient", g_in, 1e-12),
        bound("projection", "identity_basis_exact", exact, 0.0),
    };
}

std::vector<OracleRow> fd_suite() {
    Rng rng(400);
    const ModelShape shape{6, 10, 4};
    // Rank is clipped per layer, so hidden >= in_dim makes both layers full rank.
    Model model = make_mlp2(shape, shape.hidden, OjaConfig{0.1}, rng);
    std::get<BiasLayer>(model.nodes()[1]).set_values(rng.normal_matrix(1, shape.hidden) * 0.1);
    const Matrix x = rng.normal_matrix(24, shape.in_dim);
    std::vector<std::size_t> labels(24);
    for (auto& l : labels) l = rng.next_u64() % shape.out_dim;
    const Batch batch{x, std::nullopt, labels};
    model.initialize(batch);
    const Matrix out = model.forward(batch);
    model.backward(model.loss(out, batch).grad);

    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const std::size_t li = static_cast<std::size_t>(k % 2);
        LinearLayer* layer = model.linear_layers()[li];
        const Matrix analytic = layer->materialized_gradient();
        const Matrix w0 = layer->weights();
        const std::size_t i = rng.next_u64() % w0.rows();
        const std::size_t j = rng.next_u64() % w0.cols();
        auto loss_at = [&](const Matrix& w) {
            Model probe = model;
            probe.linear_layers()[li]->set_weights(w);
            return probe.loss(probe.predict(x), batch).loss;
        };
        const double fd = oracle::central_difference(loss_at, w0, i, j, 1e-5);
        const double scale = std::max({std::fabs(fd), std::fabs(analytic(i, j)), 1e-8});
        worst = std::max(worst, std::fabs(analytic(i, j) - fd) / scale);
    }
    return {bound("fd", "mlp2_full_rank_relative_error", worst, 1e-4)};
}

}  // namespace

std::vector<std::string> oracle_suites() { return {"adam", "eig", "qr", "projection", "fd"}; }

std::vector<OracleRow> oracle_check(const std::string& suite) {
    std::vector<OracleRow> rows;
    auto add = [&](std::vector<OracleRow> more) {
        rows.insert(rows.end(), more.begin(), more.end());
    };
    const bool all = suite == "all";
    const auto known = oracle_suites();
    if (!all && std::find(known.begin(), known.end(), suite) == known.end()) {
        std::string names = "all";
        for (const auto& s : known) names += "|" + s;
        throw ConfigError("unknown oracle suite '" + suite + "' (expected " + names + ")");
    }
    if (all || suite == "adam") add(adam_suite());
    if (all || suite == "eig") add(eig_suite());
    if (all || suite == "qr") add(qr_suite());
    if (all || suite == "projection") add(projection_suite());
    if (all || suite == "fd") add(fd_suite());
    return rows;
}

void print_oracle_table(std::ostream& out, const std::vector<OracleRow>& rows) {
    out << "suite\tcheck\tmeasured\tbound\tresult\n";
    for (const OracleRow& r : rows)
        out << r.suite << '\t' << r.name << '\t' << format_real(r.measured) << '\t'
            << (r.lower_is_pass ? "<= " : "> ") << r.tolerance << '\t'
            << (r.pass ? "PASS" : "FAIL") << '\n';
}

}  // namespace oasis
