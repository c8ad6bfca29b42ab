#include "doctest.h"

#include <cmath>
#include <vector>

#include "oasis/oracles.hpp"
#include "oasis/traingraph.hpp"

using namespace oasis;

namespace {

LinearLayer make_layer(std::size_t d, std::size_t m, std::size_t r, Rng& rng,
                       TrackerKind tracker = OjaConfig{0.1}) {
    return LinearLayer("fc", rng.normal_matrix(d, m), r, tracker);
}

Batch regression_batch(const Matrix& x, const Matrix& w_star) {
    return Batch{x, oracle::naive_matmul(x, w_star), {}};
}

double relative_error(double got, double want) {
    return std::fabs(got - want) / std::max(std::fabs(want), 1e-12);
}

}  // namespace

TEST_CASE("forward is exact at every rank") {
    Rng rng(1);
    const Matrix x = rng.normal_matrix(20, 6);
    SUBCASE("identity weights return X") {
        for (std::size_t r = 1; r <= 6; ++r) {
            LinearLayer layer("fc", Matrix::identity(6), r, OjaConfig{0.1});
            layer.init_basis(x);
            CHECK(layer.forward(x) == x);
            (void)layer.backward(Matrix(20, 6));
        }
    }
    SUBCASE("outputs are bit-identical to an uncompressed forward") {
        const Matrix w = rng.normal_matrix(6, 3);
        LinearLayer plain("plain", w, 6, FixedBasis{}, false);
        const Matrix ref = plain.forward(x);
        for (std::size_t r = 1; r <= 6; ++r) {
            LinearLayer layer("fc", w, r, OjaConfig{0.1});
            layer.init_basis(x);
            CHECK(layer.forward(x) == ref);
            (void)layer.backward(Matrix(20, 3));
        }
    }
}

TEST_CASE("forward caches the projected activations") {
    Rng rng(2);
    const Matrix x = rng.normal_matrix(30, 8);
    SUBCASE("identity basis at full rank caches X itself") {
        LinearLayer layer = make_layer(8, 3, 8, rng);
        layer.set_basis({Matrix::identity(8), 0});
        (void)layer.forward(x, 5, 6);
        REQUIRE(layer.cache());
        CHECK(layer.cache()->x_tilde == x);
        CHECK(layer.cache()->batch == 5);
        CHECK(layer.cache()->seq_len == 6);
        CHECK(layer.basis().u == Matrix::identity(8));
    }
    SUBCASE("reduced rank caches X U_t and reconstructs the projection") {
        LinearLayer layer = make_layer(8, 3, 3, rng);
        layer.init_basis(rng.normal_matrix(30, 8));
        (void)layer.forward(x);
        REQUIRE(layer.cache());
        const Matrix& u = layer.basis().u;
        CHECK(layer.cache()->x_tilde.cols() == 3);
        CHECK(fro_norm(layer.cache()->x_tilde - oracle::naive_matmul(x, u)) < 1e-12);
        const Matrix recon = matmul_nt(layer.cache()->x_tilde, u);
        CHECK(fro_norm(recon - oracle::naive_matmul(x, oracle::projector(u))) < 1e-12);
    }
    SUBCASE("the tracker steps before projection") {
        LinearLayer layer = make_layer(8, 3, 3, rng);
        layer.init_basis(rng.normal_matrix(30, 8));
        const SubspaceBasis before = layer.basis();
        (void)layer.forward(x);
        const TrackerStep expected = oja_step(before, covariance(x), OjaConfig{0.1});
        CHECK(layer.basis().u == expected.basis.u);
        CHECK(layer.last_transition().t == expected.transition.t);
        CHECK(layer.last_drift() == drift(expected.transition));
        CHECK(layer.last_effective_step() == expected.effective_step);
    }
}

TEST_CASE("backward produces the projected gradient") {
    Rng rng(3);
    SUBCASE("zero output gradient") {
        LinearLayer layer = make_layer(5, 2, 3, rng);
        const Matrix x = rng.normal_matrix(10, 5);
        layer.init_basis(x);
        (void)layer.forward(x);
        const Matrix g_in = layer.backward(Matrix(10, 2));
        CHECK(g_in == Matrix(10, 5));
        CHECK(*layer.pending_gradient() == Matrix(3, 2));
        CHECK_FALSE(layer.has_cache());
    }
    SUBCASE("full rank identity basis recovers X^T G exactly") {
        LinearLayer layer = make_layer(5, 2, 5, rng, FixedBasis{});
        layer.set_basis({Matrix::identity(5), 0});
        const Matrix x = rng.normal_matrix(10, 5);
        const Matrix g = rng.normal_matrix(10, 2);
        (void)layer.forward(x);
        (void)layer.backward(g);
        CHECK(fro_norm(layer.materialized_gradient() -
                       oracle::naive_matmul(oracle::naive_transpose(x), g)) < 1e-12);
    }
    SUBCASE("reduced rank equals the projection of the true gradient") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng r2(seed + 10);
            const std::size_t d = 4 + r2.next_u64() % 30;
            const std::size_t m = 1 + r2.next_u64() % 10;
            const std::size_t n = 5 + r2.next_u64() % 60;
            const std::size_t r = 1 + r2.next_u64() % d;
            LinearLayer layer("fc", r2.normal_matrix(d, m), r, OjaConfig{0.1});
            const Matrix x = r2.normal_matrix(n, d);
            const Matrix g = r2.normal_matrix(n, m);
            layer.init_basis(x);
            (void)layer.forward(x);
            const Matrix g_in = layer.backward(g);
            const Matrix& u = layer.basis().u;
            const Matrix full = oracle::naive_matmul(oracle::naive_transpose(x), g);
            const Matrix lifted = layer.materialized_gradient();
            CHECK(fro_norm(lifted - oracle::naive_matmul(oracle::projector(u), full)) < 1e-10);
            // Normal equations: U^T (U G - X^T G_out) = 0.
            CHECK(fro_norm(oracle::naive_matmul(oracle::naive_transpose(u), lifted - full)) <
                  1e-10);
            CHECK(fro_norm(g_in - oracle::naive_matmul(g, oracle::naive_transpose(
                                                              layer.weights()))) < 1e-12);
        }
    }
}

TEST_CASE("layer state machine errors") {
    Rng rng(4);
    LinearLayer layer = make_layer(4, 2, 2, rng);
    const Matrix x = rng.normal_matrix(6, 4);
    CHECK_THROWS_AS(layer.forward(x), std::logic_error);  // no basis yet
    layer.init_basis(x);
    CHECK_THROWS_AS(layer.backward(Matrix(6, 2)), std::logic_error);
    CHECK_THROWS_AS(layer.forward(Matrix(6, 3)), ShapeError);
    (void)layer.forward(x);
    CHECK_THROWS_AS(layer.forward(x), std::logic_error);  // pending cache
    CHECK_THROWS_AS(layer.backward(Matrix(5, 2)), ShapeError);
    (void)layer.backward(Matrix(6, 2));
    CHECK_NOTHROW(layer.step(AdamHyper{}, 1e-3));
    CHECK_THROWS_AS(layer.step(AdamHyper{}, 1e-3), std::logic_error);
    CHECK_THROWS_AS(LinearLayer("bad", Matrix(3, 2), 4, FixedBasis{}), ShapeError);
    CHECK_THROWS_AS(LinearLayer("bad", Matrix(3, 2), 0, FixedBasis{}), ShapeError);
}

TEST_CASE("losses") {
    const LossValue mse = mse_loss(Matrix{{1, 2}, {3, 4}}, Matrix{{1, 0}, {0, 4}});
    CHECK(mse.loss == doctest::Approx(0.5 * (4.0 + 9.0) / 2.0));
    CHECK(mse.grad == Matrix{{0, 1}, {1.5, 0}});

    const Matrix logits{{0, 0}, {10, -10}};
    const LossValue ce = cross_entropy_loss(logits, {1, 0});
    CHECK(ce.loss == doctest::Approx(0.5 * (std::log(2.0) + std::log1p(std::exp(-20.0)))));
    CHECK(ce.grad(0, 0) == doctest::Approx(0.25));
    CHECK(ce.grad(0, 1) == doctest::Approx(-0.25));
    CHECK(accuracy(logits, {1, 0}) == 0.5);
    CHECK_THROWS_AS(cross_entropy_loss(logits, {0, 2}), ShapeError);
}

TEST_CASE("train_step at full rank with an identity basis follows full Adam") {
    Rng rng(5);
    const std::size_t d = 6;
    const std::size_t m = 3;
    const Matrix w_star = rng.normal_matrix(d, m);
    Model model = make_linear_regression({d, 0, m}, d, OjaConfig{0.1}, rng);
    Matrix w_ref = model.linear_layers()[0]->weights();
    model.linear_layers()[0]->set_basis({Matrix::identity(d), 0});

    const AdamHyper h{1e-2};
    FullAdamState ref_state(d, m);
    for (int k = 0; k < 100; ++k) {
        const Batch batch = regression_batch(rng.normal_matrix(32, d), w_star);
        const StepResult res = train_step(model, batch, h, h.lr);
        // Reference: L = 0.5 ||X W - Y||^2 / N, dL/dW = X^T (X W - Y) / N.
        const Matrix resid = oracle::naive_matmul(batch.x, w_ref) - *batch.y;
        const double ref_loss = 0.5 * fro_norm_squared(resid) / 32.0;
        CHECK(relative_error(res.loss, ref_loss) < 1e-10);
        const Matrix grad = oracle::naive_matmul(oracle::naive_transpose(batch.x), resid) * (1.0 / 32.0);
        w_ref += full_adam_step(ref_state, grad, h);
        CHECK(fro_norm(model.linear_layers()[0]->weights() - w_ref) <= 1e-10 * fro_norm(w_ref));
    }
}

TEST_CASE("zero-gradient batch leaves weights unchanged") {
    Rng rng(6);
    Model model = make_linear_regression({5, 0, 2}, 3, OjaConfig{0.1}, rng);
    const Matrix x = rng.normal_matrix(16, 5);
    model.initialize({x});
    const Matrix w = model.linear_layers()[0]->weights();
    const StepResult res = train_step(model, Batch{x, matmul(x, w), {}}, AdamHyper{}, 1e-2);
    CHECK(res.loss == 0.0);
    CHECK(model.linear_layers()[0]->weights() == w);
}

TEST_CASE("materialized gradients match central finite differences at full rank") {
    Rng rng(7);
    const ModelShape shape{6, 10, 4};
    Model model = make_mlp2(shape, 10, OjaConfig{0.1}, rng);
    // Nonzero biases so the check covers them in the forward path.
    std::get<BiasLayer>(model.nodes()[1]).set_values(rng.normal_matrix(1, 10) * 0.1);
    const Matrix x = rng.normal_matrix(24, 6);
    std::vector<std::size_t> labels(24);
    for (auto& l : labels) l = rng.next_u64() % 4;
    const Batch batch{x, std::nullopt, labels};
    model.initialize(batch);

    const Matrix out = model.forward(batch);
    model.backward(model.loss(out, batch).grad);
    for (std::size_t li = 0; li < 2; ++li) {
        LinearLayer* layer = model.linear_layers()[li];
        const Matrix analytic = layer->materialized_gradient();
        const Matrix w0 = layer->weights();
        auto loss_at = [&](const Matrix& w) {
            Model probe = model;
            probe.linear_layers()[li]->set_weights(w);
            return probe.loss(probe.predict(x), batch).loss;
        };
        for (int k = 0; k < 10; ++k) {
            const std::size_t i = rng.next_u64() % w0.rows();
            const std::size_t j = rng.next_u64() % w0.cols();
            const double fd = oracle::central_difference(loss_at, w0, i, j, 1e-5);
            CHECK(std::fabs(analytic(i, j) - fd) <= 1e-4 * std::max(std::fabs(fd), 1e-6));
        }
    }
}

TEST_CASE("loss is non-increasing on the quadratic task at full rank") {
    Rng rng(8);
    const std::size_t d = 8;
    const Matrix w_star = rng.normal_matrix(d, 2);
    const Matrix x = rng.normal_matrix(64, d);
    const Batch batch = regression_batch(x, w_star);
    Model model = make_linear_regression({d, 0, 2}, d, OjaConfig{0.1}, rng);
    model.initialize(batch);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 200; ++k) {
        const double loss = train_step(model, batch, AdamHyper{1e-3}, 1e-3).loss;
        CHECK(loss <= prev);
        prev = loss;
    }
}

TEST_CASE("non-finite loss reports the step index") {
    Rng rng(9);
    Model model = make_linear_regression({3, 0, 1}, 2, OjaConfig{0.1}, rng);
    const Matrix x = rng.normal_matrix(4, 3);
    model.initialize({x});
    Matrix y(4, 1);
    (void)train_step(model, Batch{x, y, {}}, AdamHyper{}, 1e-3);
    y(0, 0) = std::numeric_limits<double>::infinity();
    try {
        (void)train_step(model, Batch{x, y, {}}, AdamHyper{}, 1e-3);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("train_step requires initialization") {
    Rng rng(10);
    Model model = make_linear_regression({3, 0, 1}, 2, OjaConfig{0.1}, rng);
    const Matrix x = rng.normal_matrix(4, 3);
    CHECK_THROWS_AS(train_step(model, Batch{x, Matrix(4, 1), {}}, AdamHyper{}, 1e-3),
                    std::logic_error);
}

TEST_CASE("memory ledger") {
    SUBCASE("activation storage scales from N d to N r") {
        const LedgerEntry c = linear_ledger_entry("fc", 1024, 64, 32, 2048, 2, true);
        const LedgerEntry b = linear_ledger_entry("fc", 1024, 64, 32, 2048, 2, false);
        CHECK(c.activation_bytes == 131072);
        CHECK(b.activation_bytes == 4194304);
        CHECK(b.activation_bytes / c.activation_bytes == 32);
        CHECK(b.gradient_bytes == 32 * c.gradient_bytes);
        CHECK(b.optimizer_bytes == 32 * c.optimizer_bytes);
        CHECK(c.weights_bytes == b.weights_bytes);
        CHECK(c.optimizer_bytes == 2 * 32 * 64 * 2);
    }
    SUBCASE("full rank ledger equals the baseline") {
        Rng rng(11);
        Model model = make_mlp2({6, 6, 3}, 6, OjaConfig{0.1}, rng);
        const Matrix x = rng.normal_matrix(12, 6);
        const Batch batch{x, std::nullopt, std::vector<std::size_t>(12, 1)};
        model.initialize(batch);
        (void)train_step(model, batch, AdamHyper{}, 1e-3);
        CHECK(ledger_report(model, 2) == model.baseline_ledger(2));
    }
    SUBCASE("totals equal the sum of entries") {
        Rng rng(12);
        Model model = make_mlp2({16, 12, 5}, 4, OjaConfig{0.1}, rng);
        const Matrix x = rng.normal_matrix(20, 16);
        const Batch batch{x, std::nullopt, std::vector<std::size_t>(20, 3)};
        model.initialize(batch);
        CHECK_THROWS_AS(ledger_report(model, 2), std::logic_error);
        const StepResult res = train_step(model, batch, AdamHyper{}, 1e-3);
        const MemoryLedger& l = res.ledger;
        REQUIRE(l.layers.size() == 5);
        std::uint64_t sum = 0;
        for (const auto& e : l.layers) sum += e.total();
        CHECK(l.totals().total() == sum);
        // fc1: d=16, m=12, r=4; fc2: d=12, m=5, r=4; tanh caches N x 12.
        CHECK(l.layers[0].activation_bytes == 20u * 4 * 2);
        CHECK(l.layers[0].gradient_bytes == 4u * 12 * 2);
        CHECK(l.layers[2].activation_bytes == 20u * 12 * 2);
        CHECK(l.layers[3].activation_bytes == 20u * 4 * 2);
        const MemoryLedger base = model.baseline_ledger(2);
        CHECK(base.layers[0].activation_bytes * 4 == l.layers[0].activation_bytes * 16);
        CHECK(base.layers[3].activation_bytes * 4 == l.layers[3].activation_bytes * 12);

        const nlohmann::json j = ledger_to_json(l, base);
        CHECK(j["elem_size"] == 2);
        CHECK(j["layers"].size() == 5);
        CHECK(j["layers"][0]["name"] == "fc1");
        CHECK(j["totals"]["total_bytes"] == sum);
        CHECK(j["baseline_totals"]["activation_bytes"] == base.totals().activation_bytes);
    }
}

TEST_CASE("seq block trains on one-hot characters") {
    Rng rng(13);
    const std::size_t vocab = 6;
    Model model = make_seq_block({vocab, 12, vocab, 5}, 4, OjaConfig{0.1}, rng);
    // Deterministic cycle a->b->c->...: perfectly learnable bigram.
    const std::size_t n = 30;
    Matrix x(n, vocab);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, i % vocab) = 1.0;
        labels[i] = (i + 1) % vocab;
    }
    const Batch batch{x, std::nullopt, labels, 3, 10};
    model.initialize(batch);
    const double first = train_step(model, batch, AdamHyper{}, 0.05).loss;
    double last = first;
    for (int k = 0; k < 300; ++k) last = train_step(model, batch, AdamHyper{}, 0.05).loss;
    CHECK(last < 0.1 * first);
    CHECK(model.eval_metric(batch) == 1.0);
    for (const LinearLayer* l : model.linear_layers()) {
        CHECK(fro_norm(matmul_tn(l->basis().u, l->basis().u) - Matrix::identity(l->rank())) < 1e-8);
    }
}

TEST_CASE("uncompressed layer trains with full Adam") {
    Rng rng(14);
    const Matrix w0 = rng.normal_matrix(4, 2);
    LinearLayer layer("plain", w0, 4, FixedBasis{}, false);
    const Matrix x = rng.normal_matrix(8, 4);
    const Matrix g = rng.normal_matrix(8, 2);
    (void)layer.forward(x);
    (void)layer.backward(g);
    const Matrix grad = layer.materialized_gradient();
    CHECK(fro_norm(grad - oracle::naive_matmul(oracle::naive_transpose(x), g)) < 1e-12);
    layer.step(AdamHyper{}, 0.01);
    FullAdamState ref(4, 2);
    CHECK(fro_norm(layer.weights() - (w0 + full_adam_step(ref, grad, AdamHyper{0.01}))) < 1e-15);
    CHECK_THROWS_AS(layer.optimizer_state(), std::logic_error);
}
