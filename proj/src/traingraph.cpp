#include "oasis/traingraph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oasis {

// ---------------------------------------------------------------------------
// LinearLayer

LinearLayer::LinearLayer(std::string name, Matrix w, std::size_t rank, TrackerKind tracker,
                         bool compress)
    : name_(std::move(name)),
      w_(std::move(w)),
      rank_(rank),
      tracker_(std::move(tracker)),
      compress_(compress),
      transition_(TransitionMatrix::identity(compress ? rank : w_.rows(), 0)) {
    if (rank < 1 || rank > w_.rows()) {
        throw ShapeError(name_ + ": rank " + std::to_string(rank) + " outside [1, " +
                         std::to_string(w_.rows()) + "]");
    }
    validate(tracker_);
    if (compress_) {
        lowrank_state_.emplace(rank_, w_.cols());
    } else {
        full_state_.emplace(w_.rows(), w_.cols());
    }
}

void LinearLayer::set_weights(Matrix w) {
    if (!w.same_shape(w_)) {
        throw ShapeError(name_ + ": set_weights " + w.shape_string() + " vs " + w_.shape_string());
    }
    w_ = std::move(w);
}

const SubspaceBasis& LinearLayer::basis() const {
    if (!basis_) throw std::logic_error(name_ + ": basis not initialized");
    return *basis_;
}

void LinearLayer::set_basis(SubspaceBasis basis) {
    if (!compress_) throw std::logic_error(name_ + ": uncompressed layer has no basis");
    if (basis.dim() != w_.rows() || basis.rank() != rank_) {
        throw ShapeError(name_ + ": basis " + basis.u.shape_string() + " does not fit layer");
    }
    basis_ = std::move(basis);
}

const LowRankAdamState& LinearLayer::optimizer_state() const {
    if (!lowrank_state_) throw std::logic_error(name_ + ": no low-rank optimizer state");
    return *lowrank_state_;
}

void LinearLayer::init_basis(const Matrix& x0) {
    if (!compress_) return;
    if (x0.cols() != w_.rows()) {
        throw ShapeError(name_ + ": input " + x0.shape_string() + " does not match weight " +
                         w_.shape_string());
    }
    basis_ = oasis::init_basis(x0, rank_);
}

Matrix LinearLayer::forward(const Matrix& x, std::size_t batch, std::size_t seq_len) {
    if (x.cols() != w_.rows()) {
        throw ShapeError(name_ + ": input " + x.shape_string() + " does not match weight " +
                         w_.shape_string());
    }
    if (has_cache()) {
        throw std::logic_error(name_ + ": forward called with a pending cache");
    }
    Matrix y = matmul(x, w_);
    if (!compress_) {
        full_cache_ = x;
        return y;
    }
    if (!basis_) throw std::logic_error(name_ + ": basis not initialized");

    const std::size_t t = basis_->step + 1;
    TrackerStep s = [&] {
        if (std::holds_alternative<FixedBasis>(tracker_)) return fixed_step(*basis_);
        if (const auto* pca = std::get_if<PeriodicPca>(&tracker_)) {
            if (t % pca->interval != 0) return fixed_step(*basis_);
        }
        return tracker_step(tracker_, *basis_, covariance(x), t);
    }();
    basis_ = std::move(s.basis);
    transition_ = std::move(s.transition);
    last_drift_ = drift(transition_);
    last_effective_step_ = s.effective_step;

    if (batch == 0) {
        batch = x.rows();
        seq_len = 1;
    }
    cache_ = CompressedActivationCache{matmul(x, basis_->u), batch, seq_len};
    return y;
}

Matrix LinearLayer::forward_inference(const Matrix& x) const {
    if (x.cols() != w_.rows()) {
        throw ShapeError(name_ + ": input " + x.shape_string() + " does not match weight " +
                         w_.shape_string());
    }
    return matmul(x, w_);
}

Matrix LinearLayer::backward(const Matrix& g_out) {
    if (!has_cache()) throw std::logic_error(name_ + ": backward without a cached forward");
    const Matrix& cached = compress_ ? cache_->x_tilde : *full_cache_;
    if (g_out.rows() != cached.rows() || g_out.cols() != w_.cols()) {
        throw ShapeError(name_ + ": output gradient " + g_out.shape_string() +
                         " does not match forward of " + std::to_string(cached.rows()) + "x" +
                         std::to_string(w_.cols()));
    }
    grad_ = matmul_tn(cached, g_out);
    cache_.reset();
    full_cache_.reset();
    return matmul_nt(g_out, w_);
}

void LinearLayer::step(const AdamHyper& hyper, double lr, double clip) {
    if (!grad_) throw std::logic_error(name_ + ": step without a pending gradient");
    Matrix g = std::move(*grad_);
    grad_.reset();
    if (clip > 0.0) {
        const double n = fro_norm(g);
        if (n > clip) g *= clip / n;
    }
    AdamHyper h = hyper;
    h.lr = lr;
    if (compress_) {
        const Matrix direction = lowrank_adam_step(*lowrank_state_, g, transition_, h, name_);
        w_ = apply_update(w_, *basis_, direction, lr);
    } else {
        w_ += full_adam_step(*full_state_, g, h, name_);
    }
}

Matrix LinearLayer::materialized_gradient() const {
    if (!grad_) throw std::logic_error(name_ + ": no pending gradient");
    return compress_ ? matmul(basis_->u, *grad_) : *grad_;
}

// ---------------------------------------------------------------------------
// BiasLayer / TanhLayer

BiasLayer::BiasLayer(std::string name, std::size_t width)
    : name_(std::move(name)), b_(1, width), state_(1, width) {}

void BiasLayer::set_values(Matrix b) {
    if (!b.same_shape(b_)) throw ShapeError(name_ + ": set_values shape mismatch");
    b_ = std::move(b);
}

Matrix BiasLayer::forward(const Matrix& x) const {
    if (x.cols() != b_.cols()) {
        throw ShapeError(name_ + ": input " + x.shape_string() + " vs bias " + b_.shape_string());
    }
    Matrix y = x;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b_(0, j);
    return y;
}

Matrix BiasLayer::backward(const Matrix& g_out) {
    Matrix g(1, b_.cols());
    for (std::size_t i = 0; i < g_out.rows(); ++i)
        for (std::size_t j = 0; j < g_out.cols(); ++j) g(0, j) += g_out(i, j);
    grad_ = std::move(g);
    return g_out;
}

void BiasLayer::step(const AdamHyper& hyper, double lr) {
    if (!grad_) throw std::logic_error(name_ + ": step without a pending gradient");
    AdamHyper h = hyper;
    h.lr = lr;
    b_ += full_adam_step(state_, *grad_, h, name_);
    grad_.reset();
}

Matrix TanhLayer::forward(const Matrix& x, bool training) {
    Matrix y = x;
    for (double& v : y.data()) v = std::tanh(v);
    if (training) {
        out_ = y;
        width_ = y.cols();
    }
    return y;
}

Matrix TanhLayer::backward(const Matrix& g_out) {
    if (!out_) throw std::logic_error(name_ + ": backward without a cached forward");
    Matrix g = g_out;
    auto gd = g.data();
    auto od = out_->data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= 1.0 - od[i] * od[i];
    out_.reset();
    return g;
}

// ---------------------------------------------------------------------------
// Losses

LossValue mse_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) {
        throw ShapeError("mse_loss: " + pred.shape_string() + " vs " + target.shape_string());
    }
    const double inv_n = 1.0 / static_cast<double>(pred.rows());
    Matrix diff = pred - target;
    const double loss = 0.5 * fro_norm_squared(diff) * inv_n;
    diff *= inv_n;
    return {loss, std::move(diff)};
}

LossValue cross_entropy_loss(const Matrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows()) throw ShapeError("cross_entropy_loss: label count");
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    Matrix grad(logits.rows(), logits.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= logits.cols()) throw ShapeError("cross_entropy_loss: label out of range");
        auto row = logits.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        loss += log_z - row[labels[i]];
        for (std::size_t j = 0; j < row.size(); ++j) {
            grad(i, j) = std::exp(row[j] - log_z) * inv_n;
        }
        grad(i, labels[i]) -= inv_n;
    }
    return {loss * inv_n, std::move(grad)};
}

double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows()) throw ShapeError("accuracy: label count");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        const auto best = static_cast<std::size_t>(
            std::distance(row.begin(), std::max_element(row.begin(), row.end())));
        hits += best == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// Ledger

LedgerEntry MemoryLedger::totals() const {
    LedgerEntry t{"total"};
    for (const auto& e : layers) {
        t.weights_bytes += e.weights_bytes;
        t.activation_bytes += e.activation_bytes;
        t.gradient_bytes += e.gradient_bytes;
        t.optimizer_bytes += e.optimizer_bytes;
    }
    return t;
}

LedgerEntry linear_ledger_entry(const std::string& name, std::size_t d, std::size_t m,
                                std::size_t r, std::size_t n_rows, std::size_t elem_size,
                                bool compressed) {
    const std::uint64_t e = elem_size;
    const std::uint64_t k = compressed ? r : d;
    LedgerEntry out{name};
    out.weights_bytes = std::uint64_t{d} * m * e;
    out.activation_bytes = std::uint64_t{n_rows} * k * e;
    out.gradient_bytes = k * m * e;
    out.optimizer_bytes = 2 * k * m * e;
    return out;
}

namespace {

nlohmann::json entry_json(const LedgerEntry& e, bool with_name) {
    nlohmann::json j;
    if (with_name) j["name"] = e.name;
    j["weights_bytes"] = e.weights_bytes;
    j["activation_bytes"] = e.activation_bytes;
    j["gradient_bytes"] = e.gradient_bytes;
    j["optimizer_bytes"] = e.optimizer_bytes;
    j["total_bytes"] = e.total();
    return j;
}

}  // namespace

nlohmann::json ledger_to_json(const MemoryLedger& ledger, const MemoryLedger& baseline) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& e : ledger.layers) j["layers"].push_back(entry_json(e, true));
    j["totals"] = entry_json(ledger.totals(), false);
    j["elem_size"] = ledger.elem_size;
    j["baseline_totals"] = entry_json(baseline.totals(), false);
    return j;
}

// ---------------------------------------------------------------------------
// Model

std::vector<LinearLayer*> Model::linear_layers() {
    std::vector<LinearLayer*> out;
    for (auto& n : nodes_)
        if (auto* l = std::get_if<LinearLayer>(&n)) out.push_back(l);
    return out;
}

std::vector<const LinearLayer*> Model::linear_layers() const {
    std::vector<const LinearLayer*> out;
    for (const auto& n : nodes_)
        if (const auto* l = std::get_if<LinearLayer>(&n)) out.push_back(l);
    return out;
}

void Model::initialize(const Batch& first) {
    Matrix x = first.x;
    for (auto& node : nodes_) {
        if (auto* l = std::get_if<LinearLayer>(&node)) {
            if (!l->initialized()) l->init_basis(x);
            x = l->forward_inference(x);
        } else if (auto* b = std::get_if<BiasLayer>(&node)) {
            x = b->forward(x);
        } else {
            x = std::get<TanhLayer>(node).forward(x, false);
        }
    }
}

bool Model::initialized() const {
    const auto layers = linear_layers();
    return std::all_of(layers.begin(), layers.end(),
                       [](const LinearLayer* l) { return l->initialized(); });
}

Matrix Model::forward(const Batch& batch) {
    Matrix x = batch.x;
    for (auto& node : nodes_) {
        if (auto* l = std::get_if<LinearLayer>(&node)) {
            x = l->forward(x, batch.batch, batch.seq_len);
        } else if (auto* b = std::get_if<BiasLayer>(&node)) {
            x = b->forward(x);
        } else {
            x = std::get<TanhLayer>(node).forward(x, true);
        }
    }
    return x;
}

Matrix Model::predict(const Matrix& input) const {
    Matrix x = input;
    for (const auto& node : nodes_) {
        if (const auto* l = std::get_if<LinearLayer>(&node)) {
            x = l->forward_inference(x);
        } else if (const auto* b = std::get_if<BiasLayer>(&node)) {
            x = b->forward(x);
        } else {
            for (double& v : x.data()) v = std::tanh(v);
        }
    }
    return x;
}

void Model::backward(const Matrix& grad_out) {
    Matrix g = grad_out;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        std::visit([&](auto& node) { g = node.backward(g); }, *it);
    }
}

void Model::step(const AdamHyper& hyper, double lr, double clip) {
    for (auto& node : nodes_) {
        if (auto* l = std::get_if<LinearLayer>(&node)) {
            l->step(hyper, lr, clip);
        } else if (auto* b = std::get_if<BiasLayer>(&node)) {
            b->step(hyper, lr);
        }
    }
}

LossValue Model::loss(const Matrix& output, const Batch& batch) const {
    if (loss_ == LossKind::MeanSquaredError) {
        if (!batch.y) throw std::invalid_argument("regression batch without targets");
        return mse_loss(output, *batch.y);
    }
    return cross_entropy_loss(output, batch.labels);
}

double Model::eval_metric(const Batch& batch) const {
    const Matrix out = predict(batch.x);
    if (loss_ == LossKind::MeanSquaredError) return loss(out, batch).loss;
    return accuracy(out, batch.labels);
}

MemoryLedger Model::build_ledger(std::size_t elem_size, bool baseline) const {
    MemoryLedger ledger;
    ledger.elem_size = elem_size;
    const std::uint64_t e = elem_size;
    const std::size_t n = last_rows_;
    for (const auto& node : nodes_) {
        if (const auto* l = std::get_if<LinearLayer>(&node)) {
            const bool compressed = l->compressed() && !baseline;
            ledger.layers.push_back(linear_ledger_entry(l->name(), l->in_dim(), l->out_dim(),
                                                        l->rank(), n, elem_size, compressed));
        } else if (const auto* b = std::get_if<BiasLayer>(&node)) {
            const std::uint64_t k = b->values().cols();
            ledger.layers.push_back({b->name(), k * e, 0, k * e, 2 * k * e});
        } else {
            const auto& t = std::get<TanhLayer>(node);
            ledger.layers.push_back({t.name(), 0, std::uint64_t{n} * t.cached_width() * e, 0, 0});
        }
    }
    return ledger;
}

MemoryLedger Model::ledger(std::size_t elem_size) const { return build_ledger(elem_size, false); }

MemoryLedger Model::baseline_ledger(std::size_t elem_size) const {
    return build_ledger(elem_size, true);
}

MemoryLedger ledger_report(const Model& model, std::size_t elem_size) {
    if (model.steps_taken() == 0) {
        throw std::logic_error("ledger_report: no training step taken yet");
    }
    return model.ledger(elem_size);
}

StepResult train_step(Model& model, const Batch& batch, const AdamHyper& hyper, double lr,
                      std::size_t elem_size, double clip) {
    if (!model.initialized()) throw std::logic_error("train_step: model not initialized");
    const std::size_t step_index = model.steps_taken() + 1;
    const Matrix out = model.forward(batch);
    LossValue lv = model.loss(out, batch);
    if (!std::isfinite(lv.loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step_index));
    }
    model.backward(lv.grad);
    model.step(hyper, lr, clip);
    model.mark_step(batch.x.rows());
    return {lv.loss, model.ledger(elem_size)};
}

// ---------------------------------------------------------------------------
// Toy models

Matrix init_weights(std::size_t d, std::size_t m, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    return rng.uniform_matrix(d, m, -bound, bound);
}

Model make_linear_regression(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker,
                             Rng& rng) {
    Model model("linear_regression", LossKind::MeanSquaredError);
    model.add(LinearLayer("fc", init_weights(shape.in_dim, shape.out_dim, rng),
                          std::min(rank, shape.in_dim), tracker));
    return model;
}

Model make_mlp2(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker, Rng& rng,
                LossKind loss) {
    Model model("mlp2", loss);
    model.add(LinearLayer("fc1", init_weights(shape.in_dim, shape.hidden, rng),
                          std::min(rank, shape.in_dim), tracker));
    model.add(BiasLayer("fc1.bias", shape.hidden));
    model.add(TanhLayer("act"));
    model.add(LinearLayer("fc2", init_weights(shape.hidden, shape.out_dim, rng),
                          std::min(rank, shape.hidden), tracker));
    model.add(BiasLayer("fc2.bias", shape.out_dim));
    return model;
}

Model make_seq_block(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker,
                     Rng& rng) {
    Model model("seq_block", LossKind::SoftmaxCrossEntropy);
    model.add(LinearLayer("embed", init_weights(shape.in_dim, shape.embed, rng),
                          std::min(rank, shape.in_dim), tracker));
    model.add(LinearLayer("fc1", init_weights(shape.embed, shape.hidden, rng),
                          std::min(rank, shape.embed), tracker));
    model.add(BiasLayer("fc1.bias", shape.hidden));
    model.add(TanhLayer("act"));
    model.add(LinearLayer("readout", init_weights(shape.hidden, shape.out_dim, rng),
                          std::min(rank, shape.hidden), tracker));
    model.add(BiasLayer("readout.bias", shape.out_dim));
    return model;
}

}  // namespace oasis
