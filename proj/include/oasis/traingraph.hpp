#pragma once

// Minimal reverse-mode training graph.
//
// Linear layers keep the forward pass exact (Y = X W from the full X) but
// cache only X U for the backward pass, so the weight gradient is produced
// directly in r x m subspace coordinates. Vector parameters (biases) are
// trained with plain Adam.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "oasis/numerics.hpp"
#include "oasis/optim.hpp"
#include "oasis/subspace.hpp"

namespace oasis {

/// Rows of the compressed activation X U held between forward and backward.
struct CompressedActivationCache {
    Matrix x_tilde;
    std::size_t batch = 1;   ///< b
    std::size_t seq_len = 1; ///< n, with N = b * n rows
};

/// A d x m weight with its own tracker and projection-aware optimizer.
///
/// With `compress == false` the layer caches the full X and trains with full
/// Adam; this is the per-layer opt-out and the uncompressed baseline.
class LinearLayer {
public:
    LinearLayer(std::string name, Matrix w, std::size_t rank, TrackerKind tracker,
                bool compress = true);

    const std::string& name() const noexcept { return name_; }
    std::size_t in_dim() const noexcept { return w_.rows(); }
    std::size_t out_dim() const noexcept { return w_.cols(); }
    /// Effective rank; equals in_dim() for an uncompressed layer.
    std::size_t rank() const noexcept { return compress_ ? rank_ : w_.rows(); }
    bool compressed() const noexcept { return compress_; }
    bool initialized() const noexcept { return !compress_ || basis_.has_value(); }

    const Matrix& weights() const noexcept { return w_; }
    void set_weights(Matrix w);
    const SubspaceBasis& basis() const;
    /// Install a basis directly, e.g. U = I for reduction tests.
    void set_basis(SubspaceBasis basis);
    const TrackerKind& tracker() const noexcept { return tracker_; }

    /// Principal components of the first batch.
    void init_basis(const Matrix& x0);

    /// Training forward: tracker step on covariance(X), then cache X U_t.
    /// `batch` and `seq_len` record the N = b * n split.
    Matrix forward(const Matrix& x, std::size_t batch = 0, std::size_t seq_len = 1);
    /// Exact forward with no side effects.
    Matrix forward_inference(const Matrix& x) const;

    /// Consumes the cache. Returns dL/dX = G_out W^T and keeps the low-rank
    /// gradient X_tilde^T G_out (or X^T G_out when uncompressed) for step().
    Matrix backward(const Matrix& g_out);

    /// Applies the pending gradient. `clip` > 0 rescales the gradient to at
    /// most that Frobenius norm.
    void step(const AdamHyper& hyper, double lr, double clip = 0.0);

    bool has_cache() const noexcept { return cache_.has_value() || full_cache_.has_value(); }
    const std::optional<CompressedActivationCache>& cache() const noexcept { return cache_; }
    const std::optional<Matrix>& pending_gradient() const noexcept { return grad_; }
    const TransitionMatrix& last_transition() const noexcept { return transition_; }
    double last_drift() const noexcept { return last_drift_; }
    double last_effective_step() const noexcept { return last_effective_step_; }
    /// Low-rank moments; only valid for a compressed layer.
    const LowRankAdamState& optimizer_state() const;

    /// Full-space weight gradient implied by the pending gradient (U G or G).
    Matrix materialized_gradient() const;

private:
    std::string name_;
    Matrix w_;
    std::size_t rank_;
    TrackerKind tracker_;
    bool compress_;

    std::optional<SubspaceBasis> basis_;
    TransitionMatrix transition_;
    double last_drift_ = 0.0;
    double last_effective_step_ = 0.0;

    std::optional<CompressedActivationCache> cache_;
    std::optional<Matrix> full_cache_;
    std::optional<Matrix> grad_;

    std::optional<LowRankAdamState> lowrank_state_;
    std::optional<FullAdamState> full_state_;
};

/// Vector parameter (1 x k) trained with full Adam.
class BiasLayer {
public:
    BiasLayer(std::string name, std::size_t width);

    const std::string& name() const noexcept { return name_; }
    const Matrix& values() const noexcept { return b_; }
    void set_values(Matrix b);

    Matrix forward(const Matrix& x) const;
    Matrix backward(const Matrix& g_out);
    void step(const AdamHyper& hyper, double lr);
    const std::optional<Matrix>& pending_gradient() const noexcept { return grad_; }

private:
    std::string name_;
    Matrix b_;
    std::optional<Matrix> grad_;
    FullAdamState state_;
};

/// Elementwise tanh. Its input activations are cached uncompressed.
class TanhLayer {
public:
    explicit TanhLayer(std::string name) : name_(std::move(name)) {}
    const std::string& name() const noexcept { return name_; }
    Matrix forward(const Matrix& x, bool training);
    Matrix backward(const Matrix& g_out);
    std::size_t cached_width() const noexcept { return width_; }

private:
    std::string name_;
    std::optional<Matrix> out_;
    std::size_t width_ = 0;
};

using GraphNode = std::variant<LinearLayer, BiasLayer, TanhLayer>;

enum class LossKind { MeanSquaredError, SoftmaxCrossEntropy };

struct Batch {
    Matrix x;
    /// Regression targets (N x m); unused for classification.
    std::optional<Matrix> y;
    /// Class indices (length N); unused for regression.
    std::vector<std::size_t> labels;
    std::size_t batch = 0;   ///< b; 0 means "N rows of independent samples"
    std::size_t seq_len = 1; ///< n
};

struct LossValue {
    double loss = 0.0;
    Matrix grad;  ///< dL/dOutput
};

/// L = 0.5 * ||P - Y||_F^2 / N.
LossValue mse_loss(const Matrix& pred, const Matrix& target);
/// Mean softmax cross-entropy over rows.
LossValue cross_entropy_loss(const Matrix& logits, const std::vector<std::size_t>& labels);
/// Fraction of rows whose arg-max logit equals the label.
double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels);

/// Per-component byte counts for one graph entry.
struct LedgerEntry {
    std::string name;
    std::uint64_t weights_bytes = 0;
    std::uint64_t activation_bytes = 0;
    std::uint64_t gradient_bytes = 0;
    std::uint64_t optimizer_bytes = 0;

    std::uint64_t total() const noexcept {
        return weights_bytes + activation_bytes + gradient_bytes + optimizer_bytes;
    }
    friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct MemoryLedger {
    std::vector<LedgerEntry> layers;
    std::size_t elem_size = 2;

    LedgerEntry totals() const;
    friend bool operator==(const MemoryLedger&, const MemoryLedger&) = default;
};

/// Analytic accounting for one d x m linear layer seeing N rows. A compressed
/// layer stores N x r activations, an r x m gradient and two r x m moments.
LedgerEntry linear_ledger_entry(const std::string& name, std::size_t d, std::size_t m,
                                std::size_t r, std::size_t n_rows, std::size_t elem_size,
                                bool compressed);

/// {layers: [...], totals: {...}, elem_size, baseline_totals: {...}}
nlohmann::json ledger_to_json(const MemoryLedger& ledger, const MemoryLedger& baseline);

/// Sequential graph of linear, bias and tanh nodes with a loss at the end.
class Model {
public:
    Model(std::string kind, LossKind loss) : kind_(std::move(kind)), loss_(loss) {}

    const std::string& kind() const noexcept { return kind_; }
    LossKind loss_kind() const noexcept { return loss_; }

    void add(GraphNode node) { nodes_.push_back(std::move(node)); }
    std::vector<GraphNode>& nodes() noexcept { return nodes_; }
    const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }

    std::vector<LinearLayer*> linear_layers();
    std::vector<const LinearLayer*> linear_layers() const;

    /// Initializes every compressed layer's basis from the activations it sees
    /// on `first`, propagating through the graph with exact forwards.
    void initialize(const Batch& first);
    bool initialized() const;

    Matrix forward(const Batch& batch);
    Matrix predict(const Matrix& x) const;
    void backward(const Matrix& grad_out);
    void step(const AdamHyper& hyper, double lr, double clip = 0.0);

    LossValue loss(const Matrix& output, const Batch& batch) const;
    /// MSE for regression models, accuracy for classifiers.
    double eval_metric(const Batch& batch) const;

    std::size_t steps_taken() const noexcept { return steps_; }
    std::size_t last_rows() const noexcept { return last_rows_; }

    /// Ledger for the last seen batch size under the model's own ranks.
    MemoryLedger ledger(std::size_t elem_size) const;
    /// Same model with every linear layer uncompressed.
    MemoryLedger baseline_ledger(std::size_t elem_size) const;

    void mark_step(std::size_t rows) {
        ++steps_;
        last_rows_ = rows;
    }

private:
    MemoryLedger build_ledger(std::size_t elem_size, bool baseline) const;

    std::string kind_;
    LossKind loss_;
    std::vector<GraphNode> nodes_;
    std::size_t steps_ = 0;
    std::size_t last_rows_ = 0;
};

struct StepResult {
    double loss = 0.0;
    MemoryLedger ledger;
};

/// One full iteration: forward (tracker, projection, cache), loss, backward,
/// projection-aware Adam on every linear layer, plain Adam on biases.
/// Throws NumericError naming the step index on a non-finite loss.
StepResult train_step(Model& model, const Batch& batch, const AdamHyper& hyper, double lr,
                      std::size_t elem_size = 2, double clip = 0.0);

MemoryLedger ledger_report(const Model& model, std::size_t elem_size = 2);

struct ModelShape {
    std::size_t in_dim = 8;
    std::size_t hidden = 16;
    std::size_t out_dim = 4;
    std::size_t embed = 8;  ///< SeqBlock embedding width
};

/// X W with one compressed layer and MSE loss.
Model make_linear_regression(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker,
                             Rng& rng);
/// linear -> bias -> tanh -> linear -> bias, with `loss`.
Model make_mlp2(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker, Rng& rng,
                LossKind loss = LossKind::SoftmaxCrossEntropy);
/// One-hot characters -> embedding -> linear -> bias -> tanh -> readout -> bias.
/// `shape.in_dim` and `shape.out_dim` are the vocabulary size.
Model make_seq_block(const ModelShape& shape, std::size_t rank, const TrackerKind& tracker,
                     Rng& rng);

/// Uniform in +-1/sqrt(d).
Matrix init_weights(std::size_t d, std::size_t m, Rng& rng);

}  // namespace oasis
