#include <algorithm>
#include <array>
#include <cmath>

#include "oasis/harness.hpp"

namespace oasis {

// Seed layout: (seed, 0, k) streams build fixed task structure, (seed, t + 1, k)
// streams draw batch t, and (seed, 0, 100) initializes the model.
namespace {

constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kEvalStream = 1;
constexpr std::uint64_t kModelStream = 100;

Rng batch_rng(std::uint64_t seed, std::size_t t, std::uint64_t stream) {
    return Rng::derive(seed, static_cast<std::uint64_t>(t) + 1, stream);
}

/// Columns of Q scaled by (i + 1)^-1: a smooth anisotropic spectrum.
Matrix decaying_mixer(std::size_t d, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0, 0);
    Matrix q = rng.orthonormal(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) q(i, j) /= static_cast<double>(j + 1);
    return q;
}

class StationaryRegression : public TaskStream {
public:
    StationaryRegression(const ExperimentConfig& cfg)
        : rows_(cfg.rows), eval_rows_(cfg.eval_rows), noise_(cfg.noise), seed_(cfg.seed),
          mixer_(decaying_mixer(cfg.d, cfg.seed)),
          w_star_(Rng::derive(cfg.seed, 0, 1).normal_matrix(cfg.d, cfg.m)) {}
    Batch train_batch(std::size_t t) const override { return draw(t, kTrainStream, rows_); }
    Batch eval_batch(std::size_t t) const override { return draw(t, kEvalStream, eval_rows_); }

private:
    Batch draw(std::size_t t, std::uint64_t stream, std::size_t rows) const {
        Rng rng = batch_rng(seed_, t, stream);
        const Matrix x = matmul_nt(rng.normal_matrix(rows, mixer_.cols()), mixer_);
        Matrix y = matmul(x, w_star_);
        if (noise_ > 0.0) y += noise_ * rng.normal_matrix(rows, w_star_.cols());
        return Batch{x, y, {}};
    }

    std::size_t rows_, eval_rows_;
    double noise_;
    std::uint64_t seed_;
    Matrix mixer_;
    Matrix w_star_;
};

/// Labels are the argmax of a fixed random linear teacher on anisotropic inputs.
class TeacherClassify : public TaskStream {
public:
    TeacherClassify(const ExperimentConfig& cfg)
        : rows_(cfg.rows), eval_rows_(cfg.eval_rows), seed_(cfg.seed),
          mixer_(decaying_mixer(cfg.d, cfg.seed)),
          teacher_(Rng::derive(cfg.seed, 0, 1).normal_matrix(cfg.d, cfg.m)) {}
    Batch train_batch(std::size_t t) const override { return draw(t, kTrainStream, rows_); }
    Batch eval_batch(std::size_t t) const override { return draw(t, kEvalStream, eval_rows_); }

private:
    Batch draw(std::size_t t, std::uint64_t stream, std::size_t rows) const {
        Rng rng = batch_rng(seed_, t, stream);
        const Matrix x = matmul_nt(rng.normal_matrix(rows, mixer_.cols()), mixer_);
        const Matrix scores = matmul(x, teacher_);
        std::vector<std::size_t> labels(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < scores.cols(); ++j)
                if (scores(i, j) > scores(i, best)) best = j;
            labels[i] = best;
        }
        return Batch{x, std::nullopt, std::move(labels)};
    }

    std::size_t rows_, eval_rows_;
    std::uint64_t seed_;
    Matrix mixer_;
    Matrix teacher_;
};

/// Character stream from a sparse random Markov chain over d symbols: each
/// symbol has two successors taken with probability 0.8 and 0.2.
class MarkovChars : public TaskStream {
public:
    MarkovChars(const ExperimentConfig& cfg)
        : vocab_(cfg.d), b_(cfg.b), n_(cfg.n),
          eval_b_(std::max<std::size_t>(1, cfg.eval_rows / cfg.n)), seed_(cfg.seed) {
        Rng rng = Rng::derive(seed_, 0, 0);
        for (std::size_t c = 0; c < vocab_; ++c) {
            const std::size_t a = rng.next_u64() % vocab_;
            std::size_t b = rng.next_u64() % vocab_;
            if (b == a) b = (a + 1) % vocab_;
            next_.push_back({a, b});
        }
    }
    Batch train_batch(std::size_t t) const override { return draw(t, kTrainStream, b_); }
    Batch eval_batch(std::size_t t) const override { return draw(t, kEvalStream, eval_b_); }

private:
    Batch draw(std::size_t t, std::uint64_t stream, std::size_t seqs) const {
        Rng rng = batch_rng(seed_, t, stream);
        Matrix x(seqs * n_, vocab_);
        std::vector<std::size_t> labels(seqs * n_);
        for (std::size_t s = 0; s < seqs; ++s) {
            std::size_t c = rng.next_u64() % vocab_;
            for (std::size_t i = 0; i < n_; ++i) {
                const std::size_t next = rng.uniform() < 0.8 ? next_[c][0] : next_[c][1];
                x(s * n_ + i, c) = 1.0;
                labels[s * n_ + i] = next;
                c = next;
            }
        }
        return Batch{std::move(x), std::nullopt, std::move(labels), seqs, n_};
    }

    std::size_t vocab_, b_, n_, eval_b_;
    std::uint64_t seed_;
    std::vector<std::array<std::size_t, 2>> next_;
};

}  // namespace

DriftingTask::DriftingTask(std::size_t d, std::size_t r_true, std::size_t m, std::size_t rows,
                           std::size_t eval_rows, double rotation_rate, double noise,
                           std::uint64_t seed)
    : d_(d), r_true_(r_true), rows_(rows), eval_rows_(eval_rows), rate_(rotation_rate),
      noise_(noise), seed_(seed), q_(1, 1), w_star_(1, 1) {
    if (r_true == 0 || 2 * r_true > d)
        throw ShapeError("DriftingTask: need 1 <= 2 r_true <= d, got r_true = " +
                         std::to_string(r_true) + ", d = " + std::to_string(d));
    if (m == 0 || rows == 0 || eval_rows == 0) throw ShapeError("DriftingTask: empty dimension");
    if (!(rotation_rate >= 0.0) || !(noise >= 0.0))
        throw std::invalid_argument("DriftingTask: rotation_rate and noise must be >= 0");
    Rng qr = Rng::derive(seed, 0, 0);
    q_ = qr.orthonormal(d, 2 * r_true);
    // W* = Q A lives in the plane, so every target direction is learnable by a
    // rank-2 r_true update; the 1 / sqrt(r_true) scale gives unit-variance targets.
    Rng wr = Rng::derive(seed, 0, 1);
    w_star_ = matmul(q_, wr.normal_matrix(2 * r_true, m)) *
              (1.0 / std::sqrt(static_cast<double>(r_true)));
}

Matrix DriftingTask::true_basis(std::size_t t) const {
    const double angle = rate_ * static_cast<double>(t);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Matrix b(d_, r_true_);
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = 0; j < r_true_; ++j) b(i, j) = c * q_(i, j) + s * q_(i, r_true_ + j);
    return b;
}

Batch DriftingTask::draw(std::size_t t, std::uint64_t stream, std::size_t rows) const {
    Rng rng = batch_rng(seed_, t, stream);
    Matrix x = matmul_nt(rng.normal_matrix(rows, r_true_), true_basis(t));
    if (noise_ > 0.0) x += noise_ * rng.normal_matrix(rows, d_);
    Matrix y = matmul(x, w_star_);
    return Batch{std::move(x), std::move(y), {}};
}

Batch DriftingTask::train_batch(std::size_t t) const { return draw(t, kTrainStream, rows_); }
Batch DriftingTask::eval_batch(std::size_t t) const { return draw(t, kEvalStream, eval_rows_); }

std::vector<Batch> gen_drifting_task(std::size_t d, std::size_t r_true, std::size_t rows,
                                     std::size_t steps, double rotation_rate, double noise,
                                     std::uint64_t seed) {
    const DriftingTask task(d, r_true, 1, rows, rows, rotation_rate, noise, seed);
    std::vector<Batch> out;
    out.reserve(steps);
    for (std::size_t t = 1; t <= steps; ++t) out.push_back(task.train_batch(t));
    return out;
}

std::unique_ptr<TaskStream> make_task(const ExperimentConfig& cfg) {
    cfg.validate();
    switch (cfg.task) {
        case TaskKind::DriftingRegression:
            return std::make_unique<DriftingTask>(cfg.d, cfg.r_true, cfg.m, cfg.rows, cfg.eval_rows,
                                                  cfg.rotation_rate, cfg.noise, cfg.seed);
        case TaskKind::Regression: return std::make_unique<StationaryRegression>(cfg);
        case TaskKind::MlpClassify: return std::make_unique<TeacherClassify>(cfg);
        case TaskKind::CharSeq: return std::make_unique<MarkovChars>(cfg);
    }
    throw ConfigError("unknown task");
}

Model make_model(const ExperimentConfig& cfg) {
    cfg.validate();
    Rng rng = Rng::derive(cfg.seed, 0, kModelStream);
    const TrackerKind tracker = cfg.tracker_kind();
    Model model = [&] {
        switch (cfg.task) {
            case TaskKind::DriftingRegression:
            case TaskKind::Regression:
                return make_linear_regression({cfg.d, cfg.hidden, cfg.m}, cfg.rank, tracker, rng);
            case TaskKind::MlpClassify:
                return make_mlp2({cfg.d, cfg.hidden, cfg.m}, cfg.rank, tracker, rng);
            case TaskKind::CharSeq:
                return make_seq_block({cfg.d, cfg.hidden, cfg.d, cfg.embed}, cfg.rank, tracker, rng);
        }
        throw ConfigError("unknown task");
    }();

    for (const std::string& name : cfg.uncompressed) {
        bool found = false;
        for (GraphNode& node : model.nodes()) {
            auto* layer = std::get_if<LinearLayer>(&node);
            if (layer == nullptr || layer->name() != name) continue;
            node = LinearLayer(name, layer->weights(), layer->in_dim(), tracker, false);
            found = true;
        }
        if (!found) throw ConfigError("uncompressed: no linear layer named '" + name + "'");
    }
    return model;
}

}  // namespace oasis
