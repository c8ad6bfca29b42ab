#pragma once

// Experiment plumbing: configuration, synthetic tasks, training runs, sweeps,
// drift summaries and the oracle release gate.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oasis/numerics.hpp"
#include "oasis/subspace.hpp"
#include "oasis/traingraph.hpp"

namespace oasis {

/// Bad or unknown configuration input. Maps to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TaskKind { Regression, DriftingRegression, MlpClassify, CharSeq };
enum class TrackerChoice { Oja, PeriodicPca, Fixed };
enum class ScheduleKind { Constant, Cosine };

std::string to_string(TaskKind k);
std::string to_string(TrackerChoice k);
std::string to_string(ScheduleKind k);

struct ExperimentConfig {
    TaskKind task = TaskKind::DriftingRegression;
    std::size_t d = 64;        // input width
    std::size_t m = 8;         // output width (classes / vocab for the classifier tasks)
    std::size_t rows = 64;     // N, rows per batch for the non-sequence tasks
    std::size_t b = 4;         // sequences per batch (char-seq)
    std::size_t n = 16;        // sequence length (char-seq)
    std::size_t hidden = 32;
    std::size_t embed = 16;
    std::size_t eval_rows = 512;

    std::size_t r_true = 4;
    double rotation_rate = 0.05;  // radians per step
    double noise = 0.01;

    std::size_t rank = 4;
    TrackerChoice tracker = TrackerChoice::Oja;
    double gamma = 0.1;
    std::size_t interval = 10;
    CovNorm norm = CovNorm::Frobenius;
    std::vector<std::string> uncompressed;  // layer names kept at full width

    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    ScheduleKind schedule = ScheduleKind::Cosine;
    double warmup = 0.05;
    double grad_clip = 0.0;  // 0 disables

    std::size_t steps = 2000;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    std::size_t elem_size = 2;
    bool record_wall_clock = false;
    std::string out_dir = "runs/default";

    /// Assigns one field from its textual form. Throws ConfigError.
    void set(const std::string& key, const std::string& value);
    /// Ordered key/value view of every field, round-trippable through set().
    std::vector<std::pair<std::string, std::string>> entries() const;
    nlohmann::json to_json() const;
    void validate() const;
    /// gamma = 0 with the Oja tracker degenerates to a fixed basis.
    TrackerKind tracker_kind() const;
    AdamHyper adam() const;
};

/// Parses the flat `key = value` format. `[section]` headers are accepted and
/// ignored; `#` starts a comment. Unknown or repeated keys are errors.
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Learning rate at step t in [1, steps].
double schedule_lr(const ExperimentConfig& cfg, std::size_t t);

/// Source of training and held-out batches. Batch t depends only on the seed
/// and t, so streams can be replayed in any order.
class TaskStream {
public:
    virtual ~TaskStream() = default;
    virtual Batch train_batch(std::size_t t) const = 0;
    virtual Batch eval_batch(std::size_t t) const = 0;
};

/// X_t = Z_t B_t^T + noise E_t with B_t rotating at a constant angle per step
/// inside a fixed 2 r_true dimensional plane; Y_t = X_t W*.
class DriftingTask : public TaskStream {
public:
    DriftingTask(std::size_t d, std::size_t r_true, std::size_t m, std::size_t rows,
                 std::size_t eval_rows, double rotation_rate, double noise, std::uint64_t seed);

    Matrix true_basis(std::size_t t) const;
    const Matrix& planted_weights() const noexcept { return w_star_; }
    const Matrix& ambient_plane() const noexcept { return q_; }
    Batch train_batch(std::size_t t) const override;
    Batch eval_batch(std::size_t t) const override;

private:
    Batch draw(std::size_t t, std::uint64_t stream, std::size_t rows) const;

    std::size_t d_, r_true_, rows_, eval_rows_;
    double rate_, noise_;
    std::uint64_t seed_;
    Matrix q_;
    Matrix w_star_;
};

/// Materializes `steps` training batches (t = 1..steps) of a drifting task
/// with m = 1 targets.
std::vector<Batch> gen_drifting_task(std::size_t d, std::size_t r_true, std::size_t rows,
                                     std::size_t steps, double rotation_rate, double noise,
                                     std::uint64_t seed);

std::unique_ptr<TaskStream> make_task(const ExperimentConfig& cfg);
Model make_model(const ExperimentConfig& cfg);

struct MetricsRow {
    std::size_t step = 0;
    double train_loss = 0.0;
    std::optional<double> eval;
    double mean_drift = 0.0;
    std::vector<double> layer_drift;
    double gamma_eff = 0.0;
    double wall_ms = 0.0;
};

struct RunResult {
    std::filesystem::path dir;
    bool ok = true;
    std::string failure;
    std::size_t steps_completed = 0;
    double final_eval = 0.0;
    std::vector<MetricsRow> rows;
};

/// Trains cfg.steps steps and writes metrics.csv, ledger.json and
/// manifest.json under cfg.out_dir. A non-finite loss stops the run, keeps the
/// rows written so far and adds a FAILED marker. Throws ConfigError.
RunResult run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
    std::string value;
    std::vector<double> finals;
    std::size_t failures = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepCell> cells;  // ordered by value
};

/// Runs every (value, seed) pair with `axis` overridden, seeds cfg.seed ..
/// cfg.seed + seeds - 1, and writes summary.csv in cfg.out_dir. Cell runs go
/// to <out_dir>/<axis>=<value>/seed=<s>. `jobs` > 1 runs cells on threads.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, std::size_t seeds,
                      std::size_t jobs = 1);

struct DriftSummary {
    std::filesystem::path source;
    std::vector<std::size_t> steps;
    std::vector<double> mean_drift;
    std::size_t transient_length = 0;
    double steady_mean = 0.0;
};

/// Transient length is the first window start s where the mean drift over
/// (s, s + w] and (s + w, s + 2w] differ by less than 5 %; the steady mean
/// averages every step after s.
DriftSummary summarize_drift(std::vector<std::size_t> steps, std::vector<double> drift,
                             std::size_t window = 50);
/// Reads metrics.csv from a run directory (or the file itself).
DriftSummary drift_report(const std::filesystem::path& run, std::size_t window = 50);
nlohmann::json drift_to_json(const std::vector<DriftSummary>& reports);

struct OracleRow {
    std::string suite;
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool lower_is_pass = true;  // false: the measured value must exceed tolerance
    bool pass = false;
};

std::vector<std::string> oracle_suites();
/// Runs one suite or "all". Throws ConfigError for an unknown suite.
std::vector<OracleRow> oracle_check(const std::string& suite = "all");
void print_oracle_table(std::ostream& out, const std::vector<OracleRow>& rows);

/// Decimal with 17 significant digits, the CSV cell format.
std::string format_real(double v);
/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace oasis
