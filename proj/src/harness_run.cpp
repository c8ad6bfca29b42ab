#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "oasis/harness.hpp"

#ifndef OASIS_VERSION
#define OASIS_VERSION "unknown"
#endif

namespace fs = std::filesystem;

namespace oasis {

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

std::string metrics_csv(const std::vector<std::string>& layers, const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "step,train_loss,eval,mean_drift";
    for (const auto& name : layers) out << ",drift:" << name;
    out << ",gamma_eff,wall_ms\n";
    for (const MetricsRow& r : rows) {
        out << r.step << ',' << format_real(r.train_loss) << ','
            << (r.eval ? format_real(*r.eval) : "") << ',' << format_real(r.mean_drift);
        for (double v : r.layer_drift) out << ',' << format_real(v);
        out << ',' << format_real(r.gamma_eff) << ',' << format_real(r.wall_ms) << '\n';
    }
    return out.str();
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto task = make_task(cfg);
    Model model = make_model(cfg);

    RunResult result;
    result.dir = cfg.out_dir;
    fs::create_directories(result.dir);
    fs::remove(result.dir / "FAILED");

    std::vector<std::string> names;
    for (const LinearLayer* l : model.linear_layers())
        if (l->compressed()) names.push_back(l->name());

    model.initialize(task->train_batch(0));
    const AdamHyper hyper = cfg.adam();
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        MetricsRow row;
        row.step = t;
        try {
            row.train_loss =
                train_step(model, task->train_batch(t), hyper, schedule_lr(cfg, t), cfg.elem_size,
                           cfg.grad_clip)
                    .loss;
            if (t % cfg.eval_every == 0 || t == cfg.steps) {
                const double e = model.eval_metric(task->eval_batch(t));
                if (!std::isfinite(e))
                    throw NumericError("non-finite eval metric at step " + std::to_string(t));
                row.eval = e;
            }
        } catch (const NumericError& e) {
            result.ok = false;
            result.failure = e.what();
            break;
        }
        for (const LinearLayer* l : model.linear_layers()) {
            if (!l->compressed()) continue;
            row.layer_drift.push_back(l->last_drift());
            row.gamma_eff += l->last_effective_step();
        }
        if (!row.layer_drift.empty()) {
            const double n = static_cast<double>(row.layer_drift.size());
            row.mean_drift =
                std::accumulate(row.layer_drift.begin(), row.layer_drift.end(), 0.0) / n;
            row.gamma_eff /= n;
        }
        if (cfg.record_wall_clock)
            row.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        if (row.eval) result.final_eval = *row.eval;
        result.rows.push_back(std::move(row));
        result.steps_completed = t;
    }

    write_atomic(result.dir / "metrics.csv", metrics_csv(names, result.rows));

    nlohmann::json ledger = {{"status", "unavailable"}};
    if (model.steps_taken() > 0)
        ledger = ledger_to_json(ledger_report(model, cfg.elem_size),
                                model.baseline_ledger(cfg.elem_size));
    write_atomic(result.dir / "ledger.json", ledger.dump(2) + "\n");

    nlohmann::json manifest = {
        {"config", cfg.to_json()},
        {"seed", cfg.seed},
        {"version", OASIS_VERSION},
        {"status", result.ok ? "ok" : "failed"},
        {"steps_completed", result.steps_completed},
        {"final_eval", result.final_eval},
    };
    if (!result.ok) {
        manifest["failure"] = result.failure;
        write_atomic(result.dir / "FAILED", result.failure + "\n");
    }
    write_atomic(result.dir / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

namespace {

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, std::size_t seeds, std::size_t jobs) {
    if (values.empty()) throw ConfigError("sweep: empty axis");
    if (seeds == 0) throw ConfigError("sweep: seeds must be >= 1");
    if (axis == "seed" || axis == "out_dir") throw ConfigError("sweep: cannot sweep '" + axis + "'");

    std::vector<std::string> sorted = values;
    if (std::all_of(sorted.begin(), sorted.end(), is_number))
        std::sort(sorted.begin(), sorted.end(), [](const std::string& a, const std::string& b) {
            const double x = std::strtod(a.c_str(), nullptr);
            const double y = std::strtod(b.c_str(), nullptr);
            return x != y ? x < y : a < b;
        });
    else
        std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("sweep: repeated axis value");

    // Build and validate every cell before running any of them.
    std::vector<ExperimentConfig> cells;
    for (const std::string& v : sorted) {
        for (std::size_t s = 0; s < seeds; ++s) {
            ExperimentConfig cfg = base;
            cfg.set(axis, v);
            cfg.seed = base.seed + s;
            cfg.out_dir = (fs::path(base.out_dir) / (axis + "=" + v) /
                           ("seed=" + std::to_string(cfg.seed)))
                              .string();
            cfg.validate();
            cells.push_back(std::move(cfg));
        }
    }

    std::vector<std::optional<double>> finals(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                const RunResult r = run_experiment(cells[i]);
                if (r.ok) finals[i] = r.final_eval;
            } catch (const std::exception&) {
                // Counted as a failed cell below.
            }
        }
    };
    jobs = std::clamp<std::size_t>(jobs, 1, cells.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SweepResult result;
    result.axis = axis;
    std::ostringstream csv;
    csv << "axis,value,seeds,failures,mean_final,stddev_final\n";
    for (std::size_t vi = 0; vi < sorted.size(); ++vi) {
        SweepCell cell;
        cell.value = sorted[vi];
        for (std::size_t s = 0; s < seeds; ++s) {
            const auto& f = finals[vi * seeds + s];
            if (f)
                cell.finals.push_back(*f);
            else
                ++cell.failures;
        }
        const double k = static_cast<double>(cell.finals.size());
        if (!cell.finals.empty()) {
            cell.mean = std::accumulate(cell.finals.begin(), cell.finals.end(), 0.0) / k;
            double ss = 0.0;
            for (double f : cell.finals) ss += (f - cell.mean) * (f - cell.mean);
            cell.stddev = cell.finals.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
        }
        csv << axis << ',' << cell.value << ',' << seeds << ',' << cell.failures << ','
            << (cell.finals.empty() ? "" : format_real(cell.mean)) << ','
            << (cell.finals.empty() ? "" : format_real(cell.stddev)) << '\n';
        result.cells.push_back(std::move(cell));
    }
    write_atomic(fs::path(base.out_dir) / "summary.csv", csv.str());
    return result;
}

DriftSummary summarize_drift(std::vector<std::size_t> steps, std::vector<double> drift,
                             std::size_t window) {
    if (steps.size() != drift.size()) throw std::invalid_argument("summarize_drift: length mismatch");
    if (window == 0) throw std::invalid_argument("summarize_drift: window must be >= 1");
    DriftSummary out;
    out.steps = std::move(steps);
    out.mean_drift = std::move(drift);
    const std::size_t len = out.mean_drift.size();
    if (len == 0) return out;

    std::vector<double> prefix(len + 1, 0.0);
    for (std::size_t i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + out.mean_drift[i];
    auto mean = [&](std::size_t lo, std::size_t hi) {
        return (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    };

    const std::size_t w = std::max<std::size_t>(1, std::min(window, len / 2));
    std::optional<std::size_t> settled;
    for (std::size_t s = 0; s + 2 * w <= len; ++s) {
        const double a = mean(s, s + w);
        const double b = mean(s + w, s + 2 * w);
        const double change = std::fabs(b - a);
        if (change < 0.05 * std::fabs(a) || change == 0.0) {
            settled = s;
            break;
        }
    }
    // A series that never settles is all transient; its steady mean falls back
    // to the last window.
    out.transient_length = settled ? *settled : len;
    out.steady_mean = settled ? mean(*settled, len) : mean(len - w, len);
    return out;
}

DriftSummary drift_report(const fs::path& run, std::size_t window) {
    const fs::path file = fs::is_directory(run) ? run / "metrics.csv" : run;
    std::ifstream in(file);
    if (!in) throw ConfigError("drift: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("drift: empty file " + file.string());

    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };
    const auto header = split(line);
    const auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ConfigError("drift: " + file.string() + " has no '" + name + "' column");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t step_col = col("step");
    const std::size_t drift_col = col("mean_drift");

    std::vector<std::size_t> steps;
    std::vector<double> drift;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw ConfigError("drift: ragged row in " + file.string());
        steps.push_back(std::stoull(cells[step_col]));
        drift.push_back(std::stod(cells[drift_col]));
    }
    DriftSummary out = summarize_drift(std::move(steps), std::move(drift), window);
    out.source = run;
    return out;
}

nlohmann::json drift_to_json(const std::vector<DriftSummary>& reports) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : reports)
        runs.push_back({{"source", r.source.string()},
                        {"transient_length", r.transient_length},
                        {"steady_mean", r.steady_mean},
                        {"steps", r.steps},
                        {"mean_drift", r.mean_drift}});
    return {{"runs", runs}};
}

}  // namespace oasis
