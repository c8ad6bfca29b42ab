#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "oasis/harness.hpp"

namespace oasis {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    if (v.empty()) throw ConfigError(key + ": expected a number, got ''");
    char* end = nullptr;
    errno = 0;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out))
        throw ConfigError(key + ": expected a finite number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [name, e] : options) {
        if (v == name) return e;
        names += names.empty() ? name : std::string("|") + name;
    }
    throw ConfigError(key + ": expected one of " + names + ", got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
    return out;
}

}  // namespace

std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Regression: return "regression";
        case TaskKind::DriftingRegression: return "drifting-regression";
        case TaskKind::MlpClassify: return "mlp-classify";
        case TaskKind::CharSeq: return "char-seq";
    }
    return "?";
}

std::string to_string(TrackerChoice k) {
    switch (k) {
        case TrackerChoice::Oja: return "oja";
        case TrackerChoice::PeriodicPca: return "periodic_pca";
        case TrackerChoice::Fixed: return "fixed";
    }
    return "?";
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::Constant ? "constant" : "cosine"; }

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
    std::string v = trim(raw);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);

    if (key == "task") {
        task = parse_enum<TaskKind>(key, v,
                                    {{"regression", TaskKind::Regression},
                                     {"drifting-regression", TaskKind::DriftingRegression},
                                     {"mlp-classify", TaskKind::MlpClassify},
                                     {"char-seq", TaskKind::CharSeq}});
    } else if (key == "d") {
        d = parse_size(key, v);
    } else if (key == "m") {
        m = parse_size(key, v);
    } else if (key == "N") {
        rows = parse_size(key, v);
    } else if (key == "b") {
        b = parse_size(key, v);
    } else if (key == "n") {
        n = parse_size(key, v);
    } else if (key == "hidden") {
        hidden = parse_size(key, v);
    } else if (key == "embed") {
        embed = parse_size(key, v);
    } else if (key == "eval_rows") {
        eval_rows = parse_size(key, v);
    } else if (key == "r_true") {
        r_true = parse_size(key, v);
    } else if (key == "rotation_rate") {
        rotation_rate = parse_real(key, v);
    } else if (key == "noise") {
        noise = parse_real(key, v);
    } else if (key == "rank") {
        rank = parse_size(key, v);
    } else if (key == "tracker") {
        tracker = parse_enum<TrackerChoice>(key, v,
                                            {{"oja", TrackerChoice::Oja},
                                             {"periodic_pca", TrackerChoice::PeriodicPca},
                                             {"fixed", TrackerChoice::Fixed}});
    } else if (key == "gamma") {
        gamma = parse_real(key, v);
    } else if (key == "interval") {
        interval = parse_size(key, v);
    } else if (key == "norm") {
        norm = parse_enum<CovNorm>(key, v,
                                   {{"frobenius", CovNorm::Frobenius},
                                    {"spectral-estimate", CovNorm::SpectralEstimate}});
    } else if (key == "uncompressed") {
        uncompressed = split_list(v);
    } else if (key == "lr") {
        lr = parse_real(key, v);
    } else if (key == "beta1") {
        beta1 = parse_real(key, v);
    } else if (key == "beta2") {
        beta2 = parse_real(key, v);
    } else if (key == "eps") {
        eps = parse_real(key, v);
    } else if (key == "schedule") {
        schedule = parse_enum<ScheduleKind>(
            key, v, {{"constant", ScheduleKind::Constant}, {"cosine", ScheduleKind::Cosine}});
    } else if (key == "warmup") {
        warmup = parse_real(key, v);
    } else if (key == "grad_clip") {
        grad_clip = parse_real(key, v);
    } else if (key == "steps") {
        steps = parse_size(key, v);
    } else if (key == "seed") {
        seed = parse_size(key, v);
    } else if (key == "eval_every") {
        eval_every = parse_size(key, v);
    } else if (key == "elem_size") {
        elem_size = parse_size(key, v);
    } else if (key == "record_wall_clock") {
        record_wall_clock = parse_bool(key, v);
    } else if (key == "out_dir") {
        out_dir = v;
    } else {
        throw ConfigError("unknown key '" + key + "'");
    }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
    return {
        {"task", to_string(task)},
        {"d", std::to_string(d)},
        {"m", std::to_string(m)},
        {"N", std::to_string(rows)},
        {"b", std::to_string(b)},
        {"n", std::to_string(n)},
        {"hidden", std::to_string(hidden)},
        {"embed", std::to_string(embed)},
        {"eval_rows", std::to_string(eval_rows)},
        {"r_true", std::to_string(r_true)},
        {"rotation_rate", format_real(rotation_rate)},
        {"noise", format_real(noise)},
        {"rank", std::to_string(rank)},
        {"tracker", to_string(tracker)},
        {"gamma", format_real(gamma)},
        {"interval", std::to_string(interval)},
        {"norm", norm == CovNorm::Frobenius ? "frobenius" : "spectral-estimate"},
        {"uncompressed", join(uncompressed)},
        {"lr", format_real(lr)},
        {"beta1", format_real(beta1)},
        {"beta2", format_real(beta2)},
        {"eps", format_real(eps)},
        {"schedule", to_string(schedule)},
        {"warmup", format_real(warmup)},
        {"grad_clip", format_real(grad_clip)},
        {"steps", std::to_string(steps)},
        {"seed", std::to_string(seed)},
        {"eval_every", std::to_string(eval_every)},
        {"elem_size", std::to_string(elem_size)},
        {"record_wall_clock", record_wall_clock ? "true" : "false"},
        {"out_dir", out_dir},
    };
}

nlohmann::json ExperimentConfig::to_json() const {
    return {
        {"task", to_string(task)},
        {"d", d},
        {"m", m},
        {"N", rows},
        {"b", b},
        {"n", n},
        {"hidden", hidden},
        {"embed", embed},
        {"eval_rows", eval_rows},
        {"r_true", r_true},
        {"rotation_rate", rotation_rate},
        {"noise", noise},
        {"rank", rank},
        {"tracker", to_string(tracker)},
        {"gamma", gamma},
        {"interval", interval},
        {"norm", norm == CovNorm::Frobenius ? "frobenius" : "spectral-estimate"},
        {"uncompressed", uncompressed},
        {"lr", lr},
        {"beta1", beta1},
        {"beta2", beta2},
        {"eps", eps},
        {"schedule", to_string(schedule)},
        {"warmup", warmup},
        {"grad_clip", grad_clip},
        {"steps", steps},
        {"seed", seed},
        {"eval_every", eval_every},
        {"elem_size", elem_size},
        {"record_wall_clock", record_wall_clock},
        {"out_dir", out_dir},
    };
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(d >= 1 && m >= 1 && rows >= 1 && b >= 1 && n >= 1, "dimensions must be >= 1");
    require(hidden >= 1 && embed >= 1 && eval_rows >= 1, "dimensions must be >= 1");
    require(rank >= 1 && rank <= d, "rank must be in [1, d], got " + std::to_string(rank));
    require(steps >= 1, "steps must be >= 1");
    require(warmup >= 0.0 && warmup < 1.0, "warmup must be in [0, 1)");
    require(gamma >= 0.0, "gamma must be >= 0");
    require(interval >= 1, "interval must be >= 1");
    require(lr > 0.0, "lr must be > 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must be in [0, 1)");
    require(eps > 0.0, "eps must be > 0");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(eval_every >= 1, "eval_every must be >= 1");
    require(elem_size >= 1, "elem_size must be >= 1");
    require(noise >= 0.0, "noise must be >= 0");
    require(rotation_rate >= 0.0, "rotation_rate must be >= 0");
    require(!out_dir.empty(), "out_dir must not be empty");
    if (task == TaskKind::DriftingRegression || task == TaskKind::Regression)
        require(r_true >= 1 && 2 * r_true <= d, "r_true must satisfy 1 <= 2 r_true <= d");
    if (task == TaskKind::MlpClassify) require(m >= 2, "mlp-classify needs m >= 2 classes");
    if (task == TaskKind::CharSeq) require(d >= 2, "char-seq needs a vocabulary d >= 2");
}

TrackerKind ExperimentConfig::tracker_kind() const {
    switch (tracker) {
        case TrackerChoice::Oja:
            if (gamma == 0.0) return FixedBasis{};
            return OjaConfig{gamma, 1e-30, norm};
        case TrackerChoice::PeriodicPca: return PeriodicPca{interval};
        case TrackerChoice::Fixed: return FixedBasis{};
    }
    return FixedBasis{};
}

AdamHyper ExperimentConfig::adam() const { return AdamHyper{lr, beta1, beta2, eps}; }

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            cfg.set(key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.string());
}

double schedule_lr(const ExperimentConfig& cfg, std::size_t t) {
    if (cfg.schedule == ScheduleKind::Constant) return cfg.lr;
    const auto warm = static_cast<std::size_t>(std::ceil(cfg.warmup * static_cast<double>(cfg.steps)));
    if (t <= warm) return cfg.lr * static_cast<double>(t) / static_cast<double>(warm);
    if (cfg.steps == warm) return cfg.lr;
    const double progress =
        static_cast<double>(t - warm) / static_cast<double>(cfg.steps - warm);
    return 0.5 * cfg.lr * (1.0 + std::cos(M_PI * progress));
}

}  // namespace oasis
