#pragma once

// Experiment orchestration: flat key=value configs, synthetic and CSV data,
// and the oracle / train-verify / counterexample / sweep commands that emit
// CSV tables.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "reslab/errors.hpp"
#include "reslab/landscape.hpp"
#include "reslab/losses.hpp"
#include "reslab/model.hpp"
#include "reslab/optim.hpp"
#include "reslab/oracle.hpp"
#include "reslab/rng.hpp"

namespace reslab {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// text helpers

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

/// Full-string decimal parse; nullopt on any trailing garbage.
inline std::optional<double> parse_double(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = t.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    const std::string t = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

inline std::optional<std::uint64_t> parse_u64(std::string_view s) {
    const std::string t = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    return std::nullopt;
}

}  // namespace detail

/// %.17g, with nan / inf / -inf spelled out.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

/// Quotes a field that contains a comma, quote or line break.
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row) {
        if (row.size() != header.size()) throw InvalidState("csv: row width differs from header");
        rows.push_back(std::move(row));
    }

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += ',';
                out += csv_escape(r[i]);
            }
            out += '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }
};

inline void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw Error("write to '" + path.string() + "' failed");
}

inline std::string read_text_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Numeric rectangular CSV. Blank lines are skipped; an optional header row is dropped.
struct CsvMatrix {
    Matrix values;
    std::vector<long> line_of_row;  // 1-based source line of each data row
};

inline CsvMatrix parse_csv_matrix(const std::string& text, bool header, const std::string& name = "csv") {
    std::vector<std::vector<double>> rows;
    CsvMatrix out;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    bool header_pending = header;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        const auto cells = detail::split(line, ',');
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto v = detail::parse_double(cells[j]);
            if (!v) throw ParseError(name + ": non-numeric cell '" + cells[j] + "' in column " + std::to_string(j + 1), lineno);
            if (!std::isfinite(*v)) throw ParseError(name + ": non-finite cell in column " + std::to_string(j + 1), lineno);
            row.push_back(*v);
        }
        if (rows.empty()) width = row.size();
        else if (row.size() != width)
            throw ParseError(name + ": ragged row with " + std::to_string(row.size()) + " cells, expected " +
                                 std::to_string(width),
                             lineno);
        rows.push_back(std::move(row));
        out.line_of_row.push_back(lineno);
    }
    if (rows.empty()) throw ParseError(name + ": no data rows", lineno);
    out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return out;
}

inline CsvMatrix read_csv_matrix(const fs::path& path, bool header) {
    return parse_csv_matrix(read_text_file(path), header, path.string());
}

/// X and Y from two numeric CSV files with matching row counts; optional bias column.
inline DataSet load_csv_dataset(const fs::path& path_x, const fs::path& path_y, bool bias, bool header = false) {
    const CsvMatrix x = read_csv_matrix(path_x, header);
    const CsvMatrix y = read_csv_matrix(path_y, header);
    if (x.values.rows() != y.values.rows()) {
        const bool x_longer = x.values.rows() > y.values.rows();
        const CsvMatrix& longer = x_longer ? x : y;
        const Index first_extra = std::min(x.values.rows(), y.values.rows());
        throw ParseError((x_longer ? path_x : path_y).string() + ": row count " +
                             std::to_string(longer.values.rows()) + " does not match " +
                             std::to_string((x_longer ? y : x).values.rows()) + " in " +
                             (x_longer ? path_y : path_x).string(),
                         longer.line_of_row[static_cast<std::size_t>(first_extra)]);
    }
    DataSet d;
    d.X = x.values;
    d.Y = y.values;
    return bias ? augment_bias(d) : d;
}

// ---------------------------------------------------------------------------
// configuration

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are errors.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value", lineno);
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ParseError("config: empty key", lineno);
        for (char ch : key)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_'))
                throw ParseError("config: invalid character in key '" + key + "'", lineno);
        if (!out.emplace(key, value).second) throw ParseError("config: duplicate key '" + key + "'", lineno);
    }
    return out;
}

enum class DataSource { teacher, gaussian, csv };

inline std::string_view to_string(DataSource s) {
    switch (s) {
        case DataSource::teacher: return "teacher";
        case DataSource::gaussian: return "gaussian";
        case DataSource::csv: return "csv";
    }
    return "?";
}

struct ExperimentConfig {
    std::uint64_t seed = 0;

    DataSource source = DataSource::teacher;
    Index m = 32;
    Index d_x = 4;  // before bias augmentation
    Index d_y = 1;
    double noise = 0.1;
    std::string x_path, y_path, z_path;
    bool csv_header = false;
    bool bias = false;

    StackConfig stack;
    LossKind loss = LossKind::squared;

    double grad_tol = 1e-6;
    long max_iter = 100000;
    int restarts = 5;
    DescentMethod method = DescentMethod::lbfgs;
    long trace_stride = 10;
    double oracle_tol = 1e-9;
    /// Relative tolerance of the equality check; 0 picks 1e-4 (squared) or 1e-3.
    double equality_rel_tol = 0.0;

    CertificationConfig cert;

    double counterexample_c = 0.5;
    Index counterexample_hidden = 0;

    std::string out_dir = "out";
    int threads = 0;
    /// Directory that relative data paths resolve against.
    fs::path base_dir;

    /// Sweep axes in key order: key -> candidate values.
    std::vector<std::pair<std::string, std::vector<std::string>>> sweep;
    /// Resolved entries (without sweep.*, out.dir, threads), used for hashing.
    std::map<std::string, std::string> entries;

    Index effective_d_x() const { return d_x + (bias ? 1 : 0); }

    double equality_tol(double l_star_x) const {
        const double rel = equality_rel_tol > 0.0 ? equality_rel_tol : (loss == LossKind::squared ? 1e-4 : 1e-3);
        return rel * std::max(1.0, l_star_x);
    }
};

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "seed",           "data.source",         "data.m",         "data.dx",       "data.dy",
        "data.noise",     "data.x_path",         "data.y_path",    "data.z_path",   "data.header",
        "data.bias",      "model.depth",         "model.widths",   "model.activation", "model.skip",
        "model.bias_unit", "model.dz",           "loss.kind",      "train.grad_tol", "train.max_iter",
        "train.restarts", "train.method",        "train.trace_stride", "train.oracle_tol",
        "verify.equality_rel_tol", "cert.directions", "cert.radii", "cert.hessian", "cert.hessian_dim_cap",
        "counterexample.c", "counterexample.hidden", "out.dir", "threads"};
    return keys;
}

/// FNV-1a 64 over the sorted `key=value\n` lines, as 16 hex digits.
inline std::string config_hash(const std::map<std::string, std::string>& entries) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](std::string_view s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : entries) {
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Builds a config from parsed entries. Unknown keys, bad values and an
/// Assumption A1 violation raise ConfigError. Relative CSV paths resolve against `base_dir`.
inline ExperimentConfig build_config(const std::map<std::string, std::string>& given, const fs::path& base_dir = {}) {
    // A swept key takes its first grid value in the base config.
    std::map<std::string, std::string> raw = given;
    for (const auto& [k, v] : given)
        if (k.rfind("sweep.", 0) == 0 && !given.count(k.substr(6))) raw[k.substr(6)] = detail::split(v, ';').front();
    ExperimentConfig c;
    c.base_dir = base_dir;
    const auto& known = known_config_keys();
    for (const auto& [k, v] : raw) {
        if (k.rfind("sweep.", 0) == 0) {
            const std::string target = k.substr(6);
            if (std::find(known.begin(), known.end(), target) == known.end() || target == "out.dir" ||
                target == "threads")
                throw ConfigError("config: cannot sweep over '" + target + "'");
            auto values = detail::split(v, ';');
            for (const auto& s : values)
                if (s.empty()) throw ConfigError("config: empty value in '" + k + "'");
            c.sweep.emplace_back(target, std::move(values));
            continue;
        }
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("config: unknown key '" + k + "'");
        if (k != "out.dir" && k != "threads") c.entries[k] = v;
    }
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        const auto it = raw.find(k);
        if (it == raw.end()) return std::nullopt;
        return it->second;
    };
    auto num = [&](const std::string& k, double def) {
        const auto s = get(k);
        if (!s) return def;
        const auto v = detail::parse_double(*s);
        if (!v || !std::isfinite(*v)) throw ConfigError("config: '" + k + "' must be a number, got '" + *s + "'");
        return *v;
    };
    auto integer = [&](const std::string& k, long long def, long long lo) {
        const auto s = get(k);
        if (!s) return def;
        const auto v = detail::parse_int(*s);
        if (!v) throw ConfigError("config: '" + k + "' must be an integer, got '" + *s + "'");
        if (*v < lo) throw ConfigError("config: '" + k + "' must be at least " + std::to_string(lo));
        return *v;
    };
    auto flag = [&](const std::string& k, bool def) {
        const auto s = get(k);
        if (!s) return def;
        const auto v = detail::parse_bool(*s);
        if (!v) throw ConfigError("config: '" + k + "' must be true or false, got '" + *s + "'");
        return *v;
    };
    auto path = [&](const std::string& k) -> std::string {
        const auto s = get(k);
        if (!s || s->empty()) return {};
        fs::path p(*s);
        return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    };

    const auto seed = get("seed");
    if (!seed) throw ConfigError("config: 'seed' is required");
    const auto sv = detail::parse_u64(*seed);
    if (!sv) throw ConfigError("config: 'seed' must be an unsigned 64-bit integer");
    c.seed = *sv;

    const std::string source = get("data.source").value_or("teacher");
    if (source == "teacher") c.source = DataSource::teacher;
    else if (source == "gaussian") c.source = DataSource::gaussian;
    else if (source == "csv") c.source = DataSource::csv;
    else throw ConfigError("config: unknown data.source '" + source + "'");
    c.m = integer("data.m", c.m, 1);
    c.d_x = integer("data.dx", c.d_x, 1);
    c.d_y = integer("data.dy", c.d_y, 1);
    c.noise = num("data.noise", c.noise);
    if (c.noise < 0.0) throw ConfigError("config: data.noise must be non-negative");
    c.x_path = path("data.x_path");
    c.y_path = path("data.y_path");
    c.z_path = path("data.z_path");
    c.csv_header = flag("data.header", false);
    c.bias = flag("data.bias", false);
    if (c.source == DataSource::csv && (c.x_path.empty() || c.y_path.empty()))
        throw ConfigError("config: data.source = csv needs data.x_path and data.y_path");

    c.stack.depth = static_cast<std::size_t>(integer("model.depth", 0, 0));
    if (const auto w = get("model.widths"); w && !w->empty()) {
        for (const auto& s : detail::split(*w, ',')) {
            const auto v = detail::parse_int(s);
            if (!v || *v < 1) throw ConfigError("config: model.widths must be positive integers");
            c.stack.widths.push_back(*v);
        }
    }
    if (c.stack.widths.size() == 1 && c.stack.depth > 1)
        c.stack.widths.assign(c.stack.depth, c.stack.widths.front());
    if (c.stack.widths.size() != c.stack.depth)
        throw ConfigError("config: model.widths needs one entry per layer (or a single shared width)");
    try {
        c.stack.activation = parse_activation(get("model.activation").value_or("relu"));
        c.loss = parse_loss_kind(get("loss.kind").value_or("squared"));
        c.method = parse_descent_method(get("train.method").value_or("lbfgs"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.stack.use_skip = flag("model.skip", false);
    c.stack.append_bias_unit = flag("model.bias_unit", false);
    const Index derived_dz =
        c.stack.depth > 0 ? c.stack.widths.back() + (c.stack.append_bias_unit ? 1 : 0) : Index{1};
    c.stack.d_z = integer("model.dz", derived_dz, 1);
    c.stack.validate();

    c.grad_tol = num("train.grad_tol", c.grad_tol);
    if (!(c.grad_tol > 0.0)) throw ConfigError("config: train.grad_tol must be positive");
    c.max_iter = integer("train.max_iter", c.max_iter, 0);
    c.restarts = static_cast<int>(integer("train.restarts", c.restarts, 1));
    c.trace_stride = integer("train.trace_stride", c.trace_stride, 1);
    c.oracle_tol = num("train.oracle_tol", c.oracle_tol);
    if (!(c.oracle_tol > 0.0)) throw ConfigError("config: train.oracle_tol must be positive");
    c.equality_rel_tol = num("verify.equality_rel_tol", 0.0);
    if (c.equality_rel_tol < 0.0) throw ConfigError("config: verify.equality_rel_tol must be non-negative");

    c.cert.n_directions = integer("cert.directions", c.cert.n_directions, 1);
    if (const auto r = get("cert.radii")) {
        c.cert.radii.clear();
        for (const auto& s : detail::split(*r, ',')) {
            const auto v = detail::parse_double(s);
            if (!v) throw ConfigError("config: cert.radii must be numbers");
            c.cert.radii.push_back(*v);
        }
    }
    c.cert.hessian_check = flag("cert.hessian", true);
    c.cert.hessian_dim_cap = integer("cert.hessian_dim_cap", c.cert.hessian_dim_cap, 0);
    c.cert.validate();

    c.counterexample_c = num("counterexample.c", c.counterexample_c);
    if (!(c.counterexample_c > 0.0)) throw ConfigError("config: counterexample.c must be positive");
    c.counterexample_hidden = integer("counterexample.hidden", 0, 0);

    c.out_dir = get("out.dir").value_or(c.out_dir);
    c.threads = static_cast<int>(integer("threads", 0, 0));

    if (c.source != DataSource::csv) {
        if (c.loss == LossKind::logistic_binary && c.d_y != 1)
            throw ConfigError("config: logistic_binary needs data.dy = 1");
        require_output_dim_guard(c.effective_d_x(), c.d_y, c.stack.d_z);
    }
    return c;
}

inline ExperimentConfig load_config_file(const fs::path& path,
                                         const std::map<std::string, std::string>& overrides = {}) {
    auto raw = parse_config_text(read_text_file(path));
    for (const auto& [k, v] : overrides) raw[k] = v;
    return build_config(raw, path.parent_path());
}

/// Raw entries of one sweep cell: the base entries with the cell's values substituted.
inline std::map<std::string, std::string> sweep_cell_entries(const ExperimentConfig& base, std::size_t cell) {
    std::map<std::string, std::string> e = base.entries;
    std::size_t rest = cell;
    for (std::size_t a = base.sweep.size(); a-- > 0;) {
        const auto& [key, values] = base.sweep[a];
        e[key] = values[rest % values.size()];
        rest /= values.size();
    }
    return e;
}

inline std::size_t sweep_cell_count(const ExperimentConfig& c) {
    std::size_t n = 1;
    for (const auto& [k, v] : c.sweep) n *= v.size();
    return n;
}

// ---------------------------------------------------------------------------
// data

/// Seed streams derived from the config seed.
namespace streams {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t teacher = 2;
inline constexpr std::uint64_t oracle_theta = 3;
inline constexpr std::uint64_t counterexample = 4;
inline constexpr std::uint64_t restart_base = 1000;
}  // namespace streams

/// Maps real-valued scores to targets valid for `kind`.
inline Matrix encode_targets(LossKind kind, const Matrix& scores) {
    Matrix Y = Matrix::Zero(scores.rows(), scores.cols());
    for (Index i = 0; i < scores.rows(); ++i) {
        switch (kind) {
            case LossKind::squared: Y.row(i) = scores.row(i); break;
            case LossKind::logistic_binary: Y(i, 0) = scores(i, 0) > 0.0 ? 1.0 : 0.0; break;
            case LossKind::softmax_cross_entropy: {
                Index k = 0;
                scores.row(i).maxCoeff(&k);
                Y(i, k) = 1.0;
                break;
            }
            case LossKind::smoothed_hinge:
                for (Index j = 0; j < scores.cols(); ++j) Y(i, j) = scores(i, j) > 0.0 ? 1.0 : -1.0;
                break;
        }
    }
    return Y;
}

/// Dataset for the config. Synthetic X is standard Gaussian. Teacher targets are
/// the output of a randomly initialized ResNet of the configured architecture
/// plus Gaussian noise; gaussian targets are pure noise of unit scale. For
/// classification losses the noisy scores are turned into labels.
inline DataSet make_dataset(const ExperimentConfig& c) {
    DataSet d;
    if (c.source == DataSource::csv) {
        d = load_csv_dataset(c.x_path, c.y_path, c.bias, c.csv_header);
    } else {
        Rng rng(Rng::derive(c.seed, streams::data));
        d.X = rng.gaussian_matrix(c.m, c.d_x);
        if (c.bias) d = augment_bias(d);
        Matrix scores;
        if (c.source == DataSource::teacher) {
            const ResNetParams teacher =
                init_params(c.stack, d.d_x(), c.d_y, Rng::derive(c.seed, streams::teacher));
            scores = predict_batch(d.X, teacher, c.stack) + rng.gaussian_matrix(c.m, c.d_y, c.noise);
        } else {
            scores = rng.gaussian_matrix(c.m, c.d_y);
        }
        d.Y = encode_targets(c.loss, scores);
    }
    d.validate();
    if (c.loss == LossKind::logistic_binary && d.d_y() != 1) throw ConfigError("config: logistic_binary needs d_y = 1");
    require_output_dim_guard(d.d_x(), d.d_y(), c.stack.d_z);
    try {
        validate_targets(c.loss, d.Y);
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("dataset targets do not match the loss: ") + e.what());
    }
    return d;
}

// ---------------------------------------------------------------------------
// parallel helper

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Results are stored by index, so output order never depends
/// on scheduling. The first exception is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// commands

inline const std::vector<std::string>& oracle_columns() {
    static const std::vector<std::string> cols = {"config_hash", "seed",        "loss",        "m",
                                                  "d_x",         "d_y",         "d_z",         "l_star_x",
                                                  "l_star_xz",   "improvement", "improvement_alt",
                                                  "non_negligible"};
    return cols;
}

/// L*_x, L*_xz and both improvement forms at a seeded theta (or a Z read from data.z_path).
inline CsvTable cmd_oracle(const ExperimentConfig& c) {
    const DataSet d = make_dataset(c);
    Matrix Z;
    if (!c.z_path.empty()) {
        Z = read_csv_matrix(c.z_path, c.csv_header).values;
        if (Z.rows() != d.m()) throw ShapeError("oracle: Z rows differ from the dataset's m");
        require_output_dim_guard(d.d_x(), d.d_y(), Z.cols());
    } else {
        const ResNetParams p = init_params(c.stack, d.d_x(), d.d_y(), Rng::derive(c.seed, streams::oracle_theta));
        Z = residual_matrix(d.X, p.theta, c.stack);
    }
    double lx = 0.0, lxz = 0.0, imp = 0.0, alt = std::numeric_limits<double>::quiet_NaN();
    if (c.loss == LossKind::squared) {
        const OracleResult r = sq_oracle_xz(d.X, Z, d.Y);
        lx = r.l_star_x;
        lxz = r.l_star_xz;
        imp = r.improvement;
        alt = improvement_alt_form(d.X, Z, d.Y);
    } else {
        ConvexSolverOptions o;
        const LinearModelFit fxz = convex_oracle_xz(d, Z, c.loss, c.oracle_tol, o);
        o.initial = fxz.R1;
        const LinearModelFit fx = convex_oracle_xz(d, Matrix(d.m(), 0), c.loss, c.oracle_tol, o);
        lx = fx.objective;
        lxz = fxz.objective;
        imp = lx - lxz;
    }
    OracleResult nn;
    nn.l_star_x = lx;
    nn.improvement = imp;
    CsvTable t;
    t.header = oracle_columns();
    t.add_row({config_hash(c.entries), std::to_string(c.seed), std::string(to_string(c.loss)), std::to_string(d.m()),
               std::to_string(d.d_x()), std::to_string(d.d_y()), std::to_string(Z.cols()), format_double(lx),
               format_double(lxz), format_double(imp), format_double(alt),
               improvement_is_non_negligible(nn) ? "1" : "0"});
    return t;
}

struct RestartRecord {
    int restart = 0;
    std::uint64_t seed = 0;
    std::string status = "ok";  // ok | numerical_error | error
    std::string message;
    TrainReport report;
    double equality_tol = 0.0;
    double wall_seconds = 0.0;

    bool certified() const { return status == "ok" && report.certification == Verdict::certified_local_min; }
    bool equality_ok() const { return std::abs(report.oracle_gap) <= equality_tol; }
};

struct TrainVerifyResult {
    std::string config_hash;
    std::vector<RestartRecord> records;
    double y_norm = 0.0;  // ||Y||_F

    bool lemma2_ok(const RestartRecord& r) const {
        const double tol = 1e-5 * (1.0 + y_norm);
        return r.report.lemma2_z_residual <= tol && r.report.lemma2_x_residual <= tol;
    }
};

inline const std::vector<std::string>& train_verify_columns() {
    static const std::vector<std::string> cols = {
        "config_hash",      "restart",           "seed",           "status",          "message",
        "certification",    "final_loss",        "grad_norm",      "iterations",      "line_search_stalled",
        "min_hessian_eigenvalue", "lemma2_z_residual", "lemma2_x_residual", "lemma2_ok", "l_star_x",
        "l_star_xz",        "improvement",       "oracle_gap",     "oracle_converged", "equality_tol",
        "equality_ok"};
    return cols;
}

/// Trains every restart (in parallel), certifies, and compares against the oracle.
/// Per-restart failures are recorded in the status column.
inline TrainVerifyResult run_train_verify(const ExperimentConfig& c, const DataSet& d, int threads) {
    TrainVerifyResult res;
    res.config_hash = config_hash(c.entries);
    res.y_norm = d.Y.norm();
    res.records.resize(static_cast<std::size_t>(c.restarts));
    TrainOptions opts;
    opts.cert = c.cert;
    opts.method = c.method;
    opts.trace_stride = c.trace_stride;
    opts.oracle_tol = c.oracle_tol;
    parallel_for(res.records.size(), threads, [&](std::size_t k) {
        RestartRecord& r = res.records[k];
        r.restart = static_cast<int>(k);
        r.seed = Rng::derive(c.seed, streams::restart_base + k);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r.report = train(d, c.stack, c.loss, r.seed, c.grad_tol, c.max_iter, opts).report;
            r.equality_tol = c.equality_tol(r.report.l_star_x);
        } catch (const NumericalError& e) {
            r.status = "numerical_error";
            r.message = e.what();
        } catch (const Error& e) {
            r.status = "error";
            r.message = e.what();
        }
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    return res;
}

inline CsvTable train_verify_table(const TrainVerifyResult& res) {
    CsvTable t;
    t.header = train_verify_columns();
    for (const auto& r : res.records) {
        const TrainReport& p = r.report;
        const bool ok = r.status == "ok";
        auto num = [&](double v) { return ok ? format_double(v) : std::string("nan"); };
        t.add_row({res.config_hash, std::to_string(r.restart), std::to_string(r.seed), r.status, r.message,
                   ok ? std::string(to_string(p.certification)) : std::string("none"), num(p.final_loss),
                   num(p.grad_norm), std::to_string(p.iterations), p.line_search_stalled ? "1" : "0",
                   num(p.min_hessian_eigenvalue), num(p.lemma2_z_residual), num(p.lemma2_x_residual),
                   ok && res.lemma2_ok(r) ? "1" : "0", num(p.l_star_x), num(p.l_star_xz), num(p.improvement),
                   num(p.oracle_gap), p.oracle_converged ? "1" : "0", num(r.equality_tol),
                   ok && r.equality_ok() ? "1" : "0"});
    }
    return t;
}

inline CsvTable trace_table(const TrainReport& r) {
    CsvTable t;
    t.header = {"iteration", "loss", "grad_norm"};
    for (const auto& e : r.trace) t.add_row({std::to_string(e.iteration), format_double(e.loss), format_double(e.grad_norm)});
    return t;
}

/// Writes train_verify.csv, trace_r<k>.csv per restart and timing.csv
/// (wall time is kept out of the main table so that it stays reproducible).
inline void write_train_verify(const TrainVerifyResult& res, const fs::path& dir) {
    write_text_file(dir / "train_verify.csv", train_verify_table(res).str());
    CsvTable timing;
    timing.header = {"restart", "wall_seconds"};
    for (const auto& r : res.records) {
        write_text_file(dir / ("trace_r" + std::to_string(r.restart) + ".csv"), trace_table(r.report).str());
        timing.add_row({std::to_string(r.restart), format_double(r.wall_seconds)});
    }
    write_text_file(dir / "timing.csv", timing.str());
}

inline TrainVerifyResult cmd_train_verify(const ExperimentConfig& c, const fs::path& dir) {
    const DataSet d = make_dataset(c);
    TrainVerifyResult res = run_train_verify(c, d, c.threads);
    write_train_verify(res, dir);
    return res;
}

inline const std::vector<std::string>& counterexample_columns() {
    static const std::vector<std::string> cols = {"config_hash", "seed",       "status",     "message",
                                                  "hidden",      "c",          "local_value", "oracle_value",
                                                  "separation",  "radius",     "certification"};
    return cols;
}

/// Dead-ReLU construction for the plain one-hidden-layer net on the configured data.
inline CsvTable cmd_counterexample(const ExperimentConfig& c) {
    if (c.loss != LossKind::squared) throw ConfigError("counterexample: needs loss.kind = squared");
    const DataSet d = make_dataset(c);
    const Index hidden = c.counterexample_hidden > 0 ? c.counterexample_hidden : d.d_x();
    CsvTable t;
    t.header = counterexample_columns();
    const std::string hash = config_hash(c.entries);
    try {
        const DeadReluCounterexample ce =
            build_dead_relu_counterexample(d, c.counterexample_c, Rng::derive(c.seed, streams::counterexample), hidden);
        t.add_row({hash, std::to_string(c.seed), "ok", "", std::to_string(hidden), format_double(c.counterexample_c),
                   format_double(ce.local_value), format_double(ce.oracle_value), format_double(ce.separation),
                   format_double(ce.radius), std::string(to_string(ce.certification.verdict))});
    } catch (const ConstructionInfeasible& e) {
        const std::string nan = "nan";
        t.add_row({hash, std::to_string(c.seed), "construction_infeasible", e.what(), std::to_string(hidden),
                   format_double(c.counterexample_c), nan, nan, nan, nan, "none"});
    }
    return t;
}

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols = {"cell_id",  "cell",      "config_hash",       "status",
                                                  "message",  "runs",      "certified",         "certified_fraction",
                                                  "max_abs_gap", "mean_improvement", "all_certified_ok"};
    return cols;
}

/// Runs train-verify on every grid cell (cells in parallel, restarts serial
/// within a cell) and aggregates one row per cell. max_abs_gap is over
/// certified runs (nan when none); mean_improvement is over all finished runs.
inline CsvTable cmd_sweep(const ExperimentConfig& base, const fs::path& dir) {
    const std::size_t n = sweep_cell_count(base);
    std::vector<std::vector<std::string>> rows(n);
    parallel_for(n, base.threads, [&](std::size_t cell) {
        const auto entries = sweep_cell_entries(base, cell);
        std::string label;
        for (const auto& [key, values] : base.sweep) {
            if (!label.empty()) label += ';';
            label += key + "=" + entries.at(key);
        }
        const std::string id = std::to_string(cell);
        const std::string nan = "nan";
        try {
            auto raw = entries;
            raw["out.dir"] = base.out_dir;
            const ExperimentConfig c = build_config(raw, base.base_dir);
            const DataSet d = make_dataset(c);
            const TrainVerifyResult res = run_train_verify(c, d, 1);
            write_train_verify(res, dir / ("cell_" + id));
            long runs = 0, certified = 0, all_ok = 1;
            double max_gap = std::numeric_limits<double>::quiet_NaN();
            double imp_sum = 0.0;
            for (const auto& r : res.records) {
                if (r.status != "ok") continue;
                ++runs;
                imp_sum += r.report.improvement;
                if (!r.certified()) continue;
                ++certified;
                const double g = std::abs(r.report.oracle_gap);
                max_gap = std::isnan(max_gap) ? g : std::max(max_gap, g);
                if (!r.equality_ok() || !res.lemma2_ok(r)) all_ok = 0;
            }
            rows[cell] = {id,
                          label,
                          res.config_hash,
                          "ok",
                          "",
                          std::to_string(runs),
                          std::to_string(certified),
                          format_double(runs ? static_cast<double>(certified) / static_cast<double>(runs) : 0.0),
                          format_double(max_gap),
                          runs ? format_double(imp_sum / static_cast<double>(runs)) : nan,
                          std::to_string(all_ok)};
        } catch (const std::exception& e) {
            rows[cell] = {id, label, config_hash(entries), "error", e.what(), "0", "0", nan, nan, nan, "0"};
        }
    });
    CsvTable t;
    t.header = sweep_columns();
    for (auto& r : rows) t.add_row(std::move(r));
    return t;
}

}  // namespace reslab
