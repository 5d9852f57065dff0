#pragma once

// `seqr` command-line front end. Exit codes: 0 ok, 1 usage/validation,
// 2 I/O, 3 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/bench.hpp"
#include "seqr/calibration.hpp"
#include "seqr/container.hpp"
#include "seqr/routing.hpp"
#include "seqr/synthgen.hpp"
#include "seqr/verify.hpp"

namespace seqr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kVerifyFailed = 3 };

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Diagnostics on stderr, filtered by SEQR_LOG.
class Log {
public:
    Log(std::ostream& err, LogLevel level) : err_(err), level_(level) {}

    static LogLevel level_from_env() {
        const char* v = std::getenv("SEQR_LOG");
        if (v == nullptr) return LogLevel::error;
        const std::string s(v);
        if (s == "debug") return LogLevel::debug;
        if (s == "info") return LogLevel::info;
        return LogLevel::error;
    }

    void error(const std::string& msg) const { err_ << "error: " << msg << '\n'; }
    void info(const std::string& msg) const {
        if (level_ >= LogLevel::info) err_ << "info: " << msg << '\n';
    }
    void debug(const std::string& msg) const {
        if (level_ >= LogLevel::debug) err_ << "debug: " << msg << '\n';
    }

private:
    std::ostream& err_;
    LogLevel level_;
};

// Raised for invalid option values detected after parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

// Thrown by verify when a check fails; carries the report already printed.
class VerificationFailed : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// key=value lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        auto key = trim(line.substr(0, eq));
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        out.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return out;
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : args)
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
}

// Append config-file settings for every key not already given as a flag.
inline std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::optional<std::string> path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (!path) return args;
    for (const auto& [key, value] : read_config(*path)) {
        if (key == "config" || has_flag(args, key)) continue;
        args.push_back("--" + key + "=" + value);
    }
    return args;
}

inline bool on_off(const std::string& v, const char* name) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw UsageError(std::string("--") + name + " expects on|off, got '" + v + "'");
}

inline Method require_method(const std::string& s) {
    auto m = parse_method(s);
    if (!m) throw UsageError("unknown method '" + s + "'");
    return *m;
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split(s, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw UsageError("not a number: '" + tok + "'");
        }
    }
    return out;
}

inline std::vector<std::size_t> parse_counts(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& tok : split(s, ',')) {
        try {
            const long long v = std::stoll(tok);
            if (v <= 0) throw UsageError("expected a positive count, got '" + tok + "'");
            out.push_back(static_cast<std::size_t>(v));
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception&) {
            throw UsageError("not a count: '" + tok + "'");
        }
    }
    return out;
}

// "a..b" (b may be "N"), or a comma list.
inline std::vector<std::size_t> parse_k_range(const std::string& s, std::size_t n_adapters) {
    if (auto dots = s.find(".."); dots != std::string::npos) {
        const auto lo_s = s.substr(0, dots);
        const auto hi_s = s.substr(dots + 2);
        auto one = [&](const std::string& tok) {
            const auto v = parse_counts(tok);
            if (v.size() != 1) throw UsageError("bad k range '" + s + "'");
            return v.front();
        };
        const std::size_t lo = one(lo_s);
        const std::size_t hi = (hi_s == "N" || hi_s == "n") ? n_adapters : one(hi_s);
        if (lo > hi) throw UsageError("empty k range '" + s + "'");
        std::vector<std::size_t> out;
        for (std::size_t k = lo; k <= hi; ++k) out.push_back(k);
        return out;
    }
    return parse_counts(s);
}

inline void emit(const std::optional<std::string>& out_path, std::ostream& out, const std::string& text) {
    if (out_path) io::write_file_atomic(*out_path, text);
    else out << text;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Command configs
// ---------------------------------------------------------------------------

struct GenConfig {
    std::string preset = "default";
    SynthSpec spec;
    std::size_t per_task = 50;
    std::string library_path;
    std::string queries_path;
    std::optional<std::string> calib_queries_path;
};

// Named parameter bundles for `gen`.
inline SynthSpec synth_preset(const std::string& name) {
    SynthSpec s;
    if (name == "default") return s;
    if (name == "fig3") {
        // 6 task adapters plus 2 adversarial pairs, orthogonally packed in rank 16.
        s.n_adapters = 10;
        s.dims = Dims{64, 64, 16};
        s.task_subspace_dim = 1;
        s.signal_gain = 4.0;
        s.noise_level = 0.3;
        s.adversarial_pairs = 2;
        return s;
    }
    if (name == "fig4") {
        // One adapter's B scaled by 10.
        s.n_adapters = 8;
        s.dims = Dims{128, 128, 16};
        s.task_subspace_dim = 2;
        s.signal_gain = 4.0;
        s.noise_level = 0.3;
        s.bias_scales.assign(8, 1.0);
        s.bias_scales[0] = 10.0;
        return s;
    }
    throw UsageError("unknown preset '" + name + "' (expected default, fig3, fig4)");
}

inline void cmd_gen(const GenConfig& cfg, const Log& log) {
    validate(cfg.spec);
    if (cfg.per_task == 0) throw UsageError("--per-task must be positive");
    log.info("generating " + std::to_string(cfg.spec.n_adapters) + " adapters, seed " + std::to_string(cfg.spec.seed));
    const auto synth = gen_library(cfg.spec);
    const auto queries = gen_queries(synth, cfg.spec, cfg.per_task, 0);
    save_library(cfg.library_path, synth.library);
    save_queries(cfg.queries_path, queries);
    if (cfg.calib_queries_path) save_queries(*cfg.calib_queries_path, gen_queries(synth, cfg.spec, cfg.per_task, 1));
    for (const auto& [k, v] : synth.library.meta()) log.debug("meta " + k + " = " + v);
    log.info("wrote " + cfg.library_path + " and " + std::to_string(queries.size()) + " queries to " + cfg.queries_path);
}

struct PreprocessConfig {
    std::string library_path;
    std::vector<std::string> forms;  // empty: every form the library supports
    bool discard_b = false;
    std::optional<std::string> out_path;
};

inline void cmd_preprocess(const PreprocessConfig& cfg, const Log& log) {
    for (const auto& f : cfg.forms)
        if (f != "arrow" && f != "spectr" && f != "seqr") throw UsageError("unknown form '" + f + "'");
    auto loaded = load_library(cfg.library_path);
    const auto& lib = loaded.library;
    auto wants = [&](const char* f) {
        if (cfg.forms.empty()) return std::string(f) != "seqr" || lib.has_shared_a();
        return std::ranges::find(cfg.forms, f) != cfg.forms.end();
    };
    RoutedForms forms = loaded.forms;
    if (wants("arrow")) forms.arrow = build_arrow_forms(lib);
    if (wants("spectr")) forms.spectr = build_spectr_forms(lib);
    if (wants("seqr")) forms.seqr = build_seqr_forms(lib);
    save_library(cfg.out_path.value_or(cfg.library_path), lib, forms, cfg.discard_b || loaded.discard_b);
    log.info("preprocessed " + std::to_string(lib.size()) + " adapters");
}

struct CalibrateConfig {
    std::string library_path;
    std::string samples_path;
    Method method = Method::seqr;
    std::optional<std::string> out_path;
};

inline void cmd_calibrate(const CalibrateConfig& cfg, const Log& log) {
    auto loaded = load_library(cfg.library_path);
    const auto samples = samples_by_task(load_queries(cfg.samples_path), loaded.library.size());
    auto stats = calibrate(loaded.library, loaded.forms, samples, cfg.method);
    loaded.library.meta()["calibration.method"] = std::string(to_string(cfg.method));
    loaded.forms.stats = std::move(stats);
    save_library(cfg.out_path.value_or(cfg.library_path), loaded.library, loaded.forms, loaded.discard_b);
    log.info("calibrated " + std::to_string(loaded.library.size()) + " adapters with " + std::string(to_string(cfg.method)));
}

struct RouteConfig {
    std::string library_path;
    std::string queries_path;
    Method method = Method::seqr;
    std::size_t k = 1;
    bool calibrated = false;
    std::optional<std::string> k_sweep;
    std::optional<std::string> out_path;
};

struct Accuracy {
    std::size_t total = 0;
    std::size_t norm_max = 0;
    std::size_t task = 0;

    double norm_rate() const { return total == 0 ? 0.0 : static_cast<double>(norm_max) / static_cast<double>(total); }
    double task_rate() const { return total == 0 ? 0.0 : static_cast<double>(task) / static_cast<double>(total); }
};

inline void cmd_route(const RouteConfig& cfg, std::ostream& out, const Log& log) {
    const auto loaded = load_library(cfg.library_path);
    const auto queries = load_queries(cfg.queries_path);
    const auto& lib = loaded.library;
    for (const auto& q : queries)
        if (q.x.dim() != lib.dims().n) throw DimensionError("query dim does not match library input dim");
    if (cfg.calibrated && !loaded.forms.stats) throw ConfigError("--calibrated on but the library has no calibration stats");
    if (cfg.calibrated && cfg.method == Method::arrow) throw ConfigError("arrow scores are not z-scored");
    const CalibrationStats* stats = cfg.calibrated ? &*loaded.forms.stats : nullptr;

    auto run = [&](Method method, std::size_t k, std::string* log_out) {
        Accuracy acc;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto& q = queries[i];
            const auto d = route(method, lib, loaded.forms, q.x, RouteOptions{k, stats});
            if (d.selected) {
                ++acc.total;
                if (*d.selected == q.oracle_norm_winner) ++acc.norm_max;
                if (*d.selected == q.task) ++acc.task;
            }
            if (log_out != nullptr) {
                nlohmann::json j;
                j["query"] = i;
                j["method"] = to_string(method);
                if (method == Method::lag) j["k"] = k;
                j["calibrated"] = cfg.calibrated;
                j["selected"] = d.selected ? nlohmann::json(*d.selected) : nlohmann::json(nullptr);
                j["task"] = q.task;
                j["oracle"] = q.oracle_norm_winner;
                j["scores"] = d.scores;
                *log_out += j.dump();
                *log_out += '\n';
            }
        }
        return acc;
    };

    if (cfg.k_sweep) {
        if (!loaded.forms.arrow || !loaded.forms.spectr) throw ConfigError("--k-sweep needs arrow and spectr forms");
        const auto ks = detail::parse_k_range(*cfg.k_sweep, lib.size());
        for (std::size_t k : ks)
            if (k > lib.size()) throw UsageError("k = " + std::to_string(k) + " exceeds library size");
        std::ostringstream csv;
        csv << "k,method,norm_max_accuracy,task_accuracy\n";
        std::optional<Accuracy> reference;
        if (cfg.method != Method::lag && cfg.method != Method::mu) reference = run(cfg.method, cfg.k, nullptr);
        for (std::size_t k : ks) {
            const auto acc = run(Method::lag, k, nullptr);
            csv << k << ",lag," << acc.norm_rate() << ',' << acc.task_rate() << '\n';
            if (reference) {
                csv << k << ',' << to_string(cfg.method) << ',' << reference->norm_rate() << ',' << reference->task_rate() << '\n';
            }
        }
        detail::emit(cfg.out_path, out, csv.str());
        return;
    }

    if (cfg.method == Method::lag && (cfg.k == 0 || cfg.k > lib.size())) {
        throw UsageError("--k must be in [1, " + std::to_string(lib.size()) + "]");
    }
    std::string decisions;
    const auto acc = run(cfg.method, cfg.k, &decisions);
    nlohmann::json summary;
    summary["method"] = to_string(cfg.method);
    summary["calibrated"] = cfg.calibrated;
    summary["queries"] = queries.size();
    if (cfg.method != Method::mu) {
        summary["norm_max_accuracy"] = acc.norm_rate();
        summary["task_accuracy"] = acc.task_rate();
    }
    const std::string summary_line = nlohmann::json{{"summary", summary}}.dump() + "\n";
    if (cfg.out_path) {
        io::write_file_atomic(*cfg.out_path, decisions);
        out << summary_line;
    } else {
        out << decisions << summary_line;
    }
    log.info("routed " + std::to_string(queries.size()) + " queries");
}

struct BenchConfig {
    std::optional<std::string> preset;
    std::optional<SweepAxis> axis;
    std::vector<std::size_t> grid;
    CostParams params = table1_params();
    std::vector<Method> methods = cost_methods();
    int repetitions = 5;
    std::size_t queries = 1;
    bool shared_a = true;
    std::uint64_t seed = 0;
    std::optional<std::string> out_path;
};

inline void cmd_bench(const BenchConfig& cfg, std::ostream& out, const Log& log) {
    validate(cfg.params);
    SweepOptions opts;
    opts.methods = cfg.methods;
    opts.queries = cfg.queries;
    opts.seed = cfg.seed;
    opts.shared_a = cfg.shared_a;
    opts.measure.repetitions = cfg.repetitions;

    if (cfg.preset && *cfg.preset == "table1") {
        const auto p = table1_params();
        const auto lib = synthetic_bench_library(p, opts.pool, cfg.seed, true);
        Rng rng(derive_seed(cfg.seed, 1));
        const std::vector<Vector> queries{rng.unit(p.dims.n)};
        std::ostringstream csv;
        csv << "method,model_flops,label,measured_flops,storage_params,wall_ns,overhead_flops\n";
        for (Method m : cost_methods()) {
            const auto rep = measure(m, lib, queries, p, true, opts.measure);
            csv << to_string(m) << ',' << rep.model_flops << ',' << si_label(rep.model_flops) << ',' << rep.measured_flops
                << ',' << rep.storage_params << ',' << rep.wall_ns << ',' << rep.overhead_flops << '\n';
        }
        detail::emit(cfg.out_path, out, csv.str());
        return;
    }
    if (cfg.preset) throw UsageError("unknown bench preset '" + *cfg.preset + "' (expected table1)");
    if (!cfg.axis) throw UsageError("bench needs --preset table1 or --axis");
    const auto grid = cfg.grid.empty() ? default_grid(*cfg.axis) : cfg.grid;
    log.info("sweeping " + std::string(to_string(*cfg.axis)) + " over " + std::to_string(grid.size()) + " points");
    detail::emit(cfg.out_path, out, sweep_csv(*cfg.axis, sweep(*cfg.axis, grid, cfg.params, opts)));
}

struct VerifyConfig {
    bool counterexample_only = false;
    std::size_t trials = 200;
    std::uint64_t seed = 0;
};

inline void cmd_verify(const VerifyConfig& cfg, std::ostream& out) {
    const auto results = cfg.counterexample_only ? std::vector<CheckResult>{check_counterexample()}
                                                 : run_verification(cfg.trials, cfg.seed);
    bool ok = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    if (cfg.counterexample_only && ok) {
        const auto lib = appendix_pair_library();
        const Vector x{1.0, 0.0};
        out << "arrow winner " << select(score_arrow(build_arrow_forms(lib), x)) << "\n";
        out << "naive winner " << select(score_naive(lib, x)) << "\n";
    }
    if (!ok) throw VerificationFailed("verification failed");
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    const Log log(err, Log::level_from_env());
    CLI::App app{"Unsupervised LoRA routing: generate, preprocess, calibrate, route, benchmark, verify", "seqr"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "key=value config file; flags override it");

    // gen
    GenConfig gen;
    std::optional<std::uint64_t> g_seed;
    std::optional<std::size_t> g_adapters, g_m, g_n, g_rank, g_task_dim, g_pairs;
    std::optional<double> g_gain, g_noise;
    std::optional<std::string> g_shared, g_bias;
    auto* c_gen = app.add_subcommand("gen", "Generate a synthetic adapter library and labelled queries");
    c_gen->add_option("--preset", gen.preset, "default | fig3 | fig4");
    c_gen->add_option("--seed", g_seed);
    c_gen->add_option("--adapters", g_adapters, "number of adapters N");
    c_gen->add_option("--m", g_m, "output dim");
    c_gen->add_option("--n", g_n, "input dim");
    c_gen->add_option("--rank", g_rank, "adapter rank r");
    c_gen->add_option("--shared-a", g_shared, "on | off");
    c_gen->add_option("--task-dim", g_task_dim, "task subspace dimension");
    c_gen->add_option("--gain", g_gain, "in-subspace amplification");
    c_gen->add_option("--noise", g_noise, "query noise level");
    c_gen->add_option("--bias", g_bias, "comma-separated per-adapter B scales");
    c_gen->add_option("--pairs", g_pairs, "adversarial (C, D) pairs among the adapters");
    c_gen->add_option("--per-task", gen.per_task, "queries per task");
    c_gen->add_option("--library", gen.library_path, "output library file")->required();
    c_gen->add_option("--queries", gen.queries_path, "output query file")->required();
    c_gen->add_option("--calib-queries", gen.calib_queries_path, "optional second, independent query file for calibration");

    // preprocess
    PreprocessConfig pre;
    std::string pre_forms;
    auto* c_pre = app.add_subcommand("preprocess", "Build Arrow / SpectR / SEQR forms");
    c_pre->add_option("--library", pre.library_path)->required();
    c_pre->add_option("--forms", pre_forms, "comma list of arrow,spectr,seqr (default: all applicable)");
    c_pre->add_flag("--discard-b", pre.discard_b, "store SEQR factors instead of raw B");
    c_pre->add_option("--out", pre.out_path, "output library (default: in place)");

    // calibrate
    CalibrateConfig cal;
    std::string cal_method = "seqr";
    auto* c_cal = app.add_subcommand("calibrate", "Estimate per-adapter norm statistics");
    c_cal->add_option("--library", cal.library_path)->required();
    c_cal->add_option("--queries", cal.samples_path, "calibration samples, grouped by task label")->required();
    c_cal->add_option("--method", cal_method, "naive | spectr | lag | seqr");
    c_cal->add_option("--out", cal.out_path, "output library (default: in place)");

    // route
    RouteConfig rt;
    std::string rt_method = "seqr";
    std::string rt_calibrated = "off";
    auto* c_route = app.add_subcommand("route", "Route queries and report accuracy against oracle labels");
    c_route->add_option("--library", rt.library_path)->required();
    c_route->add_option("--queries", rt.queries_path)->required();
    c_route->add_option("--method", rt_method, "naive | arrow | spectr | lag | seqr | mu");
    c_route->add_option("--k", rt.k, "LAG filter size");
    c_route->add_option("--calibrated", rt_calibrated, "on | off");
    c_route->add_option("--k-sweep", rt.k_sweep, "LAG k values: a..b, a..N, or a comma list");
    c_route->add_option("--out", rt.out_path, "decision log (JSON lines)");

    // bench
    BenchConfig bc;
    std::optional<std::string> b_axis, b_grid, b_methods;
    std::optional<std::size_t> b_adapters, b_n, b_m, b_rank, b_k;
    std::string b_shared = "on";
    auto* c_bench = app.add_subcommand("bench", "FLOP and storage models with instrumented measurement");
    c_bench->add_option("--preset", bc.preset, "table1");
    c_bench->add_option("--axis", b_axis, "hidden_dim | num_adapters | rank");
    c_bench->add_option("--grid", b_grid, "comma-separated axis values");
    c_bench->add_option("--methods", b_methods, "comma list (default naive,spectr,lag,arrow,seqr)");
    c_bench->add_option("--adapters", b_adapters);
    c_bench->add_option("--n", b_n);
    c_bench->add_option("--m", b_m);
    c_bench->add_option("--rank", b_rank);
    c_bench->add_option("--k", b_k);
    c_bench->add_option("--reps", bc.repetitions, "wall-clock repetitions (>= 5 recommended)");
    c_bench->add_option("--queries", bc.queries, "queries per grid point");
    c_bench->add_option("--shared-a", b_shared, "on | off");
    c_bench->add_option("--seed", bc.seed);
    c_bench->add_option("--out", bc.out_path, "CSV output");

    // verify
    VerifyConfig vc;
    auto* c_verify = app.add_subcommand("verify", "Run the counterexample and norm-equivalence property suites");
    c_verify->add_flag("--counterexample", vc.counterexample_only, "only the 2x2 Arrow counterexample");
    c_verify->add_option("--trials", vc.trials, "random trials per suite");
    c_verify->add_option("--seed", vc.seed);

    try {
        auto merged = detail::merge_config(std::move(args));
        std::vector<std::string> rev(merged.rbegin(), merged.rend() - 1);  // CLI11 wants reversed, without argv[0]
        app.parse(rev);

        if (*c_gen) {
            gen.spec = synth_preset(gen.preset);
            if (g_seed) gen.spec.seed = *g_seed;
            if (g_adapters) gen.spec.n_adapters = *g_adapters;
            if (g_m) gen.spec.dims.m = *g_m;
            if (g_n) gen.spec.dims.n = *g_n;
            if (g_rank) gen.spec.dims.r = *g_rank;
            if (g_shared) gen.spec.shared_a = detail::on_off(*g_shared, "shared-a");
            if (g_task_dim) gen.spec.task_subspace_dim = *g_task_dim;
            if (g_gain) gen.spec.signal_gain = *g_gain;
            if (g_noise) gen.spec.noise_level = *g_noise;
            if (g_pairs) gen.spec.adversarial_pairs = *g_pairs;
            if (g_bias) gen.spec.bias_scales = detail::parse_doubles(*g_bias);
            else if (!gen.spec.bias_scales.empty() && gen.spec.bias_scales.size() != gen.spec.n_adapters) {
                gen.spec.bias_scales.resize(gen.spec.n_adapters, 1.0);
            }
            cmd_gen(gen, log);
        } else if (*c_pre) {
            pre.forms = detail::split(pre_forms, ',');
            cmd_preprocess(pre, log);
        } else if (*c_cal) {
            cal.method = detail::require_method(cal_method);
            cmd_calibrate(cal, log);
        } else if (*c_route) {
            rt.method = detail::require_method(rt_method);
            rt.calibrated = detail::on_off(rt_calibrated, "calibrated");
            cmd_route(rt, out, log);
        } else if (*c_bench) {
            if (b_axis) {
                bc.axis = parse_axis(*b_axis);
                if (!bc.axis) throw UsageError("unknown axis '" + *b_axis + "'");
            }
            if (b_grid) bc.grid = detail::parse_counts(*b_grid);
            if (b_methods) {
                bc.methods.clear();
                for (const auto& s : detail::split(*b_methods, ',')) bc.methods.push_back(detail::require_method(s));
            }
            if (b_adapters) bc.params.n_adapters = *b_adapters;
            if (b_n) bc.params.dims.n = *b_n;
            if (b_m) bc.params.dims.m = *b_m;
            if (b_rank) bc.params.dims.r = *b_rank;
            if (b_k) bc.params.lag_k = *b_k;
            bc.shared_a = detail::on_off(b_shared, "shared-a");
            if (bc.repetitions < 1) throw UsageError("--reps must be >= 1");
            cmd_bench(bc, out, log);
        } else if (*c_verify) {
            cmd_verify(vc, out);
        }
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        log.error(e.what());
        return kUsage;
    } catch (const VerificationFailed& e) {
        log.error(e.what());
        return kVerifyFailed;
    } catch (const IoError& e) {
        log.error(e.what());
        return kIo;
    } catch (const Error& e) {
        log.error(e.what());
        return kUsage;
    } catch (const std::exception& e) {
        log.error(e.what());
        return kUsage;
    }
    return kOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace seqr::cli
