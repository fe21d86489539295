#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "activation.hpp"
#include "core.hpp"
#include "training.hpp"

namespace sgpde {

// Run configuration files are flat `key = value` lines with '#' comments.
// Every key must come from the fixed registry below; unknown or duplicate
// keys are rejected with their line number. Values omitted in the file take
// problem-dependent defaults, and the canonical echo materializes the full
// effective configuration, sorted by key, so that echo(parse(echo)) == echo.

struct ParsedConfig {
    std::map<std::string, std::string> values;
    std::map<std::string, std::string> where;  // key -> "line N" / "override N"
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline void parse_config_line(ParsedConfig& cfg, const std::string& raw,
                              const std::string& origin) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
        throw config_error("expected key = value at " + origin);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw config_error("empty key at " + origin);
    if (cfg.values.count(key))
        throw config_error("duplicate key '" + key + "' at " + origin + " (first set at " +
                           cfg.where.at(key) + ")");
    cfg.values[key] = val;
    cfg.where[key] = origin;
}

}  // namespace detail

inline ParsedConfig parse_config_text(const std::string& text) {
    ParsedConfig cfg;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::parse_config_line(cfg, line, "line " + std::to_string(lineno));
    }
    return cfg;
}

// --set style overrides; later entries replace earlier ones and the file.
inline void apply_overrides(ParsedConfig& cfg, const std::vector<std::string>& sets) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const std::string origin = "override " + std::to_string(i + 1);
        const std::string line = detail::trim(sets[i]);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("expected key=value in " + origin);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw config_error("empty key in " + origin);
        cfg.values[key] = val;
        cfg.where[key] = origin;
    }
}

inline const std::set<std::string>& config_registry() {
    static const std::set<std::string> keys = {
        "problem.id", "problem.d", "problem.T", "problem.sigma", "problem.r",
        "net.hidden", "net.activation",
        "train.method", "train.M1", "train.N", "train.M", "train.dt", "train.epochs",
        "train.seed", "train.gradient_free", "train.live_coefficients", "train.ansatz",
        "train.collocation", "train.checkpoint_every",
        "train.lr.initial", "train.lr.factor", "train.lr.interval",
        "eval.N_test", "eval.M_test", "eval.mc_samples", "eval.count",
        "matrix.dt_values", "matrix.M_values",
        "compare.M_values", "compare.baseline_N", "compare.baseline_epochs",
        "scan.dt_values", "scan.M_values", "scan.trials",
        "output.dir", "output.dump_trajectories", "output.dump_coords",
        "threads",
    };
    return keys;
}

// Fully resolved, validated configuration.
struct RunConfig {
    std::string problem_id;
    int d = 1;
    double T = 1.0;
    double sigma = 0.4;
    double r = 0.05;

    std::vector<int> hidden;
    Activation activation = Activation::mish;

    ShotgunHyperparams hyper;
    bool ansatz = false;
    long checkpoint_every = 0;

    long N_test = 100, M_test = 100, mc_samples = 100000, eval_count = 1000;
    std::vector<double> matrix_dt;
    std::vector<long> matrix_M;
    std::vector<long> compare_M;
    long baseline_N = 192;
    long baseline_epochs = 0;  // 0: same as train.epochs
    std::vector<double> scan_dt;
    std::vector<long> scan_M;
    long scan_trials = 4000;

    std::string out_dir = "out";
    long dump_trajectories = 0;
    int dump_coords = 4;
    int threads = 1;

    std::map<std::string, std::string> echo_map;  // canonical key -> value
};

namespace detail {

struct KeyReader {
    const ParsedConfig& cfg;

    std::string origin(const std::string& key) const {
        auto it = cfg.where.find(key);
        return it == cfg.where.end() ? std::string("default") : it->second;
    }
    const std::string* raw(const std::string& key) const {
        auto it = cfg.values.find(key);
        return it == cfg.values.end() ? nullptr : &it->second;
    }

    std::string str(const std::string& key, const std::string& def) const {
        const std::string* v = raw(key);
        return v ? *v : def;
    }
    double num(const std::string& key, double def) const {
        const std::string* v = raw(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const double x = std::stod(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            return x;
        } catch (const std::exception&) {
            throw config_error("invalid number for " + key + " at " + origin(key) + ": '" +
                               *v + "'");
        }
    }
    long integer(const std::string& key, long def) const {
        const std::string* v = raw(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const long x = std::stol(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            return x;
        } catch (const std::exception&) {
            throw config_error("invalid integer for " + key + " at " + origin(key) + ": '" +
                               *v + "'");
        }
    }
    std::uint64_t uinteger(const std::string& key, std::uint64_t def) const {
        const std::string* v = raw(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const unsigned long long x = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            return static_cast<std::uint64_t>(x);
        } catch (const std::exception&) {
            throw config_error("invalid integer for " + key + " at " + origin(key) + ": '" +
                               *v + "'");
        }
    }
    bool flag(const std::string& key, bool def) const {
        const std::string* v = raw(key);
        if (!v) return def;
        if (*v == "0" || *v == "false") return false;
        if (*v == "1" || *v == "true") return true;
        throw config_error("invalid flag for " + key + " at " + origin(key) +
                           ": expected 0/1/true/false");
    }
    template <typename T, typename ParseOne>
    std::vector<T> list(const std::string& key, const std::vector<T>& def,
                        ParseOne parse_one) const {
        const std::string* v = raw(key);
        if (!v) return def;
        std::vector<T> out;
        std::string item;
        std::istringstream in(*v);
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw config_error("empty list entry for " + key + " at " + origin(key));
            out.push_back(parse_one(item, key, origin(key)));
        }
        if (out.empty()) throw config_error("empty list for " + key + " at " + origin(key));
        return out;
    }
    std::vector<double> num_list(const std::string& key, const std::vector<double>& def) const {
        return list<double>(key, def, [](const std::string& s, const std::string& k,
                                         const std::string& o) {
            try {
                std::size_t used = 0;
                const double x = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument("trailing characters");
                return x;
            } catch (const std::exception&) {
                throw config_error("invalid number '" + s + "' in " + k + " at " + o);
            }
        });
    }
    std::vector<long> int_list(const std::string& key, const std::vector<long>& def) const {
        return list<long>(key, def, [](const std::string& s, const std::string& k,
                                       const std::string& o) {
            try {
                std::size_t used = 0;
                const long x = std::stol(s, &used);
                if (used != s.size()) throw std::invalid_argument("trailing characters");
                return x;
            } catch (const std::exception&) {
                throw config_error("invalid integer '" + s + "' in " + k + " at " + o);
            }
        });
    }
    std::vector<int> int32_list(const std::string& key, const std::vector<int>& def) const {
        std::vector<long> wide(def.begin(), def.end());
        wide = int_list(key, wide);
        std::vector<int> out;
        out.reserve(wide.size());
        for (long v : wide) out.push_back(static_cast<int>(v));
        return out;
    }
};

inline std::string canon_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
template <typename T>
inline std::string canon_list(const std::vector<T>& v);
template <>
inline std::string canon_list<double>(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += canon_num(v[i]);
    }
    return out;
}
template <>
inline std::string canon_list<long>(const std::vector<long>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}
template <>
inline std::string canon_list<int>(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace detail

inline RunConfig build_run_config(const ParsedConfig& parsed) {
    for (const auto& [key, value] : parsed.values) {
        (void)value;
        if (!config_registry().count(key))
            throw config_error("unknown key '" + key + "' at " + parsed.where.at(key));
    }
    const detail::KeyReader rd{parsed};

    RunConfig c;
    c.problem_id = rd.str("problem.id", "");
    if (c.problem_id.empty())
        throw config_error("problem.id is required");
    const bool is_laplace = c.problem_id.rfind("laplace1d-", 0) == 0;
    const bool is_bsb = c.problem_id == "bsb" || c.problem_id == "log-bsb";

    c.d = static_cast<int>(rd.integer("problem.d", is_laplace ? 1 : 100));
    c.T = rd.num("problem.T", c.problem_id == "allen-cahn" ? 0.3 : 1.0);
    c.sigma = rd.num("problem.sigma", 0.4);
    c.r = rd.num("problem.r", 0.05);
    require(c.d >= 1, "problem.d must be >= 1");
    require(c.T > 0.0, "problem.T must be positive");
    if (is_laplace) require(c.d == 1, "laplace problems are one-dimensional");

    c.hidden = rd.int32_list("net.hidden", is_laplace ? std::vector<int>{64, 64}
                                                      : std::vector<int>{128, 128, 128, 128});
    for (int hsz : c.hidden) require(hsz >= 1, "net.hidden entries must be >= 1");
    c.activation = activation_from_name(
        rd.str("net.activation", is_laplace ? "sine" : "mish"));

    const std::string method = rd.str("train.method", "rfd");
    if (method == "rfd") c.hyper.method = TrainMethod::rfd;
    else if (method == "sde-match") c.hyper.method = TrainMethod::sde_match;
    else throw config_error("train.method must be rfd or sde-match");

    c.hyper.M1 = rd.integer("train.M1", 50);
    c.hyper.N = rd.integer("train.N", 10);
    c.hyper.M = rd.integer("train.M", 64);
    c.hyper.local_dt = rd.num("train.dt", 0.0009765625);
    c.hyper.epochs = rd.integer("train.epochs", is_laplace ? 3000 : 10000);
    c.hyper.seed = rd.uinteger("train.seed", 1);
    c.hyper.gradient_free = rd.flag("train.gradient_free", false);
    c.hyper.live_coefficients = rd.flag("train.live_coefficients", false);
    c.hyper.collocation = rd.integer("train.collocation", 100);
    c.hyper.lr.initial = rd.num("train.lr.initial", 1e-3);
    c.hyper.lr.factor = rd.num("train.lr.factor", is_laplace ? 1.0 : 0.2);
    c.hyper.lr.interval = rd.integer("train.lr.interval", 2500);
    require(c.hyper.M1 >= 1 && c.hyper.N >= 1 && c.hyper.M >= 1,
            "train.M1, train.N, train.M must be >= 1");
    require(c.hyper.local_dt > 0.0, "train.dt must be positive");
    require(c.hyper.epochs >= 0, "train.epochs must be >= 0");
    require(c.hyper.collocation >= 1, "train.collocation must be >= 1");
    require(c.hyper.lr.initial > 0.0 && c.hyper.lr.factor > 0.0,
            "learning rate settings must be positive");
    require(c.hyper.lr.interval >= 1, "train.lr.interval must be >= 1");

    c.ansatz = rd.flag("train.ansatz", is_bsb);
    c.checkpoint_every = rd.integer("train.checkpoint_every", 0);
    require(c.checkpoint_every >= 0, "train.checkpoint_every must be >= 0");

    c.N_test = rd.integer("eval.N_test", 100);
    c.M_test = rd.integer("eval.M_test", 100);
    c.mc_samples = rd.integer("eval.mc_samples", 100000);
    c.eval_count = rd.integer("eval.count", 1000);
    require(c.N_test >= 1 && c.M_test >= 1, "eval.N_test and eval.M_test must be >= 1");
    require(c.mc_samples >= 2, "eval.mc_samples must be >= 2");
    require(c.eval_count >= 2, "eval.count must be >= 2");

    c.matrix_dt = rd.num_list(
        "matrix.dt_values",
        {0.25, 0.0625, 0.015625, 0.00390625, 0.0009765625, 0.000244140625,
         6.103515625e-05, 1.52587890625e-05});
    c.matrix_M = rd.int_list("matrix.M_values", {1, 4, 16, 64, 256});
    for (double dt : c.matrix_dt) require(dt > 0.0, "matrix.dt_values must be positive");
    for (long m : c.matrix_M) require(m >= 1, "matrix.M_values must be >= 1");

    c.compare_M = rd.int_list("compare.M_values", {4, 16, 64});
    c.baseline_N = rd.integer("compare.baseline_N", 192);
    c.baseline_epochs = rd.integer("compare.baseline_epochs", 0);
    require(c.baseline_N >= 1, "compare.baseline_N must be >= 1");
    require(c.baseline_epochs >= 0, "compare.baseline_epochs must be >= 0");

    c.scan_dt = rd.num_list("scan.dt_values",
                            {0.25, 0.0625, 0.015625, 0.00390625, 0.0009765625});
    c.scan_M = rd.int_list("scan.M_values", {1, 4, 16, 64});
    c.scan_trials = rd.integer("scan.trials", 4000);
    for (double dt : c.scan_dt) require(dt > 0.0, "scan.dt_values must be positive");
    for (long m : c.scan_M) require(m >= 1, "scan.M_values must be >= 1");
    require(c.scan_trials >= 2, "scan.trials must be >= 2");

    c.out_dir = rd.str("output.dir", "out");
    c.dump_trajectories = rd.integer("output.dump_trajectories", 0);
    c.dump_coords = static_cast<int>(rd.integer("output.dump_coords", 4));
    require(c.dump_trajectories >= 0, "output.dump_trajectories must be >= 0");
    require(c.dump_coords >= 1 && c.dump_coords <= 8,
            "output.dump_coords must be between 1 and 8");

    c.threads = static_cast<int>(rd.integer("threads", 1));
    require(c.threads >= 1, "threads must be >= 1");

    // canonical echo of the full effective configuration
    auto& e = c.echo_map;
    e["problem.id"] = c.problem_id;
    e["problem.d"] = std::to_string(c.d);
    e["problem.T"] = detail::canon_num(c.T);
    e["problem.sigma"] = detail::canon_num(c.sigma);
    e["problem.r"] = detail::canon_num(c.r);
    e["net.hidden"] = detail::canon_list(c.hidden);
    e["net.activation"] = activation_name(c.activation);
    e["train.method"] = c.hyper.method == TrainMethod::rfd ? "rfd" : "sde-match";
    e["train.M1"] = std::to_string(c.hyper.M1);
    e["train.N"] = std::to_string(c.hyper.N);
    e["train.M"] = std::to_string(c.hyper.M);
    e["train.dt"] = detail::canon_num(c.hyper.local_dt);
    e["train.epochs"] = std::to_string(c.hyper.epochs);
    e["train.seed"] = std::to_string(c.hyper.seed);
    e["train.gradient_free"] = c.hyper.gradient_free ? "1" : "0";
    e["train.live_coefficients"] = c.hyper.live_coefficients ? "1" : "0";
    e["train.ansatz"] = c.ansatz ? "1" : "0";
    e["train.collocation"] = std::to_string(c.hyper.collocation);
    e["train.checkpoint_every"] = std::to_string(c.checkpoint_every);
    e["train.lr.initial"] = detail::canon_num(c.hyper.lr.initial);
    e["train.lr.factor"] = detail::canon_num(c.hyper.lr.factor);
    e["train.lr.interval"] = std::to_string(c.hyper.lr.interval);
    e["eval.N_test"] = std::to_string(c.N_test);
    e["eval.M_test"] = std::to_string(c.M_test);
    e["eval.mc_samples"] = std::to_string(c.mc_samples);
    e["eval.count"] = std::to_string(c.eval_count);
    e["matrix.dt_values"] = detail::canon_list(c.matrix_dt);
    e["matrix.M_values"] = detail::canon_list(c.matrix_M);
    e["compare.M_values"] = detail::canon_list(c.compare_M);
    e["compare.baseline_N"] = std::to_string(c.baseline_N);
    e["compare.baseline_epochs"] = std::to_string(c.baseline_epochs);
    e["scan.dt_values"] = detail::canon_list(c.scan_dt);
    e["scan.M_values"] = detail::canon_list(c.scan_M);
    e["scan.trials"] = std::to_string(c.scan_trials);
    e["output.dir"] = c.out_dir;
    e["output.dump_trajectories"] = std::to_string(c.dump_trajectories);
    e["output.dump_coords"] = std::to_string(c.dump_coords);
    e["threads"] = std::to_string(c.threads);
    return c;
}

// Canonical serialized form: sorted key=value lines (std::map iterates sorted).
inline std::string config_echo(const RunConfig& c) {
    std::string out;
    for (const auto& [k, v] : c.echo_map) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

// Content id of the canonical echo, computed the way git hashes a blob:
// sha1("blob <len>\0<echo>"), hex-encoded.
inline std::string config_hash(const std::string& echo) {
    const std::string header = "blob " + std::to_string(echo.size());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw io_error("cannot allocate digest context");
    bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
              EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&  // incl. NUL
              EVP_DigestUpdate(ctx, echo.data(), echo.size()) == 1 &&
              EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw io_error("sha1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

}  // namespace sgpde
