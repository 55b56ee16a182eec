#pragma once

// Experiment configuration: a flat INI file with [section] headers and
// `key = value` lines. Every key is known in advance; unknown keys, bad values
// and missing required fields raise ConfigError with the offending line.

#include "eigenmap/objective.hpp"
#include "eigenmap/optim.hpp"
#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace eigenmap {

class ConfigError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Raw INI

struct IniValue {
    std::string text;
    std::size_t line = 0;  // 0 for values injected by overrides
};

class IniFile {
public:
    static IniFile parse(std::istream& in, const std::string& origin) {
        IniFile f;
        f.origin_ = origin;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (auto c = line.find_first_of("#;"); c != std::string::npos) line.resize(c);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(f.where(lineno) + "malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) throw ConfigError(f.where(lineno) + "empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(f.where(lineno) + "expected 'key = value'");
            if (section.empty()) throw ConfigError(f.where(lineno) + "key outside of any [section]");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(f.where(lineno) + "empty key");
            const std::string full = section + "." + key;
            if (f.values_.count(full))
                throw ConfigError(f.where(lineno) + full + " already set on line " + std::to_string(f.values_[full].line));
            f.values_[full] = {trim(line.substr(eq + 1)), lineno};
        }
        return f;
    }

    static IniFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        return parse(in, path);
    }

    static IniFile from_string(const std::string& text, const std::string& origin = "<string>") {
        std::istringstream is(text);
        return parse(is, origin);
    }

    /// Replaces or adds `section.key`.
    void set(const std::string& full_key, const std::string& value) {
        if (full_key.find('.') == std::string::npos) throw ConfigError("override '" + full_key + "' must be section.key");
        values_[full_key] = {value, 0};
    }

    const std::map<std::string, IniValue>& values() const { return values_; }
    const std::string& origin() const { return origin_; }

    std::string where(std::size_t line) const {
        return line ? origin_ + ":" + std::to_string(line) + ": " : origin_ + ": (override) ";
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }

private:
    std::string origin_;
    std::map<std::string, IniValue> values_;
};

// ---------------------------------------------------------------------------
// Typed configuration

enum class ExperimentKind { AnalyticEigen, ContrastivePairs, GraphNodes, RetrievalSweep, Probe };

inline const char* experiment_kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::AnalyticEigen: return "analytic_eigen";
        case ExperimentKind::ContrastivePairs: return "contrastive_pairs";
        case ExperimentKind::GraphNodes: return "graph_nodes";
        case ExperimentKind::RetrievalSweep: return "retrieval_sweep";
        case ExperimentKind::Probe: return "probe";
    }
    return "?";
}

struct DataConfig {
    std::string source;  // uniform, gaussian_blobs, two_moons, points_file, sbm_graph, ring_graph, edge_list
    std::size_t n = 256;
    std::size_t dim = 1;
    double low = -1.0, high = 1.0;                          // uniform
    std::size_t classes = 3;                                // gaussian_blobs
    double sigma = 0.2, center_scale = 1.0;                 // gaussian_blobs
    double noise = 0.1;                                     // two_moons
    std::size_t blocks = 2;                                 // sbm_graph
    double p_in = 0.5, p_out = 0.05;                        // sbm_graph
    std::size_t reach = 1, segments = 4;                    // ring_graph
    std::string path, labels_path;                          // points_file, edge_list
    int label_column = -1;                                  // points_file
    std::size_t queries = 0;                                // retrieval_sweep: extra held-out query items
    double test_fraction = 0.2;                             // probe split

    bool is_graph() const { return source == "sbm_graph" || source == "ring_graph" || source == "edge_list"; }
};

struct KernelConfig {
    std::string type = "rbf";  // rbf, rbf_difference, linear, polynomial, cosine, constant, augmentation, normalized_adjacency
    double sigma = 0.5;
    double weight1 = 1.0, sigma1 = 0.4, weight2 = 0.5, sigma2 = 0.1;
    int degree = 2;
    double offset = 1.0;
    double constant = 1.0;
    std::string shift = "none";              // none, auto (smallest eigenvalue) or a number
    std::string normalization = "inverse_sqrt";  // inverse_sqrt or sqrt
};

struct AugmentConfig {
    double noise_std = 0.1;
    double mask_prob = 0.0;
    double scale_min = 1.0, scale_max = 1.0;
};

struct ModelConfig {
    std::size_t k = 0;
    std::vector<std::size_t> hidden{64, 64};
    std::vector<std::size_t> projector;  // empty: no projector
    bool residual = false;
    bool hidden_batchnorm = false;
    std::string input = "auto";  // auto, dense, node_ids
    double l2bn_momentum = 0.9, l2bn_epsilon = 1e-12;
    double bn_momentum = 0.9, bn_epsilon = 1e-5;
};

struct ObjectiveSection {
    std::string alpha = "1";  // a number, or "scaled" for alpha_scaled(k)
    bool stop_gradient = true;
    std::string batch_scaling = "auto";  // auto, one_over_b, one_over_b_squared

    double alpha_value(std::size_t k) const { return alpha == "scaled" ? alpha_scaled(k) : std::stod(alpha); }
};

struct TrainSection {
    std::string optimizer = "sgd_momentum";
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double lars_trust = 0.001;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double grad_clip = 0.0;
    std::size_t batch_size = 256;
    std::size_t epochs = 1;
    std::size_t steps_per_epoch = 100;  // pair sources only
    std::string schedule = "cosine";
    std::size_t checkpoint_every = 0;
    std::size_t estimate_window = 50;
};

struct EvalSection {
    bool oracle = true;
    bool probe = false;
    std::size_t probe_epochs = 100;
    std::size_t probe_batch_size = 256;
    double probe_lr = 0.1;
    double probe_weight_decay = 0.0;
    std::string tap = "head";  // head or encoder
    std::size_t top_m = 10;
    std::vector<std::size_t> lengths;
    std::size_t random_runs = 10;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::AnalyticEigen;
    std::uint64_t seed = 0;
    std::string output_dir;
    DataConfig data;
    KernelConfig kernel;
    AugmentConfig augment;
    ModelConfig model;
    ObjectiveSection objective;
    TrainSection train;
    EvalSection eval;

    ObjectiveConfig objective_config() const {
        ObjectiveConfig o;
        o.k = model.k;
        o.alpha = objective.alpha_value(model.k);
        o.use_stop_gradient = objective.stop_gradient;
        if (objective.batch_scaling == "one_over_b") o.batch_scaling = BatchScaling::OneOverB;
        if (objective.batch_scaling == "one_over_b_squared") o.batch_scaling = BatchScaling::OneOverBSquared;
        return o;
    }

    OptimizerConfig optimizer_config() const {
        OptimizerConfig o;
        o.kind = parse_optimizer(train.optimizer);
        o.momentum = train.momentum;
        o.weight_decay = train.weight_decay;
        o.lars_trust = train.lars_trust;
        o.adam_beta1 = train.adam_beta1;
        o.adam_beta2 = train.adam_beta2;
        o.adam_eps = train.adam_eps;
        o.grad_clip = train.grad_clip;
        return o;
    }

    Schedule schedule() const { return train.schedule == "constant" ? Schedule::Constant : Schedule::Cosine; }
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

/// Reads typed values out of an IniFile, remembering which keys were used.
class Reader {
public:
    explicit Reader(const IniFile& f) : f_(f) {}

    const IniValue* find(const std::string& key) {
        used_.insert(key);
        auto it = f_.values().find(key);
        return it == f_.values().end() ? nullptr : &it->second;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) {
        auto it = f_.values().find(key);
        const std::size_t line = it == f_.values().end() ? 0 : it->second.line;
        if (it == f_.values().end()) throw ConfigError(f_.origin() + ": " + key + ": " + msg);
        throw ConfigError(f_.where(line) + key + ": " + msg);
    }

    void require(const std::string& key) {
        if (!f_.values().count(key)) throw ConfigError(f_.origin() + ": missing required field " + key);
    }

    void str(const std::string& key, std::string& out, std::initializer_list<const char*> allowed = {}) {
        const IniValue* v = find(key);
        if (!v) return;
        if (allowed.size()) {
            bool ok = false;
            std::string list;
            for (const char* a : allowed) {
                ok = ok || v->text == a;
                list += (list.empty() ? "" : ", ") + std::string(a);
            }
            if (!ok) fail(key, "'" + v->text + "' is not one of " + list);
        }
        out = v->text;
    }

    void real(const std::string& key, double& out) {
        const IniValue* v = find(key);
        if (!v) return;
        std::size_t pos = 0;
        try {
            out = std::stod(v->text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != v->text.size() || !std::isfinite(out)) fail(key, "'" + v->text + "' is not a finite number");
    }

    template <class Int>
    void integer(const std::string& key, Int& out) {
        const IniValue* v = find(key);
        if (!v) return;
        std::size_t pos = 0;
        long long x = 0;
        try {
            x = std::stoll(v->text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != v->text.size()) fail(key, "'" + v->text + "' is not an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (x < 0) fail(key, "must be non-negative");
        }
        out = static_cast<Int>(x);
    }

    void boolean(const std::string& key, bool& out) {
        const IniValue* v = find(key);
        if (!v) return;
        if (v->text == "true" || v->text == "on" || v->text == "1" || v->text == "yes") out = true;
        else if (v->text == "false" || v->text == "off" || v->text == "0" || v->text == "no") out = false;
        else fail(key, "'" + v->text + "' is not a boolean (true/false)");
    }

    void list(const std::string& key, std::vector<std::size_t>& out) {
        const IniValue* v = find(key);
        if (!v) return;
        out.clear();
        if (v->text.empty() || v->text == "none") return;
        std::stringstream ss(v->text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = IniFile::trim(item);
            std::size_t pos = 0;
            long long x = -1;
            try {
                x = std::stoll(item, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos == 0 || pos != item.size() || x <= 0) fail(key, "'" + item + "' is not a positive integer");
            out.push_back(static_cast<std::size_t>(x));
        }
    }

    void reject_unknown() {
        for (const auto& [key, v] : f_.values())
            if (!used_.count(key)) throw ConfigError(f_.where(v.line) + "unknown key " + key);
    }

private:
    const IniFile& f_;
    std::set<std::string> used_;
};

}  // namespace detail

/// Converts and validates. Throws ConfigError naming the field and line.
inline ExperimentConfig config_from_ini(const IniFile& ini) {
    detail::Reader r(ini);
    ExperimentConfig c;

    for (const char* req : {"experiment.kind", "experiment.seed", "data.source", "model.k"}) r.require(req);

    std::string kind;
    r.str("experiment.kind", kind, {"analytic_eigen", "contrastive_pairs", "graph_nodes", "retrieval_sweep", "probe"});
    for (ExperimentKind k : {ExperimentKind::AnalyticEigen, ExperimentKind::ContrastivePairs, ExperimentKind::GraphNodes,
                             ExperimentKind::RetrievalSweep, ExperimentKind::Probe})
        if (kind == experiment_kind_name(k)) c.kind = k;
    r.integer("experiment.seed", c.seed);
    c.output_dir = std::string("runs/") + experiment_kind_name(c.kind);
    r.str("experiment.output_dir", c.output_dir);

    DataConfig& d = c.data;
    r.str("data.source", d.source,
          {"uniform", "gaussian_blobs", "two_moons", "points_file", "sbm_graph", "ring_graph", "edge_list"});
    r.integer("data.n", d.n);
    r.integer("data.dim", d.dim);
    r.real("data.low", d.low);
    r.real("data.high", d.high);
    r.integer("data.classes", d.classes);
    r.real("data.sigma", d.sigma);
    r.real("data.center_scale", d.center_scale);
    r.real("data.noise", d.noise);
    r.integer("data.blocks", d.blocks);
    r.real("data.p_in", d.p_in);
    r.real("data.p_out", d.p_out);
    r.integer("data.reach", d.reach);
    r.integer("data.segments", d.segments);
    r.str("data.path", d.path);
    r.str("data.labels_path", d.labels_path);
    r.integer("data.label_column", d.label_column);
    r.integer("data.queries", d.queries);
    r.real("data.test_fraction", d.test_fraction);

    KernelConfig& k = c.kernel;
    if (d.is_graph()) k.type = "normalized_adjacency";
    else if (c.kind == ExperimentKind::ContrastivePairs) k.type = "augmentation";
    r.str("kernel.type", k.type,
          {"rbf", "rbf_difference", "linear", "polynomial", "cosine", "constant", "augmentation", "normalized_adjacency"});
    r.real("kernel.sigma", k.sigma);
    r.real("kernel.weight1", k.weight1);
    r.real("kernel.sigma1", k.sigma1);
    r.real("kernel.weight2", k.weight2);
    r.real("kernel.sigma2", k.sigma2);
    r.integer("kernel.degree", k.degree);
    r.real("kernel.offset", k.offset);
    r.real("kernel.constant", k.constant);
    r.str("kernel.shift", k.shift);
    r.str("kernel.normalization", k.normalization, {"inverse_sqrt", "sqrt"});

    r.real("augment.noise_std", c.augment.noise_std);
    r.real("augment.mask_prob", c.augment.mask_prob);
    r.real("augment.scale_min", c.augment.scale_min);
    r.real("augment.scale_max", c.augment.scale_max);

    ModelConfig& m = c.model;
    r.integer("model.k", m.k);
    r.list("model.hidden", m.hidden);
    r.list("model.projector", m.projector);
    r.boolean("model.residual", m.residual);
    r.boolean("model.hidden_batchnorm", m.hidden_batchnorm);
    r.str("model.input", m.input, {"auto", "dense", "node_ids"});
    r.real("model.l2bn_momentum", m.l2bn_momentum);
    r.real("model.l2bn_epsilon", m.l2bn_epsilon);
    r.real("model.bn_momentum", m.bn_momentum);
    r.real("model.bn_epsilon", m.bn_epsilon);

    r.str("objective.alpha", c.objective.alpha);
    r.boolean("objective.stop_gradient", c.objective.stop_gradient);
    r.str("objective.batch_scaling", c.objective.batch_scaling, {"auto", "one_over_b", "one_over_b_squared"});

    TrainSection& t = c.train;
    if (d.is_graph()) {  // desk-scale graph defaults
        t.optimizer = "lars";
        t.lr = 0.1;
        t.batch_size = 512;
    }
    r.str("train.optimizer", t.optimizer, {"sgd_momentum", "sgd", "lars", "adam"});
    if (t.optimizer == "sgd") t.optimizer = "sgd_momentum";
    r.real("train.lr", t.lr);
    r.real("train.momentum", t.momentum);
    r.real("train.weight_decay", t.weight_decay);
    r.real("train.lars_trust", t.lars_trust);
    r.real("train.adam_beta1", t.adam_beta1);
    r.real("train.adam_beta2", t.adam_beta2);
    r.real("train.adam_eps", t.adam_eps);
    r.real("train.grad_clip", t.grad_clip);
    r.integer("train.batch_size", t.batch_size);
    r.integer("train.epochs", t.epochs);
    r.integer("train.steps_per_epoch", t.steps_per_epoch);
    r.str("train.schedule", t.schedule, {"constant", "cosine"});
    r.integer("train.checkpoint_every", t.checkpoint_every);
    r.integer("train.estimate_window", t.estimate_window);

    EvalSection& e = c.eval;
    e.probe = c.kind == ExperimentKind::Probe || c.kind == ExperimentKind::GraphNodes;
    e.oracle = c.kind == ExperimentKind::AnalyticEigen || c.kind == ExperimentKind::GraphNodes;
    r.boolean("eval.oracle", e.oracle);
    r.boolean("eval.probe", e.probe);
    r.integer("eval.probe_epochs", e.probe_epochs);
    r.integer("eval.probe_batch_size", e.probe_batch_size);
    r.real("eval.probe_lr", e.probe_lr);
    r.real("eval.probe_weight_decay", e.probe_weight_decay);
    r.str("eval.tap", e.tap, {"head", "encoder"});
    r.integer("eval.top_m", e.top_m);
    r.list("eval.lengths", e.lengths);
    r.integer("eval.random_runs", e.random_runs);

    r.reject_unknown();

    // -- cross-field validation ----------------------------------------------
    auto bad = [&](const std::string& key, const std::string& msg) { r.fail(key, msg); };
    if (m.k == 0) bad("model.k", "must be positive");
    if (t.batch_size < 2) bad("train.batch_size", "must be at least 2");
    if (m.k > t.batch_size)
        bad("model.k", "k=" + std::to_string(m.k) + " exceeds train.batch_size=" + std::to_string(t.batch_size) +
                           "; a batch gram has at most b nonzero eigenvalues, so the extra dimensions are unidentifiable");
    if (t.epochs < 1) bad("train.epochs", "must be at least 1");
    if (!(t.lr > 0.0)) bad("train.lr", "must be positive");
    if (t.weight_decay < 0.0) bad("train.weight_decay", "must be non-negative");
    if (t.grad_clip < 0.0) bad("train.grad_clip", "must be non-negative");
    if (t.estimate_window == 0) bad("train.estimate_window", "must be positive");
    if (c.objective.alpha != "scaled") {
        double a = std::stod(c.objective.alpha);
        r.real("objective.alpha", a);
        if (!(a > 0.0)) bad("objective.alpha", "must be positive or 'scaled'");
    }
    if (k.shift != "none" && k.shift != "auto") {
        double s = 0.0;
        r.real("kernel.shift", s);
    }
    if (!(m.l2bn_momentum >= 0.0 && m.l2bn_momentum < 1.0)) bad("model.l2bn_momentum", "must lie in [0, 1)");
    if (!(m.l2bn_epsilon > 0.0)) bad("model.l2bn_epsilon", "must be positive");

    const bool graph = d.is_graph();
    const bool file_source = d.source == "points_file" || d.source == "edge_list";
    if (file_source && d.path.empty()) bad("data.path", "required for source " + d.source);
    if (!file_source && d.n < 2) bad("data.n", "must be at least 2");
    if (d.source == "uniform" && !(d.high > d.low)) bad("data.high", "must exceed data.low");
    if (d.source == "sbm_graph" && (d.p_in < 0 || d.p_in > 1 || d.p_out < 0 || d.p_out > 1))
        bad("data.p_in", "block probabilities must lie in [0, 1]");
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) bad("data.test_fraction", "must lie in (0, 1)");
    if (!file_source && !graph && c.kind != ExperimentKind::ContrastivePairs && t.batch_size > d.n)
        bad("train.batch_size", "exceeds the " + std::to_string(d.n) + " training points");

    switch (c.kind) {
        case ExperimentKind::AnalyticEigen:
            if (graph) bad("data.source", "analytic_eigen needs a point source");
            if (k.type == "augmentation" || k.type == "normalized_adjacency")
                bad("kernel.type", "analytic_eigen needs an analytic kernel");
            break;
        case ExperimentKind::ContrastivePairs:
            if (graph) bad("data.source", "contrastive_pairs needs a point source");
            if (k.type != "augmentation") bad("kernel.type", "contrastive_pairs trains on augmentation pairs");
            break;
        case ExperimentKind::GraphNodes:
            if (!graph) bad("data.source", "graph_nodes needs a graph source");
            if (k.type != "normalized_adjacency") bad("kernel.type", "graph_nodes uses normalized_adjacency");
            break;
        case ExperimentKind::RetrievalSweep:
            if (graph) bad("data.source", "retrieval_sweep needs a point source");
            if (d.source != "gaussian_blobs" && d.source != "two_moons")
                bad("data.source", "retrieval_sweep needs a labelled generator (gaussian_blobs or two_moons)");
            if (d.queries == 0) bad("data.queries", "retrieval_sweep needs held-out queries");
            if (e.lengths.empty()) bad("eval.lengths", "retrieval_sweep needs truncation lengths");
            if (e.top_m == 0 || e.top_m > d.n) bad("eval.top_m", "must lie in [1, data.n]");
            if (e.random_runs == 0) bad("eval.random_runs", "must be positive");
            for (std::size_t i = 0; i < e.lengths.size(); ++i) {
                if (e.lengths[i] > m.k) bad("eval.lengths", "length " + std::to_string(e.lengths[i]) + " exceeds k");
                if (i && e.lengths[i] <= e.lengths[i - 1]) bad("eval.lengths", "lengths must be strictly increasing");
            }
            if (k.type == "normalized_adjacency") bad("kernel.type", "retrieval_sweep needs a point kernel");
            break;
        case ExperimentKind::Probe:
            if (k.type == "normalized_adjacency" && !graph) bad("kernel.type", "normalized_adjacency needs a graph source");
            break;
    }
    if (e.probe && (d.source == "uniform")) bad("eval.probe", "uniform points carry no labels");
    return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    IniFile ini = IniFile::load(path);
    for (const auto& [key, value] : overrides) ini.set(key, value);
    return config_from_ini(ini);
}

/// Every field with its materialized value, in parseable form. Parsing the
/// result reproduces the same configuration.
inline std::string resolved_config(const ExperimentConfig& c) {
    using detail::fmt_double;
    using detail::fmt_list;
    std::ostringstream o;
    auto kv = [&](const std::string& key, const std::string& v) { o << key << " = " << v << '\n'; };
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    o << "[experiment]\n";
    kv("kind", experiment_kind_name(c.kind));
    kv("seed", std::to_string(c.seed));
    kv("output_dir", c.output_dir);
    o << "\n[data]\n";
    kv("source", c.data.source);
    kv("n", std::to_string(c.data.n));
    kv("dim", std::to_string(c.data.dim));
    kv("low", fmt_double(c.data.low));
    kv("high", fmt_double(c.data.high));
    kv("classes", std::to_string(c.data.classes));
    kv("sigma", fmt_double(c.data.sigma));
    kv("center_scale", fmt_double(c.data.center_scale));
    kv("noise", fmt_double(c.data.noise));
    kv("blocks", std::to_string(c.data.blocks));
    kv("p_in", fmt_double(c.data.p_in));
    kv("p_out", fmt_double(c.data.p_out));
    kv("reach", std::to_string(c.data.reach));
    kv("segments", std::to_string(c.data.segments));
    if (!c.data.path.empty()) kv("path", c.data.path);
    if (!c.data.labels_path.empty()) kv("labels_path", c.data.labels_path);
    kv("label_column", std::to_string(c.data.label_column));
    kv("queries", std::to_string(c.data.queries));
    kv("test_fraction", fmt_double(c.data.test_fraction));
    o << "\n[kernel]\n";
    kv("type", c.kernel.type);
    kv("sigma", fmt_double(c.kernel.sigma));
    kv("weight1", fmt_double(c.kernel.weight1));
    kv("sigma1", fmt_double(c.kernel.sigma1));
    kv("weight2", fmt_double(c.kernel.weight2));
    kv("sigma2", fmt_double(c.kernel.sigma2));
    kv("degree", std::to_string(c.kernel.degree));
    kv("offset", fmt_double(c.kernel.offset));
    kv("constant", fmt_double(c.kernel.constant));
    kv("shift", c.kernel.shift);
    kv("normalization", c.kernel.normalization);
    o << "\n[augment]\n";
    kv("noise_std", fmt_double(c.augment.noise_std));
    kv("mask_prob", fmt_double(c.augment.mask_prob));
    kv("scale_min", fmt_double(c.augment.scale_min));
    kv("scale_max", fmt_double(c.augment.scale_max));
    o << "\n[model]\n";
    kv("k", std::to_string(c.model.k));
    kv("hidden", c.model.hidden.empty() ? "none" : fmt_list(c.model.hidden));
    kv("projector", c.model.projector.empty() ? "none" : fmt_list(c.model.projector));
    kv("residual", b(c.model.residual));
    kv("hidden_batchnorm", b(c.model.hidden_batchnorm));
    kv("input", c.model.input);
    kv("l2bn_momentum", fmt_double(c.model.l2bn_momentum));
    kv("l2bn_epsilon", fmt_double(c.model.l2bn_epsilon));
    kv("bn_momentum", fmt_double(c.model.bn_momentum));
    kv("bn_epsilon", fmt_double(c.model.bn_epsilon));
    o << "\n[objective]\n";
    kv("alpha", c.objective.alpha);
    kv("stop_gradient", b(c.objective.stop_gradient));
    kv("batch_scaling", c.objective.batch_scaling);
    o << "\n[train]\n";
    kv("optimizer", c.train.optimizer);
    kv("lr", fmt_double(c.train.lr));
    kv("momentum", fmt_double(c.train.momentum));
    kv("weight_decay", fmt_double(c.train.weight_decay));
    kv("lars_trust", fmt_double(c.train.lars_trust));
    kv("adam_beta1", fmt_double(c.train.adam_beta1));
    kv("adam_beta2", fmt_double(c.train.adam_beta2));
    kv("adam_eps", fmt_double(c.train.adam_eps));
    kv("grad_clip", fmt_double(c.train.grad_clip));
    kv("batch_size", std::to_string(c.train.batch_size));
    kv("epochs", std::to_string(c.train.epochs));
    kv("steps_per_epoch", std::to_string(c.train.steps_per_epoch));
    kv("schedule", c.train.schedule);
    kv("checkpoint_every", std::to_string(c.train.checkpoint_every));
    kv("estimate_window", std::to_string(c.train.estimate_window));
    o << "\n[eval]\n";
    kv("oracle", b(c.eval.oracle));
    kv("probe", b(c.eval.probe));
    kv("probe_epochs", std::to_string(c.eval.probe_epochs));
    kv("probe_batch_size", std::to_string(c.eval.probe_batch_size));
    kv("probe_lr", fmt_double(c.eval.probe_lr));
    kv("probe_weight_decay", fmt_double(c.eval.probe_weight_decay));
    kv("tap", c.eval.tap);
    kv("top_m", std::to_string(c.eval.top_m));
    kv("lengths", c.eval.lengths.empty() ? "none" : fmt_list(c.eval.lengths));
    kv("random_runs", std::to_string(c.eval.random_runs));
    return o.str();
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Parses EIGENMAP_LAB_THREADS. Unset means 1; anything but a positive
/// integer is a configuration error.
inline std::size_t requested_threads(const char* env) {
    if (!env || !*env) return 1;
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(env, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || env[pos] != '\0' || v < 1)
        throw ConfigError(std::string("EIGENMAP_LAB_THREADS='") + env + "' is not a positive integer");
    return static_cast<std::size_t>(v);
}

}  // namespace eigenmap
