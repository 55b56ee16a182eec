#pragma once

// Experiment orchestration: dataset construction, training, oracle checks,
// downstream evaluation and artifact emission for each experiment kind.

#include "eigenmap/config.hpp"
#include "eigenmap/kernels.hpp"
#include "eigenmap/models.hpp"
#include "eigenmap/objective.hpp"
#include "eigenmap/retrieval.hpp"
#include "eigenmap/spectral_oracle.hpp"
#include "eigenmap/synthetic.hpp"
#include "eigenmap/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace eigenmap {

namespace fs = std::filesystem;

/// Data for one experiment: either points (optionally with held-out queries)
/// or a graph.
struct ExperimentData {
    std::optional<PointSet> points;
    std::optional<PointSet> queries;
    std::optional<GraphDataset> graph;
    std::string inputs_digest;  // content of every file read, for hashing
};

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Relative data paths are taken relative to the config file's directory and
/// stored absolute so a resolved config reruns from anywhere.
inline void resolve_data_paths(ExperimentConfig& cfg, const fs::path& config_dir) {
    for (std::string* p : {&cfg.data.path, &cfg.data.labels_path}) {
        if (p->empty()) continue;
        fs::path q(*p);
        if (q.is_relative()) q = config_dir / q;
        *p = fs::weakly_canonical(q).string();
    }
}

inline ExperimentData load_data(const ExperimentConfig& cfg) {
    const DataConfig& d = cfg.data;
    ExperimentData out;
    std::optional<PointSet> all;
    if (d.source == "uniform") {
        all = PointSet{uniform_points(d.n + d.queries, d.dim, d.low, d.high, cfg.seed), {}};
    } else if (d.source == "gaussian_blobs") {
        all = gaussian_blobs(BlobParams{d.n + d.queries, d.classes, d.dim, d.sigma, d.center_scale}, cfg.seed);
    } else if (d.source == "two_moons") {
        all = two_moons(d.n + d.queries, d.noise, cfg.seed);
    } else if (d.source == "points_file") {
        all = load_points_csv(d.path, d.label_column);
        out.inputs_digest += read_file(d.path);
    } else if (d.source == "sbm_graph") {
        out.graph = sbm_graph(SbmParams{d.n, d.blocks, d.p_in, d.p_out}, cfg.seed);
    } else if (d.source == "ring_graph") {
        out.graph = ring_graph(d.n, d.reach, d.segments);
    } else if (d.source == "edge_list") {
        out.graph = load_edge_list(d.path);
        out.inputs_digest += read_file(d.path);
    } else {
        throw ConfigError("data.source: unsupported source '" + d.source + "'");
    }
    if (!d.labels_path.empty()) {
        std::vector<int> labels = load_labels(d.labels_path);
        out.inputs_digest += read_file(d.labels_path);
        if (out.graph) out.graph->set_labels(std::move(labels));
        else {
            if (labels.size() != all->points.rows()) throw Error("labels file does not match the point count");
            all->labels = std::move(labels);
        }
    }
    if (all) {
        const std::size_t total = all->points.rows();
        const std::size_t nq = std::min(d.queries, total);
        std::vector<std::size_t> items(total - nq), qs(nq);
        std::iota(items.begin(), items.end(), std::size_t{0});
        std::iota(qs.begin(), qs.end(), total - nq);
        auto take = [&](const std::vector<std::size_t>& idx) {
            PointSet ps{gather_rows(all->points, idx), {}};
            for (std::size_t i : idx)
                if (!all->labels.empty()) ps.labels.push_back(all->labels[i]);
            return ps;
        };
        out.points = take(items);
        if (nq) out.queries = take(qs);
    }
    return out;
}

inline AnalyticKernel make_kernel(const KernelConfig& k) {
    if (k.type == "rbf") return rbf_kernel(k.sigma);
    if (k.type == "rbf_difference") return rbf_difference_kernel(k.weight1, k.sigma1, k.weight2, k.sigma2);
    if (k.type == "linear") return linear_kernel();
    if (k.type == "polynomial") return polynomial_kernel(k.degree, k.offset);
    if (k.type == "cosine") return cosine_kernel();
    if (k.type == "constant") return constant_kernel(k.constant);
    throw ConfigError("kernel.type: '" + k.type + "' is not an analytic point kernel");
}

inline DegreeNormalization degree_normalization(const KernelConfig& k) {
    return k.normalization == "sqrt" ? DegreeNormalization::Sqrt : DegreeNormalization::InverseSqrt;
}

inline ModelSpec model_spec(const ExperimentConfig& cfg, std::size_t input_dim, InputKind input_kind) {
    const ModelConfig& m = cfg.model;
    ModelSpec s;
    s.input_dim = input_dim;
    s.input_kind = input_kind;
    s.encoder.widths = m.hidden;
    s.encoder.residual = m.residual;
    s.encoder.hidden_batchnorm = m.hidden_batchnorm;
    if (m.projector.empty()) {
        s.encoder.widths.push_back(m.k);
    } else {
        if (m.hidden.empty()) throw ConfigError("model.hidden: a projector needs a non-empty encoder");
        s.projector = MlpSpec{m.projector, Activation::Relu, false, m.hidden_batchnorm};
        s.projector->widths.push_back(m.k);
    }
    s.k = m.k;
    s.l2bn_momentum = m.l2bn_momentum;
    s.l2bn_epsilon = m.l2bn_epsilon;
    s.bn_momentum = m.bn_momentum;
    s.bn_epsilon = m.bn_epsilon;
    s.seed = cfg.seed;
    return s;
}

inline Tap eval_tap(const ExperimentConfig& cfg) { return cfg.eval.tap == "encoder" ? Tap::Encoder : Tap::Head; }

/// The training source a config describes, plus what the model consumes.
struct SourceBundle {
    std::unique_ptr<BatchSource> source;
    std::size_t input_dim = 0;
    InputKind input_kind = InputKind::Dense;
    double shift = 0.0;  // diagonal shift applied to a point gram
};

inline double smallest_eigenvalue(const Tensor& g) { return eigh(g).eigenvalues.back(); }

inline SourceBundle make_source(const ExperimentConfig& cfg, const ExperimentData& data) {
    SourceBundle sb;
    const std::size_t b = cfg.train.batch_size;
    if (data.graph) {
        const GraphDataset& g = *data.graph;
        const bool features = g.has_features() && cfg.model.input != "node_ids";
        if (cfg.model.input == "dense" && !g.has_features())
            throw ConfigError("model.input: dense input requested but the graph has no node features");
        const std::size_t usable = g.num_nodes() - g.isolated_nodes().size();
        if (b > usable)
            throw Error("train.batch_size=" + std::to_string(b) + " exceeds the " + std::to_string(usable) +
                        " non-isolated nodes");
        sb.input_kind = features ? InputKind::Dense : InputKind::NodeIds;
        sb.input_dim = features ? g.features().cols() : g.num_nodes();
        sb.source = std::make_unique<GraphSource>(g, b, cfg.seed, degree_normalization(cfg.kernel), features);
        return sb;
    }
    const PointSet& ps = *data.points;
    if (cfg.model.input == "node_ids") throw ConfigError("model.input: node_ids needs a graph source");
    sb.input_dim = ps.points.cols();
    if (cfg.kernel.type == "augmentation") {
        Augmentation aug{cfg.augment.noise_std, cfg.augment.mask_prob, cfg.augment.scale_min, cfg.augment.scale_max};
        sb.source = std::make_unique<PairSource>(PairSampler(ps.points, aug, cfg.seed), b, cfg.train.steps_per_epoch);
        return sb;
    }
    if (b > ps.points.rows())
        throw Error("train.batch_size=" + std::to_string(b) + " exceeds the " + std::to_string(ps.points.rows()) +
                    " training points");
    const AnalyticKernel kernel = make_kernel(cfg.kernel);
    if (cfg.kernel.shift == "auto") sb.shift = std::min(0.0, smallest_eigenvalue(gram_matrix(kernel, ps.points)));
    else if (cfg.kernel.shift != "none") sb.shift = std::stod(cfg.kernel.shift);
    sb.source = std::make_unique<KernelPointSource>(ps.points, kernel, b, cfg.seed, sb.shift);
    return sb;
}

// ---------------------------------------------------------------------------
// Results

struct ExperimentResult {
    fs::path dir;
    std::vector<std::string> artifacts;                 // relative to dir
    std::vector<std::pair<std::string, double>> metrics;  // in emission order
    std::optional<AlignmentReport> alignment;
    std::vector<TruncationCurve> curves;
    RunLog log;

    double metric(const std::string& name) const {
        for (const auto& [k, v] : metrics)
            if (k == name) return v;
        throw Error("no metric named " + name);
    }
};

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_metrics(const fs::path& path, const std::vector<std::pair<std::string, double>>& metrics) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << "name,value\n";
    for (const auto& [k, v] : metrics) os << k << ',' << fmt17(v) << '\n';
}

inline void write_alignment_csv(const fs::path& path, const AlignmentReport& rep, const std::vector<double>& estimates) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << "dim,cosine,estimate,oracle,relative_error,principal_angle_deg\n";
    for (std::size_t j = 0; j < rep.k; ++j) {
        os << j + 1 << ',' << fmt17(rep.cosines[j]) << ',' << (j < estimates.size() ? fmt17(estimates[j]) : "")
           << ',' << fmt17(rep.oracle_eigenvalues[j]) << ','
           << (j < rep.eigenvalue_rel_errors.size() ? fmt17(rep.eigenvalue_rel_errors[j]) : "") << ','
           << fmt17(rep.principal_angles[j] * 180.0 / std::numbers::pi) << '\n';
    }
}

/// Train / test index split of [0, n) drawn from the "split" stream.
inline void random_split(std::size_t n, double test_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                         std::vector<std::size_t>& test) {
    Rng rng = make_stream(seed, "split");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto nte = std::max<std::size_t>(1, static_cast<std::size_t>(test_fraction * static_cast<double>(n)));
    test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(nte));
    train.assign(perm.begin() + static_cast<std::ptrdiff_t>(nte), perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
}

inline std::vector<int> pick(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

}  // namespace detail

/// Trains a model on the configured source. Writes log.csv and checkpoints
/// into `dir`.
inline std::pair<EigenModel, RunLog> train_model(const ExperimentConfig& cfg, const ExperimentData& data,
                                                 const fs::path& dir, SourceBundle* bundle_out = nullptr) {
    SourceBundle sb = make_source(cfg, data);
    EigenModel model(model_spec(cfg, sb.input_dim, sb.input_kind));
    TrainConfig tc;
    tc.optimizer = cfg.optimizer_config();
    tc.lr = cfg.train.lr;
    tc.schedule = cfg.schedule();
    tc.epochs = cfg.train.epochs;
    tc.checkpoint_every = cfg.train.checkpoint_every;
    tc.estimate_window = cfg.train.estimate_window;
    tc.run_dir = dir;
    RunLog log = train(model, *sb.source, cfg.objective_config(), tc);
    if (bundle_out) *bundle_out = std::move(sb);
    return {std::move(model), std::move(log)};
}

/// All items' representations (rows) at the configured tap.
inline Tensor item_representations(const EigenModel& model, const ExperimentData& data, Tap tap, bool queries = false) {
    if (data.graph) {
        if (data.graph->has_features() && model.spec().input_kind == InputKind::Dense)
            return model.embed(data.graph->features(), tap);
        std::vector<std::size_t> ids(data.graph->num_nodes());
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        return model.embed(ids, tap);
    }
    return model.embed(queries ? data.queries->points : data.points->points, tap);
}

/// Oracle comparison of a trained model against the configured operator.
/// Estimates are in operator units (lambda / n) and may be empty.
inline AlignmentReport oracle_alignment(const ExperimentConfig& cfg, const ExperimentData& data, const EigenModel& model,
                                        const std::vector<double>& estimates, EigenSolution* solution_out = nullptr) {
    const std::size_t k = cfg.model.k;
    EigenSolution sol;
    if (data.graph) {
        sol = eigh(data.graph->dense_normalized(degree_normalization(cfg.kernel)));
    } else {
        if (cfg.kernel.type == "augmentation")
            throw ConfigError("eval.oracle: augmentation pairs have no closed-form operator; set eval.oracle = false");
        sol = eigh_kernel(make_kernel(cfg.kernel), data.points->points);
    }
    const Tensor learned = item_representations(model, data, Tap::Head).transposed();
    AlignmentReport rep = alignment(learned, sol, k, estimates);
    if (solution_out) *solution_out = std::move(sol);
    return rep;
}

/// Operator-unit eigenvalue estimates from a training log.
inline std::vector<double> operator_estimates(const RunLog& log, const ExperimentData& data) {
    std::vector<double> est = log.eigenvalue_estimates;
    if (data.graph)  // the graph source reports normalized-adjacency eigenvalues; the oracle compares lambda / n
        for (double& e : est) e /= static_cast<double>(data.graph->num_nodes());
    return est;
}

inline double probe_accuracy(const ExperimentConfig& cfg, const ExperimentData& data, const Tensor& reps) {
    const std::vector<int>& labels = data.graph ? data.graph->labels() : data.points->labels;
    if (labels.empty()) throw ConfigError("eval.probe: the dataset has no labels");
    std::vector<std::size_t> tr, te;
    detail::random_split(reps.rows(), cfg.data.test_fraction, cfg.seed, tr, te);
    ProbeConfig pc;
    pc.epochs = cfg.eval.probe_epochs;
    pc.batch_size = cfg.eval.probe_batch_size;
    pc.lr = cfg.eval.probe_lr;
    pc.weight_decay = cfg.eval.probe_weight_decay;
    pc.seed = cfg.seed;
    return linear_probe(gather_rows(reps, tr), detail::pick(labels, tr), gather_rows(reps, te), detail::pick(labels, te), pc);
}

// ---------------------------------------------------------------------------
// Run metadata

inline std::string inputs_hash(const std::string& resolved, const ExperimentData& data) {
    return hash_hex(fnv1a(resolved + '\0' + data.inputs_digest));
}

/// run.meta: commented provenance lines followed by the resolved config, so
/// the file itself is a runnable config.
inline void write_run_meta(const fs::path& dir, const ExperimentConfig& cfg, const ExperimentData& data,
                           std::size_t threads_requested, const std::vector<std::string>& artifacts) {
    const std::string resolved = resolved_config(cfg);
    std::ofstream os(dir / "run.meta", std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / "run.meta").string());
    os << "# eigenmap-lab run metadata, format 1\n";
    os << "# kind = " << experiment_kind_name(cfg.kind) << '\n';
    os << "# seed = " << cfg.seed << '\n';
    os << "# config_hash = " << hash_hex(fnv1a(resolved)) << '\n';
    os << "# inputs_hash = " << inputs_hash(resolved, data) << '\n';
    os << "# threads_requested = " << threads_requested << '\n';
    os << "# threads_used = 1\n";
    os << "# artifacts =";
    for (const std::string& a : artifacts) os << ' ' << a;
    os << "\n\n" << resolved;
}

// ---------------------------------------------------------------------------
// Experiment kinds

namespace detail {

inline void add_alignment_metrics(ExperimentResult& r, const AlignmentReport& rep) {
    for (std::size_t j = 0; j < rep.k; ++j) r.metrics.emplace_back("cosine_" + std::to_string(j + 1), rep.cosines[j]);
    r.metrics.emplace_back("max_principal_angle_deg", rep.max_angle_degrees());
    for (std::size_t j = 0; j < rep.eigenvalue_rel_errors.size(); ++j)
        r.metrics.emplace_back("eigenvalue_rel_error_" + std::to_string(j + 1), rep.eigenvalue_rel_errors[j]);
}

inline void add_checkpoints(ExperimentResult& r, const TrainSection& t, std::size_t total, const std::string& prefix = "") {
    if (t.checkpoint_every > 0)
        for (std::size_t s = t.checkpoint_every; s < total; s += t.checkpoint_every)
            r.artifacts.push_back(prefix + checkpoint_name(s));
    r.artifacts.push_back(prefix + checkpoint_name(total));
}

inline ExperimentResult run_single(const ExperimentConfig& cfg, const ExperimentData& data, const fs::path& dir) {
    ExperimentResult r;
    r.dir = dir;
    SourceBundle sb;
    auto [model, log] = train_model(cfg, data, dir, &sb);
    r.artifacts.push_back("log.csv");
    add_checkpoints(r, cfg.train, log.steps);
    std::vector<double> est = operator_estimates(log, data);
    if (sb.shift != 0.0 && data.points)  // report eigenvalues of the unshifted kernel
        for (double& e : est) e += sb.shift / static_cast<double>(data.points->points.rows());
    for (std::size_t j = 0; j < est.size(); ++j) r.metrics.emplace_back("estimate_" + std::to_string(j + 1), est[j]);
    if (cfg.eval.oracle && log.steps > 0) {
        EigenSolution sol;
        AlignmentReport rep = oracle_alignment(cfg, data, model, est, &sol);
        write_alignment_csv(dir / "alignment.csv", rep, est);
        write_eigenvalues_csv((dir / "oracle_eigenvalues.csv").string(), sol);
        r.artifacts.push_back("alignment.csv");
        r.artifacts.push_back("oracle_eigenvalues.csv");
        add_alignment_metrics(r, rep);
        if (!rep.warning.empty()) std::cerr << "warning: " << rep.warning << '\n';
        r.alignment = std::move(rep);
    }
    if (cfg.eval.probe && log.steps > 0) {
        r.metrics.emplace_back("probe_accuracy", probe_accuracy(cfg, data, item_representations(model, data, eval_tap(cfg))));
    }
    r.log = std::move(log);
    return r;
}

inline ExperimentResult run_retrieval(const ExperimentConfig& cfg, const ExperimentData& data, const fs::path& dir) {
    ExperimentResult r;
    r.dir = dir;
    ExperimentConfig ordered = cfg, unordered = cfg;
    ordered.objective.stop_gradient = true;
    unordered.objective.stop_gradient = false;
    auto [m_ord, log_ord] = train_model(ordered, data, dir / "ordered");
    auto [m_un, log_un] = train_model(unordered, data, dir / "unordered");
    r.artifacts.push_back("ordered/log.csv");
    add_checkpoints(r, cfg.train, log_ord.steps, "ordered/");
    r.artifacts.push_back("unordered/log.csv");
    add_checkpoints(r, cfg.train, log_un.steps, "unordered/");
    if (log_ord.steps == 0) {
        r.log = std::move(log_ord);
        return r;
    }

    const Tap tap = eval_tap(cfg);
    const auto index_labels = single_labels(data.points->labels);
    const auto query_labels = single_labels(data.queries->labels);
    const SweepInput in_ord{m_ord.embed(data.points->points, tap), m_ord.embed(data.queries->points, tap)};
    const SweepInput in_un{m_un.embed(data.points->points, tap), m_un.embed(data.queries->points, tap)};
    auto prefix = truncation_sweep(in_ord, index_labels, query_labels, cfg.eval.lengths, TruncationMode::Prefix,
                                   cfg.eval.top_m);
    auto random = truncation_sweep(in_un, index_labels, query_labels, cfg.eval.lengths, TruncationMode::Random,
                                   cfg.eval.top_m, cfg.eval.random_runs, cfg.seed);
    r.curves = {prefix[0], random[0], prefix[1], random[1]};
    write_curves_csv((dir / "curves.csv").string(), r.curves);
    write_gnuplot_data((dir / "curves.dat").string(), r.curves);
    r.artifacts.push_back("curves.csv");
    r.artifacts.push_back("curves.dat");
    for (std::size_t i = 0; i < cfg.eval.lengths.size(); ++i) {
        const std::string m = std::to_string(cfg.eval.lengths[i]);
        r.metrics.emplace_back("prefix_precision_m" + m, prefix[0].mean(i));
        r.metrics.emplace_back("random_precision_mean_m" + m, random[0].mean(i));
        r.metrics.emplace_back("random_precision_std_m" + m, random[0].stddev(i));
    }
    r.metrics.emplace_back("matched_length_ratio_precision", matched_length_ratio(prefix[0], random[0]));
    r.metrics.emplace_back("matched_length_ratio_map", matched_length_ratio(prefix[1], random[1]));
    r.log = std::move(log_ord);
    return r;
}

}  // namespace detail

/// Runs one experiment into cfg.output_dir. Throws ConfigError for config
/// problems and Error for runtime failures.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads_requested = 1) {
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    ExperimentData data = load_data(cfg);
    if ((cfg.eval.probe || cfg.kind == ExperimentKind::RetrievalSweep) &&
        (data.graph ? !data.graph->has_labels() : data.points->labels.empty()))
        throw ConfigError("data: this experiment needs labels but the dataset has none");
    ExperimentResult r = cfg.kind == ExperimentKind::RetrievalSweep ? detail::run_retrieval(cfg, data, dir)
                                                                    : detail::run_single(cfg, data, dir);
    detail::write_metrics(dir / "metrics.csv", r.metrics);
    r.artifacts.push_back("metrics.csv");
    {
        std::ofstream os(dir / "resolved.cfg", std::ios::binary);
        os << resolved_config(cfg);
    }
    r.artifacts.push_back("resolved.cfg");
    r.artifacts.push_back("run.meta");
    write_run_meta(dir, cfg, data, threads_requested, r.artifacts);
    return r;
}

/// Oracle-only pass on a saved checkpoint. Writes alignment.csv into
/// `out_dir`.
inline AlignmentReport verify_checkpoint(const std::string& ckpt, const ExperimentConfig& cfg, const fs::path& out_dir) {
    if (cfg.kind != ExperimentKind::AnalyticEigen && cfg.kind != ExperimentKind::GraphNodes)
        throw ConfigError("verify: experiment.kind must be analytic_eigen or graph_nodes to have an oracle");
    const EigenModel model = EigenModel::load(ckpt);
    if (model.k() != cfg.model.k)
        throw ConfigError("verify: checkpoint has k=" + std::to_string(model.k()) + " but model.k=" +
                          std::to_string(cfg.model.k));
    const ExperimentData data = load_data(cfg);
    AlignmentReport rep = oracle_alignment(cfg, data, model, {});
    fs::create_directories(out_dir);
    detail::write_alignment_csv(out_dir / "alignment.csv", rep, {});
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridAxis {
    std::string key;  // section.key
    std::vector<std::string> values;
};

inline GridAxis parse_grid_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--grid '" + spec + "': expected section.key=v1,v2,...");
    GridAxis a{IniFile::trim(spec.substr(0, eq)), {}};
    std::stringstream ss(spec.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ',')) a.values.push_back(IniFile::trim(v));
    if (a.values.empty()) throw ConfigError("--grid '" + spec + "': no values");
    return a;
}

struct SweepPoint {
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string dir_name;
};

/// Cartesian product of the axes, first axis slowest.
inline std::vector<SweepPoint> expand_grid(const std::vector<GridAxis>& axes) {
    std::vector<SweepPoint> pts{SweepPoint{}};
    for (const GridAxis& a : axes) {
        std::vector<SweepPoint> next;
        for (const SweepPoint& p : pts)
            for (const std::string& v : a.values) {
                SweepPoint q = p;
                q.overrides.emplace_back(a.key, v);
                next.push_back(std::move(q));
            }
        pts = std::move(next);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i].dir_name = "run_" + std::to_string(i);
    return pts;
}

}  // namespace eigenmap
