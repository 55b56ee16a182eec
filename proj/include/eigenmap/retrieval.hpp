#pragma once

// Downstream evaluation: truncated codes, cosine retrieval, mAP@M and
// precision@M, linear probes, and ordered-vs-random truncation curves.

#include "eigenmap/autodiff.hpp"
#include "eigenmap/optim.hpp"
#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace eigenmap {

enum class TruncationMode { Prefix, Random };

inline const char* truncation_mode_name(TruncationMode m) { return m == TruncationMode::Prefix ? "prefix" : "random"; }

/// Rows scaled to unit L2 norm; all-zero rows stay zero.
inline Tensor normalize_rows(Tensor t) {
    t.require_matrix("normalize_rows");
    for (std::size_t i = 0; i < t.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.cols(); ++j) s += t(i, j) * t(i, j);
        if (s <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) *= inv;
    }
    return t;
}

/// Dimensions kept by a truncation; random subsets are sorted ascending.
inline std::vector<std::size_t> truncation_dims(std::size_t k, std::size_t m, TruncationMode mode, std::uint64_t seed) {
    if (m < 1 || m > k)
        throw Error("truncate_codes: m=" + std::to_string(m) + " out of range [1, " + std::to_string(k) + "]");
    std::vector<std::size_t> dims(k);
    std::iota(dims.begin(), dims.end(), std::size_t{0});
    if (mode == TruncationMode::Random) {
        Rng rng = make_stream(seed, "truncate");
        std::shuffle(dims.begin(), dims.end(), rng);
        dims.resize(m);
        std::sort(dims.begin(), dims.end());
    } else {
        dims.resize(m);
    }
    return dims;
}

inline Tensor truncate_codes(const Tensor& reps, std::size_t m, TruncationMode mode, std::uint64_t seed = 0) {
    reps.require_matrix("truncate_codes");
    return normalize_rows(gather_cols(reps, truncation_dims(reps.cols(), m, mode, seed)));
}

using LabelSet = std::vector<int>;

inline std::vector<LabelSet> single_labels(const std::vector<int>& labels) {
    std::vector<LabelSet> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back({l});
    return out;
}

inline bool labels_overlap(const LabelSet& a, const LabelSet& b) {
    for (int x : a)
        if (std::find(b.begin(), b.end(), x) != b.end()) return true;
    return false;
}

struct RetrievalIndex {
    Tensor codes;                  // N x m, unit rows
    std::vector<std::size_t> ids;  // item id per row
    std::vector<LabelSet> labels;

    static RetrievalIndex build(const Tensor& codes, std::vector<LabelSet> labels, std::vector<std::size_t> ids = {}) {
        codes.require_matrix("RetrievalIndex");
        if (codes.cols() < 1) throw Error("RetrievalIndex: code width must be at least 1");
        if (labels.size() != codes.rows()) throw Error("RetrievalIndex: label count does not match item count");
        if (ids.empty()) {
            ids.resize(codes.rows());
            std::iota(ids.begin(), ids.end(), std::size_t{0});
        }
        if (ids.size() != codes.rows()) throw Error("RetrievalIndex: id count does not match item count");
        return RetrievalIndex{normalize_rows(codes), std::move(ids), std::move(labels)};
    }

    std::size_t size() const { return codes.rows(); }
};

/// Top-M item ids per query by cosine similarity; ties go to the smaller id.
inline std::vector<std::vector<std::size_t>> retrieve(const RetrievalIndex& index, const Tensor& queries, std::size_t M) {
    queries.require_matrix("retrieve");
    if (queries.cols() != index.codes.cols())
        throw ShapeError("retrieve: query width " + std::to_string(queries.cols()) + " differs from index width " +
                         std::to_string(index.codes.cols()));
    if (M > index.size())
        throw Error("retrieve: M=" + std::to_string(M) + " exceeds index size " + std::to_string(index.size()));
    const Tensor q = normalize_rows(queries);
    const Tensor sim = matmul_nt(q, index.codes);  // Q x N
    std::vector<std::vector<std::size_t>> out(q.rows());
    std::vector<std::size_t> order(index.size());
    for (std::size_t r = 0; r < q.rows(); ++r) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto better = [&](std::size_t a, std::size_t b) {
            const double sa = sim(r, a), sb = sim(r, b);
            if (sa != sb) return sa > sb;
            return index.ids[a] < index.ids[b];
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(M), order.end(), better);
        out[r].reserve(M);
        for (std::size_t i = 0; i < M; ++i) out[r].push_back(index.ids[order[i]]);
    }
    return out;
}

struct RetrievalMetrics {
    double map = 0.0;
    double precision = 0.0;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;  // queries with no relevant item in the index
};

/// Average precision of one relevance pattern, truncated at its length.
inline double average_precision(const std::vector<bool>& relevant) {
    double hits = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < relevant.size(); ++i)
        if (relevant[i]) {
            hits += 1.0;
            sum += hits / static_cast<double>(i + 1);
        }
    return hits > 0.0 ? sum / hits : 0.0;
}

/// mAP@M and precision@M. Relevance is label overlap between the query and
/// the retrieved item.
inline RetrievalMetrics evaluate_map_precision(const std::vector<std::vector<std::size_t>>& ranked,
                                               const std::vector<LabelSet>& query_labels, const RetrievalIndex& index,
                                               std::size_t M) {
    if (ranked.size() != query_labels.size()) throw Error("evaluate_map_precision: query label count mismatch");
    std::map<std::size_t, std::size_t> row_of;
    for (std::size_t i = 0; i < index.ids.size(); ++i) row_of[index.ids[i]] = i;
    RetrievalMetrics m;
    for (std::size_t q = 0; q < ranked.size(); ++q) {
        bool any = false;
        for (const LabelSet& l : index.labels)
            if (labels_overlap(query_labels[q], l)) {
                any = true;
                break;
            }
        if (!any) {
            ++m.excluded;
            continue;
        }
        std::vector<bool> rel;
        for (std::size_t i = 0; i < std::min(M, ranked[q].size()); ++i)
            rel.push_back(labels_overlap(query_labels[q], index.labels.at(row_of.at(ranked[q][i]))));
        m.map += average_precision(rel);
        m.precision += static_cast<double>(std::count(rel.begin(), rel.end(), true)) / static_cast<double>(M);
        ++m.evaluated;
    }
    if (m.evaluated > 0) {
        m.map /= static_cast<double>(m.evaluated);
        m.precision /= static_cast<double>(m.evaluated);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

/// Multinomial logistic regression on frozen features (standardized with
/// training-split statistics); returns test accuracy.
inline double linear_probe(const Tensor& train_x, const std::vector<int>& train_y, const Tensor& test_x,
                           const std::vector<int>& test_y, const ProbeConfig& cfg = {}) {
    train_x.require_matrix("linear_probe");
    test_x.require_matrix("linear_probe");
    if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size())
        throw Error("linear_probe: label count does not match representation rows");
    if (train_x.cols() != test_x.cols()) throw ShapeError("linear_probe: train and test widths differ");
    if (test_x.rows() == 0) throw Error("linear_probe: empty test split");
    const std::set<int> classes(train_y.begin(), train_y.end());
    if (classes.size() < 2) throw Error("linear_probe: training split has a single class");
    for (int y : train_y)
        if (y < 0) throw Error("linear_probe: labels must be non-negative");
    const std::size_t C = static_cast<std::size_t>(*classes.rbegin()) + 1;
    const std::size_t d = train_x.cols(), n = train_x.rows();

    std::vector<double> mean(d, 0.0), inv_sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += train_x(i, j) / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += std::pow(train_x(i, j) - mean[j], 2);
        const double sd = std::sqrt(v / static_cast<double>(n));
        inv_sd[j] = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    auto standardize = [&](const Tensor& x) {
        Tensor z = x;
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) z(i, j) = (z(i, j) - mean[j]) * inv_sd[j];
        return z;
    };
    const Tensor xs = standardize(train_x);

    Tensor W = Tensor::matrix(d, C), b = Tensor::matrix(1, C);
    std::vector<ParamRef> params = {{&W, "probe.weight", false}, {&b, "probe.bias", true}};
    OptimizerConfig oc;
    oc.kind = OptimizerKind::SgdMomentum;
    oc.momentum = cfg.momentum;
    oc.weight_decay = cfg.weight_decay;
    Optimizer opt(oc);
    Rng rng = make_stream(cfg.seed, "probe");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const std::size_t bs = std::min(cfg.batch_size, n);
    const std::size_t per_epoch = (n + bs - 1) / bs;
    const std::size_t total = per_epoch * cfg.epochs;
    std::size_t step = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t s = 0; s < n; s += bs, ++step) {
            std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(s),
                                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + bs)));
            std::vector<std::size_t> yb;
            for (std::size_t i : idx) yb.push_back(static_cast<std::size_t>(train_y[i]));
            Tape tape;
            NodeId w = tape.parameter(W), bias = tape.parameter(b);
            NodeId logits = tape.add(tape.matmul(tape.constant(gather_rows(xs, idx)), w), bias);
            const Gradients g = tape.backward(tape.softmax_cross_entropy(logits, yb));
            opt.step(params, {g.at(w), g.at(bias)}, scheduled_lr(cfg.lr, Schedule::Cosine, step, total));
        }
    }
    const Tensor logits = matmul(standardize(test_x), W);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_x.rows(); ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (logits(i, c) + b[c] > logits(i, arg) + b[arg]) arg = c;
        correct += static_cast<int>(arg) == test_y[i];
    }
    return static_cast<double>(correct) / static_cast<double>(test_x.rows());
}

// ---------------------------------------------------------------------------
// Truncation curves

struct TruncationCurve {
    std::string mode;                  // "prefix" or "random"
    std::string metric;                // e.g. "precision@10"
    std::vector<std::size_t> lengths;  // strictly increasing
    std::vector<std::vector<double>> runs;  // runs x lengths

    double mean(std::size_t li) const {
        double s = 0.0;
        for (const auto& r : runs) s += r.at(li);
        return s / static_cast<double>(runs.size());
    }
    double stddev(std::size_t li) const {
        if (runs.size() < 2) return 0.0;
        const double mu = mean(li);
        double s = 0.0;
        for (const auto& r : runs) s += (r.at(li) - mu) * (r.at(li) - mu);
        return std::sqrt(s / static_cast<double>(runs.size() - 1));
    }
};

struct SweepInput {
    Tensor index_reps;  // N x k
    Tensor query_reps;  // Q x k
};

/// Precision@M and mAP@M curves for one representation set under one
/// truncation mode. Random mode averages `runs` subsets seeded from `seed`.
inline std::vector<TruncationCurve> truncation_sweep(const SweepInput& in, const std::vector<LabelSet>& index_labels,
                                                     const std::vector<LabelSet>& query_labels,
                                                     const std::vector<std::size_t>& lengths, TruncationMode mode,
                                                     std::size_t M, std::size_t runs = 10, std::uint64_t seed = 0) {
    for (std::size_t i = 1; i < lengths.size(); ++i)
        if (lengths[i] <= lengths[i - 1]) throw Error("truncation_sweep: lengths must be strictly increasing");
    if (in.index_reps.cols() != in.query_reps.cols()) throw ShapeError("truncation_sweep: index and query widths differ");
    const std::size_t nruns = mode == TruncationMode::Prefix ? 1 : runs;
    const std::string suffix = "@" + std::to_string(M);
    TruncationCurve prec{truncation_mode_name(mode), "precision" + suffix, lengths, {}};
    TruncationCurve map{truncation_mode_name(mode), "map" + suffix, lengths, {}};
    for (std::size_t r = 0; r < nruns; ++r) {
        std::vector<double> pv, mv;
        for (std::size_t m : lengths) {
            const auto dims = truncation_dims(in.index_reps.cols(), m, mode, seed + r);
            const RetrievalIndex idx = RetrievalIndex::build(gather_cols(in.index_reps, dims), index_labels);
            const auto ranked = retrieve(idx, gather_cols(in.query_reps, dims), M);
            const RetrievalMetrics met = evaluate_map_precision(ranked, query_labels, idx, M);
            pv.push_back(met.precision);
            mv.push_back(met.map);
        }
        prec.runs.push_back(pv);
        map.runs.push_back(mv);
    }
    return {prec, map};
}

/// Largest ratio m_random / m_prefix such that the prefix curve at m_prefix
/// reaches the random curve's mean at m_random. Zero when never matched.
inline double matched_length_ratio(const TruncationCurve& prefix, const TruncationCurve& random) {
    double best = 0.0;
    for (std::size_t j = 0; j < random.lengths.size(); ++j) {
        const double target = random.mean(j);
        for (std::size_t i = 0; i < prefix.lengths.size(); ++i)
            if (prefix.mean(i) >= target) {
                best = std::max(best, static_cast<double>(random.lengths[j]) / static_cast<double>(prefix.lengths[i]));
                break;
            }
    }
    return best;
}

inline void write_curves_csv(std::ostream& os, const std::vector<TruncationCurve>& curves) {
    os << "length,mode,run,metric,value\n";
    char buf[64];
    for (const auto& c : curves)
        for (std::size_t r = 0; r < c.runs.size(); ++r)
            for (std::size_t i = 0; i < c.lengths.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", c.runs[r][i]);
                os << c.lengths[i] << ',' << c.mode << ',' << r << ',' << c.metric << ',' << buf << '\n';
            }
}

inline void write_curves_csv(const std::string& path, const std::vector<TruncationCurve>& curves) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write curves file " + path);
    write_curves_csv(os, curves);
}

inline std::vector<TruncationCurve> load_curves_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open curves file " + path);
    std::string line;
    if (!std::getline(in, line) || line != "length,mode,run,metric,value")
        throw Error(path + ": missing curves header");
    std::vector<TruncationCurve> out;
    std::map<std::pair<std::string, std::string>, std::size_t> where;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw Error(path + ":" + std::to_string(lineno) + ": expected 5 fields");
        const std::size_t length = std::stoull(f[0]), run = std::stoull(f[2]);
        const double value = std::strtod(f[4].c_str(), nullptr);
        auto key = std::make_pair(f[1], f[3]);
        auto it = where.find(key);
        if (it == where.end()) {
            it = where.emplace(key, out.size()).first;
            out.push_back(TruncationCurve{f[1], f[3], {}, {}});
        }
        TruncationCurve& c = out[it->second];
        if (run >= c.runs.size()) c.runs.resize(run + 1);
        if (run == 0) c.lengths.push_back(length);
        c.runs[run].push_back(value);
    }
    return out;
}

/// Whitespace-separated columns (length, mean, std) per curve, blank-line
/// separated blocks with a comment title, for gnuplot's `index`.
inline void write_gnuplot_data(const std::string& path, const std::vector<TruncationCurve>& curves) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write plot data " + path);
    char buf[96];
    for (std::size_t c = 0; c < curves.size(); ++c) {
        if (c) os << "\n\n";
        os << "# " << curves[c].mode << ' ' << curves[c].metric << '\n';
        for (std::size_t i = 0; i < curves[c].lengths.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu %.10g %.10g", curves[c].lengths[i], curves[c].mean(i), curves[c].stddev(i));
            os << buf << '\n';
        }
    }
}

}  // namespace eigenmap
