#pragma once

// Kernels whose eigenfunctions the models learn: closed-form kernels on point
// sets, the augmentation-pair sampler that realizes the contrastive kernel
// implicitly, and degree-normalized graph adjacency.

#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace eigenmap {

// ---------------------------------------------------------------------------
// Analytic kernels

class AnalyticKernel {
public:
    using Fn = std::function<double(std::span<const double>, std::span<const double>)>;

    AnalyticKernel(std::string name, Fn fn, bool declared_psd, bool symmetric = true)
        : name_(std::move(name)), fn_(std::move(fn)), psd_(declared_psd), symmetric_(symmetric) {}

    double operator()(std::span<const double> x, std::span<const double> y) const { return fn_(x, y); }

    const std::string& name() const { return name_; }
    bool declared_psd() const { return psd_; }
    bool symmetric() const { return symmetric_; }

private:
    std::string name_;
    Fn fn_;
    bool psd_;
    bool symmetric_;
};

namespace detail {
inline double sq_dist(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}
inline double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}
}  // namespace detail

/// exp(-|x - y|^2 / (2 sigma^2))
inline AnalyticKernel rbf_kernel(double sigma) {
    if (!(sigma > 0.0)) throw Error("rbf_kernel: bandwidth must be positive");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    return AnalyticKernel("rbf(" + std::to_string(sigma) + ")",
                          [inv](auto x, auto y) { return std::exp(-detail::sq_dist(x, y) * inv); }, true);
}

inline AnalyticKernel linear_kernel() {
    return AnalyticKernel("linear", [](auto x, auto y) { return detail::dot(x, y); }, true);
}

/// (x.y + c)^degree, degree 2 or 3.
inline AnalyticKernel polynomial_kernel(int degree, double c = 1.0) {
    if (degree < 2 || degree > 3) throw Error("polynomial_kernel: degree must be 2 or 3");
    if (c < 0.0) throw Error("polynomial_kernel: offset must be non-negative");
    return AnalyticKernel("poly" + std::to_string(degree),
                          [degree, c](auto x, auto y) { return std::pow(detail::dot(x, y) + c, degree); }, true);
}

inline AnalyticKernel cosine_kernel() {
    return AnalyticKernel(
        "cosine",
        [](auto x, auto y) {
            const double nx = std::sqrt(detail::dot(x, x)), ny = std::sqrt(detail::dot(y, y));
            if (nx == 0.0 || ny == 0.0) return 0.0;
            return detail::dot(x, y) / (nx * ny);
        },
        true);
}

inline AnalyticKernel constant_kernel(double c = 1.0) {
    return AnalyticKernel("constant", [c](auto, auto) { return c; }, c >= 0.0);
}

/// w1 * rbf(s1) - w2 * rbf(s2). Indefinite for most parameter choices.
inline AnalyticKernel rbf_difference_kernel(double w1, double s1, double w2, double s2) {
    if (!(s1 > 0.0) || !(s2 > 0.0)) throw Error("rbf_difference_kernel: bandwidths must be positive");
    const double i1 = 1.0 / (2.0 * s1 * s1), i2 = 1.0 / (2.0 * s2 * s2);
    return AnalyticKernel("rbf_difference",
                          [=](auto x, auto y) {
                              const double d = detail::sq_dist(x, y);
                              return w1 * std::exp(-d * i1) - w2 * std::exp(-d * i2);
                          },
                          false);
}

inline std::span<const double> row_span(const Tensor& t, std::size_t r) {
    return {t.data().data() + r * t.cols(), t.cols()};
}

/// G_ij = kernel(points_i, points_j).
inline Tensor gram_matrix(const AnalyticKernel& kernel, const Tensor& points) {
    points.require_matrix("gram_matrix");
    const std::size_t n = points.rows();
    if (n == 0) throw Error("gram_matrix: need at least one point");
    Tensor g = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = kernel.symmetric() ? i : 0; j < n; ++j) {
            const double v = kernel(row_span(points, i), row_span(points, j));
            if (!std::isfinite(v))
                throw NumericError("gram_matrix: non-finite kernel value at pair (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
            g(i, j) = v;
            if (kernel.symmetric()) g(j, i) = v;
        }
    }
    return g;
}

/// K_ij = kernel(a_i, b_j).
inline Tensor cross_gram(const AnalyticKernel& kernel, const Tensor& a, const Tensor& b) {
    a.require_matrix("cross_gram");
    b.require_matrix("cross_gram");
    Tensor k = Tensor::matrix(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double v = kernel(row_span(a, i), row_span(b, j));
            if (!std::isfinite(v))
                throw NumericError("cross_gram: non-finite kernel value at pair (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
            k(i, j) = v;
        }
    return k;
}

/// Sample analogue of the diagonal Dirac shift: kernel(x, y) - mu_s [x == y].
/// On a sample of distinct points its gram matrix is G - mu_s I. Choosing
/// mu_s at or below the smallest gram eigenvalue makes it PSD while keeping
/// eigenvectors unchanged.
inline AnalyticKernel shift_kernel(const AnalyticKernel& kernel, double mu_s) {
    return AnalyticKernel(
        kernel.name() + "-shift",
        [kernel, mu_s](auto x, auto y) {
            const bool same = x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin());
            return kernel(x, y) - (same ? mu_s : 0.0);
        },
        true, kernel.symmetric());
}

inline Tensor shift_gram(Tensor g, double mu_s) {
    g.require_matrix("shift_gram");
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= mu_s;
    return g;
}

// ---------------------------------------------------------------------------
// Contrastive pair sampler

struct Augmentation {
    double noise_std = 0.0;      // additive N(0, noise_std^2) per coordinate
    double mask_prob = 0.0;      // each coordinate zeroed with this probability
    double scale_min = 1.0;      // whole view multiplied by U(scale_min, scale_max)
    double scale_max = 1.0;

    bool is_identity() const { return noise_std == 0.0 && mask_prob == 0.0 && scale_min == 1.0 && scale_max == 1.0; }
};

struct PairBatch {
    Tensor views;        // b x D
    Tensor views_plus;   // b x D
    std::vector<std::size_t> sources;  // clean row index of each pair
};

/// Draws clean points uniformly from a fixed set and produces two
/// conditionally independent augmented views of each.
class PairSampler {
public:
    PairSampler(Tensor clean, Augmentation aug, std::uint64_t seed)
        : clean_(std::move(clean)), aug_(aug), rng_(make_stream(seed, "sampler")) {
        clean_.require_matrix("PairSampler");
        if (clean_.rows() == 0) throw Error("PairSampler: empty clean set");
        if (aug_.mask_prob < 0.0 || aug_.mask_prob >= 1.0) throw Error("PairSampler: mask_prob must lie in [0, 1)");
        if (aug_.noise_std < 0.0) throw Error("PairSampler: noise_std must be non-negative");
        if (aug_.scale_min > aug_.scale_max || aug_.scale_min <= 0.0)
            throw Error("PairSampler: invalid scale range");
    }

    const Tensor& clean() const { return clean_; }
    const Augmentation& augmentation() const { return aug_; }
    std::size_t dim() const { return clean_.cols(); }

    PairBatch sample(std::size_t b) {
        if (b == 0) throw Error("sample_pairs: b must be positive");
        const std::size_t D = clean_.cols();
        PairBatch out{Tensor::matrix(b, D), Tensor::matrix(b, D), std::vector<std::size_t>(b)};
        std::uniform_int_distribution<std::size_t> pick(0, clean_.rows() - 1);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t src = pick(rng_);
            out.sources[i] = src;
            augment(src, out.views, i);
            augment(src, out.views_plus, i);
        }
        return out;
    }

private:
    Tensor clean_;
    Augmentation aug_;
    Rng rng_;

    void augment(std::size_t src, Tensor& dst, std::size_t row) {
        const std::size_t D = clean_.cols();
        const double s = aug_.scale_min == aug_.scale_max ? aug_.scale_min : uniform(rng_, aug_.scale_min, aug_.scale_max);
        for (std::size_t d = 0; d < D; ++d) {
            double v = clean_(src, d);
            if (aug_.mask_prob > 0.0 && uniform(rng_, 0.0, 1.0) < aug_.mask_prob) v = 0.0;
            if (aug_.noise_std > 0.0) v += normal(rng_, 0.0, aug_.noise_std);
            dst(row, d) = s * v;
        }
    }
};

inline std::pair<Tensor, Tensor> sample_pairs(PairSampler& sampler, std::size_t b) {
    PairBatch p = sampler.sample(b);
    return {std::move(p.views), std::move(p.views_plus)};
}

// ---------------------------------------------------------------------------
// Graphs

enum class DegreeNormalization {
    InverseSqrt,  // D^{-1/2} A D^{-1/2}
    Sqrt,         // D^{1/2} A D^{1/2}
};

struct Edge {
    std::size_t u = 0;
    std::size_t v = 0;
    double w = 1.0;
};

struct GraphStats {
    std::size_t nodes = 0;
    std::size_t undirected_edges = 0;
    std::size_t duplicates_dropped = 0;
    std::size_t self_loops_dropped = 0;
    std::size_t isolated_nodes = 0;
    double mean_degree = 0.0;
    double min_degree = 0.0;
    double max_degree = 0.0;
};

enum class Split : std::uint8_t { None = 0, Train = 1, Val = 2, Test = 3 };

/// Symmetric, non-negative adjacency stored as CSR with full-graph degrees.
/// Node features may be absent, in which case encoders treat node ids as
/// one-hot inputs.
class GraphDataset {
public:
    static GraphDataset from_edges(std::size_t n, const std::vector<Edge>& edges) {
        GraphDataset g;
        g.n_ = n;
        std::map<std::pair<std::size_t, std::size_t>, double> uniq;
        for (const Edge& e : edges) {
            if (e.u >= n || e.v >= n)
                throw Error("graph: edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ") out of range for " +
                            std::to_string(n) + " nodes");
            if (!(e.w >= 0.0) || !std::isfinite(e.w)) throw Error("graph: negative or non-finite edge weight");
            if (e.u == e.v) {
                ++g.stats_.self_loops_dropped;
                continue;
            }
            auto key = std::minmax(e.u, e.v);
            if (!uniq.emplace(std::pair{key.first, key.second}, e.w).second) ++g.stats_.duplicates_dropped;
        }
        std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
        for (const auto& [key, w] : uniq) {
            adj[key.first].emplace_back(key.second, w);
            adj[key.second].emplace_back(key.first, w);
        }
        g.row_ptr_.assign(n + 1, 0);
        g.degree_.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::sort(adj[i].begin(), adj[i].end());
            g.row_ptr_[i + 1] = g.row_ptr_[i] + adj[i].size();
            for (const auto& [j, w] : adj[i]) {
                g.col_.push_back(j);
                g.weight_.push_back(w);
                g.degree_[i] += w;
            }
        }
        g.stats_.nodes = n;
        g.stats_.undirected_edges = uniq.size();
        if (n > 0) {
            g.stats_.min_degree = *std::min_element(g.degree_.begin(), g.degree_.end());
            g.stats_.max_degree = *std::max_element(g.degree_.begin(), g.degree_.end());
            double s = 0.0;
            for (double d : g.degree_) s += d;
            g.stats_.mean_degree = s / static_cast<double>(n);
        }
        g.stats_.isolated_nodes = g.isolated_nodes().size();
        return g;
    }

    std::size_t num_nodes() const { return n_; }
    const std::vector<double>& degrees() const { return degree_; }
    const GraphStats& stats() const { return stats_; }

    std::span<const std::size_t> neighbors(std::size_t u) const {
        return {col_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
    }
    std::span<const double> neighbor_weights(std::size_t u) const {
        return {weight_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
    }

    /// A_uv, zero when absent.
    double weight(std::size_t u, std::size_t v) const {
        auto nb = neighbors(u);
        auto it = std::lower_bound(nb.begin(), nb.end(), v);
        if (it == nb.end() || *it != v) return 0.0;
        return neighbor_weights(u)[static_cast<std::size_t>(it - nb.begin())];
    }

    std::vector<std::size_t> isolated_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n_; ++i)
            if (degree_[i] <= 0.0) out.push_back(i);
        return out;
    }

    bool has_features() const { return features_.has_value(); }
    const Tensor& features() const {
        if (!features_) throw Error("graph: no node features loaded");
        return *features_;
    }
    void set_features(Tensor x) {
        x.require_matrix("graph features");
        if (x.rows() != n_) throw Error("graph: feature rows do not match node count");
        features_ = std::move(x);
    }

    bool has_labels() const { return !labels_.empty(); }
    const std::vector<int>& labels() const { return labels_; }
    void set_labels(std::vector<int> labels) {
        if (labels.size() != n_) throw Error("graph: label count does not match node count");
        labels_ = std::move(labels);
    }

    const std::vector<Split>& splits() const { return splits_; }
    void set_splits(std::vector<Split> s) {
        if (s.size() != n_) throw Error("graph: split mask length does not match node count");
        splits_ = std::move(s);
    }

    /// Random train/val/test assignment with the given fractions (rest is test).
    void random_splits(double train_frac, double val_frac, std::uint64_t seed) {
        Rng rng = make_stream(seed, "split");
        std::vector<std::size_t> perm(n_);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        splits_.assign(n_, Split::Test);
        const auto ntr = static_cast<std::size_t>(train_frac * static_cast<double>(n_));
        const auto nva = static_cast<std::size_t>(val_frac * static_cast<double>(n_));
        for (std::size_t i = 0; i < n_; ++i)
            splits_[perm[i]] = i < ntr ? Split::Train : (i < ntr + nva ? Split::Val : Split::Test);
    }

    std::vector<std::size_t> nodes_in(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < splits_.size(); ++i)
            if (splits_[i] == s) out.push_back(i);
        return out;
    }

    /// Dense n x n normalized adjacency (for the oracle; small graphs only).
    Tensor dense_normalized(DegreeNormalization norm = DegreeNormalization::InverseSqrt) const {
        Tensor a = Tensor::matrix(n_, n_);
        for (std::size_t u = 0; u < n_; ++u) {
            auto nb = neighbors(u);
            auto w = neighbor_weights(u);
            for (std::size_t t = 0; t < nb.size(); ++t) a(u, nb[t]) = w[t] * scale(u, nb[t], norm);
        }
        return a;
    }

    double scale(std::size_t u, std::size_t v, DegreeNormalization norm) const {
        const double p = degree_[u] * degree_[v];
        return norm == DegreeNormalization::InverseSqrt ? 1.0 / std::sqrt(p) : std::sqrt(p);
    }

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_;
    std::vector<double> weight_;
    std::vector<double> degree_;
    GraphStats stats_;
    std::optional<Tensor> features_;
    std::vector<int> labels_;
    std::vector<Split> splits_;
};

/// Principal submatrix of the normalized adjacency on `nodes`, using
/// full-graph degrees.
inline Tensor normalized_adjacency_block(const GraphDataset& g, const std::vector<std::size_t>& nodes,
                                         DegreeNormalization norm = DegreeNormalization::InverseSqrt) {
    const std::size_t b = nodes.size();
    if (b < 2) throw Error("normalized_adjacency_block: need at least two nodes");
    std::vector<std::size_t> pos(g.num_nodes(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t u = nodes[i];
        if (u >= g.num_nodes()) throw Error("normalized_adjacency_block: node " + std::to_string(u) + " out of range");
        if (g.degrees()[u] <= 0.0)
            throw Error("normalized_adjacency_block: node " + std::to_string(u) + " has zero degree");
        pos[u] = i;
    }
    Tensor out = Tensor::matrix(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t u = nodes[i];
        auto nb = g.neighbors(u);
        auto w = g.neighbor_weights(u);
        for (std::size_t t = 0; t < nb.size(); ++t) {
            const std::size_t j = pos[nb[t]];
            if (j == static_cast<std::size_t>(-1)) continue;
            out(i, j) = w[t] * g.scale(u, nb[t], norm);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats

struct PointSet {
    Tensor points;
    std::vector<int> labels;  // empty when no label column
};

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}
inline bool parse_double(const std::string& s, double& v) {
    std::size_t pos = 0;
    try {
        v = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
}
}  // namespace detail

/// CSV, one row per point. A first row with any non-numeric field is taken
/// as a header. `label_column` < 0 means no labels; otherwise that column is
/// read as an integer label and excluded from the coordinates.
inline PointSet load_points_csv(const std::string& path, int label_column = -1) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open point file " + path);
    PointSet ps;
    std::vector<double> data;
    std::size_t dim = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv(line);
        std::vector<double> vals(fields.size());
        bool numeric = true;
        for (std::size_t i = 0; i < fields.size(); ++i) numeric = numeric && detail::parse_double(fields[i], vals[i]);
        if (!numeric) {
            if (rows == 0 && lineno == 1) continue;
            throw Error(path + ":" + std::to_string(lineno) + ": non-numeric field");
        }
        if (label_column >= 0 && static_cast<std::size_t>(label_column) >= vals.size())
            throw Error(path + ":" + std::to_string(lineno) + ": label column out of range");
        const std::size_t d = vals.size() - (label_column >= 0 ? 1 : 0);
        if (rows == 0) dim = d;
        if (d != dim) throw Error(path + ":" + std::to_string(lineno) + ": inconsistent column count");
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (label_column >= 0 && i == static_cast<std::size_t>(label_column))
                ps.labels.push_back(static_cast<int>(std::lround(vals[i])));
            else
                data.push_back(vals[i]);
        }
        ++rows;
    }
    ps.points = Tensor(Shape{rows, dim}, std::move(data));
    return ps;
}

inline void save_points_csv(const std::string& path, const Tensor& points, const std::vector<int>& labels = {}) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    for (std::size_t j = 0; j < points.cols(); ++j) out << (j ? "," : "") << "x" << j;
    if (!labels.empty()) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < points.rows(); ++i) {
        for (std::size_t j = 0; j < points.cols(); ++j) out << (j ? "," : "") << points(i, j);
        if (!labels.empty()) out << ',' << labels[i];
        out << '\n';
    }
}

/// Whitespace-separated `u v [w]`, 0-indexed; '#' starts a comment. Node count
/// is max index + 1 unless `num_nodes` is larger.
inline GraphDataset load_edge_list(const std::string& path, std::size_t num_nodes = 0) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open edge list " + path);
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream is(line);
        long long u = 0, v = 0;
        if (!(is >> u)) continue;
        if (!(is >> v) || u < 0 || v < 0) throw Error(path + ":" + std::to_string(lineno) + ": malformed edge");
        double w = 1.0;
        if (!(is >> w)) w = 1.0;
        edges.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v), w});
        num_nodes = std::max(num_nodes, static_cast<std::size_t>(std::max(u, v)) + 1);
    }
    return GraphDataset::from_edges(num_nodes, edges);
}

inline void save_edge_list(const std::string& path, const GraphDataset& g) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    for (std::size_t u = 0; u < g.num_nodes(); ++u) {
        auto nb = g.neighbors(u);
        auto w = g.neighbor_weights(u);
        for (std::size_t t = 0; t < nb.size(); ++t) {
            if (nb[t] < u) continue;
            out << u << ' ' << nb[t];
            if (w[t] != 1.0) out << ' ' << w[t];
            out << '\n';
        }
    }
}

/// One integer label per line (or CSV with the label in the last column).
inline std::vector<int> load_labels(const std::string& path) {
    PointSet ps = load_points_csv(path, -1);
    std::vector<int> out;
    for (std::size_t i = 0; i < ps.points.rows(); ++i)
        out.push_back(static_cast<int>(std::lround(ps.points(i, ps.points.cols() - 1))));
    return out;
}

}  // namespace eigenmap
