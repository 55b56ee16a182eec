#pragma once

// Desk-scale synthetic datasets: labelled point clouds and labelled graphs.

#include "eigenmap/kernels.hpp"
#include "eigenmap/rng.hpp"
#include "eigenmap/tensor.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace eigenmap {

struct BlobParams {
    std::size_t n = 300;
    std::size_t classes = 3;
    std::size_t dim = 2;
    double sigma = 0.2;         // within-class standard deviation
    double center_scale = 1.0;  // centers drawn N(0, center_scale^2 I)
};

/// Isotropic Gaussian clusters; item i belongs to class i mod classes.
inline PointSet gaussian_blobs(const BlobParams& p, std::uint64_t seed) {
    if (p.n == 0 || p.classes == 0 || p.dim == 0) throw Error("gaussian_blobs: n, classes and dim must be positive");
    if (p.classes > p.n) throw Error("gaussian_blobs: more classes than points");
    if (!(p.sigma >= 0.0) || !(p.center_scale > 0.0)) throw Error("gaussian_blobs: invalid spread");
    Rng rng = make_stream(seed, "generate");
    Tensor centers = Tensor::matrix(p.classes, p.dim);
    for (double& v : centers.data()) v = normal(rng, 0.0, p.center_scale);
    PointSet out{Tensor::matrix(p.n, p.dim), std::vector<int>(p.n)};
    for (std::size_t i = 0; i < p.n; ++i) {
        const std::size_t c = i % p.classes;
        out.labels[i] = static_cast<int>(c);
        for (std::size_t d = 0; d < p.dim; ++d) out.points(i, d) = centers(c, d) + normal(rng, 0.0, p.sigma);
    }
    return out;
}

/// Two interleaved half circles with Gaussian jitter.
inline PointSet two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw Error("two_moons: need at least two points");
    if (!(noise >= 0.0)) throw Error("two_moons: noise must be non-negative");
    Rng rng = make_stream(seed, "generate");
    PointSet out{Tensor::matrix(n, 2), std::vector<int>(n)};
    const std::size_t upper = (n + 1) / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const bool top = i < upper;
        const std::size_t m = top ? upper : n - upper;
        const std::size_t r = top ? i : i - upper;
        const double t = std::numbers::pi * (m > 1 ? static_cast<double>(r) / static_cast<double>(m - 1) : 0.5);
        const double x = top ? std::cos(t) : 1.0 - std::cos(t);
        const double y = top ? std::sin(t) : 0.5 - std::sin(t);
        out.points(i, 0) = x + normal(rng, 0.0, noise);
        out.points(i, 1) = y + normal(rng, 0.0, noise);
        out.labels[i] = top ? 0 : 1;
    }
    return out;
}

struct SbmParams {
    std::size_t n = 200;
    std::size_t blocks = 2;
    double p_in = 0.5;
    double p_out = 0.05;
};

/// Stochastic block model with contiguous, near-equal blocks; labels are
/// block ids.
inline GraphDataset sbm_graph(const SbmParams& p, std::uint64_t seed) {
    if (p.n < 2 || p.blocks == 0 || p.blocks > p.n) throw Error("sbm_graph: need n >= 2 and 1 <= blocks <= n");
    if (!(p.p_in >= 0.0 && p.p_in <= 1.0) || !(p.p_out >= 0.0 && p.p_out <= 1.0))
        throw Error("sbm_graph: probabilities must lie in [0, 1]");
    Rng rng = make_stream(seed, "generate");
    std::vector<int> label(p.n);
    for (std::size_t i = 0; i < p.n; ++i) label[i] = static_cast<int>(i * p.blocks / p.n);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < p.n; ++u)
        for (std::size_t v = u + 1; v < p.n; ++v)
            if (uniform(rng, 0.0, 1.0) < (label[u] == label[v] ? p.p_in : p.p_out)) edges.push_back({u, v, 1.0});
    GraphDataset g = GraphDataset::from_edges(p.n, edges);
    g.set_labels(std::move(label));
    return g;
}

/// Ring lattice: node i links to its `reach` successors (mod n). Labels split
/// the ring into `segments` contiguous arcs.
inline GraphDataset ring_graph(std::size_t n, std::size_t reach = 1, std::size_t segments = 4) {
    if (n < 3) throw Error("ring_graph: need at least three nodes");
    if (reach == 0 || 2 * reach >= n) throw Error("ring_graph: reach must satisfy 1 <= reach < n/2");
    if (segments == 0 || segments > n) throw Error("ring_graph: segments out of range");
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t r = 1; r <= reach; ++r) edges.push_back({u, (u + r) % n, 1.0});
    GraphDataset g = GraphDataset::from_edges(n, edges);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) label[i] = static_cast<int>(i * segments / n);
    g.set_labels(std::move(label));
    return g;
}

/// n points uniform in [lo, hi]^dim.
inline Tensor uniform_points(std::size_t n, std::size_t dim, double lo, double hi, std::uint64_t seed) {
    if (n == 0 || dim == 0) throw Error("uniform_points: n and dim must be positive");
    if (!(hi > lo)) throw Error("uniform_points: need hi > lo");
    Rng rng = make_stream(seed, "generate");
    Tensor t = Tensor::matrix(n, dim);
    for (double& v : t.data()) v = uniform(rng, lo, hi);
    return t;
}

inline void save_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "label\n";
    for (int l : labels) os << l << '\n';
}

}  // namespace eigenmap
