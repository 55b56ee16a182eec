#pragma once

// Exact dense ground truth for checking learned eigenfunctions.
//
// eigh() reduces a symmetric matrix to tridiagonal form with Householder
// reflections and then diagonalizes it with implicit-shift QL iterations
// (the EISPACK tred2/tql2 pair). Eigenvector columns are kept as rows of a
// scratch matrix during QL so that every Givens rotation touches contiguous
// memory.

#include "eigenmap/kernels.hpp"
#include "eigenmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace eigenmap {

struct EigenSolution {
    std::vector<double> eigenvalues;  // descending
    Tensor eigenvectors;              // n x n, column j pairs with eigenvalues[j]
    std::optional<Tensor> points;     // sample the gram was built on (for Nystrom)

    std::size_t size() const { return eigenvalues.size(); }

    /// Column j as a length-n vector.
    std::vector<double> vector(std::size_t j) const {
        std::vector<double> v(eigenvectors.rows());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = eigenvectors(i, j);
        return v;
    }

    std::size_t positive_count(double tol = 1e-10) const {
        return static_cast<std::size_t>(
            std::count_if(eigenvalues.begin(), eigenvalues.end(), [tol](double l) { return l > tol; }));
    }
};

namespace detail {

// Householder reduction to tridiagonal form. On exit `z` (row-major n x n)
// holds the orthogonal transform, d the diagonal and e the sub-diagonal
// (e[0] = 0).
inline void tridiagonalize(std::vector<double>& z, std::size_t n, std::vector<double>& d, std::vector<double>& e) {
    auto V = [&](std::size_t i, std::size_t j) -> double& { return z[i * n + j]; };
    for (std::size_t j = 0; j < n; ++j) d[j] = V(n - 1, j);

    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = V(i - 1, j);
                V(i, j) = 0.0;
                V(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                V(j, i) = f;
                g = e[j] + V(j, j) * f;
                for (std::size_t k = j + 1; k < i; ++k) {
                    g += V(k, j) * d[k];
                    e[k] += V(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k < i; ++k) V(k, j) -= (f * e[k] + g * d[k]);
                d[j] = V(i - 1, j);
                V(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        V(n - 1, i) = V(i, i);
        V(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = V(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
                for (std::size_t k = 0; k <= i; ++k) V(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = V(n - 1, j);
        V(n - 1, j) = 0.0;
    }
    V(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e). `zt` holds the eigenvector matrix
// TRANSPOSED (row j = column j of the transform) and is rotated in place.
inline void tridiagonal_ql(std::vector<double>& zt, std::size_t n, std::vector<double>& d, std::vector<double>& e) {
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    double f = 0.0, tst1 = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m == n) m = n - 1;
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > 200) throw NumericError("eigh: QL iteration failed to converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t i = m; i-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    double* zi = zt.data() + i * n;
                    double* zi1 = zt.data() + (i + 1) * n;
                    for (std::size_t k = 0; k < n; ++k) {
                        h = zi1[k];
                        zi1[k] = s * zi[k] + c * h;
                        zi[k] = c * zi[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace detail

/// Full symmetric eigendecomposition, eigenvalues descending. Each
/// eigenvector's largest-magnitude entry is made positive.
inline EigenSolution eigh(const Tensor& g, double symmetry_tol = 1e-10) {
    g.require_matrix("eigh");
    const std::size_t n = g.rows();
    if (g.cols() != n) throw ShapeError("eigh: matrix is not square, shape " + shape_str(g.shape()));
    if (n == 0) throw Error("eigh: empty matrix");
    double scale = 1.0;
    for (double v : g.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(g(i, j) - g(j, i)) > symmetry_tol * scale)
                throw Error("eigh: input not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) +
                            "), difference " + std::to_string(std::abs(g(i, j) - g(j, i))));
    if (!g.all_finite()) throw NumericError("eigh: non-finite input");

    std::vector<double> z(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) z[i * n + j] = 0.5 * (g(i, j) + g(j, i));
    std::vector<double> d(n), e(n);
    if (n == 1) {
        d[0] = z[0];
        z[0] = 1.0;
    } else {
        detail::tridiagonalize(z, n, d, e);
        std::vector<double> zt(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) zt[j * n + i] = z[i * n + j];
        detail::tridiagonal_ql(zt, n, d, e);
        z.swap(zt);  // z now holds eigenvectors as rows
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });

    EigenSolution sol;
    sol.eigenvalues.resize(n);
    sol.eigenvectors = Tensor::matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        sol.eigenvalues[j] = d[src];
        const double* row = z.data() + src * n;
        std::size_t arg = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(row[i]) > std::abs(row[arg]) + 1e-14) arg = i;
        const double sign = row[arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) sol.eigenvectors(i, j) = sign * row[i];
    }
    return sol;
}

/// Eigendecomposition of a kernel's gram matrix on `points`, retaining the
/// points for out-of-sample extension.
inline EigenSolution eigh_kernel(const AnalyticKernel& kernel, const Tensor& points) {
    EigenSolution sol = eigh(gram_matrix(kernel, points));
    sol.points = points;
    return sol;
}

/// Out-of-sample value of the j-th eigenfunction at x, normalized to unit
/// second moment over the sample: (sqrt(n) / lambda_j) sum_i k(x, x_i) v_ij.
inline double nystrom_extend(const EigenSolution& sol, const AnalyticKernel& kernel, std::span<const double> x,
                             std::size_t j) {
    if (!sol.points) throw Error("nystrom_extend: solution carries no source points");
    if (j >= sol.size()) throw Error("nystrom_extend: eigenfunction index out of range");
    const double lambda = sol.eigenvalues[j];
    if (!(lambda > 1e-10))
        throw NumericError("nystrom_extend: eigenvalue " + std::to_string(lambda) + " too small for extension");
    const Tensor& pts = *sol.points;
    if (x.size() != pts.cols()) throw ShapeError("nystrom_extend: point dimension mismatch");
    const std::size_t n = pts.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += kernel(x, row_span(pts, i)) * sol.eigenvectors(i, j);
    return std::sqrt(static_cast<double>(n)) * s / lambda;
}

// ---------------------------------------------------------------------------
// Alignment between learned and true eigenfunctions

struct AlignmentReport {
    std::vector<double> cosines;           // |cos(psi_j, phi_j)|
    std::vector<double> principal_angles;  // radians, ascending
    std::vector<double> eigenvalue_rel_errors;  // empty unless estimates given
    std::vector<double> oracle_eigenvalues;     // lambda_j / n, operator scale
    std::size_t k = 0;
    std::string warning;

    double max_angle() const {
        return principal_angles.empty() ? 0.0 : *std::max_element(principal_angles.begin(), principal_angles.end());
    }
    double max_angle_degrees() const { return max_angle() * 180.0 / std::numbers::pi; }
};

/// Orthonormal basis (n x k, columns) of the span of the given columns, via
/// modified Gram-Schmidt with one reorthogonalization pass.
inline Tensor orthonormal_columns(const Tensor& a) {
    a.require_matrix("orthonormal_columns");
    const std::size_t n = a.rows(), k = a.cols();
    Tensor q = a;
    for (std::size_t j = 0; j < k; ++j) {
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t p = 0; p < j; ++p) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += q(i, p) * q(i, j);
                for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
            }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-300) throw NumericError("orthonormal_columns: rank-deficient input");
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
    }
    return q;
}

/// Principal angles (ascending, radians) between the column spans of a and b.
inline std::vector<double> principal_angles(const Tensor& a, const Tensor& b) {
    const Tensor qa = orthonormal_columns(a);
    const Tensor qb = orthonormal_columns(b);
    const Tensor c = matmul_tn(qa, qb);  // ka x kb
    const Tensor ctc = matmul_tn(c, c);  // kb x kb, eigenvalues = sigma^2
    EigenSolution s = eigh(ctc, 1e-8);
    const std::size_t m = std::min(a.cols(), b.cols());
    std::vector<double> angles;
    for (std::size_t j = 0; j < m; ++j) {
        const double sigma = std::sqrt(std::clamp(s.eigenvalues[j], 0.0, 1.0));
        angles.push_back(std::acos(std::min(1.0, sigma)));
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

/// Compares learned features (k x n, row j = psi_j on the oracle's points)
/// with the oracle's top-k eigenvectors. Optional `estimates` are compared to
/// lambda_j / n.
inline AlignmentReport alignment(const Tensor& learned, const EigenSolution& truth, std::size_t k,
                                 const std::vector<double>& estimates = {}) {
    learned.require_matrix("alignment");
    const std::size_t n = truth.eigenvectors.rows();
    if (learned.cols() != n) throw ShapeError("alignment: learned features evaluated on a different point count");
    if (learned.rows() < k) throw ShapeError("alignment: learned features have fewer than k rows");
    AlignmentReport rep;
    const std::size_t pos = truth.positive_count();
    if (k > pos) {
        rep.warning = "k=" + std::to_string(k) + " exceeds the " + std::to_string(pos) +
                      " positive eigenvalues; report truncated";
        k = std::max<std::size_t>(pos, 1);
    }
    rep.k = k;
    const double sn = std::sqrt(static_cast<double>(n));
    Tensor lt = Tensor::matrix(n, k), tt = Tensor::matrix(n, k);
    for (std::size_t j = 0; j < k; ++j) {
        double dot = 0.0, nl = 0.0, nt = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = learned(j, i);
            const double b = sn * truth.eigenvectors(i, j);
            lt(i, j) = a;
            tt(i, j) = b;
            dot += a * b;
            nl += a * a;
            nt += b * b;
        }
        rep.cosines.push_back(nl > 0.0 && nt > 0.0 ? std::abs(dot) / std::sqrt(nl * nt) : 0.0);
        rep.oracle_eigenvalues.push_back(truth.eigenvalues[j] / static_cast<double>(n));
        if (j < estimates.size()) {
            const double t = rep.oracle_eigenvalues.back();
            rep.eigenvalue_rel_errors.push_back(std::abs(estimates[j] - t) / std::max(std::abs(t), 1e-300));
        }
    }
    rep.principal_angles = principal_angles(lt, tt);
    return rep;
}

// ---------------------------------------------------------------------------
// Nonparametric graph baseline

/// Connected components, largest first (ties by smallest node id).
inline std::vector<std::vector<std::size_t>> connected_components(const GraphDataset& g) {
    const std::size_t n = g.num_nodes();
    std::vector<int> seen(n, 0);
    std::vector<std::vector<std::size_t>> comps;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> comp;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            comp.push_back(u);
            for (std::size_t v : g.neighbors(u))
                if (!seen[v]) {
                    seen[v] = 1;
                    q.push(v);
                }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return comps;
}

struct EigenmapBaseline {
    Tensor embedding;                 // n x k, unit-norm columns
    std::vector<double> eigenvalues;  // of the normalized adjacency, descending
};

/// Classical spectral embedding: top-k eigenvectors of D^{-1/2} A D^{-1/2}
/// (equivalently the bottom-k of the normalized Laplacian). Disconnected
/// graphs are solved per component; component eigenvectors are zero-padded
/// to full length and merged by eigenvalue, ties going to larger components.
/// Isolated nodes contribute an indicator with eigenvalue 0.
inline EigenmapBaseline laplacian_eigenmap_baseline(const GraphDataset& g, std::size_t k) {
    const std::size_t n = g.num_nodes();
    if (k == 0 || k > n) throw Error("laplacian_eigenmap_baseline: k out of range");
    struct Candidate {
        double value;
        std::size_t comp;
        std::size_t rank;
    };
    const auto comps = connected_components(g);
    std::vector<EigenSolution> sols(comps.size());
    std::vector<Candidate> cands;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const auto& nodes = comps[c];
        if (nodes.size() == 1 && g.degrees()[nodes[0]] <= 0.0) {
            sols[c].eigenvalues = {0.0};
            sols[c].eigenvectors = Tensor::identity(1);
        } else {
            sols[c] = eigh(normalized_adjacency_block(g, nodes));
        }
        for (std::size_t r = 0; r < std::min(k, nodes.size()); ++r) cands.push_back({sols[c].eigenvalues[r], c, r});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (std::abs(a.value - b.value) > 1e-12) return a.value > b.value;
        if (a.comp != b.comp) return a.comp < b.comp;  // components are sorted by size
        return a.rank < b.rank;
    });
    EigenmapBaseline out{Tensor::matrix(n, k), {}};
    for (std::size_t j = 0; j < k; ++j) {
        const Candidate& c = cands[j];
        const auto& nodes = comps[c.comp];
        for (std::size_t i = 0; i < nodes.size(); ++i) out.embedding(nodes[i], j) = sols[c.comp].eigenvectors(i, c.rank);
        out.eigenvalues.push_back(c.value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_eigenvalues_csv(const std::string& path, const EigenSolution& sol) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out.precision(17);
    out << "index,eigenvalue\n";
    for (std::size_t j = 0; j < sol.size(); ++j) out << j << ',' << sol.eigenvalues[j] << '\n';
}

/// Binary tensor dump: magic "EMTN", u32 rank, u64 dims, then f64 data (host
/// byte order).
inline void write_tensor_binary(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write("EMTN", 4);
    const auto rank = static_cast<std::uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), sizeof rank);
    for (std::size_t d : t.shape()) {
        const auto v = static_cast<std::uint64_t>(d);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor read_tensor_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "EMTN") throw Error(path + ": not a tensor dump");
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof rank);
    Shape shape(rank);
    for (auto& d : shape) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        d = static_cast<std::size_t>(v);
    }
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw Error(path + ": truncated tensor dump");
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace eigenmap
