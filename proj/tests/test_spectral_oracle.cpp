#include "eigenmap/spectral_oracle.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace eigenmap;

namespace {

Tensor random_symmetric(std::uint64_t seed, std::size_t n) {
    Rng rng = make_stream(seed, "test");
    Tensor g = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) g(i, j) = g(j, i) = uniform(rng, -1.0, 1.0);
    return g;
}

double reconstruction_error(const Tensor& g, const EigenSolution& s) {
    const std::size_t n = g.rows();
    Tensor r = g;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p) acc += s.eigenvectors(i, p) * s.eigenvalues[p] * s.eigenvectors(j, p);
            r(i, j) -= acc;
        }
    return frobenius_norm(r) / frobenius_norm(g);
}

double orthonormality_error(const EigenSolution& s) {
    const Tensor vtv = matmul_tn(s.eigenvectors, s.eigenvectors);
    return max_abs_diff(vtv, Tensor::identity(vtv.rows()));
}

Tensor grid(std::size_t n, double lo, double hi) {
    Tensor t = Tensor::matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) t(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return t;
}

}  // namespace

TEST(Eigh, DiagonalMatrix) {
    const EigenSolution s = eigh(Tensor::from_rows({{1, 0, 0}, {0, 3, 0}, {0, 0, -2}}));
    EXPECT_EQ(s.eigenvalues, (std::vector<double>{3, 1, -2}));
    EXPECT_EQ(s.vector(0), (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(s.vector(1), (std::vector<double>{1, 0, 0}));
    EXPECT_EQ(s.vector(2), (std::vector<double>{0, 0, 1}));
}

TEST(Eigh, OnesMatrix) {
    const EigenSolution s = eigh(Tensor::matrix(2, 2, 1.0));
    EXPECT_NEAR(s.eigenvalues[0], 2.0, 1e-15);
    EXPECT_NEAR(s.eigenvalues[1], 0.0, 1e-15);
    EXPECT_NEAR(s.eigenvectors(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(s.eigenvectors(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Eigh, TwoByTwoMatchesQuadraticRoots) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor g = random_symmetric(seed, 2);
        const double a = g(0, 0), b = g(0, 1), d = g(1, 1);
        const double mid = 0.5 * (a + d), rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
        const EigenSolution s = eigh(g);
        EXPECT_NEAR(s.eigenvalues[0], mid + rad, 1e-10);
        EXPECT_NEAR(s.eigenvalues[1], mid - rad, 1e-10);
    }
}

TEST(Eigh, CirculantMatchesFourierEigenvalues) {
    const std::size_t n = 9;
    const std::vector<double> c = {2.0, 0.7, -0.3, 0.1, 0.05, 0.05, 0.1, -0.3, 0.7};  // symmetric first row
    Tensor g = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) = c[(j + n - i) % n];
    std::vector<double> expect;
    for (std::size_t m = 0; m < n; ++m) {
        double v = 0.0;
        for (std::size_t t = 0; t < n; ++t) v += c[t] * std::cos(2.0 * std::numbers::pi * double(m * t) / double(n));
        expect.push_back(v);
    }
    std::sort(expect.rbegin(), expect.rend());
    const EigenSolution s = eigh(g);
    for (std::size_t m = 0; m < n; ++m) EXPECT_NEAR(s.eigenvalues[m], expect[m], 1e-10);
}

TEST(Eigh, RandomSymmetricSelfConsistency) {
    for (std::size_t n : {1u, 3u, 50u, 200u}) {
        const Tensor g = random_symmetric(n, n);
        const EigenSolution s = eigh(g);
        EXPECT_LE(reconstruction_error(g, s), 1e-8) << n;
        EXPECT_LE(orthonormality_error(s), 1e-10) << n;
        EXPECT_TRUE(std::is_sorted(s.eigenvalues.rbegin(), s.eigenvalues.rend()));
    }
}

TEST(Eigh, AgreesWithEigenLibrary) {
    const std::size_t n = 60;
    const Tensor g = random_symmetric(11, n);
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(Eigen::Index(i), Eigen::Index(j)) = g(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(m);
    const EigenSolution s = eigh(g);
    for (std::size_t j = 0; j < n; ++j) {
        const Eigen::Index r = Eigen::Index(n - 1 - j);  // ascending in Eigen
        EXPECT_NEAR(s.eigenvalues[j], ref.eigenvalues()(r), 1e-10);
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += s.eigenvectors(i, j) * ref.eigenvectors()(Eigen::Index(i), r);
        EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
    }
}

TEST(Eigh, SignConventionLargestEntryPositive) {
    const EigenSolution s = eigh(random_symmetric(12, 30));
    for (std::size_t j = 0; j < 30; ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < 30; ++i)
            if (std::abs(s.eigenvectors(i, j)) > std::abs(s.eigenvectors(arg, j))) arg = i;
        EXPECT_GT(s.eigenvectors(arg, j), 0.0);
    }
}

TEST(Eigh, RejectsAsymmetricInput) {
    EXPECT_THROW(eigh(Tensor::from_rows({{1, 2}, {0, 1}})), Error);
}

TEST(Nystrom, TrainingPointsReproduceScaledEigenvectors) {
    const Tensor pts = grid(40, -1.0, 1.0);
    const auto k = rbf_kernel(0.5);
    const EigenSolution s = eigh_kernel(k, pts);
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t i = 0; i < 40; ++i)
            EXPECT_NEAR(nystrom_extend(s, k, row_span(pts, i), j), std::sqrt(40.0) * s.eigenvectors(i, j), 1e-10);
}

TEST(Nystrom, ConstantKernelExtendsToOne) {
    const Tensor pts = grid(10, 0.0, 1.0);
    const auto k = constant_kernel(1.0);
    const EigenSolution s = eigh_kernel(k, pts);
    const std::vector<double> x = {7.5};
    EXPECT_NEAR(std::abs(nystrom_extend(s, k, x, 0)), 1.0, 1e-12);
    EXPECT_THROW(nystrom_extend(s, k, x, 1), NumericError);
}

TEST(Nystrom, MidpointMatchesEnlargedGram) {
    const std::size_t n = 201;
    const Tensor pts = grid(n, -1.0, 1.0);
    const auto k = rbf_kernel(0.5);
    const EigenSolution s = eigh_kernel(k, pts);
    // Enlarged sample: original grid plus the midpoint between points 60 and 61.
    Tensor big = Tensor::matrix(n + 1, 1);
    for (std::size_t i = 0; i < n; ++i) big(i, 0) = pts(i, 0);
    const double mid = 0.5 * (pts(60, 0) + pts(61, 0));
    big(n, 0) = mid;
    const EigenSolution e = eigh_kernel(k, big);
    for (std::size_t j = 0; j < 3; ++j) {
        const double ext = nystrom_extend(s, k, std::vector<double>{mid}, j);
        // Align sign by a shared training point.
        const double sign = (s.eigenvectors(5, j) * e.eigenvectors(5, j)) >= 0 ? 1.0 : -1.0;
        const double ref = sign * std::sqrt(double(n + 1)) * e.eigenvectors(n, j);
        EXPECT_NEAR(ext, ref, 0.05 * std::abs(ref)) << j;
        EXPECT_GT(std::abs(ref), 0.1) << j;  // keep away from zero crossings
    }
}

TEST(Alignment, IdenticalIsPerfect) {
    const std::size_t n = 30, k = 4;
    const EigenSolution s = eigh(gram_matrix(rbf_kernel(0.5), grid(n, -1, 1)));
    Tensor learned = Tensor::matrix(k, n);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) learned(j, i) = std::sqrt(double(n)) * s.eigenvectors(i, j);
    const AlignmentReport r = alignment(learned, s, k);
    for (double c : r.cosines) EXPECT_NEAR(c, 1.0, 1e-12);
    EXPECT_LT(r.max_angle(), 1e-6);
}

TEST(Alignment, SwappedDimensionsKeepSubspace) {
    const std::size_t n = 30, k = 3;
    const EigenSolution s = eigh(gram_matrix(rbf_kernel(0.5), grid(n, -1, 1)));
    Tensor learned = Tensor::matrix(k, n);
    const std::size_t src[3] = {1, 0, 2};
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) learned(j, i) = -2.0 * s.eigenvectors(i, src[j]);
    const AlignmentReport r = alignment(learned, s, k);
    EXPECT_LT(r.cosines[0], 1e-10);
    EXPECT_LT(r.cosines[1], 1e-10);
    EXPECT_NEAR(r.cosines[2], 1.0, 1e-12);
    EXPECT_LT(r.max_angle(), 1e-6);
}

TEST(Alignment, SignFlipInvariant) {
    const std::size_t n = 25, k = 3;
    const EigenSolution s = eigh(gram_matrix(rbf_kernel(0.5), grid(n, -1, 1)));
    Rng rng = make_stream(3, "test");
    Tensor learned = Tensor::matrix(k, n);
    for (double& v : learned.data()) v = normal(rng, 0, 1);
    Tensor flipped = learned;
    for (std::size_t i = 0; i < n; ++i) flipped(1, i) = -flipped(1, i);
    const AlignmentReport a = alignment(learned, s, k), b = alignment(flipped, s, k);
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(a.cosines[j], b.cosines[j], 1e-14);
    EXPECT_NEAR(a.max_angle(), b.max_angle(), 1e-10);
}

TEST(Alignment, RandomFeaturesHaveSmallCosines) {
    const std::size_t n = 400, k = 3;
    const EigenSolution s = eigh(gram_matrix(rbf_kernel(0.5), grid(n, -1, 1)));
    Rng rng = make_stream(4, "test");
    double mean = 0.0;
    for (int t = 0; t < 20; ++t) {
        Tensor learned = Tensor::matrix(k, n);
        for (double& v : learned.data()) v = normal(rng, 0, 1);
        const AlignmentReport r = alignment(learned, s, k);
        for (double c : r.cosines) {
            EXPECT_GE(c, 0.0);
            EXPECT_LE(c, 1.0);
            mean += c;
        }
        for (double a : r.principal_angles) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, std::numbers::pi / 2 + 1e-12);
        }
    }
    mean /= 60.0;
    EXPECT_LT(mean, 3.0 / std::sqrt(double(n)));  // E|cos| ~ sqrt(2/(pi n))
}

TEST(Alignment, TruncatesWhenSpectrumTooShort) {
    const EigenSolution s = eigh(Tensor::from_rows({{2, 0, 0}, {0, -1, 0}, {0, 0, -1}}));
    const AlignmentReport r = alignment(Tensor::matrix(3, 3, 1.0), s, 3);
    EXPECT_EQ(r.k, 1u);
    EXPECT_FALSE(r.warning.empty());
}

TEST(Baseline, TwoDisjointEdgesGiveComponentIndicators) {
    const GraphDataset g = GraphDataset::from_edges(4, {{0, 1, 1.0}, {2, 3, 1.0}});
    const EigenmapBaseline b = laplacian_eigenmap_baseline(g, 2);
    EXPECT_NEAR(b.eigenvalues[0], 1.0, 1e-12);
    EXPECT_NEAR(b.eigenvalues[1], 1.0, 1e-12);
    for (std::size_t j = 0; j < 2; ++j) {
        const double a = std::abs(b.embedding(0, j)), c = std::abs(b.embedding(2, j));
        EXPECT_TRUE((a > 0.5 && c == 0.0) || (a == 0.0 && c > 0.5)) << j;
        EXPECT_NEAR(b.embedding(0, j), b.embedding(1, j), 1e-12);
        EXPECT_NEAR(b.embedding(2, j), b.embedding(3, j), 1e-12);
    }
}

TEST(Baseline, CycleFourSpectrum) {
    const GraphDataset g = GraphDataset::from_edges(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 0, 1.0}});
    const EigenmapBaseline b = laplacian_eigenmap_baseline(g, 4);
    const std::vector<double> expect = {1, 0, 0, -1};
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(b.eigenvalues[j], expect[j], 1e-12);
}

TEST(Baseline, TwoBlockSbmSecondVectorSplitsBlocks) {
    const std::size_t n = 200;
    Rng rng = make_stream(7, "test");
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (uniform(rng, 0, 1) < ((u < 100) == (v < 100) ? 0.5 : 0.05)) edges.push_back({u, v, 1.0});
    const EigenmapBaseline b = laplacian_eigenmap_baseline(GraphDataset::from_edges(n, edges), 2);
    std::size_t agree = 0;
    for (std::size_t u = 0; u < n; ++u) agree += ((b.embedding(u, 1) > 0) == (u < 100));
    EXPECT_GE(std::max(agree, n - agree), 190u);
}

TEST(Export, BinaryTensorRoundTripIsExact) {
    const Tensor t = random_symmetric(5, 7);
    const auto p = std::filesystem::temp_directory_path() / "eigenmap_oracle_tensor.bin";
    write_tensor_binary(p.string(), t);
    EXPECT_EQ(read_tensor_binary(p.string()), t);
    const auto c = std::filesystem::temp_directory_path() / "eigenmap_oracle_eigs.csv";
    write_eigenvalues_csv(c.string(), eigh(t));
    EXPECT_TRUE(std::filesystem::exists(c));
}
