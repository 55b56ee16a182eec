#include "eigenmap/spectral_oracle.hpp"
#include "eigenmap/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace eigenmap;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor line_points(std::size_t n, std::uint64_t seed) {
    Rng rng = make_stream(seed, "test");
    Tensor t = Tensor::matrix(n, 1);
    for (double& v : t.data()) v = uniform(rng, -1.0, 1.0);
    return t;
}

ModelSpec small_spec(std::size_t k, std::uint64_t seed = 2) {
    ModelSpec s;
    s.input_dim = 1;
    s.encoder.widths = {16, k};
    s.k = k;
    s.seed = seed;
    return s;
}

ObjectiveConfig objective(std::size_t k, double alpha = 10.0) {
    ObjectiveConfig o;
    o.k = k;
    o.alpha = alpha;
    return o;
}

TrainConfig adam(double lr, std::size_t epochs) {
    TrainConfig tc;
    tc.optimizer.kind = OptimizerKind::Adam;
    tc.lr = lr;
    tc.epochs = epochs;
    return tc;
}

}  // namespace

// -- node batch sampler -------------------------------------------------------

TEST(NodeSampler, FullBatchHoldsEveryNode) {
    NodeBatchSampler s(12, 12, 3);
    const auto ep = s.epoch();
    ASSERT_EQ(ep.size(), 1u);
    auto b = ep[0];
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(b[i], i);
}

TEST(NodeSampler, EpochCoversEachNodeOnceAndDropsRaggedBatch) {
    NodeBatchSampler s(10, 3, 4);
    for (int e = 0; e < 3; ++e) {
        const auto ep = s.epoch();
        ASSERT_EQ(ep.size(), 3u);
        std::vector<std::size_t> seen;
        for (const auto& b : ep) {
            EXPECT_EQ(b.size(), 3u);
            seen.insert(seen.end(), b.begin(), b.end());
        }
        std::sort(seen.begin(), seen.end());
        EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());  // no repeats
    }
}

TEST(NodeSampler, SeedsPermuteTheSameMultiset) {
    NodeBatchSampler a(50, 50, 1), b(50, 50, 2);
    auto ea = a.epoch()[0], eb = b.epoch()[0];
    EXPECT_NE(ea, eb);
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    EXPECT_EQ(ea, eb);
}

TEST(NodeSampler, ReshufflesEachEpoch) {
    NodeBatchSampler s(40, 40, 5);
    EXPECT_NE(s.epoch()[0], s.epoch()[0]);
}

TEST(NodeSampler, RestrictedNodeList) {
    NodeBatchSampler s(std::vector<std::size_t>{4, 9, 11, 20}, 2, 0);
    std::vector<std::size_t> seen;
    for (const auto& b : s.epoch()) seen.insert(seen.end(), b.begin(), b.end());
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, (std::vector<std::size_t>{4, 9, 11, 20}));
}

// -- schedule and optimizers --------------------------------------------------

TEST(Schedule, CosineEndpoints) {
    for (std::size_t total : {2u, 10u, 1000u}) {
        EXPECT_DOUBLE_EQ(scheduled_lr(0.3, Schedule::Cosine, 0, total), 0.3);
        EXPECT_LE(scheduled_lr(0.3, Schedule::Cosine, total - 1, total), 0.001 * 0.3);
        for (std::size_t s = 1; s < total; ++s)
            EXPECT_LE(scheduled_lr(0.3, Schedule::Cosine, s, total), scheduled_lr(0.3, Schedule::Cosine, s - 1, total));
    }
    EXPECT_NEAR(scheduled_lr(1.0, Schedule::Cosine, 50, 101), 0.5, 1e-15);
    EXPECT_EQ(scheduled_lr(0.3, Schedule::Constant, 99, 100), 0.3);
}

TEST(Optimizer, MomentumMatchesHandRecurrence) {
    Tensor w = Tensor::from_rows({{1.0, -2.0}});
    std::vector<ParamRef> p = {{&w, "w", false}};
    OptimizerConfig c;
    c.momentum = 0.5;
    Optimizer opt(c);
    opt.step(p, {Tensor::from_rows({{1.0, 1.0}})}, 0.1);  // v = g
    opt.step(p, {Tensor::from_rows({{2.0, 0.0}})}, 0.1);  // v = 0.5 v + g
    EXPECT_NEAR(w(0, 0), 1.0 - 0.1 * 1.0 - 0.1 * 2.5, 1e-15);
    EXPECT_NEAR(w(0, 1), -2.0 - 0.1 * 1.0 - 0.1 * 0.5, 1e-15);
}

TEST(Optimizer, WeightDecaySkipsNormalizationParameters) {
    Tensor w = Tensor::from_rows({{1.0}, {2.0}}), gamma = Tensor::from_rows({{3.0}});
    std::vector<ParamRef> p = {{&w, "w", false}, {&gamma, "gamma", true}};
    OptimizerConfig c;
    c.weight_decay = 0.1;
    for (OptimizerKind k : {OptimizerKind::SgdMomentum, OptimizerKind::Lars, OptimizerKind::Adam}) {
        c.kind = k;
        Optimizer opt(c);
        Tensor w0 = w;
        opt.step(p, {Tensor::matrix(2, 1), Tensor::matrix(1, 1)}, 0.5);
        EXPECT_EQ(gamma(0, 0), 3.0) << optimizer_name(k);
        EXPECT_LT(std::abs(w(1, 0)), std::abs(w0(1, 0))) << optimizer_name(k);
    }
}

TEST(Optimizer, LarsTrustRatioOnMatricesOnly) {
    Tensor w = Tensor::from_rows({{3.0}, {4.0}});  // ||w|| = 5
    Tensor bias = Tensor::from_rows({{1.0}});
    std::vector<ParamRef> p = {{&w, "w", false}, {&bias, "b", false}};
    OptimizerConfig c;
    c.kind = OptimizerKind::Lars;
    c.lars_trust = 0.01;
    Optimizer opt(c);
    opt.step(p, {Tensor::from_rows({{0.0}, {10.0}}), Tensor::from_rows({{2.0}})}, 1.0);
    // trust = 0.01 * 5 / 10 = 0.005, so the step is 0.005 * g.
    EXPECT_NEAR(w(0, 0), 3.0, 1e-15);
    EXPECT_NEAR(w(1, 0), 4.0 - 0.05, 1e-15);
    EXPECT_NEAR(bias(0, 0), 1.0 - 2.0, 1e-15);
}

TEST(Optimizer, GlobalNormClip) {
    Tensor a = Tensor::from_rows({{0.0}}), b = Tensor::from_rows({{0.0}});
    std::vector<ParamRef> p = {{&a, "a", false}, {&b, "b", false}};
    OptimizerConfig c;
    c.grad_clip = 1.0;
    Optimizer opt(c);
    opt.step(p, {Tensor::from_rows({{3.0}}), Tensor::from_rows({{4.0}})}, 1.0);
    EXPECT_NEAR(a(0, 0), -0.6, 1e-15);
    EXPECT_NEAR(b(0, 0), -0.8, 1e-15);
}

TEST(Optimizer, AdamFirstStepIsSignTimesLr) {
    Tensor w = Tensor::from_rows({{0.0, 0.0}});
    std::vector<ParamRef> p = {{&w, "w", false}};
    OptimizerConfig c;
    c.kind = OptimizerKind::Adam;
    Optimizer opt(c);
    opt.step(p, {Tensor::from_rows({{5.0, -0.01}})}, 0.1);
    EXPECT_NEAR(w(0, 0), -0.1, 1e-8);
    EXPECT_NEAR(w(0, 1), 0.1, 1e-5);
}

// -- training loop -------------------------------------------------------------

TEST(Train, ZeroStepsLeavesModelUnchanged) {
    EigenModel m(small_spec(2)), before(small_spec(2));
    KernelPointSource src(line_points(8, 1), rbf_kernel(0.5), 8, 1);
    TrainConfig tc = adam(0.01, 0);
    const RunLog log = train(m, src, objective(2), tc);
    EXPECT_EQ(log.steps, 0u);
    EXPECT_TRUE(log.rows.empty());
    EXPECT_TRUE(m == before);
}

TEST(Train, RejectsInconsistentSetup) {
    EigenModel m(small_spec(3));
    KernelPointSource src(line_points(8, 1), rbf_kernel(0.5), 2, 1);
    EXPECT_THROW(train(m, src, objective(2), adam(0.01, 1)), Error);  // k mismatch
    EXPECT_THROW(train(m, src, objective(3), adam(0.01, 1)), Error);  // k > b
    KernelPointSource ok(line_points(8, 1), rbf_kernel(0.5), 4, 1);
    EXPECT_THROW(train(m, ok, objective(3), adam(0.0, 1)), Error);
}

TEST(Train, RowsAreGapFreeAndDeterministic) {
    auto run = [](const fs::path& dir) {
        EigenModel m(small_spec(2));
        KernelPointSource src(line_points(32, 2), rbf_kernel(0.5), 8, 7);
        TrainConfig tc = adam(0.01, 3);
        tc.run_dir = dir;
        return std::pair{train(m, src, objective(2), tc), m};
    };
    const auto [a, ma] = run(fresh_dir("eigenmap_det_a"));
    const auto [b, mb] = run(fresh_dir("eigenmap_det_b"));
    ASSERT_EQ(a.rows.size(), 12u);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].step, i);
        EXPECT_EQ(a.rows[i].loss.total, b.rows[i].loss.total);
        EXPECT_EQ(a.rows[i].loss.per_dimension, b.rows[i].loss.per_dimension);
    }
    EXPECT_TRUE(ma == mb);
    const std::string la = slurp(fs::temp_directory_path() / "eigenmap_det_a" / "log.csv");
    EXPECT_EQ(la, slurp(fs::temp_directory_path() / "eigenmap_det_b" / "log.csv"));
    std::ostringstream os;
    a.write_csv(os);
    EXPECT_EQ(os.str(), la);
}

TEST(Train, CheckpointsAtIntervalsAndEnd) {
    const fs::path dir = fresh_dir("eigenmap_ckpts");
    EigenModel m(small_spec(2));
    KernelPointSource src(line_points(20, 3), rbf_kernel(0.5), 4, 1);
    TrainConfig tc = adam(0.01, 1);  // 5 steps
    tc.checkpoint_every = 2;
    tc.run_dir = dir;
    train(m, src, objective(2), tc);
    EXPECT_TRUE(fs::exists(dir / "ckpt_2"));
    EXPECT_TRUE(fs::exists(dir / "ckpt_4"));
    EXPECT_TRUE(fs::exists(dir / "ckpt_5"));
    EXPECT_FALSE(fs::exists(dir / "ckpt_6"));
    EXPECT_TRUE(EigenModel::load((dir / "ckpt_5").string()) == m);
    EXPECT_FALSE(EigenModel::load((dir / "ckpt_2").string()) == m);
}

namespace {

// Behaves like its inner source but produces a non-finite loss from `bad_step`.
class PoisonedSource : public BatchSource {
public:
    PoisonedSource(KernelPointSource inner, std::size_t bad_step) : inner_(std::move(inner)), bad_(bad_step) {}
    std::size_t batch_size() const override { return inner_.batch_size(); }
    std::size_t steps_per_epoch() const override { return inner_.steps_per_epoch(); }
    void begin_epoch() override { inner_.begin_epoch(); }
    LossResult step_loss(std::size_t i, EigenModel& model, const ModelBinding& binding, const ObjectiveConfig& obj,
                         Tape& tape) override {
        LossResult r = inner_.step_loss(i, model, binding, obj, tape);
        if (seen_++ >= bad_) r.loss = tape.add(r.loss, tape.sqrt(tape.constant(Tensor::scalar(-1.0))));
        return r;
    }
    double eigenvalue_rescale(const ObjectiveConfig& obj) const override { return inner_.eigenvalue_rescale(obj); }

private:
    KernelPointSource inner_;
    std::size_t bad_;
    std::size_t seen_ = 0;
};

}  // namespace

TEST(Train, NonFiniteLossAbortsWithDiagnostic) {
    EigenModel m(small_spec(2));
    PoisonedSource src(KernelPointSource(line_points(16, 4), rbf_kernel(0.5), 4, 1), 3);
    try {
        train(m, src, objective(2), adam(0.01, 2));
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.step(), 3u);
        EXPECT_GT(e.lr(), 0.0);
        ASSERT_TRUE(e.last_finite().has_value());
        EXPECT_TRUE(std::isfinite(e.last_finite()->total));
        EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos);
    }
}

TEST(Train, RankOneGramRecoversTopEigenvalue) {
    // Linear kernel on 1-d points: gram = x x^T has one nonzero eigenvalue,
    // |x|^2, i.e. mean(x^2) in operator units. A linear model reaches it.
    const Tensor x = line_points(64, 5);
    double oracle = 0.0;
    for (double v : x.data()) oracle += v * v / 64.0;
    EXPECT_NEAR(eigh(gram_matrix(linear_kernel(), x)).eigenvalues[0] / 64.0, oracle, 1e-12);

    ModelSpec s;
    s.input_dim = 1;
    s.encoder.widths = {1};
    s.k = 1;
    s.seed = 9;
    EigenModel m(s);
    KernelPointSource src(x, linear_kernel(), 64, 1);
    TrainConfig tc;
    tc.optimizer.kind = OptimizerKind::SgdMomentum;
    tc.lr = 0.05;
    tc.epochs = 2000;
    tc.schedule = Schedule::Constant;
    const RunLog log = train(m, src, objective(1, 1.0), tc);
    EXPECT_NEAR(log.rows.back().loss.diagonal_term, oracle, 0.05 * oracle);
    EXPECT_NEAR(log.eigenvalue_estimates[0], oracle, 0.05 * oracle);
}

TEST(Train, SmoothedLossTrendsDown) {
    EigenModel m(small_spec(3));
    KernelPointSource src(line_points(64, 6), rbf_kernel(0.5), 64, 1);
    const RunLog log = train(m, src, objective(3, 50.0), adam(0.003, 1600));
    const auto ema = smoothed_loss(log, 200);
    ASSERT_EQ(ema.size(), 8u);
    for (std::size_t i = 1; i < ema.size() * 3 / 4; ++i) EXPECT_LE(ema[i], ema[i - 1]) << "window " << i;
}

TEST(Train, GraphSourceSkipsIsolatedNodesAndRescales) {
    // Two disjoint triangles plus an isolated node.
    GraphDataset g = GraphDataset::from_edges(7, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
    GraphSource src(g, 6, 1);
    EXPECT_EQ(src.steps_per_epoch(), 1u);
    ObjectiveConfig o = objective(2);
    EXPECT_DOUBLE_EQ(src.eigenvalue_rescale(o), 7.0);
    o.batch_scaling = BatchScaling::OneOverB;
    EXPECT_DOUBLE_EQ(src.eigenvalue_rescale(o), 7.0 / 6.0);
}

TEST(Train, PairSourceRunsFixedStepsPerEpoch) {
    ModelSpec s = small_spec(2);
    EigenModel m(s);
    PairSource src(PairSampler(line_points(30, 7), Augmentation{0.05, 0.0, 1.0, 1.0}, 3), 16, 7);
    ObjectiveConfig o = objective(2);
    const RunLog log = train(m, src, o, adam(0.01, 2));
    EXPECT_EQ(log.rows.size(), 14u);
    EXPECT_EQ(log.rows.back().epoch, 1u);
    EXPECT_EQ(log.eigenvalue_estimates.size(), 2u);
}
