#include "eigenmap/models.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace eigenmap;

namespace {

Tensor random_batch(std::uint64_t seed, std::size_t b, std::size_t d) {
    Rng rng = make_stream(seed, "test");
    Tensor t = Tensor::matrix(b, d);
    for (double& v : t.data()) v = uniform(rng, -1.0, 1.0);
    return t;
}

ModelSpec mlp_spec(std::size_t in, std::vector<std::size_t> widths, bool hidden_bn = false) {
    ModelSpec s;
    s.input_dim = in;
    s.encoder.widths = std::move(widths);
    s.encoder.hidden_batchnorm = hidden_bn;
    s.k = s.encoder.widths.back();
    s.seed = 3;
    return s;
}

Tensor train_forward(EigenModel& m, const ModelInput& x) {
    Tape tape;
    return tape.value(m.forward_train(x, tape));
}

}  // namespace

TEST(Model, LinearIdentityNetNormalizesSecondMoment) {
    EigenModel m(mlp_spec(1, {1}));
    auto params = m.parameters();
    *params[0].tensor = Tensor::from_rows({{1.0}});
    const Tensor y = train_forward(m, Tensor::from_rows({{2.0}, {-2.0}}));
    EXPECT_NEAR(y(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(y(0, 1), -1.0, 1e-12);
}

TEST(Model, ConstantOutputBecomesUnitMagnitude) {
    EigenModel m(mlp_spec(2, {3}));
    auto params = m.parameters();
    *params[0].tensor = Tensor::matrix(2, 3, 0.0);
    *params[1].tensor = Tensor::from_rows({{0.5, -2.0, 3.0}});
    const Tensor y = train_forward(m, random_batch(1, 5, 2));
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(std::abs(y(j, i)), 1.0, 1e-10);  // epsilon-limited
}

TEST(Model, TrainModeSecondMomentIsExact) {
    for (bool bn : {false, true}) {
        ModelSpec s = mlp_spec(3, {16, 16, 4}, bn);
        s.encoder.residual = true;
        EigenModel m(s);
        const Tensor y = train_forward(m, random_batch(2, 64, 3));
        for (std::size_t j = 0; j < 4; ++j) {
            double ms = 0.0;
            for (std::size_t i = 0; i < 64; ++i) ms += y(j, i) * y(j, i);
            EXPECT_NEAR(ms / 64.0, 1.0, 1e-10);
        }
    }
}

TEST(Model, RequiresTwoSamples) {
    EigenModel m(mlp_spec(2, {4, 2}));
    Tape tape;
    EXPECT_THROW(m.forward_train(random_batch(1, 1, 2), tape), Error);
}

TEST(Model, ZeroVarianceDimensionIsGuarded) {
    EigenModel m(mlp_spec(1, {2}));
    auto params = m.parameters();
    *params[0].tensor = Tensor::from_rows({{0.0, 1.0}});
    const Tensor y = train_forward(m, Tensor::from_rows({{1.0}, {2.0}}));
    EXPECT_TRUE(y.all_finite());
}

TEST(Model, EvalRequiresRunningStats) {
    EigenModel m(mlp_spec(2, {4, 2}));
    EXPECT_THROW(m.forward_eval(random_batch(1, 4, 2)), Error);
}

TEST(Model, EvalMatchesTrainWithZeroMomentum) {
    ModelSpec s = mlp_spec(2, {8, 3}, true);
    s.l2bn_momentum = 0.0;
    s.bn_momentum = 0.0;
    EigenModel m(s);
    const Tensor x = random_batch(4, 32, 2);
    const Tensor train = train_forward(m, x);
    EXPECT_LE(max_abs_diff(m.forward_eval(x), train), 1e-6);
}

TEST(Model, EvalIsPermutationEquivariant) {
    EigenModel m(mlp_spec(2, {8, 3}, true));
    const Tensor x = random_batch(5, 20, 2);
    train_forward(m, x);
    std::vector<std::size_t> perm(20);
    for (std::size_t i = 0; i < 20; ++i) perm[i] = (7 * i + 3) % 20;
    EXPECT_LE(max_abs_diff(m.forward_eval(gather_rows(x, perm)), gather_cols(m.forward_eval(x), perm)), 1e-15);
}

TEST(Model, ProjectorAndTaps) {
    ModelSpec s = mlp_spec(2, {8, 6});
    s.projector = MlpSpec{{10, 4}, Activation::Relu, false, true};
    s.k = 4;
    EigenModel m(s);
    const Tensor x = random_batch(6, 12, 2);
    train_forward(m, x);
    EXPECT_EQ(m.embed(x, Tap::Encoder).shape(), (Shape{12, 6}));
    EXPECT_EQ(m.embed(x, Tap::Head).shape(), (Shape{12, 4}));
}

TEST(Model, RejectsWidthMismatch) {
    ModelSpec s = mlp_spec(2, {8, 6});
    s.k = 5;
    EXPECT_THROW(EigenModel{s}, Error);
}

TEST(Model, NodeIdInputIsRowLookup) {
    ModelSpec s = mlp_spec(10, {4});
    s.input_kind = InputKind::NodeIds;
    EigenModel m(s);
    const std::vector<std::size_t> ids = {3, 7, 1};
    Tensor onehot = Tensor::matrix(3, 10);
    for (std::size_t i = 0; i < 3; ++i) onehot(i, ids[i]) = 1.0;
    const Tensor by_id = train_forward(m, ids);
    ModelSpec d = s;
    d.input_kind = InputKind::Dense;
    EigenModel dense(d);
    EXPECT_LE(max_abs_diff(train_forward(dense, onehot), by_id), 1e-15);
}

TEST(Model, InitIsBoundedAndSeeded) {
    EigenModel a(mlp_spec(5, {7, 3})), b(mlp_spec(5, {7, 3}));
    EXPECT_TRUE(a == b);
    auto p = a.parameters();
    const double bound = std::sqrt(6.0 / 12.0);
    for (double v : p[0].tensor->data()) EXPECT_LE(std::abs(v), bound);
    for (double v : p[1].tensor->data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, CheckpointRoundTripIsBitExact) {
    ModelSpec s = mlp_spec(3, {8, 8, 4}, true);
    s.encoder.residual = true;
    s.projector = MlpSpec{{6, 2}, Activation::Relu, false, true};
    s.k = 2;
    EigenModel m(s);
    train_forward(m, random_batch(7, 16, 3));
    const auto path = std::filesystem::temp_directory_path() / "eigenmap_model_ckpt";
    m.save(path.string());
    const EigenModel back = EigenModel::load(path.string());
    EXPECT_TRUE(back == m);
    const Tensor x = random_batch(8, 9, 3);
    EXPECT_EQ(back.forward_eval(x), m.forward_eval(x));
}

TEST(Model, CheckpointRejectsGarbage) {
    const auto path = std::filesystem::temp_directory_path() / "eigenmap_model_bad";
    {
        std::ofstream os(path);
        os << "not a checkpoint\n";
    }
    EXPECT_THROW(EigenModel::load(path.string()), Error);
}
