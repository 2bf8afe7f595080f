#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "onh/net.hpp"

using namespace onh;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ModelConfig small_config(std::uint64_t seed = 3) {
    ModelConfig c;
    c.point_mlp_widths = {8, 16};
    c.head_widths = {8, 1};
    c.seed = seed;
    return c;
}

OnhPointCloud random_cloud(Rng& rng, std::size_t n, bool strain = true) {
    OnhPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.points.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1));
        c.tissue.push_back(static_cast<std::uint8_t>(1 + rng.index(5)));
        c.thickness_um.push_back(rng.uniform(20, 200));
        if (strain) c.strain.push_back(rng.uniform(0, 0.03));
    }
    return c;
}

ModelParams randomized(const ModelConfig& cfg, Rng& rng) {
    ModelParams p = init_params(cfg);
    VectorXd v = p.flatten();
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.1 * rng.normal();  // nonzero biases too
    p.assign(v);
    return p;
}

double rel_error(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale < 1e-8 ? 0.0 : std::abs(a - b) / scale;
}

std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    rng.shuffle(p.begin(), p.end());
    return p;
}

std::vector<OnhPointCloud> separable_set() {
    Rng rng(41);
    std::vector<OnhPointCloud> data;
    for (int i = 0; i < 20; ++i) {
        auto c = random_cloud(rng, 30);
        const int y = i % 2;
        for (auto& s : c.strain) s = y ? rng.uniform(0.02, 0.03) : rng.uniform(0.0, 0.005);
        c.label = y;
        data.push_back(c);
    }
    return data;
}

}  // namespace

TEST(ModelConfigTest, Validation) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.head_widths = {4, 2};
    EXPECT_THROW(c.validate(), InvalidSpec);
    c = ModelConfig{};
    c.point_mlp_widths = {4, 0};
    EXPECT_THROW(c.validate(), InvalidSpec);
}

TEST(ModelParamsTest, FlattenAssignRoundTrip) {
    const auto p = init_params(small_config());
    EXPECT_EQ(p.parameter_count(), static_cast<std::size_t>(10 * 8 + 8 + 8 * 16 + 16 + 16 * 8 + 8 + 8 + 1));
    ModelParams q = zero_params(p.config);
    q.assign(p.flatten());
    EXPECT_EQ(p, q);
    EXPECT_EQ(init_params(small_config()), p);
}

TEST(ForwardTest, HandComputedFourPointCloud) {
    ModelConfig cfg;
    cfg.point_mlp_widths = {2};
    cfg.head_widths = {1};
    ModelParams p = zero_params(cfg);
    // Point layer: channel 0 reads x and strain, channel 1 reads y and thickness.
    p.point[0].W(0, 0) = 0.5;
    p.point[0].W(0, 9) = 0.1;
    p.point[0].b[0] = -0.2;
    p.point[0].W(1, 1) = -1.0;
    p.point[0].W(1, 8) = 0.3;
    p.point[0].b[1] = 0.05;
    p.head[0].W(0, 0) = 2.0;
    p.head[0].W(0, 1) = -0.7;
    p.head[0].b[0] = 0.4;

    OnhPointCloud c;
    c.points = {{1.0, 0.5, 0}, {-1.0, -0.2, 0}, {0.2, 0.1, 0}, {0.6, -0.4, 0}};
    c.tissue = {1, 2, 3, 4};
    c.thickness_um = {100, 50, 200, 10};
    c.strain = {0.01, 0.02, 0.0, 0.005};

    // Scalar evaluation: features thickness/100, strain/0.01.
    double m0 = 0, m1 = 0;
    for (int i = 0; i < 4; ++i) {
        const double x = c.points[i].x(), y = c.points[i].y();
        const double t = c.thickness_um[i] / 100.0, s = c.strain[i] / 0.01;
        m0 = std::max(m0, std::max(0.0, 0.5 * x + 0.1 * s - 0.2));
        m1 = std::max(m1, std::max(0.0, -1.0 * y + 0.3 * t + 0.05));
    }
    EXPECT_NEAR(forward(p, c), 2.0 * m0 - 0.7 * m1 + 0.4, 1e-15);
    EXPECT_NEAR(m0, 0.5 * 1.0 + 0.1 * 1.0 - 0.2, 1e-15);
}

TEST(ForwardTest, PermutationAndDuplicationInvariance) {
    Rng rng(5);
    const auto cfg = small_config();
    for (int t = 0; t < 20; ++t) {
        const auto p = randomized(cfg, rng);
        const auto c = random_cloud(rng, 40);
        const double logit = forward(p, c);
        const auto perm = select_points(c, permutation(rng, c.size()));
        EXPECT_NEAR(forward(p, perm), logit, 1e-12);
        std::vector<std::size_t> twice(c.size() * 2);
        for (std::size_t i = 0; i < twice.size(); ++i) twice[i] = i % c.size();
        EXPECT_NEAR(forward(p, select_points(c, twice)), logit, 1e-12);
    }
}

TEST(ForwardTest, FeatureMismatchThrows) {
    Rng rng(6);
    const auto p = init_params(small_config());
    EXPECT_THROW(forward(p, random_cloud(rng, 5, false)), InvalidSpec);
    EXPECT_THROW(forward(p, MatrixXd::Zero(5, 9)), InvalidSpec);
    ModelConfig off = small_config();
    off.use_strain = false;
    const auto x = input_features(random_cloud(rng, 5, false), off);
    EXPECT_EQ(x.col(9).norm(), 0.0);
}

TEST(BceTest, KnownValues) {
    EXPECT_NEAR(bce_loss(0.0, 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(bce_loss(0.0, 1), 0.693147, 1e-6);
    EXPECT_LT(bce_loss(30.0, 1), 1e-12);
    EXPECT_NEAR(bce_loss(30.0, 0), 30.0, 1e-12);
    for (double z = -1000; z <= 1000; z += 12.5)
        for (int y : {0, 1}) EXPECT_TRUE(std::isfinite(bce_loss(z, y)));
}

TEST(BackwardTest, ParameterGradientsMatchFiniteDifferences) {
    Rng rng(7);
    int checked = 0;
    double worst = 0.0;
    for (int t = 0; t < 4; ++t) {
        const auto p = randomized(small_config(10 + t), rng);
        const auto c = random_cloud(rng, 25);
        const MatrixXd x = input_features(c, p.config);
        ForwardCache cache;
        forward(p, x, &cache);
        const int label = t % 2;
        const VectorXd grad = loss_backward(p, cache, label).params.flatten();
        const VectorXd theta = p.flatten();
        for (int k = 0; k < 30; ++k) {
            const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(theta.size())));
            ModelParams q = p;
            VectorXd v = theta;
            v[i] += 1e-5;
            q.assign(v);
            const double up = bce_loss(forward(q, x), label);
            v[i] -= 2e-5;
            q.assign(v);
            const double down = bce_loss(forward(q, x), label);
            const double fd = (up - down) / 2e-5;
            worst = std::max(worst, rel_error(grad[i], fd));
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
    EXPECT_LT(worst, 1e-4);
}

TEST(BackwardTest, InputGradientsMatchFiniteDifferences) {
    Rng rng(8);
    int checked = 0;
    double worst = 0.0;
    for (int t = 0; t < 4; ++t) {
        const auto p = randomized(small_config(20 + t), rng);
        const MatrixXd x = input_features(random_cloud(rng, 25), p.config);
        ForwardCache cache;
        forward(p, x, &cache);
        const MatrixXd g = backward(p, cache, 1.0).input;
        for (int k = 0; k < 30; ++k) {
            // Half the probes on pooled rows, where gradients are nonzero.
            const Eigen::Index r = k % 2 ? cache.argmax[rng.index(cache.argmax.size())]
                                         : static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(x.rows())));
            const auto col = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(x.cols())));
            MatrixXd xp = x, xm = x;
            xp(r, col) += 1e-5;
            xm(r, col) -= 1e-5;
            const double fd = (forward(p, xp) - forward(p, xm)) / 2e-5;
            worst = std::max(worst, rel_error(g(r, col), fd));
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
    EXPECT_LT(worst, 1e-4);
}

TEST(BackwardTest, UnpooledPointsGetZeroGradient) {
    Rng rng(9);
    const auto p = randomized(small_config(), rng);
    const auto c = random_cloud(rng, 60);
    ForwardCache cache;
    forward(p, c, &cache);
    const MatrixXd g = backward(p, cache, 1.0).input;
    std::vector<bool> pooled(c.size(), false);
    for (auto a : cache.argmax) pooled[static_cast<std::size_t>(a)] = true;
    int dead = 0;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (!pooled[i]) {
            EXPECT_EQ(g.row(static_cast<Eigen::Index>(i)).norm(), 0.0);
            ++dead;
        }
    EXPECT_GT(dead, 0);
}

TEST(BackwardTest, InputGradientsArePermutationEquivariant) {
    Rng rng(10);
    const auto p = randomized(small_config(), rng);
    const auto c = random_cloud(rng, 50);
    const auto perm = permutation(rng, c.size());
    ForwardCache a, b;
    forward(p, c, &a);
    forward(p, select_points(c, perm), &b);
    const MatrixXd ga = backward(p, a, 1.0).input, gb = backward(p, b, 1.0).input;
    for (std::size_t i = 0; i < perm.size(); ++i)
        EXPECT_LT((gb.row(static_cast<Eigen::Index>(i)) - ga.row(static_cast<Eigen::Index>(perm[i]))).norm(), 1e-12);
}

TEST(TrainTest, SeparableToySetConverges) {
    TrainConfig t;
    t.epochs = 200;
    t.batch_size = 4;
    t.learning_rate = 0.01;
    t.augment = false;
    const auto r = train_model(separable_set(), small_config(), t);
    ASSERT_EQ(r.history.size(), 200u);
    EXPECT_LT(r.history.back(), 0.1);
    EXPECT_TRUE(r.params.all_finite());
}

TEST(TrainTest, SameSeedsGiveIdenticalHistory) {
    TrainConfig t;
    t.epochs = 5;
    t.batch_size = 4;
    t.learning_rate = 0.01;
    t.augmentation.sample_n = 20;
    const auto a = train_model(separable_set(), small_config(), t);
    const auto b = train_model(separable_set(), small_config(), t);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.params, b.params);
}

TEST(TrainTest, ZeroLearningRateLeavesParametersUnchanged) {
    TrainConfig t;
    t.epochs = 4;
    t.learning_rate = 0.0;
    t.augment = false;
    const auto r = train_model(separable_set(), small_config(), t);
    EXPECT_EQ(r.params, init_params(small_config()));
    for (double h : r.history) EXPECT_EQ(h, r.history.front());
}

TEST(TrainTest, SingleClassThrows) {
    auto data = separable_set();
    for (auto& c : data) c.label = 0;
    EXPECT_THROW(train_model(data, small_config(), TrainConfig{}), Error);
}

TEST(TrainTest, WithoutStrainTheStrainWeightsNeverMove) {
    TrainConfig t;
    t.epochs = 3;
    t.learning_rate = 0.01;
    t.use_strain = false;
    t.augment = false;
    auto data = separable_set();
    for (auto& c : data) c.strain.clear();
    const auto r = train_model(data, small_config(), t);
    EXPECT_FALSE(r.params.config.use_strain);
    const auto init = init_params(small_config());
    EXPECT_EQ(r.params.point[0].W.col(9), init.point[0].W.col(9));
    EXPECT_NE(r.params.point[0].W.col(0), init.point[0].W.col(0));
}

TEST(CheckpointTest, RoundTripIsExact) {
    Rng rng(11);
    const auto p = randomized(small_config(), rng);
    const auto path = std::filesystem::temp_directory_path() / "onh_model.bin";
    save_checkpoint(path, p, 7);
    EXPECT_EQ(load_checkpoint(path), p);
    std::filesystem::remove(path);
}
