#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "onh/dvc.hpp"
#include "onh/rng.hpp"
#include "onh/strain.hpp"

using namespace onh;

namespace {

// Independent route: principal strains, eff = sqrt(2/9 sum (e_i - e_j)^2).
double principal_effective_strain(const Mat3& E) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(E);
    const auto e = es.eigenvalues();
    const double s = (e[0] - e[1]) * (e[0] - e[1]) + (e[1] - e[2]) * (e[1] - e[2]) + (e[2] - e[0]) * (e[2] - e[0]);
    return std::sqrt(2.0 / 9.0 * s);
}

DisplacementField sampled(const NodeGrid& g, const Vec3& spacing, const auto& u_um) {
    DisplacementField f(g, spacing);
    for (std::size_t n = 0; n < g.size(); ++n) {
        f.u[n] = u_um(g.position_um(n, spacing)).cwiseQuotient(spacing);
        f.state[n] = NodeState::kMatched;
        f.score[n] = 1.0;
    }
    return f;
}

NodeGrid grid5() {
    NodeGrid g;
    g.origin = {7, 7, 7};
    g.stride = {8, 8, 8};
    g.count = {5, 5, 5};
    return g;
}

bool interior(const NodeGrid& g, std::size_t n) {
    const auto l = g.lattice(n);
    for (int a = 0; a < 3; ++a)
        if (l[a] == 0 || l[a] + 1 == g.count[a]) return false;
    return true;
}

}  // namespace

TEST(EffectiveStrainTest, ZeroTensor) { EXPECT_EQ(effective_strain(Mat3::Zero()), 0.0); }

TEST(EffectiveStrainTest, VolumetricStrainIsZero) {
    EXPECT_NEAR(effective_strain(0.03 * Mat3::Identity()), 0.0, 1e-15);
}

TEST(EffectiveStrainTest, UniaxialOnePercentStretch) {
    Mat3 grad = Mat3::Zero();
    grad(0, 0) = 0.01;
    const auto s = local_strain(grad);
    EXPECT_NEAR(s.E(0, 0), 0.01005, 1e-15);
    // Frozen from direct evaluation: (2/3) * 0.01005.
    EXPECT_NEAR(s.eff, 0.0067, 1e-6);
    EXPECT_NEAR(s.eff, principal_effective_strain(s.E), 1e-15);
}

TEST(EffectiveStrainTest, TensionAndCompressionBothPositive) {
    Mat3 t = Mat3::Zero(), c = Mat3::Zero();
    t(2, 2) = 0.02;
    c(2, 2) = -0.02;
    EXPECT_GT(effective_strain(t), 0.0);
    EXPECT_DOUBLE_EQ(effective_strain(t), effective_strain(c));
}

TEST(EffectiveStrainTest, MatchesPrincipalFormOnRandomTensors) {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        Mat3 grad;
        for (int k = 0; k < 9; ++k) grad(k / 3, k % 3) = rng.uniform(-0.05, 0.05);
        const auto s = local_strain(grad);
        EXPECT_LE((s.E - s.E.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(s.eff, 0.0);
        EXPECT_NEAR(s.eff, principal_effective_strain(s.E), 1e-12);
        EXPECT_EQ(s.F, Mat3::Identity() + grad);
    }
}

TEST(StrainFieldTest, ZeroFieldHasZeroStrain) {
    const auto f = sampled(grid5(), Vec3(10, 10, 10), [](const Vec3&) { return Vec3::Zero(); });
    const auto s = strain_field(f);
    EXPECT_EQ(s.defined_count(), f.grid.size());
    for (const auto& ls : s.strain) EXPECT_EQ(ls.eff, 0.0);
}

TEST(StrainFieldTest, UniformStretchInAnisotropicSpacing) {
    const Vec3 spacing(11.5, 35.1, 3.87);
    const auto f = sampled(grid5(), spacing, [](const Vec3& x) { return Vec3(0.01 * x.x(), 0.0, 0.0); });
    const auto s = strain_field(f);
    for (std::size_t n = 0; n < f.grid.size(); ++n) {
        ASSERT_TRUE(s.defined[n]);
        if (interior(f.grid, n)) EXPECT_NEAR(s.strain[n].eff, 0.0067, 1e-4);
    }
}

TEST(StrainFieldTest, RigidRotationIsAnnihilated) {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const double angle = (trial == 0 ? 5.0 : rng.uniform(0.0, 5.0)) * M_PI / 180.0;
        const Mat3 R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
        const Vec3 t(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
        const auto f = sampled(grid5(), Vec3(10, 10, 10), [&](const Vec3& x) { return Vec3((R - Mat3::Identity()) * x + t); });
        const auto s = strain_field(f);
        for (std::size_t n = 0; n < f.grid.size(); ++n)
            if (interior(f.grid, n)) EXPECT_LT(s.strain[n].eff, 1e-4);
    }
}

TEST(StrainFieldTest, BordersUseOneSidedDifferences) {
    const auto f = sampled(grid5(), Vec3(10, 10, 10), [](const Vec3& x) { return Vec3(0, 0, 0.002 * x.z() * x.z()); });
    const auto s = strain_field(f);
    for (std::size_t n = 0; n < f.grid.size(); ++n) EXPECT_EQ(s.one_sided[n] != 0, !interior(f.grid, n));
}

TEST(StrainFieldTest, InvalidNeighboursFallBackOrLeaveUndefined) {
    auto f = sampled(grid5(), Vec3(10, 10, 10), [](const Vec3& x) { return Vec3(0.01 * x.x(), 0, 0); });
    const auto& g = f.grid;
    // Isolate node (2,2,2) along x.
    f.state[g.linear(1, 2, 2)] = NodeState::kRejected;
    f.state[g.linear(3, 2, 2)] = NodeState::kMasked;
    // Node (1,1,1) loses its -x neighbour only.
    f.state[g.linear(0, 1, 1)] = NodeState::kRejected;
    const auto s = strain_field(f);
    EXPECT_FALSE(s.defined[g.linear(2, 2, 2)]);
    EXPECT_FALSE(s.defined[g.linear(1, 2, 2)]);
    EXPECT_TRUE(s.defined[g.linear(1, 1, 1)]);
    EXPECT_TRUE(s.one_sided[g.linear(1, 1, 1)]);
    EXPECT_NEAR(s.strain[g.linear(1, 1, 1)].eff, 0.0067, 1e-4);
}

TEST(StrainFieldTest, TooFewNodesThrows) {
    NodeGrid g = grid5();
    g.count.y = 2;
    DisplacementField f(g, Vec3::Ones());
    EXPECT_THROW(strain_field(f), Error);
}
