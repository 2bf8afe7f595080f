#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "onh/io.hpp"
#include "onh/saliency.hpp"

using namespace onh;
using Eigen::MatrixXd;

namespace {

OnhPointCloud random_cloud(Rng& rng, std::size_t n, double spread = 1.5) {
    OnhPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.points.emplace_back(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-1, 1));
        c.tissue.push_back(static_cast<std::uint8_t>(1 + rng.index(5)));
        c.thickness_um.push_back(rng.uniform(20, 200));
        c.strain.push_back(rng.uniform(0, 0.03));
    }
    c.bmo_radius_um = 400.0;
    return c;
}

ModelParams random_model(Rng& rng) {
    ModelConfig cfg;
    cfg.point_mlp_widths = {8, 16};
    cfg.head_widths = {8, 1};
    cfg.seed = rng.next_u64();
    ModelParams p = init_params(cfg);
    Eigen::VectorXd v = p.flatten();
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.1 * rng.normal();
    p.assign(v);
    return p;
}

SaliencyCloud random_saliency(Rng& rng, std::size_t n, double spread_um, double radius) {
    SaliencyCloud s;
    s.bmo_radius_um = radius;
    for (std::size_t i = 0; i < n; ++i) {
        s.points.emplace_back(rng.uniform(-spread_um, spread_um) / radius, rng.uniform(-spread_um, spread_um) / radius,
                              rng.uniform(-600, 600) / radius);
        s.value.push_back(rng.uniform());
    }
    return s;
}

// Independent binning: test each cell's bounds directly.
MatrixXd brute_force_enface(const SaliencyCloud& s, double radius) {
    MatrixXd m = MatrixXd::Zero(40, 40);
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        const double x = s.points[i].x() * radius, y = s.points[i].y() * radius;
        for (int cx = 0; cx < 40; ++cx) {
            const double xlo = -1000 + 50 * cx, xhi = xlo + 50;
            if (!(x >= xlo && (x < xhi || (cx == 39 && x == xhi)))) continue;
            for (int cy = 0; cy < 40; ++cy) {
                const double ylo = -1000 + 50 * cy, yhi = ylo + 50;
                if (y >= ylo && (y < yhi || (cy == 39 && y == yhi))) m(39 - cy, cx) += s.value[i];
            }
        }
    }
    return m;
}

int nonzero_cells(const GridMap& m) { return static_cast<int>((m.cells.array() != 0.0).count()); }

}  // namespace

TEST(PointSaliencyTest, ZeroFinalLayerGivesZero) {
    Rng rng(1);
    auto p = random_model(rng);
    p.head.back().W.setZero();
    const auto s = point_saliency(p, random_cloud(rng, 30));
    for (double v : s.value) EXPECT_EQ(v, 0.0);
}

TEST(PointSaliencyTest, UnpooledPointsAreZero) {
    Rng rng(2);
    const auto p = random_model(rng);
    const auto c = random_cloud(rng, 80);
    ForwardCache cache;
    forward(p, c, &cache);
    const auto s = point_saliency(p, c);
    std::vector<bool> pooled(c.size(), false);
    for (auto a : cache.argmax) pooled[static_cast<std::size_t>(a)] = true;
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_GE(s.value[i], 0.0);
        if (!pooled[i]) EXPECT_EQ(s.value[i], 0.0);
    }
}

TEST(PointSaliencyTest, MatchesFiniteDifferenceMean) {
    Rng rng(3);
    for (int t = 0; t < 3; ++t) {
        const auto p = random_model(rng);
        const auto c = random_cloud(rng, 15);
        const MatrixXd x = input_features(c, p.config);
        const auto s = point_saliency(p, c);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double mean = 0.0;
            for (Eigen::Index f = 0; f < x.cols(); ++f) {
                MatrixXd xp = x, xm = x;
                xp(i, f) += 1e-5;
                xm(i, f) -= 1e-5;
                mean += std::abs((forward(p, xp) - forward(p, xm)) / 2e-5);
            }
            mean /= static_cast<double>(x.cols());
            const double v = s.value[static_cast<std::size_t>(i)];
            if (std::max(v, mean) < 1e-8) continue;
            EXPECT_LT(std::abs(v - mean) / std::max(v, mean), 1e-4);
        }
    }
}

TEST(EnfaceTest, SinglePointAtOrigin) {
    SaliencyCloud s;
    s.points = {Vec3::Zero()};
    s.value = {0.37};
    const auto m = enface_project(s, 300.0);
    EXPECT_EQ(nonzero_cells(m), 1);
    EXPECT_EQ(m.cells(19, 20), 1.0);
    EXPECT_TRUE(m.normalized);
    EXPECT_EQ(m.raw_mass, 0.37);
}

TEST(EnfaceTest, AllZeroSkipsNormalization) {
    SaliencyCloud s;
    s.points = {Vec3(0.1, 0.2, 0), Vec3(-0.5, 0.3, 0.1)};
    s.value = {0.0, 0.0};
    const auto m = enface_project(s, 300.0);
    EXPECT_FALSE(m.normalized);
    EXPECT_EQ(m.cells.cwiseAbs().maxCoeff(), 0.0);
}

TEST(EnfaceTest, MatchesBruteForceBinning) {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
        auto s = random_saliency(rng, 500, 1200, 350);
        // Exact edges: upper edge kept, just beyond dropped.
        s.points.push_back(Vec3(1000.0, -1000.0, 0) / 350);
        s.value.push_back(0.5);
        s.points.push_back(Vec3(0.0, 1000.0001, 0) / 350);
        s.value.push_back(0.5);
        const auto m = enface_project(s, 350, false);
        const MatrixXd oracle = brute_force_enface(s, 350);
        EXPECT_EQ(m.cells, oracle);
        std::size_t dropped = 0;
        double kept = 0.0;
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            const double x = s.points[i].x() * 350, y = s.points[i].y() * 350;
            if (std::abs(x) <= 1000 && std::abs(y) <= 1000)
                kept += s.value[i];
            else
                ++dropped;
        }
        EXPECT_EQ(m.dropped, dropped);
        EXPECT_NEAR(m.raw_mass, kept, 1e-12 * kept);
    }
}

TEST(EnfaceTest, NormalizedRange) {
    Rng rng(5);
    const auto m = enface_project(random_saliency(rng, 400, 900, 300), 300);
    EXPECT_EQ(m.cells.maxCoeff(), 1.0);
    EXPECT_GE(m.cells.minCoeff(), 0.0);
}

TEST(CrossSectionTest, FullSlabColumnsMatchEnfaceRows) {
    Rng rng(6);
    const auto s = random_saliency(rng, 600, 950, 300);
    const auto e = enface_project(s, 300, false);
    const auto c = cross_section(s, SectionAxis::kInferiorSuperior, 0.0, 4000.0, 300, false);
    for (int k = 0; k < 40; ++k) EXPECT_NEAR(c.cells.col(k).sum(), e.cells.row(k).sum(), 1e-12);
    const auto n = cross_section(s, SectionAxis::kNasalTemporal, 0.0, 4000.0, 300, false);
    for (int k = 0; k < 40; ++k) EXPECT_NEAR(n.cells.col(k).sum(), e.cells.col(k).sum(), 1e-12);
}

TEST(CrossSectionTest, EmptySlabIsZero) {
    Rng rng(7);
    const auto s = random_saliency(rng, 300, 500, 300);
    const auto c = cross_section(s, SectionAxis::kNasalTemporal, 800.0, 50.0, 300);
    EXPECT_EQ(c.cells.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_FALSE(c.normalized);
    EXPECT_THROW(cross_section(s, SectionAxis::kNasalTemporal, 0.0, 0.0, 300), InvalidSpec);
}

TEST(CrossSectionTest, SingleInSlabPoint) {
    SaliencyCloud s;
    s.points = {Vec3(0.0, 1.0, 0.5), Vec3(2.0, -1.0, 0.0)};
    s.value = {0.2, 0.9};
    const auto c = cross_section(s, SectionAxis::kInferiorSuperior, 0.0, 100.0, 300.0);
    EXPECT_EQ(nonzero_cells(c), 1);
    // y = 300 um -> y cell 26 -> column 13; z = 150 um -> row 23.
    EXPECT_EQ(c.cells(23, 13), 1.0);
}

TEST(GroupAverageTest, IdentityAndDisjointCells) {
    Rng rng(8);
    const auto m = enface_project(random_saliency(rng, 200, 800, 300), 300);
    EXPECT_EQ(group_average({m}).cells, m.cells);
    EXPECT_EQ(group_average({m, m}).cells, m.cells);
    GridMap a, b;
    a.cells(3, 4) = 1.0;
    b.cells(30, 31) = 1.0;
    const auto g = group_average({a, b});
    EXPECT_EQ(g.cells(3, 4), 1.0);
    EXPECT_EQ(g.cells(30, 31), 1.0);
    EXPECT_EQ(nonzero_cells(g), 2);
    EXPECT_THROW(group_average({}), InvalidSpec);
    GridMap bad;
    bad.cells = MatrixXd::Zero(39, 40);
    EXPECT_THROW(group_average({a, bad}), InvalidSpec);
}

TEST(SectorMassTest, FullEmptyAndHalfPlane) {
    GridMap m;
    m.bmo_radius_um = 300;
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) {
            const double x = -975 + 50 * c, y = 975 - 50 * r;
            m.cells(r, c) = std::exp(-(x * x + y * y) / (2 * 400.0 * 400.0));
        }
    EXPECT_DOUBLE_EQ(sector_mass(m, {{0, 360}, 0, 1e9}), 1.0);
    EXPECT_EQ(sector_mass(m, {{0, 0}, 0, 1e9}), 0.0);
    EXPECT_NEAR(sector_mass(m, {{0, 180}, 0, 1e9}), 0.5, 1e-12);
    EXPECT_NEAR(sector_mass(m, {{90, 180}, 0, 1e9}), 0.5, 1e-12);
    GridMap zero;
    EXPECT_THROW(sector_mass(zero, {{0, 360}, 0, 1e9}), Error);
}

TEST(MapIoTest, CsvRoundTripAndPgm) {
    Rng rng(9);
    const auto m = enface_project(random_saliency(rng, 300, 900, 300), 300);
    const auto dir = std::filesystem::temp_directory_path();
    write_map_csv(dir / "onh_map.csv", m);
    EXPECT_EQ(read_map_csv(dir / "onh_map.csv").cells, m.cells);
    write_map_pgm(dir / "onh_map.pgm", m);
    const auto pgm = io::read_text(dir / "onh_map.pgm");
    EXPECT_EQ(pgm.substr(0, 13), "P5\n40 40\n255\n");
    EXPECT_EQ(pgm.size(), 13u + 1600u);
    std::filesystem::remove(dir / "onh_map.csv");
    std::filesystem::remove(dir / "onh_map.pgm");
}
