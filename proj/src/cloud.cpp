#include "onh/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "json.hpp"
#include "onh/io.hpp"

namespace onh {

using nlohmann::json;

std::array<double, kTissueClasses> OnhPointCloud::one_hot(std::size_t i) const {
    std::array<double, kTissueClasses> h{};
    h[tissue[i] - 1] = 1.0;
    return h;
}

void OnhPointCloud::validate() const {
    const std::size_t n = points.size();
    if (n == 0) throw InvalidSpec("point cloud is empty");
    if (tissue.size() != n || thickness_um.size() != n || (has_strain() && strain.size() != n))
        throw InvalidSpec("point cloud feature arrays differ in length");
    if (!(bmo_radius_um > 0.0) || !std::isfinite(bmo_radius_um)) throw InvalidSpec("bmo_radius_um must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        if (!points[i].allFinite() || !std::isfinite(thickness_um[i]))
            throw InvalidSpec("non-finite point coordinate or thickness");
        if (tissue[i] < 1 || tissue[i] > kTissueClasses) throw InvalidSpec("tissue code out of range");
        if (has_strain() && !(strain[i] >= 0.0 && std::isfinite(strain[i])))
            throw InvalidSpec("strain must be finite and nonnegative");
    }
}

OnhPointCloud build_point_cloud(const LabelVolume& labels, std::size_t target_n, std::uint64_t seed) {
    if (target_n == 0) throw InvalidSpec("target_n must be positive");
    std::vector<std::size_t> labelled;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        if (labels.labels[i] != 0) labelled.push_back(i);
    if (labelled.size() < target_n)
        throw Error("too few labelled voxels: " + std::to_string(labelled.size()) + " < " +
                    std::to_string(target_n));

    Rng rng(seed);
    for (std::size_t i = 0; i < target_n; ++i)
        std::swap(labelled[i], labelled[i + rng.index(labelled.size() - i)]);
    labelled.resize(target_n);
    std::sort(labelled.begin(), labelled.end());

    const Dims& d = labels.dims;
    OnhPointCloud c;
    c.points.reserve(target_n);
    c.tissue.reserve(target_n);
    c.thickness_um.reserve(target_n);
    for (std::size_t li : labelled) {
        const int x = static_cast<int>(li % d.x);
        const int y = static_cast<int>((li / d.x) % d.y);
        const int z = static_cast<int>(li / (static_cast<std::size_t>(d.x) * d.y));
        const std::uint8_t code = labels.labels[li];
        int lo = z, hi = z;
        while (lo > 0 && labels.at(x, y, lo - 1) == code) --lo;
        while (hi + 1 < d.z && labels.at(x, y, hi + 1) == code) ++hi;
        c.points.emplace_back(x * labels.spacing.x(), y * labels.spacing.y(), z * labels.spacing.z());
        c.tissue.push_back(code);
        c.thickness_um.push_back((hi - lo + 1) * labels.spacing.z());
    }
    c.bmo_points = labels.bmo_points;
    return c;
}

BmoPlane fit_bmo_plane(const std::vector<Vec3>& pts) {
    if (pts.size() < 3) throw InvalidSpec("BMO plane needs at least 3 points");
    Vec3 center = Vec3::Zero();
    for (const auto& p : pts) center += p;
    center /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) cov += (p - center) * (p - center).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();  // ascending
    if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300))) throw InvalidSpec("BMO points are collinear or coincident");
    Vec3 n = es.eigenvectors().col(0).normalized();
    const double tol = 1e-12;
    bool flip;
    if (std::abs(n.z()) > tol)
        flip = n.z() < 0.0;
    else if (std::abs(n.y()) > tol)
        flip = n.y() < 0.0;
    else
        flip = n.x() < 0.0;
    if (flip) n = -n;
    return {center, n};
}

double bmo_radius(const std::vector<Vec3>& pts, const BmoPlane& plane) {
    if (pts.empty()) throw InvalidSpec("no BMO points");
    double sum = 0.0;
    for (const auto& p : pts) {
        const Vec3 v = p - plane.center;
        sum += (v - v.dot(plane.normal) * plane.normal).norm();
    }
    return sum / static_cast<double>(pts.size());
}

OnhPointCloud align_and_scale(const OnhPointCloud& cloud, const Vec3& center, const Vec3& normal,
                              double bmo_radius_um) {
    if (!(bmo_radius_um > 0.0) || !std::isfinite(bmo_radius_um)) throw InvalidSpec("BMO radius must be positive");
    if (std::abs(normal.norm() - 1.0) > 1e-9) throw InvalidSpec("plane normal must be unit length");
    Mat3 R = Mat3::Identity();
    if (normal != Vec3::UnitZ()) R = Eigen::Quaterniond::FromTwoVectors(normal, Vec3::UnitZ()).toRotationMatrix();
    auto map = [&](const Vec3& p) -> Vec3 { return (R * (p - center)) / bmo_radius_um; };

    OnhPointCloud out = cloud;
    for (auto& p : out.points) p = map(p);
    for (auto& p : out.bmo_points) p = map(p);
    out.bmo_radius_um = cloud.bmo_radius_um * bmo_radius_um;
    return out;
}

std::vector<std::size_t> nearest_strain_nodes(const StrainField& strain, const Vec3& p, int k) {
    const NodeGrid& g = strain.grid;
    using Cand = std::pair<double, std::size_t>;
    std::vector<Cand> best;
    best.reserve(k + 1);
    auto offer = [&](std::size_t n) {
        const Cand c{(p - strain.position_um(n)).squaredNorm(), n};
        if (static_cast<int>(best.size()) == k && !(c < best.back())) return;
        best.insert(std::upper_bound(best.begin(), best.end(), c), c);
        if (static_cast<int>(best.size()) > k) best.pop_back();
    };

    // Visit lattice shells of growing Chebyshev radius around the nearest
    // lattice cell until no unvisited node can beat the current k-th.
    Index3 c;
    Vec3 off, h;
    int max_shell = 0;
    for (int a = 0; a < 3; ++a) {
        const double q = (p[a] / strain.spacing[a] - g.origin[a]) / g.stride[a];
        c[a] = static_cast<int>(std::clamp<double>(std::round(q), 0.0, g.count[a] - 1.0));
        off[a] = std::abs(q - c[a]);
        h[a] = g.stride[a] * strain.spacing[a];
        max_shell = std::max({max_shell, c[a], g.count[a] - 1 - c[a]});
    }
    for (int s = 0; s <= max_shell; ++s) {
        for (int k3 = std::max(0, c.z - s); k3 <= std::min(g.count.z - 1, c.z + s); ++k3)
            for (int j = std::max(0, c.y - s); j <= std::min(g.count.y - 1, c.y + s); ++j)
                for (int i = std::max(0, c.x - s); i <= std::min(g.count.x - 1, c.x + s); ++i) {
                    const int cheb = std::max({std::abs(i - c.x), std::abs(j - c.y), std::abs(k3 - c.z)});
                    if (cheb != s) continue;
                    const std::size_t n = g.linear(i, j, k3);
                    if (strain.defined[n]) offer(n);
                }
        if (static_cast<int>(best.size()) == k) {
            double bound = INFINITY;
            for (int a = 0; a < 3; ++a) bound = std::min(bound, std::max(0.0, s + 1 - off[a]) * h[a]);
            bound *= 1.0 - 1e-9;
            if (best.back().first < bound * bound) break;
        }
    }
    std::vector<std::size_t> idx;
    idx.reserve(best.size());
    for (const auto& b : best) idx.push_back(b.second);
    return idx;
}

OnhPointCloud attach_strain(const OnhPointCloud& cloud, const StrainField& strain) {
    if (strain.defined_count() < static_cast<std::size_t>(kStrainNeighbours))
        throw Error("attach_strain needs at least 5 nodes with defined strain");
    OnhPointCloud out = cloud;
    out.strain.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double sum = 0.0;
        for (std::size_t n : nearest_strain_nodes(strain, cloud.points[i], kStrainNeighbours))
            sum += strain.strain[n].eff;
        out.strain[i] = sum / kStrainNeighbours;
    }
    return out;
}

void AugmentParams::validate() const {
    if (!(crop_probability >= 0.0 && crop_probability <= 1.0)) throw InvalidSpec("crop_probability must lie in [0, 1]");
    if (!(crop_radius_min >= 0.0 && crop_radius_max >= crop_radius_min))
        throw InvalidSpec("crop radius range must satisfy 0 <= min <= max");
    if (!(max_crop_fraction >= 0.0 && max_crop_fraction < 1.0)) throw InvalidSpec("max_crop_fraction must lie in [0, 1)");
    if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) throw InvalidSpec("max_rotation_deg must lie in [0, 180]");
    if (sample_n == 0) throw InvalidSpec("sample_n must be positive");
}

OnhPointCloud select_points(const OnhPointCloud& cloud, const std::vector<std::size_t>& idx) {
    OnhPointCloud out;
    out.label = cloud.label;
    out.bmo_radius_um = cloud.bmo_radius_um;
    out.bmo_points = cloud.bmo_points;
    out.points.reserve(idx.size());
    out.tissue.reserve(idx.size());
    out.thickness_um.reserve(idx.size());
    for (std::size_t i : idx) {
        out.points.push_back(cloud.points[i]);
        out.tissue.push_back(cloud.tissue[i]);
        out.thickness_um.push_back(cloud.thickness_um[i]);
        if (cloud.has_strain()) out.strain.push_back(cloud.strain[i]);
    }
    return out;
}

OnhPointCloud augment(const OnhPointCloud& cloud, Rng& rng, const AugmentParams& params) {
    const std::size_t n = cloud.size();
    if (n == 0) throw InvalidSpec("cannot augment an empty cloud");

    std::vector<std::uint8_t> dropped(n, 0);
    if (rng.uniform() < params.crop_probability) {
        const double radius = rng.uniform(params.crop_radius_min, params.crop_radius_max);
        const Vec3 centre = cloud.points[rng.index(n)];
        std::vector<std::pair<double, std::size_t>> inside;
        for (std::size_t i = 0; i < n; ++i) {
            const double d2 = (cloud.points[i] - centre).squaredNorm();
            if (d2 < radius * radius) inside.emplace_back(d2, i);
        }
        const auto cap = static_cast<std::size_t>(std::floor(params.max_crop_fraction * static_cast<double>(n)));
        if (inside.size() > cap) {
            std::sort(inside.begin(), inside.end());
            inside.resize(cap);
        }
        for (const auto& in : inside) dropped[in.second] = 1;
    }
    std::vector<std::size_t> keep;
    keep.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!dropped[i]) keep.push_back(i);

    const double theta = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg) * std::numbers::pi / 180.0;

    std::vector<std::size_t> pick;
    const std::size_t m = keep.size(), target = params.sample_n;
    if (m >= target) {
        for (std::size_t i = 0; i < target; ++i) std::swap(keep[i], keep[i + rng.index(m - i)]);
        pick.assign(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(target));
        std::sort(pick.begin(), pick.end());
    } else {
        pick = keep;
        while (pick.size() < target) pick.push_back(keep[rng.index(m)]);
    }

    OnhPointCloud out = select_points(cloud, pick);
    const double cs = std::cos(theta), sn = std::sin(theta);
    auto rot = [&](Vec3& p) { p = Vec3(cs * p.x() - sn * p.y(), sn * p.x() + cs * p.y(), p.z()); };
    for (auto& p : out.points) rot(p);
    for (auto& p : out.bmo_points) rot(p);
    return out;
}

OnhPointCloud prepare_cloud(const LabelVolume& labels, const StrainField* strain, std::size_t target_n,
                            std::uint64_t seed) {
    OnhPointCloud c = build_point_cloud(labels, target_n, seed);
    if (strain) c = attach_strain(c, *strain);
    const BmoPlane plane = fit_bmo_plane(c.bmo_points);
    return align_and_scale(c, plane.center, plane.normal, bmo_radius(c.bmo_points, plane));
}

void write_cloud(const std::filesystem::path& stem, const OnhPointCloud& cloud, const std::string& source_id) {
    std::string s = "x,y,z,tissue,thickness_um,strain\n";
    s.reserve(cloud.size() * 96);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        s += io::fmt(p.x()) + "," + io::fmt(p.y()) + "," + io::fmt(p.z()) + "," + std::to_string(cloud.tissue[i]) +
             "," + io::fmt(cloud.thickness_um[i]) + "," + (cloud.has_strain() ? io::fmt(cloud.strain[i]) : "nan") +
             "\n";
    }
    io::write_text(stem.string() + ".csv", s);

    json bmo = json::array();
    for (const auto& p : cloud.bmo_points) bmo.push_back({p.x(), p.y(), p.z()});
    json side{{"label", cloud.label ? json(*cloud.label) : json(nullptr)},
              {"bmo_radius_um", cloud.bmo_radius_um},
              {"source_id", source_id},
              {"has_strain", cloud.has_strain()},
              {"bmo_points", bmo}};
    io::write_text(stem.string() + ".json", side.dump(2) + "\n");
}

OnhPointCloud read_cloud(const std::filesystem::path& stem) {
    const auto side = json::parse(io::read_text(stem.string() + ".json"));
    const auto t = io::read_csv(stem.string() + ".csv");
    const auto cx = t.column("x"), cy = t.column("y"), cz = t.column("z"), ct = t.column("tissue"),
               ch = t.column("thickness_um"), cs = t.column("strain");
    OnhPointCloud c;
    const bool has_strain = side.at("has_strain").get<bool>();
    for (const auto& r : t.rows) {
        c.points.emplace_back(io::parse_double(r[cx]), io::parse_double(r[cy]), io::parse_double(r[cz]));
        c.tissue.push_back(static_cast<std::uint8_t>(std::stoi(r[ct])));
        c.thickness_um.push_back(io::parse_double(r[ch]));
        if (has_strain) c.strain.push_back(io::parse_double(r[cs]));
    }
    if (!side.at("label").is_null()) c.label = side.at("label").get<int>();
    c.bmo_radius_um = side.at("bmo_radius_um").get<double>();
    for (const auto& p : side.at("bmo_points")) c.bmo_points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    c.validate();
    return c;
}

}  // namespace onh
