#include "onh/dvc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

#include "onh/io.hpp"
#include "onh/parallel.hpp"

namespace onh {

void DvcParams::validate() const {
    if (block_size < 5 || block_size % 2 == 0) throw InvalidSpec("block_size must be odd and >= 5");
    if (node_stride < 1) throw InvalidSpec("node_stride must be >= 1");
    if (search_radius < 1) throw InvalidSpec("search_radius must be >= 1");
    if (pyramid_levels < 1) throw InvalidSpec("pyramid_levels must be >= 1");
    if (!(min_ncc >= -1.0 && min_ncc <= 1.0)) throw InvalidSpec("min_ncc must lie in [-1, 1]");
}

NodeGrid make_node_grid(const Dims& dims, int block_size, int stride) {
    NodeGrid g;
    g.stride = {stride, stride, stride};
    const int half = block_size / 2;
    for (int a = 0; a < 3; ++a) {
        const int span = dims[a] - 1 - 2 * half;
        if (span < 0) throw InvalidSpec("volume smaller than one correlation block");
        g.count[a] = span / stride + 1;
        g.origin[a] = half + (span % stride) / 2;
    }
    return g;
}

std::size_t DisplacementField::valid_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < state.size(); ++i) n += valid(i) ? 1 : 0;
    return n;
}

double ncc(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw Error("ncc: block shapes differ");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 1e-24 * n * std::max(1.0, ma * ma) || sbb <= 1e-24 * n * std::max(1.0, mb * mb))
        throw UndefinedCorrelation("ncc: zero-variance block");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double subvoxel_offset(double minus, double center, double plus) {
    const double curvature = minus - 2.0 * center + plus;
    if (!(curvature < 0.0)) return 0.0;
    return std::clamp(0.5 * (minus - plus) / curvature, -0.5, 0.5);
}

namespace {

constexpr double kExactMatch = 1.0 - 1e-9;

// Cube of side n with its low corner at `corner`, replicate border.
void extract(const ScalarVolume& v, const Index3& corner, int n, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(n) * n * n);
    std::size_t i = 0;
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) out[i++] = v.clamped(corner.x + x, corner.y + y, corner.z + z);
}

Index3 round3(const Vec3& v) {
    return {static_cast<int>(std::lround(v.x())), static_cast<int>(std::lround(v.y())),
            static_cast<int>(std::lround(v.z()))};
}

}  // namespace

BlockMatch match_block(const ScalarVolume& fixed, const ScalarVolume& moving, const Index3& node,
                       const DvcParams& params, const Vec3& init) {
    const int b = params.block_size, h = b / 2, r = params.search_radius;
    const int w = b + 2 * r, nd = 2 * r + 1;
    const Index3 ci = round3(init);
    BlockMatch result;

    std::vector<double> f;
    extract(fixed, {node.x - h, node.y - h, node.z - h}, b, f);
    const double nb = static_cast<double>(f.size());
    double fmean = 0.0;
    for (double v : f) fmean += v;
    fmean /= nb;
    double sff = 0.0;
    for (auto& v : f) {
        v -= fmean;
        sff += v * v;
    }
    if (sff <= 1e-24 * nb * std::max(1.0, fmean * fmean)) return result;

    const Index3 corner{node.x + ci.x - h - r, node.y + ci.y - h - r, node.z + ci.z - h - r};
    std::vector<double> m;
    extract(moving, corner, w, m);

    // Prefix sums of m and m^2 for O(1) candidate block statistics.
    const int wp = w + 1;
    std::vector<double> p1(static_cast<std::size_t>(wp) * wp * wp, 0.0), p2(p1.size(), 0.0);
    auto pidx = [wp](int z, int y, int x) { return (static_cast<std::size_t>(z) * wp + y) * wp + x; };
    for (int z = 0; z < w; ++z)
        for (int y = 0; y < w; ++y)
            for (int x = 0; x < w; ++x) {
                const double v = m[(static_cast<std::size_t>(z) * w + y) * w + x];
                p1[pidx(z + 1, y + 1, x + 1)] = v + p1[pidx(z, y + 1, x + 1)] + p1[pidx(z + 1, y, x + 1)] +
                                                p1[pidx(z + 1, y + 1, x)] - p1[pidx(z, y, x + 1)] -
                                                p1[pidx(z, y + 1, x)] - p1[pidx(z + 1, y, x)] + p1[pidx(z, y, x)];
                p2[pidx(z + 1, y + 1, x + 1)] = v * v + p2[pidx(z, y + 1, x + 1)] + p2[pidx(z + 1, y, x + 1)] +
                                                p2[pidx(z + 1, y + 1, x)] - p2[pidx(z, y, x + 1)] -
                                                p2[pidx(z, y + 1, x)] - p2[pidx(z + 1, y, x)] + p2[pidx(z, y, x)];
            }
    auto box = [&](const std::vector<double>& p, int z, int y, int x) {
        return p[pidx(z + b, y + b, x + b)] - p[pidx(z, y + b, x + b)] - p[pidx(z + b, y, x + b)] -
               p[pidx(z + b, y + b, x)] + p[pidx(z, y, x + b)] + p[pidx(z, y + b, x)] + p[pidx(z + b, y, x)] -
               p[pidx(z, y, x)];
    };

    // Cross-correlation of the zero-mean fixed block against every offset.
    std::vector<double> corr(static_cast<std::size_t>(nd) * nd * nd, 0.0);
    for (int dz = 0; dz < nd; ++dz)
        for (int dy = 0; dy < nd; ++dy) {
            double* acc = &corr[(static_cast<std::size_t>(dz) * nd + dy) * nd];
            for (int z = 0; z < b; ++z)
                for (int y = 0; y < b; ++y) {
                    const double* frow = &f[(static_cast<std::size_t>(z) * b + y) * b];
                    const double* mrow = &m[(static_cast<std::size_t>(z + dz) * w + (y + dy)) * w];
                    for (int x = 0; x < b; ++x) {
                        const double fv = frow[x];
                        const double* mp = mrow + x;
                        for (int dx = 0; dx < nd; ++dx) acc[dx] += fv * mp[dx];
                    }
                }
        }

    constexpr double kUndefined = -std::numeric_limits<double>::infinity();
    std::vector<double> score(corr.size(), kUndefined);
    for (int dz = 0; dz < nd; ++dz)
        for (int dy = 0; dy < nd; ++dy)
            for (int dx = 0; dx < nd; ++dx) {
                const double s1 = box(p1, dz, dy, dx), s2 = box(p2, dz, dy, dx);
                const double smm = s2 - s1 * s1 / nb;
                if (smm <= 1e-10 * std::max(1.0, s2)) continue;
                const std::size_t k = (static_cast<std::size_t>(dz) * nd + dy) * nd + dx;
                score[k] = std::clamp(corr[k] / std::sqrt(sff * smm), -1.0, 1.0);
            }

    std::size_t best = 0;
    for (std::size_t k = 1; k < score.size(); ++k)
        if (score[k] > score[best]) best = k;
    if (score[best] == kUndefined) return result;
    const Index3 peak{static_cast<int>(best % nd), static_cast<int>((best / nd) % nd),
                      static_cast<int>(best / (static_cast<std::size_t>(nd) * nd))};

    // Score at an arbitrary integer offset (table lookup or direct evaluation).
    std::vector<double> mb;
    auto score_at = [&](Index3 d) -> double {
        if (d.x >= 0 && d.x < nd && d.y >= 0 && d.y < nd && d.z >= 0 && d.z < nd)
            return score[(static_cast<std::size_t>(d.z) * nd + d.y) * nd + d.x];
        extract(moving, {corner.x + d.x, corner.y + d.y, corner.z + d.z}, b, mb);
        try {
            return ncc(f, mb);
        } catch (const UndefinedCorrelation&) {
            return kUndefined;
        }
    };

    Vec3 frac = Vec3::Zero();
    const double s0 = score[best];
    // A perfect correlation is an exact integer match; refinement is skipped.
    for (int a = 0; a < 3 && s0 < kExactMatch; ++a) {
        Index3 lo = peak, hi = peak;
        lo[a] -= 1;
        hi[a] += 1;
        const double sl = score_at(lo), sh = score_at(hi);
        if (sl == kUndefined || sh == kUndefined) continue;
        frac[a] = subvoxel_offset(sl, s0, sh);
    }

    for (int a = 0; a < 3; ++a) result.u[a] = ci[a] + (peak[a] - r) + frac[a];
    result.score = s0;
    result.valid = s0 >= params.min_ncc;
    return result;
}

ScalarVolume downsample(const ScalarVolume& v) {
    const Dims d{std::max(1, v.dims.x / 2), std::max(1, v.dims.y / 2), std::max(1, v.dims.z / 2)};
    ScalarVolume out(d, v.spacing * 2.0);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                double acc = 0.0;
                for (int k = 0; k < 8; ++k)
                    acc += v.clamped(2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + ((k >> 2) & 1));
                out.at(x, y, z) = static_cast<float>(acc / 8.0);
            }
    return out;
}

DisplacementField displacement_field(const ScalarVolume& fixed, const ScalarVolume& moving,
                                     const DvcParams& params, const LabelVolume& mask, int threads) {
    params.validate();
    if (!(fixed.dims == moving.dims) || !(fixed.dims == mask.dims))
        throw Error("displacement_field: volume dims differ");
    if (!fixed.spacing.isApprox(moving.spacing)) throw Error("displacement_field: spacings differ");

    const NodeGrid grid = make_node_grid(fixed.dims, params.block_size, params.node_stride);
    DisplacementField field(grid, fixed.spacing);
    const int b = params.block_size, h = b / 2;

    std::vector<std::size_t> active;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const Index3 c = grid.voxel(n);
        std::size_t labelled = 0;
        for (int z = c.z - h; z <= c.z + h; ++z)
            for (int y = c.y - h; y <= c.y + h; ++y)
                for (int x = c.x - h; x <= c.x + h; ++x) labelled += mask.at(x, y, z) != 0;
        if (2 * labelled >= static_cast<std::size_t>(b) * b * b) active.push_back(n);
    }

    std::vector<ScalarVolume> fixed_pyr{fixed}, moving_pyr{moving};
    for (int l = 1; l < params.pyramid_levels; ++l) {
        fixed_pyr.push_back(downsample(fixed_pyr.back()));
        moving_pyr.push_back(downsample(moving_pyr.back()));
    }

    std::vector<Vec3> u(grid.size(), Vec3::Zero());
    std::vector<BlockMatch> matches(active.size());
    for (int level = params.pyramid_levels - 1; level >= 0; --level) {
        const double scale = static_cast<double>(1 << level);
        parallel_for(active.size(), threads, [&](std::size_t i) {
            const std::size_t n = active[i];
            const Index3 v = grid.voxel(n);
            const Index3 node{static_cast<int>(std::lround(v.x / scale)), static_cast<int>(std::lround(v.y / scale)),
                              static_cast<int>(std::lround(v.z / scale))};
            matches[i] = match_block(fixed_pyr[level], moving_pyr[level], node, params, u[n] / scale);
        });

        std::vector<NodeState> state(grid.size(), NodeState::kMasked);
        std::vector<Vec3> next = u;
        for (std::size_t i = 0; i < active.size(); ++i) {
            const std::size_t n = active[i];
            if (matches[i].valid) {
                state[n] = NodeState::kMatched;
                next[n] = matches[i].u * scale;
                field.score[n] = matches[i].score;
            } else {
                state[n] = NodeState::kRejected;
                field.score[n] = matches[i].score;
            }
        }
        // One fill pass from matched 6-neighbours only.
        std::vector<Vec3> filled = next;
        for (std::size_t n : active) {
            if (state[n] != NodeState::kRejected) continue;
            const Index3 l = grid.lattice(n);
            Vec3 sum = Vec3::Zero();
            int cnt = 0;
            for (int a = 0; a < 3; ++a)
                for (int s : {-1, 1}) {
                    Index3 q = l;
                    q[a] += s;
                    if (q[a] < 0 || q[a] >= grid.count[a]) continue;
                    const std::size_t m = grid.linear(q.x, q.y, q.z);
                    if (state[m] == NodeState::kMatched) {
                        sum += next[m];
                        ++cnt;
                    }
                }
            if (cnt > 0) {
                filled[n] = sum / cnt;
                state[n] = NodeState::kFilled;
            }
        }
        u = std::move(filled);
        field.state = std::move(state);
    }
    field.u = std::move(u);
    for (std::size_t n = 0; n < grid.size(); ++n)
        if (field.state[n] == NodeState::kMasked) field.u[n].setZero();
    if (field.valid_count() == 0) throw Error("displacement_field: no valid nodes");
    return field;
}

void write_field_csv(const std::filesystem::path& path, const DisplacementField& field,
                     const StrainField* strain) {
    std::string s = "node_x,node_y,node_z,ux,uy,uz,ncc,valid,eff\n";
    for (std::size_t n = 0; n < field.grid.size(); ++n) {
        const Index3 v = field.grid.voxel(n);
        const double eff = (strain && strain->defined[n]) ? strain->strain[n].eff : std::nan("");
        s += std::to_string(v.x) + "," + std::to_string(v.y) + "," + std::to_string(v.z) + "," +
             io::fmt(field.u[n].x()) + "," + io::fmt(field.u[n].y()) + "," + io::fmt(field.u[n].z()) + "," +
             io::fmt(field.score[n]) + "," + (field.valid(n) ? "1" : "0") + "," + io::fmt(eff) + "\n";
    }
    io::write_text(path, s);
}

FieldFile read_field_csv(const std::filesystem::path& path, const Vec3& spacing) {
    const auto t = io::read_csv(path);
    const std::size_t cols[9] = {t.column("node_x"), t.column("node_y"), t.column("node_z"),
                                 t.column("ux"),     t.column("uy"),     t.column("uz"),
                                 t.column("ncc"),    t.column("valid"),  t.column("eff")};
    std::set<int> axis_values[3];
    for (const auto& r : t.rows)
        for (int a = 0; a < 3; ++a) axis_values[a].insert(std::stoi(r[cols[a]]));
    NodeGrid g;
    for (int a = 0; a < 3; ++a) {
        if (axis_values[a].empty()) throw Error("empty field csv: " + path.string());
        g.origin[a] = *axis_values[a].begin();
        g.count[a] = static_cast<int>(axis_values[a].size());
        g.stride[a] = g.count[a] > 1 ? *std::next(axis_values[a].begin()) - g.origin[a] : 1;
    }
    if (g.size() != t.rows.size()) throw Error("field csv is not a full lattice: " + path.string());

    FieldFile out{DisplacementField(g, spacing), std::vector<double>(g.size(), std::nan(""))};
    for (const auto& r : t.rows) {
        Index3 v{std::stoi(r[cols[0]]), std::stoi(r[cols[1]]), std::stoi(r[cols[2]])};
        Index3 l;
        for (int a = 0; a < 3; ++a) {
            if ((v[a] - g.origin[a]) % g.stride[a] != 0) throw Error("irregular node lattice in " + path.string());
            l[a] = (v[a] - g.origin[a]) / g.stride[a];
        }
        const std::size_t n = g.linear(l.x, l.y, l.z);
        out.field.u[n] = Vec3(io::parse_double(r[cols[3]]), io::parse_double(r[cols[4]]), io::parse_double(r[cols[5]]));
        out.field.score[n] = io::parse_double(r[cols[6]]);
        out.field.state[n] = r[cols[7]] == "1" ? NodeState::kMatched : NodeState::kRejected;
        out.eff[n] = io::parse_double(r[cols[8]]);
    }
    return out;
}

}  // namespace onh
