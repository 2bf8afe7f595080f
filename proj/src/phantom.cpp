#include "onh/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "onh/rng.hpp"
#include "onh/strain.hpp"

namespace onh {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Per-tissue base intensity, indexed by label code.
constexpr std::array<float, 6> kBaseIntensity = {40.0f, 120.0f, 95.0f, 80.0f, 150.0f, 110.0f};

// Axial layer boundaries as fractions of the volume depth.
constexpr double kIlmFrac = 0.20;
constexpr double kRnflFrac = 0.32;
constexpr double kGclFrac = 0.40;
constexpr double kRetinaFrac = 0.50;
constexpr double kBmFrac = 0.54;
constexpr double kLcTopFrac = 0.60;
constexpr double kLcBottomFrac = 0.78;

constexpr int kBmoRingPoints = 32;
constexpr double kSpeckleSigmaVox = 1.5;
constexpr double kBumpSigmaFrac = 0.35;  // bump width relative to the BMO radius
constexpr double kBumpStepDeg = 5.0;

double wrap_deg(double a) {
    a = std::fmod(a, 360.0);
    return a < 0.0 ? a + 360.0 : a;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable blur with replicate border; `data` is x-fastest.
void blur_axis(std::vector<double>& data, const Dims& d, int axis, const std::vector<double>& k) {
    const int r = static_cast<int>(k.size() / 2);
    const int n = d[axis];
    std::vector<double> line(n), out(n);
    const int other1 = axis == 0 ? 1 : 0;
    const int other2 = axis == 2 ? 1 : 2;
    for (int b = 0; b < d[other2]; ++b) {
        for (int a = 0; a < d[other1]; ++a) {
            Index3 p;
            p[other1] = a;
            p[other2] = b;
            for (int i = 0; i < n; ++i) {
                p[axis] = i;
                line[i] = data[linear_index(d, p.x, p.y, p.z)];
            }
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) acc += k[t + r] * line[std::clamp(i + t, 0, n - 1)];
                out[i] = acc;
            }
            for (int i = 0; i < n; ++i) {
                p[axis] = i;
                data[linear_index(d, p.x, p.y, p.z)] = out[i];
            }
        }
    }
}

}  // namespace

std::string_view to_string(DefectClass c) {
    switch (c) {
        case DefectClass::kNone: return "none";
        case DefectClass::kNasalStep: return "nasal_step";
        case DefectClass::kArcuate: return "arcuate";
        case DefectClass::kHemifield: return "hemifield";
    }
    return "none";
}

DefectClass defect_class_from_string(std::string_view s) {
    if (s == "none") return DefectClass::kNone;
    if (s == "nasal_step") return DefectClass::kNasalStep;
    if (s == "arcuate") return DefectClass::kArcuate;
    if (s == "hemifield") return DefectClass::kHemifield;
    throw InvalidSpec("unknown defect class: " + std::string(s));
}

bool AngularSector::contains(double angle_deg) const {
    if (span_deg >= 360.0) return true;
    if (span_deg <= 0.0) return false;
    return wrap_deg(angle_deg - start_deg) < span_deg;
}

AngularSector causal_sector(DefectClass c) {
    switch (c) {
        case DefectClass::kNone: return {0.0, 0.0};
        case DefectClass::kNasalStep: return {240.0, 60.0};
        case DefectClass::kArcuate: return {255.0, 120.0};
        case DefectClass::kHemifield: return {180.0, 180.0};
    }
    return {0.0, 0.0};
}

PhantomSpec PhantomSpec::clinical_preset() {
    PhantomSpec s;
    s.dims = {384, 97, 496};
    s.spacing = Vec3(11.5, 35.1, 3.87);
    s.bmo_radius_um = 900.0;
    s.cup_depth_um = 300.0;
    return s;
}

PhantomGeometry phantom_geometry(const PhantomSpec& spec) {
    PhantomGeometry g;
    const double depth = spec.dims.z * spec.spacing.z();
    g.ilm_z = kIlmFrac * depth;
    g.rnfl_bottom_z = kRnflFrac * depth;
    g.gcl_bottom_z = kGclFrac * depth;
    g.retina_bottom_z = kRetinaFrac * depth;
    g.bm_z = kBmFrac * depth;
    g.lc_top_z = kLcTopFrac * depth;
    g.lc_bottom_z = kLcBottomFrac * depth;
    g.bmo_center_um = Vec3(0.5 * (spec.dims.x - 1) * spec.spacing.x() + spec.center_offset_um.x(),
                           0.5 * (spec.dims.y - 1) * spec.spacing.y() + spec.center_offset_um.y(),
                           g.bm_z);
    g.radius_um = spec.bmo_radius_um;
    g.cup_radius_um = 0.8 * spec.bmo_radius_um;
    g.cup_depth_um = spec.cup_depth_um;
    return g;
}

double PhantomGeometry::surface_z(double rho_um) const {
    if (rho_um >= cup_radius_um) return ilm_z;
    const double t = rho_um / cup_radius_um;
    return ilm_z + cup_depth_um * (1.0 - t * t);
}

std::uint8_t PhantomGeometry::label_at(const Vec3& p) const {
    const double rho = std::hypot(p.x() - bmo_center_um.x(), p.y() - bmo_center_um.y());
    const double z = p.z();
    if (rho < radius_um) {
        if (z < surface_z(rho)) return 0;
        if (z < lc_top_z) return 1;
        if (z < lc_bottom_z) return 5;
        return 0;
    }
    if (z < ilm_z) return 0;
    if (z < rnfl_bottom_z) return 1;
    if (z < gcl_bottom_z) return 2;
    if (z < retina_bottom_z) return 3;
    if (z < bm_z) return 4;
    return 0;
}

void PhantomSpec::validate() const {
    if (dims.x < 16 || dims.y < 16 || dims.z < 16) throw InvalidSpec("phantom dims must be >= 16");
    if (!(spacing.x() > 0 && spacing.y() > 0 && spacing.z() > 0))
        throw InvalidSpec("phantom spacing must be positive");
    if (!(bmo_radius_um > 0)) throw InvalidSpec("bmo_radius_um must be positive");
    if (!(baseline_strain >= 0)) throw InvalidSpec("baseline_strain must be >= 0");
    if (!(sector_strain_peak >= baseline_strain))
        throw InvalidSpec("sector_strain_peak must be >= baseline_strain");
    if (baseline_strain >= 1.0 / 3.0) throw InvalidSpec("baseline_strain too large");
    if (!(cup_depth_um >= 0)) throw InvalidSpec("cup_depth_um must be >= 0");
    if (!(speckle_amplitude >= 0)) throw InvalidSpec("speckle_amplitude must be >= 0");
    if (!(max_displacement_vox > 0)) throw InvalidSpec("max_displacement_vox must be positive");

    const auto g = phantom_geometry(*this);
    const double dz = spacing.z();
    const double layers[] = {g.ilm_z, g.rnfl_bottom_z, g.gcl_bottom_z, g.retina_bottom_z, g.bm_z};
    for (int i = 0; i + 1 < 5; ++i)
        if (layers[i + 1] - layers[i] < dz) throw InvalidSpec("dims too small: retinal layer thinner than a voxel");
    if (g.lc_bottom_z - g.lc_top_z < dz) throw InvalidSpec("dims too small: lamina thinner than a voxel");
    if (g.ilm_z + cup_depth_um > g.lc_top_z - dz) throw InvalidSpec("cup too deep for the axial extent");
    for (int a = 0; a < 2; ++a) {
        const double lo = g.bmo_center_um[a] - bmo_radius_um - 2.0 * spacing[a];
        const double hi = g.bmo_center_um[a] + bmo_radius_um + 2.0 * spacing[a];
        if (lo < 0.0 || hi > (dims[a] - 1) * spacing[a])
            throw InvalidSpec("dims too small: BMO does not fit laterally");
    }
}

std::pair<ScalarVolume, LabelVolume> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const auto g = phantom_geometry(spec);
    const Dims d = spec.dims;

    LabelVolume labels(d, spec.spacing);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                labels.at(x, y, z) = g.label_at(Vec3(x * spec.spacing.x(), y * spec.spacing.y(), z * spec.spacing.z()));

    labels.bmo_points.reserve(kBmoRingPoints);
    for (int k = 0; k < kBmoRingPoints; ++k) {
        const double t = 2.0 * std::numbers::pi * k / kBmoRingPoints;
        labels.bmo_points.emplace_back(g.bmo_center_um.x() + g.radius_um * std::cos(t),
                                       g.bmo_center_um.y() + g.radius_um * std::sin(t), g.bm_z);
    }

    ScalarVolume image(d, spec.spacing);
    std::vector<double> speckle;
    if (spec.speckle_amplitude > 0.0) {
        Rng rng(spec.seed);
        speckle.resize(voxel_count(d));
        for (auto& v : speckle) v = rng.normal();
        const auto k = gaussian_kernel(kSpeckleSigmaVox);
        for (int axis = 0; axis < 3; ++axis) blur_axis(speckle, d, axis, k);
        double k2 = 0.0;
        for (double w : k) k2 += w * w;
        const double scale = spec.speckle_amplitude / std::pow(k2, 1.5);
        for (auto& v : speckle) v *= scale;
    }
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const double s = speckle.empty() ? 0.0 : speckle[i];
        image.data[i] = static_cast<float>(kBaseIntensity[labels.labels[i]] + s);
    }
    return {std::move(image), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Displacement program

Vec3 DisplacementProgram::displacement(const Vec3& x) const {
    Vec3 u = translation_um;
    u.z() += axial_stretch * (x.z() - reference_z_um);
    if (bump_amplitude_um != 0.0) {
        const double inv2s2 = 0.5 / (bump_sigma_um * bump_sigma_um);
        const double cutoff2 = 36.0 * bump_sigma_um * bump_sigma_um;
        double sum = 0.0;
        for (const auto& c : bump_centers_um) {
            const double r2 = (x - c).squaredNorm();
            if (r2 < cutoff2) sum += std::exp(-r2 * inv2s2);
        }
        u.z() += bump_amplitude_um * sum;
    }
    return u;
}

Mat3 DisplacementProgram::gradient(const Vec3& x) const {
    Mat3 G = Mat3::Zero();
    G(2, 2) = axial_stretch;
    if (bump_amplitude_um != 0.0) {
        const double s2 = bump_sigma_um * bump_sigma_um;
        const double cutoff2 = 36.0 * s2;
        for (const auto& c : bump_centers_um) {
            const Vec3 r = x - c;
            const double r2 = r.squaredNorm();
            if (r2 >= cutoff2) continue;
            const double e = bump_amplitude_um * std::exp(-0.5 * r2 / s2);
            G.row(2) -= (e / s2) * r.transpose();
        }
    }
    return G;
}

double DisplacementProgram::effective_strain_at(const Vec3& x) const {
    return local_strain(gradient(x)).eff;
}

bool DisplacementProgram::is_zero() const {
    return translation_um.isZero(0.0) && axial_stretch == 0.0 &&
           (bump_amplitude_um == 0.0 || bump_centers_um.empty());
}

DisplacementProgram displacement_program(const PhantomSpec& spec) {
    spec.validate();
    const auto g = phantom_geometry(spec);
    DisplacementProgram p;
    p.translation_um = spec.translation_vox.cwiseProduct(spec.spacing);
    // Uniaxial compression with effective strain equal to baseline_strain:
    // (2/3)|s + s^2/2| = b  =>  s = sqrt(1 - 3b) - 1.
    p.axial_stretch = std::sqrt(1.0 - 3.0 * spec.baseline_strain) - 1.0;
    p.reference_z_um = g.bm_z;
    p.bump_sigma_um = kBumpSigmaFrac * g.radius_um;

    const auto sector = causal_sector(spec.defect_class);
    const double ridge_z = 0.5 * (g.ilm_z + g.bm_z);
    if (sector.span_deg > 0.0 && spec.sector_strain_peak > spec.baseline_strain) {
        const int n = static_cast<int>(std::ceil(sector.span_deg / kBumpStepDeg)) + 1;
        for (int k = 0; k < n; ++k) {
            const double a = (sector.start_deg + sector.span_deg * k / (n - 1)) * kDeg;
            p.bump_centers_um.emplace_back(g.bmo_center_um.x() + g.radius_um * std::cos(a),
                                           g.bmo_center_um.y() + g.radius_um * std::sin(a), ridge_z);
        }

        // The gradient is affine in the amplitude: G(x; A) = G0(x) + A G1(x).
        // Calibrate A so the peak effective strain around the ridge equals
        // sector_strain_peak.
        std::vector<std::pair<Mat3, Mat3>> samples;
        DisplacementProgram unit = p;
        unit.translation_um.setZero();
        unit.bump_amplitude_um = 1.0;
        DisplacementProgram base = p;
        base.bump_amplitude_um = 0.0;
        const double s = p.bump_sigma_um;
        const int na = static_cast<int>(std::ceil(sector.span_deg / 2.0));
        for (int ia = 0; ia <= na; ++ia) {
            const double a = (sector.start_deg + sector.span_deg * ia / na) * kDeg;
            for (int ir = -6; ir <= 6; ++ir) {
                const double rho = g.radius_um + 0.25 * ir * s;
                for (int iz = -6; iz <= 6; ++iz) {
                    const Vec3 x(g.bmo_center_um.x() + rho * std::cos(a),
                                 g.bmo_center_um.y() + rho * std::sin(a), ridge_z + 0.25 * iz * s);
                    const Mat3 g0 = base.gradient(x);
                    samples.emplace_back(g0, unit.gradient(x) - g0);
                }
            }
        }
        auto peak = [&](double amp) {
            double m = 0.0;
            for (const auto& [g0, g1] : samples) m = std::max(m, local_strain(g0 + amp * g1).eff);
            return m;
        };
        double lo = 0.0, hi = spec.sector_strain_peak * s;
        for (int i = 0; i < 60 && peak(hi) < spec.sector_strain_peak; ++i) hi *= 2.0;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            (peak(mid) < spec.sector_strain_peak ? lo : hi) = mid;
        }
        p.bump_amplitude_um = 0.5 * (lo + hi);
    }

    // Per-axis displacement bound, in voxels.
    double ridge = 0.0;
    for (const auto& c : p.bump_centers_um) {
        DisplacementProgram only = p;
        only.translation_um.setZero();
        only.axial_stretch = 0.0;
        ridge = std::max(ridge, std::abs(only.displacement(c).z()));
    }
    const double depth = (spec.dims.z - 1) * spec.spacing.z();
    const double comp = std::abs(p.axial_stretch) * std::max(p.reference_z_um, depth - p.reference_z_um);
    const Vec3 bound(std::abs(p.translation_um.x()) / spec.spacing.x(),
                     std::abs(p.translation_um.y()) / spec.spacing.y(),
                     (std::abs(p.translation_um.z()) + comp + ridge) / spec.spacing.z());
    if (bound.maxCoeff() > spec.max_displacement_vox)
        throw InvalidSpec("imposed displacement exceeds max_displacement_vox");
    return p;
}

ScalarVolume deform_volume(const ScalarVolume& baseline, const DisplacementProgram& program) {
    if (program.is_zero()) return baseline;
    ScalarVolume out(baseline.dims, baseline.spacing);
    const Vec3& s = baseline.spacing;
    const Dims d = baseline.dims;
    for (int z = 0; z < d.z; ++z) {
        for (int y = 0; y < d.y; ++y) {
            for (int x = 0; x < d.x; ++x) {
                const Vec3 p(x * s.x(), y * s.y(), z * s.z());
                // Invert p = X + u(X) by fixed-point iteration; u is smooth
                // with small gradient so this contracts quickly.
                Vec3 X = p - program.displacement(p);
                for (int it = 0; it < 7; ++it) X = p - program.displacement(X);
                out.at(x, y, z) = static_cast<float>(
                    baseline.trilinear(X.x() / s.x(), X.y() / s.y(), X.z() / s.z()));
            }
        }
    }
    return out;
}

DisplacementField sample_program(const DisplacementProgram& program, const NodeGrid& grid,
                                 const Vec3& spacing) {
    DisplacementField f(grid, spacing);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        f.u[n] = program.displacement(grid.position_um(n, spacing)).cwiseQuotient(spacing);
        f.score[n] = 1.0;
        f.state[n] = NodeState::kMatched;
    }
    return f;
}

DeformedPhantom deform_phantom(const ScalarVolume& baseline, const PhantomSpec& spec,
                               const NodeGrid& grid) {
    if (!(baseline.dims == spec.dims)) throw InvalidSpec("baseline dims do not match spec");
    const auto program = displacement_program(spec);
    return {deform_volume(baseline, program), sample_program(program, grid, spec.spacing)};
}

double sector_strain_contrast(const PhantomSpec& spec, double step_um) {
    const auto program = displacement_program(spec);
    const auto g = phantom_geometry(spec);
    const auto sector = causal_sector(spec.defect_class);
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    const double xmax = (spec.dims.x - 1) * spec.spacing.x();
    const double ymax = (spec.dims.y - 1) * spec.spacing.y();
    for (double z = g.ilm_z; z <= g.bm_z; z += step_um) {
        for (double y = 0.0; y <= ymax; y += step_um) {
            for (double x = 0.0; x <= xmax; x += step_um) {
                const double dx = x - g.bmo_center_um.x(), dy = y - g.bmo_center_um.y();
                const double rho = std::hypot(dx, dy);
                if (rho < 0.5 * g.radius_um || rho > 1.5 * g.radius_um) continue;
                const double eff = program.effective_strain_at(Vec3(x, y, z));
                const double ang = std::atan2(dy, dx) / kDeg;
                if (sector.contains(ang)) {
                    in_sum += eff;
                    ++in_n;
                } else {
                    out_sum += eff;
                    ++out_n;
                }
            }
        }
    }
    if (in_n == 0 || out_n == 0) return 0.0;
    const double out_mean = out_sum / static_cast<double>(out_n);
    const double in_mean = in_sum / static_cast<double>(in_n);
    return out_mean > 0.0 ? in_mean / out_mean : INFINITY;
}

}  // namespace onh
