#include "onh/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "onh/io.hpp"

namespace onh {

using nlohmann::json;

float ScalarVolume::clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, dims.x - 1);
    y = std::clamp(y, 0, dims.y - 1);
    z = std::clamp(z, 0, dims.z - 1);
    return data[linear_index(dims, x, y, z)];
}

double ScalarVolume::trilinear(double x, double y, double z) const {
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy), iz = static_cast<int>(fz);
    const double tx = x - fx, ty = y - fy, tz = z - fz;
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? tz : 1.0 - tz;
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? ty : 1.0 - ty;
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? tx : 1.0 - tx;
                const double w = wx * wy * wz;
                if (w != 0.0) acc += w * clamped(ix + dx, iy + dy, iz + dz);
            }
        }
    }
    return acc;
}

void validate(const LabelVolume& v) {
    if (v.labels.size() != voxel_count(v.dims)) throw InvalidSpec("label volume size mismatch");
    for (auto l : v.labels)
        if (l > kTissueClasses) throw InvalidSpec("label code out of range");
    if (v.bmo_points.empty()) throw InvalidSpec("label volume has no BMO points");
    for (const auto& p : v.bmo_points) {
        for (int a = 0; a < 3; ++a) {
            const double hi = (v.dims[a] - 1) * v.spacing[a];
            if (!(p[a] >= 0.0 && p[a] <= hi)) throw InvalidSpec("BMO point outside volume");
        }
    }
}

namespace {

json header(const Dims& d, const Vec3& s, const char* dtype) {
    return json{{"dims", {d.x, d.y, d.z}},
                {"spacing_um", {s.x(), s.y(), s.z()}},
                {"dtype", dtype},
                {"order", "x-fastest"}};
}

void read_header(const std::filesystem::path& stem, const char* dtype, Dims& d, Vec3& s) {
    const auto h = json::parse(io::read_text(stem.string() + ".json"));
    if (h.at("dtype").get<std::string>() != dtype)
        throw Error("unexpected dtype in " + stem.string() + ".json");
    if (h.at("order").get<std::string>() != "x-fastest")
        throw Error("unsupported voxel order in " + stem.string() + ".json");
    const auto dims = h.at("dims").get<std::vector<int>>();
    const auto sp = h.at("spacing_um").get<std::vector<double>>();
    if (dims.size() != 3 || sp.size() != 3) throw Error("malformed volume header");
    d = {dims[0], dims[1], dims[2]};
    s = Vec3(sp[0], sp[1], sp[2]);
}

}  // namespace

void write_volume(const std::filesystem::path& stem, const ScalarVolume& v) {
    io::write_text(stem.string() + ".json", header(v.dims, v.spacing, "f32le").dump(2) + "\n");
    std::string raw(v.data.size() * 4, '\0');
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(v.data[i]);
        for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    io::write_text(stem.string() + ".raw", raw);
}

void write_volume(const std::filesystem::path& stem, const LabelVolume& v) {
    auto h = header(v.dims, v.spacing, "u8");
    h["bmo_points_um"] = json::array();
    for (const auto& p : v.bmo_points) h["bmo_points_um"].push_back({p.x(), p.y(), p.z()});
    io::write_text(stem.string() + ".json", h.dump(2) + "\n");
    io::write_text(stem.string() + ".raw",
                   std::string_view(reinterpret_cast<const char*>(v.labels.data()), v.labels.size()));
}

ScalarVolume read_scalar_volume(const std::filesystem::path& stem) {
    ScalarVolume v;
    read_header(stem, "f32le", v.dims, v.spacing);
    const auto raw = io::read_text(stem.string() + ".raw");
    if (raw.size() != voxel_count(v.dims) * 4) throw Error("raw size mismatch: " + stem.string());
    v.data.resize(voxel_count(v.dims));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
        v.data[i] = std::bit_cast<float>(bits);
    }
    return v;
}

LabelVolume read_label_volume(const std::filesystem::path& stem) {
    LabelVolume v;
    read_header(stem, "u8", v.dims, v.spacing);
    const auto raw = io::read_text(stem.string() + ".raw");
    if (raw.size() != voxel_count(v.dims)) throw Error("raw size mismatch: " + stem.string());
    v.labels.assign(raw.begin(), raw.end());
    const auto h = json::parse(io::read_text(stem.string() + ".json"));
    if (h.contains("bmo_points_um"))
        for (const auto& p : h.at("bmo_points_um")) {
            const auto c = p.get<std::vector<double>>();
            if (c.size() != 3) throw Error("malformed BMO point in " + stem.string() + ".json");
            v.bmo_points.emplace_back(c[0], c[1], c[2]);
        }
    return v;
}

}  // namespace onh
