#include "onh/config.hpp"

#include <set>

#include "onh/io.hpp"

namespace onh {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects the rest.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = read<T>(j_.at(key));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(child(key) + ": wrong type or value");
        }
    }

    void get(const char* key, Vec3& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 3) throw ConfigError(child(key) + ": expected 3 numbers");
        for (int a = 0; a < 3; ++a) {
            if (!v[a].is_number()) throw ConfigError(child(key) + ": expected 3 numbers");
            out[a] = v[a].get<double>();
        }
    }

    void get(const char* key, Index3& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 3) throw ConfigError(child(key) + ": expected 3 integers");
        for (int a = 0; a < 3; ++a) {
            if (!v[a].is_number_integer()) throw ConfigError(child(key) + ": expected 3 integers");
            out[a] = v[a].get<int>();
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(child(k) + ": unknown key");
    }

    // Runs a component validate() and tags failures with this section.
    template <class F>
    void check(F&& f) const {
        try {
            f();
        } catch (const InvalidSpec& e) {
            throw ConfigError(where() + ": " + e.what());
        }
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    template <class T>
    static T read(const json& v) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw std::invalid_argument("bool");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw std::invalid_argument("int");
            if constexpr (std::is_unsigned_v<T>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                    throw std::invalid_argument("negative");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw std::invalid_argument("number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw std::invalid_argument("string");
        }
        return v.get<T>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json idx(const Index3& v) { return json::array({v.x, v.y, v.z}); }

json model_section(const ModelConfig& m);

void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidSpec(msg);
}

}  // namespace

void CohortConfig::validate() const {
    require(size >= 4, "cohort size must be >= 4");
    require(nasal_fraction >= 0 && arcuate_fraction >= 0 && hemifield_fraction >= 0,
            "class fractions must be nonnegative");
    require(nasal_fraction + arcuate_fraction + hemifield_fraction <= 1.0, "class fractions must sum to <= 1");
    require(radius_jitter >= 0 && radius_jitter < 0.5, "radius_jitter must lie in [0, 0.5)");
    require(cup_depth_jitter >= 0 && cup_depth_jitter < 1, "cup_depth_jitter must lie in [0, 1)");
    require(strain_peak_jitter >= 0 && strain_peak_jitter < 1, "strain_peak_jitter must lie in [0, 1)");
    require(center_jitter_um >= 0, "center_jitter_um must be >= 0");
}

void CloudConfig::validate() const {
    require(target_n >= 1, "target_n must be >= 1");
    augment.validate();
}

void SaliencyConfig::validate() const {
    defect_class_from_string(task);
    require(task != "none", "saliency task must name a defect");
    require(slab_width_um > 0, "slab_width_um must be positive");
    require(sector_radial_min >= 0 && sector_radial_max > sector_radial_min, "sector radial range is empty");
}

void EvalConfig::validate() const {
    require(!split_seeds.empty(), "split_seeds must not be empty");
    require(split_seeds.size() <= 20, "at most 20 split seeds");
    require(train_frac > 0 && train_frac < 1, "train_frac must lie in (0, 1)");
    defect_class_from_string(ablation_task);
    require(ablation_task != "none", "ablation_task must name a defect");
}

void PipelineConfig::validate() const {
    phantom.validate();
    cohort.validate();
    dvc.validate();
    cloud.validate();
    model.validate();
    train.validate();
    saliency.validate();
    eval.validate();
    require(!output_dir.empty(), "output_dir must not be empty");
}

void PipelineConfig::override_seed(std::uint64_t seed) {
    cohort.seed = seed;
    model.seed = seed;
    train.seed = seed;
}

json to_json(const ModelConfig& c) {
    return json{{"in_features", c.in_features},       {"use_strain", c.use_strain},
                {"point_mlp_widths", c.point_mlp_widths},
                {"head_widths", c.head_widths},       {"seed", c.seed},
                {"thickness_scale_um", c.thickness_scale_um}, {"strain_scale", c.strain_scale}};
}

ModelConfig model_config_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    ModelConfig c;
    s.get("in_features", c.in_features);
    s.get("use_strain", c.use_strain);
    s.get("point_mlp_widths", c.point_mlp_widths);
    s.get("head_widths", c.head_widths);
    s.get("seed", c.seed);
    s.get("thickness_scale_um", c.thickness_scale_um);
    s.get("strain_scale", c.strain_scale);
    s.finish();
    s.check([&] { c.validate(); });
    return c;
}

json to_json(const PipelineConfig& c) {
    const auto& p = c.phantom;
    const auto& a = c.cloud.augment;
    return json{
        {"phantom",
         {{"dims", idx(p.dims)},
          {"spacing_um", vec(p.spacing)},
          {"bmo_radius_um", p.bmo_radius_um},
          {"cup_depth_um", p.cup_depth_um},
          {"sector_strain_peak", p.sector_strain_peak},
          {"baseline_strain", p.baseline_strain},
          {"speckle_amplitude", p.speckle_amplitude},
          {"translation_vox", vec(p.translation_vox)},
          {"max_displacement_vox", p.max_displacement_vox}}},
        {"cohort",
         {{"size", c.cohort.size},
          {"nasal_fraction", c.cohort.nasal_fraction},
          {"arcuate_fraction", c.cohort.arcuate_fraction},
          {"hemifield_fraction", c.cohort.hemifield_fraction},
          {"seed", c.cohort.seed},
          {"radius_jitter", c.cohort.radius_jitter},
          {"cup_depth_jitter", c.cohort.cup_depth_jitter},
          {"strain_peak_jitter", c.cohort.strain_peak_jitter},
          {"center_jitter_um", c.cohort.center_jitter_um}}},
        {"dvc",
         {{"block_size", c.dvc.block_size},
          {"node_stride", c.dvc.node_stride},
          {"search_radius", c.dvc.search_radius},
          {"pyramid_levels", c.dvc.pyramid_levels},
          {"min_ncc", c.dvc.min_ncc}}},
        {"cloud",
         {{"target_n", c.cloud.target_n},
          {"crop_probability", a.crop_probability},
          {"crop_radius_min", a.crop_radius_min},
          {"crop_radius_max", a.crop_radius_max},
          {"max_crop_fraction", a.max_crop_fraction},
          {"max_rotation_deg", a.max_rotation_deg},
          {"sample_n", a.sample_n}}},
        {"model", model_section(c.model)},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"momentum", c.train.momentum},
          {"seed", c.train.seed},
          {"use_strain", c.train.use_strain},
          {"augment", c.train.augment},
          {"class_weighting", c.train.class_weighting}}},
        {"saliency",
         {{"task", c.saliency.task},
          {"slab_width_um", c.saliency.slab_width_um},
          {"is_slab_center_bmo", c.saliency.is_slab_center_bmo},
          {"nt_slab_center_bmo", c.saliency.nt_slab_center_bmo},
          {"sector_radial_min", c.saliency.sector_radial_min},
          {"sector_radial_max", c.saliency.sector_radial_max}}},
        {"eval",
         {{"split_seeds", c.eval.split_seeds},
          {"train_frac", c.eval.train_frac},
          {"ablation_task", c.eval.ablation_task}}},
        {"output_dir", c.output_dir}};
}

namespace {

json model_section(const ModelConfig& m) {
    json j = to_json(m);
    j.erase("use_strain");
    return j;
}

}  // namespace

PipelineConfig parse_config(const json& j) {
    PipelineConfig c;
    Section root(j, "");
    if (root.has("phantom")) {
        Section s(root.raw("phantom"), "phantom");
        auto& p = c.phantom;
        s.get("dims", p.dims);
        s.get("spacing_um", p.spacing);
        s.get("bmo_radius_um", p.bmo_radius_um);
        s.get("cup_depth_um", p.cup_depth_um);
        s.get("sector_strain_peak", p.sector_strain_peak);
        s.get("baseline_strain", p.baseline_strain);
        s.get("speckle_amplitude", p.speckle_amplitude);
        s.get("translation_vox", p.translation_vox);
        s.get("max_displacement_vox", p.max_displacement_vox);
        s.finish();
        s.check([&] { p.validate(); });
    }
    if (root.has("cohort")) {
        Section s(root.raw("cohort"), "cohort");
        auto& k = c.cohort;
        s.get("size", k.size);
        s.get("nasal_fraction", k.nasal_fraction);
        s.get("arcuate_fraction", k.arcuate_fraction);
        s.get("hemifield_fraction", k.hemifield_fraction);
        s.get("seed", k.seed);
        s.get("radius_jitter", k.radius_jitter);
        s.get("cup_depth_jitter", k.cup_depth_jitter);
        s.get("strain_peak_jitter", k.strain_peak_jitter);
        s.get("center_jitter_um", k.center_jitter_um);
        s.finish();
        s.check([&] { k.validate(); });
    }
    if (root.has("dvc")) {
        Section s(root.raw("dvc"), "dvc");
        s.get("block_size", c.dvc.block_size);
        s.get("node_stride", c.dvc.node_stride);
        s.get("search_radius", c.dvc.search_radius);
        s.get("pyramid_levels", c.dvc.pyramid_levels);
        s.get("min_ncc", c.dvc.min_ncc);
        s.finish();
        s.check([&] { c.dvc.validate(); });
    }
    if (root.has("cloud")) {
        Section s(root.raw("cloud"), "cloud");
        auto& a = c.cloud.augment;
        s.get("target_n", c.cloud.target_n);
        s.get("crop_probability", a.crop_probability);
        s.get("crop_radius_min", a.crop_radius_min);
        s.get("crop_radius_max", a.crop_radius_max);
        s.get("max_crop_fraction", a.max_crop_fraction);
        s.get("max_rotation_deg", a.max_rotation_deg);
        s.get("sample_n", a.sample_n);
        s.finish();
        s.check([&] { c.cloud.validate(); });
    }
    if (root.has("model")) {
        if (root.raw("model").is_object() && root.raw("model").contains("use_strain"))
            throw ConfigError("model.use_strain: unknown key (set train.use_strain)");
        c.model = model_config_from_json(root.raw("model"), "model");
    }
    if (root.has("train")) {
        Section s(root.raw("train"), "train");
        auto& t = c.train;
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("learning_rate", t.learning_rate);
        s.get("momentum", t.momentum);
        s.get("seed", t.seed);
        s.get("use_strain", t.use_strain);
        s.get("augment", t.augment);
        s.get("class_weighting", t.class_weighting);
        s.finish();
        s.check([&] { t.validate(); });
    }
    c.train.augmentation = c.cloud.augment;
    c.model.use_strain = c.train.use_strain;
    if (root.has("saliency")) {
        Section s(root.raw("saliency"), "saliency");
        auto& v = c.saliency;
        s.get("task", v.task);
        s.get("slab_width_um", v.slab_width_um);
        s.get("is_slab_center_bmo", v.is_slab_center_bmo);
        s.get("nt_slab_center_bmo", v.nt_slab_center_bmo);
        s.get("sector_radial_min", v.sector_radial_min);
        s.get("sector_radial_max", v.sector_radial_max);
        s.finish();
        s.check([&] { v.validate(); });
    }
    if (root.has("eval")) {
        Section s(root.raw("eval"), "eval");
        s.get("split_seeds", c.eval.split_seeds);
        s.get("train_frac", c.eval.train_frac);
        s.get("ablation_task", c.eval.ablation_task);
        s.finish();
        s.check([&] { c.eval.validate(); });
    }
    root.get("output_dir", c.output_dir);
    root.finish();
    root.check([&] { c.validate(); });
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

std::string canonical_string(const PipelineConfig& c) {
    auto j = to_json(c);
    j.erase("output_dir");
    return j.dump();
}

}  // namespace onh
