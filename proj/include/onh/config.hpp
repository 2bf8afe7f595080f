#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "onh/cloud.hpp"
#include "onh/dvc.hpp"
#include "onh/net.hpp"
#include "onh/phantom.hpp"

namespace onh {

/// Synthetic cohort: class mix, per-subject jitter and master seed.
struct CohortConfig {
    int size = 200;
    double nasal_fraction = 26.0 / 237.0;
    double arcuate_fraction = 62.0 / 237.0;
    double hemifield_fraction = 25.0 / 237.0;
    std::uint64_t seed = 1;
    double radius_jitter = 0.1;        // relative, uniform +-
    double cup_depth_jitter = 0.2;     // relative
    double strain_peak_jitter = 0.25;  // relative
    double center_jitter_um = 20.0;    // lateral BMO offset, uniform +-

    void validate() const;
    friend bool operator==(const CohortConfig&, const CohortConfig&) = default;
};

struct CloudConfig {
    std::size_t target_n = 6000;
    AugmentParams augment;

    void validate() const;
    friend bool operator==(const CloudConfig&, const CloudConfig&) = default;
};

struct SaliencyConfig {
    std::string task = "arcuate";
    double slab_width_um = 100.0;
    double is_slab_center_bmo = 0.0;   // x of the inferior-superior slab, BMO radii
    double nt_slab_center_bmo = -1.0;  // y of the nasal-temporal slab, BMO radii
    double sector_radial_min = 0.5;    // BMO radii
    double sector_radial_max = 1.5;

    void validate() const;
    friend bool operator==(const SaliencyConfig&, const SaliencyConfig&) = default;
};

struct EvalConfig {
    std::vector<std::uint64_t> split_seeds{1, 2, 3, 4, 5};
    double train_frac = 0.8;
    std::string ablation_task = "arcuate";

    void validate() const;
    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct PipelineConfig {
    PhantomSpec phantom;  // template; class, seed and jitter come from the cohort
    CohortConfig cohort;
    DvcParams dvc;
    CloudConfig cloud;
    ModelConfig model;
    TrainConfig train;  // train.augmentation mirrors cloud.augment
    SaliencyConfig saliency;
    EvalConfig eval;
    std::string output_dir = "out";

    void validate() const;
    /// Sets the cohort, model and training seeds.
    void override_seed(std::uint64_t seed);
    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Strict parse: every key optional, unknown keys and type mismatches throw
/// ConfigError naming the key path (e.g. `train.epochs`).
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const PipelineConfig& c);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path);

/// Canonical serialization used for the report fingerprint; the output
/// directory is left out.
std::string canonical_string(const PipelineConfig& c);

}  // namespace onh
