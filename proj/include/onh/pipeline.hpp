#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "onh/config.hpp"
#include "onh/eval.hpp"
#include "onh/saliency.hpp"

namespace onh {

/// Per-subject phantom specs: class mix from the cohort fractions (rounded,
/// remainder without defect), seeded shuffle, then per-subject jitter.
std::vector<PhantomSpec> cohort_specs(const PipelineConfig& config);

/// Records with ids `p000`, ... and conventional relative paths.
DatasetManifest cohort_manifest(const PipelineConfig& config);

struct SubjectData {
    ScalarVolume fixed, moving;
    LabelVolume labels;
};

SubjectData simulate_subject(const PhantomSpec& spec, const DvcParams& dvc);

struct ProcessedSubject {
    DisplacementField field;
    StrainField strain;
    OnhPointCloud cloud;
};

ProcessedSubject process_subject(const SubjectData& s, const PipelineConfig& config, std::uint64_t cloud_seed,
                                 int threads);

using Progress = std::function<void(const std::string&)>;

/// The whole cohort in memory: phantoms, DVC, strain and clouds.
Dataset build_dataset(const PipelineConfig& config, int threads, const Progress& progress = {});

// File-based stages used by the command line. Paths are under `out`.
DatasetManifest stage_phantom_gen(const PipelineConfig& config, const std::filesystem::path& out);
void stage_dvc_run(const PipelineConfig& config, const std::filesystem::path& out, int threads);
void stage_cloud_build(const PipelineConfig& config, const std::filesystem::path& out);
Dataset load_dataset(const std::filesystem::path& out);

struct SaliencySummary {
    std::string task;
    GridMap group_enface, group_is, group_nt;
    std::size_t patients = 0;
    double sector_mass = 0.0;
    double chance_fraction = 0.0;  // sector share of the cells holding any cloud point
    double whole_map_fraction = 0.0;
    double max_conservation_error = 0.0;  // relative, per patient
};

/// Maps for every patient with the task's defect, averaged per group.
SaliencySummary saliency_maps(const Dataset& data, const ModelParams& params, const SaliencyConfig& cfg,
                              const std::filesystem::path* out_dir = nullptr);

nlohmann::json to_json(const SaliencySummary& s);

std::string config_hash(const PipelineConfig& config);

}  // namespace onh
