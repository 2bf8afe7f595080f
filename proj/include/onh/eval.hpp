#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "onh/cloud.hpp"
#include "onh/net.hpp"
#include "onh/phantom.hpp"

namespace onh {

inline const std::vector<std::string> kTasks{"nasal_step", "arcuate", "hemifield"};

/// One subject. Paths are relative to the manifest directory.
struct SampleRecord {
    std::string id;
    DefectClass defect = DefectClass::kNone;
    std::map<std::string, int> labels;  // task -> 0/1
    std::string fixed, moving, labels_volume, field, cloud;
    PhantomSpec spec;

    int label(const std::string& task) const;
};

struct DatasetManifest {
    std::vector<SampleRecord> samples;
    std::uint64_t seed = 1;

    /// Throws Error on duplicate ids or unknown tasks.
    void validate() const;
    const SampleRecord& find(const std::string& id) const;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
/// Throws Error when a listed volume file is missing.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Manifest plus the in-memory clouds in sample order.
struct Dataset {
    DatasetManifest manifest;
    std::vector<OnhPointCloud> clouds;
};

struct Split {
    std::vector<std::string> train, test;
};

/// Per-class seeded shuffle; each class keeps round(frac * n) training
/// samples, clamped so both sides get at least one. Ids come back in
/// manifest order. Throws Error when a class has fewer than 2 samples.
Split stratified_split(const DatasetManifest& m, const std::string& task, double train_frac, std::uint64_t seed);

struct RocResult {
    double auc = 0.5;
    std::size_t n_pos = 0, n_neg = 0;
    std::vector<double> scores;
    std::vector<int> labels;
};

/// Mann-Whitney AUC with average ranks on ties.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct TaskResult {
    RocResult roc;
    Split split;
    ModelParams params;
    std::vector<double> history;
};

/// Split, train on the task labels, score the test clouds with sigmoid(logit).
TaskResult run_task(const Dataset& data, const std::string& task, const ModelConfig& mcfg, const TrainConfig& tcfg,
                    std::uint64_t split_seed, double train_frac = 0.8);

/// Exact one-sided paired sign-flip test: share of the 2^n sign assignments
/// whose difference sum is at least the observed one.
double sign_flip_p_value(const std::vector<double>& differences);

double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than 2 values.
double sample_std(const std::vector<double>& v);

struct AblationReport {
    std::string task;
    std::vector<std::uint64_t> split_seeds;
    std::vector<double> auc_with, auc_without;
    double mean_with = 0, std_with = 0, mean_without = 0, std_without = 0;
    double mean_difference = 0, p_value = 1;
    std::vector<TaskResult> with_runs;  // kept for saliency
};

/// run_task with and without the strain channel on identical splits.
AblationReport ablation_study(const Dataset& data, const std::string& task, const ModelConfig& mcfg,
                              const TrainConfig& tcfg, const std::vector<std::uint64_t>& split_seeds,
                              double train_frac = 0.8);

nlohmann::json to_json(const AblationReport& r, const std::string& config_hash);
/// split_seed,auc_with,auc_without,difference
std::string ablation_csv(const AblationReport& r);

}  // namespace onh
