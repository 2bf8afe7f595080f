#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "onh/cloud.hpp"

namespace onh {

/// Input columns: x, y, z, five tissue indicators, thickness, strain.
/// Thickness and strain are divided by the scales below. Without the strain
/// channel the strain column is held at zero.
struct ModelConfig {
    int in_features = 10;
    bool use_strain = true;
    std::vector<int> point_mlp_widths{32, 64, 256};
    std::vector<int> head_widths{64, 1};
    std::uint64_t seed = 1;
    double thickness_scale_um = 100.0;
    double strain_scale = 0.01;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Layer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;

    friend bool operator==(const Layer& a, const Layer& c) { return a.W == c.W && a.b == c.b; }
};

struct ModelParams {
    ModelConfig config;
    std::vector<Layer> point;  // shared per-point layers, ReLU
    std::vector<Layer> head;   // ReLU except the last

    std::size_t parameter_count() const;
    /// All weights then biases, point layers first.
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& v);
    bool all_finite() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Fan-in scaled uniform weights, zero biases, seeded by config.seed.
ModelParams init_params(const ModelConfig& config);

/// Zero-valued parameters with the shapes of `config`.
ModelParams zero_params(const ModelConfig& config);

/// N x in_features network input. Throws InvalidSpec when the strain
/// channel is enabled but the cloud has no strain.
Eigen::MatrixXd input_features(const OnhPointCloud& cloud, const ModelConfig& config);

struct ForwardCache {
    std::vector<Eigen::MatrixXd> point_acts;  // [0] input, [l] output of point layer l
    std::vector<Eigen::Index> argmax;         // per pooled channel, first index on ties
    std::vector<Eigen::VectorXd> head_acts;   // [0] pooled feature, [l] output of head layer l
    double logit = 0.0;
};

/// Pre-sigmoid logit; fills `cache` when given.
double forward(const ModelParams& params, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);
double forward(const ModelParams& params, const OnhPointCloud& cloud, ForwardCache* cache = nullptr);

struct Gradients {
    ModelParams params;     // d(dlogit * logit)/d theta
    Eigen::MatrixXd input;  // N x in_features
};

/// Reverse pass scaled by `dlogit`: 1 gives logit gradients, sigmoid(logit) -
/// label gives loss gradients. Only argmax rows receive input gradient.
Gradients backward(const ModelParams& params, const ForwardCache& cache, double dlogit);

double sigmoid(double z);

/// max(z, 0) - z * label + log(1 + exp(-|z|)).
double bce_loss(double logit, int label);

/// Gradients of the BCE loss.
Gradients loss_backward(const ModelParams& params, const ForwardCache& cache, int label);

struct TrainConfig {
    int epochs = 150;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    bool use_strain = true;
    bool augment = true;
    bool class_weighting = true;
    AugmentParams augmentation;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> history;  // mean weighted loss per epoch
};

/// Mini-batch SGD with momentum on the labelled clouds. config.use_strain
/// is taken from `tcfg`. Throws Error when a label is missing or only one
/// class is present.
TrainResult train_model(const std::vector<OnhPointCloud>& data, ModelConfig config, const TrainConfig& tcfg);

/// Sigmoid of the logit on the unaugmented cloud.
double predict(const ModelParams& params, const OnhPointCloud& cloud);

/// JSON header line followed by the little-endian float64 parameter blob.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, int epoch);
ModelParams load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::filesystem::path& path, const std::vector<double>& history);

}  // namespace onh
