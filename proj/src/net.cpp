#include "onh/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "onh/config.hpp"
#include "onh/io.hpp"

namespace onh {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
    if (in_features != 10) throw InvalidSpec("in_features must be 10");
    if (point_mlp_widths.empty() || head_widths.empty()) throw InvalidSpec("layer widths must not be empty");
    for (int w : point_mlp_widths)
        if (w < 1) throw InvalidSpec("layer widths must be >= 1");
    for (int w : head_widths)
        if (w < 1) throw InvalidSpec("layer widths must be >= 1");
    if (head_widths.back() != 1) throw InvalidSpec("final head width must be 1");
    if (!(thickness_scale_um > 0) || !(strain_scale > 0)) throw InvalidSpec("feature scales must be positive");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidSpec("epochs must be >= 1");
    if (batch_size < 1) throw InvalidSpec("batch_size must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw InvalidSpec("learning_rate must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw InvalidSpec("momentum must lie in [0, 1)");
    augmentation.validate();
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* ls : {&point, &head})
        for (const auto& l : *ls) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
}

VectorXd ModelParams::flatten() const {
    VectorXd v(static_cast<Index>(parameter_count()));
    Index k = 0;
    for (const auto* ls : {&point, &head})
        for (const auto& l : *ls) {
            v.segment(k, l.W.size()) = l.W.reshaped();
            k += l.W.size();
            v.segment(k, l.b.size()) = l.b;
            k += l.b.size();
        }
    return v;
}

void ModelParams::assign(const VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count()) throw Error("parameter vector has wrong length");
    Index k = 0;
    for (auto* ls : {&point, &head})
        for (auto& l : *ls) {
            l.W.reshaped() = v.segment(k, l.W.size());
            k += l.W.size();
            l.b = v.segment(k, l.b.size());
            k += l.b.size();
        }
}

bool ModelParams::all_finite() const {
    for (const auto* ls : {&point, &head})
        for (const auto& l : *ls)
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
    return true;
}

ModelParams zero_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    int in = config.in_features;
    for (int w : config.point_mlp_widths) {
        p.point.push_back({MatrixXd::Zero(w, in), VectorXd::Zero(w)});
        in = w;
    }
    for (int w : config.head_widths) {
        p.head.push_back({MatrixXd::Zero(w, in), VectorXd::Zero(w)});
        in = w;
    }
    return p;
}

ModelParams init_params(const ModelConfig& config) {
    ModelParams p = zero_params(config);
    Rng rng(config.seed);
    for (auto* ls : {&p.point, &p.head})
        for (auto& l : *ls) {
            const double bound = std::sqrt(6.0 / static_cast<double>(l.W.cols()));
            for (Index j = 0; j < l.W.cols(); ++j)
                for (Index i = 0; i < l.W.rows(); ++i) l.W(i, j) = rng.uniform(-bound, bound);
        }
    return p;
}

MatrixXd input_features(const OnhPointCloud& cloud, const ModelConfig& config) {
    const bool with_strain = config.use_strain;
    if (with_strain && !cloud.has_strain()) throw InvalidSpec("model expects a strain channel but the cloud has none");
    const auto n = static_cast<Index>(cloud.size());
    MatrixXd x = MatrixXd::Zero(n, config.in_features);
    for (Index i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        x.block<1, 3>(i, 0) = cloud.points[k].transpose();
        x(i, 2 + cloud.tissue[k]) = 1.0;
        x(i, 8) = cloud.thickness_um[k] / config.thickness_scale_um;
        if (with_strain) x(i, 9) = cloud.strain[k] / config.strain_scale;
    }
    return x;
}

double forward(const ModelParams& params, const MatrixXd& x, ForwardCache* cache) {
    if (x.cols() != params.config.in_features)
        throw InvalidSpec("input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(params.config.in_features));
    if (x.rows() == 0) throw InvalidSpec("empty input cloud");

    MatrixXd a = x;
    if (cache) {
        cache->point_acts.clear();
        cache->point_acts.push_back(x);
    }
    for (const auto& l : params.point) {
        MatrixXd z = a * l.W.transpose();
        z.rowwise() += l.b.transpose();
        a = z.cwiseMax(0.0);
        if (cache) cache->point_acts.push_back(a);
    }

    VectorXd h(a.cols());
    std::vector<Index> arg(static_cast<std::size_t>(a.cols()));
    for (Index j = 0; j < a.cols(); ++j) {
        Index best = 0;
        const double* col = a.col(j).data();
        for (Index i = 1; i < a.rows(); ++i)
            if (col[i] > col[best]) best = i;
        arg[static_cast<std::size_t>(j)] = best;
        h[j] = col[best];
    }
    if (cache) {
        cache->argmax = arg;
        cache->head_acts.clear();
        cache->head_acts.push_back(h);
    }
    for (std::size_t k = 0; k < params.head.size(); ++k) {
        const auto& l = params.head[k];
        VectorXd z = l.W * h + l.b;
        h = k + 1 < params.head.size() ? VectorXd(z.cwiseMax(0.0)) : z;
        if (cache) cache->head_acts.push_back(h);
    }
    const double logit = h[0];
    if (cache) cache->logit = logit;
    return logit;
}

double forward(const ModelParams& params, const OnhPointCloud& cloud, ForwardCache* cache) {
    return forward(params, input_features(cloud, params.config), cache);
}

Gradients backward(const ModelParams& params, const ForwardCache& cache, double dlogit) {
    Gradients g;
    g.params = params;
    const std::size_t nh = params.head.size(), np = params.point.size();

    VectorXd dz = VectorXd::Constant(1, dlogit);
    for (std::size_t k = nh; k-- > 0;) {
        const auto& l = params.head[k];
        const VectorXd& in = cache.head_acts[k];
        g.params.head[k].W = dz * in.transpose();
        g.params.head[k].b = dz;
        VectorXd din = l.W.transpose() * dz;
        if (k > 0) din = din.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
        dz = din;
    }
    const VectorXd& dpool = dz;

    // Rows picked by the pool, in ascending order, and each channel's slot.
    std::vector<Index> rows(cache.argmax);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    const auto m = static_cast<Index>(rows.size());
    auto gather = [&](const MatrixXd& full) {
        MatrixXd out(m, full.cols());
        for (Index r = 0; r < m; ++r) out.row(r) = full.row(rows[static_cast<std::size_t>(r)]);
        return out;
    };

    MatrixXd da = MatrixXd::Zero(m, dpool.size());
    for (std::size_t j = 0; j < cache.argmax.size(); ++j) {
        const Index r = std::lower_bound(rows.begin(), rows.end(), cache.argmax[j]) - rows.begin();
        da(r, static_cast<Index>(j)) += dpool[static_cast<Index>(j)];
    }
    for (std::size_t k = np; k-- > 0;) {
        const MatrixXd out = gather(cache.point_acts[k + 1]);
        const MatrixXd in = gather(cache.point_acts[k]);
        const MatrixXd dzp = da.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
        g.params.point[k].W = dzp.transpose() * in;
        g.params.point[k].b = dzp.colwise().sum().transpose();
        da = dzp * params.point[k].W;
    }
    const MatrixXd& x = cache.point_acts[0];
    g.input = MatrixXd::Zero(x.rows(), x.cols());
    for (Index r = 0; r < m; ++r) g.input.row(rows[static_cast<std::size_t>(r)]) = da.row(r);
    return g;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double bce_loss(double logit, int label) {
    return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

Gradients loss_backward(const ModelParams& params, const ForwardCache& cache, int label) {
    return backward(params, cache, sigmoid(cache.logit) - label);
}

TrainResult train_model(const std::vector<OnhPointCloud>& data, ModelConfig config, const TrainConfig& tcfg) {
    tcfg.validate();
    config.use_strain = tcfg.use_strain;
    config.validate();
    if (data.empty()) throw Error("training set is empty");
    std::size_t n_pos = 0;
    for (const auto& c : data) {
        if (!c.label || (*c.label != 0 && *c.label != 1)) throw Error("training cloud without a binary label");
        n_pos += static_cast<std::size_t>(*c.label);
    }
    const std::size_t n = data.size(), n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error("training data must contain both classes");
    const double w_pos = tcfg.class_weighting ? n / (2.0 * n_pos) : 1.0;
    const double w_neg = tcfg.class_weighting ? n / (2.0 * n_neg) : 1.0;

    TrainResult result;
    result.params = init_params(config);
    VectorXd theta = result.params.flatten();
    VectorXd velocity = VectorXd::Zero(theta.size());

    std::vector<MatrixXd> fixed_inputs;
    if (!tcfg.augment)
        for (const auto& c : data) fixed_inputs.push_back(input_features(c, config));

    Rng order_rng(tcfg.seed);
    std::vector<std::size_t> order(n);
    std::vector<double> losses(n);
    ForwardCache cache;
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(tcfg.batch_size));
            VectorXd grad = VectorXd::Zero(theta.size());
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                const int y = *data[i].label;
                const double w = y ? w_pos : w_neg;
                if (tcfg.augment) {
                    Rng rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch) * n + i));
                    forward(result.params, input_features(augment(data[i], rng, tcfg.augmentation), config), &cache);
                } else {
                    forward(result.params, fixed_inputs[i], &cache);
                }
                losses[i] = w * bce_loss(cache.logit, y);
                grad += backward(result.params, cache, w * (sigmoid(cache.logit) - y)).params.flatten();
            }
            grad /= static_cast<double>(stop - start);
            velocity = tcfg.momentum * velocity - tcfg.learning_rate * grad;
            theta += velocity;
            result.params.assign(theta);
        }
        result.history.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n));
    }
    return result;
}

double predict(const ModelParams& params, const OnhPointCloud& cloud) { return sigmoid(forward(params, cloud)); }

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, int epoch) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
    const VectorXd v = params.flatten();
    const nlohmann::json header{{"format", "onh-pointnet"},
                                {"config", to_json(params.config)},
                                {"seed", params.config.seed},
                                {"epoch", epoch},
                                {"parameter_count", v.size()},
                                {"dtype", "f64le"}};
    std::string blob = header.dump() + "\n";
    const std::size_t off = blob.size();
    blob.resize(off + static_cast<std::size_t>(v.size()) * sizeof(double));
    std::memcpy(blob.data() + off, v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    io::write_text(path, blob);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    const std::string blob = io::read_text(path);
    const auto nl = blob.find('\n');
    if (nl == std::string::npos) throw Error("checkpoint header missing: " + path.string());
    const auto header = nlohmann::json::parse(blob.substr(0, nl));
    if (header.at("format") != "onh-pointnet" || header.at("dtype") != "f64le")
        throw Error("unsupported checkpoint format: " + path.string());
    ModelParams p = zero_params(model_config_from_json(header.at("config"), "config"));
    const auto count = header.at("parameter_count").get<std::size_t>();
    if (count != p.parameter_count() || blob.size() - nl - 1 != count * sizeof(double))
        throw Error("checkpoint size does not match its config: " + path.string());
    VectorXd v(static_cast<Index>(count));
    std::memcpy(v.data(), blob.data() + nl + 1, count * sizeof(double));
    p.assign(v);
    return p;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<double>& history) {
    std::string s = "epoch,loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) s += std::to_string(e + 1) + "," + io::fmt(history[e]) + "\n";
    io::write_text(path, s);
}

}  // namespace onh
