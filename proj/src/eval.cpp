#include "onh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "onh/io.hpp"

namespace onh {

using nlohmann::json;

int SampleRecord::label(const std::string& task) const {
    const auto it = labels.find(task);
    if (it == labels.end()) throw Error("sample " + id + " has no label for task " + task);
    return it->second;
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second) throw Error("duplicate sample id: " + s.id);
        for (const auto& [task, y] : s.labels) {
            if (std::find(kTasks.begin(), kTasks.end(), task) == kTasks.end())
                throw Error("unknown task in manifest: " + task);
            if (y != 0 && y != 1) throw Error("non-binary label for " + s.id);
        }
    }
}

const SampleRecord& DatasetManifest::find(const std::string& id) const {
    for (const auto& s : samples)
        if (s.id == id) return s;
    throw Error("unknown sample id: " + id);
}

namespace {

json spec_json(const PhantomSpec& p) {
    return json{{"dims", {p.dims.x, p.dims.y, p.dims.z}},
                {"spacing_um", {p.spacing.x(), p.spacing.y(), p.spacing.z()}},
                {"bmo_radius_um", p.bmo_radius_um},
                {"cup_depth_um", p.cup_depth_um},
                {"defect_class", std::string(to_string(p.defect_class))},
                {"sector_strain_peak", p.sector_strain_peak},
                {"baseline_strain", p.baseline_strain},
                {"seed", p.seed},
                {"speckle_amplitude", p.speckle_amplitude},
                {"center_offset_um", {p.center_offset_um.x(), p.center_offset_um.y(), p.center_offset_um.z()}},
                {"translation_vox", {p.translation_vox.x(), p.translation_vox.y(), p.translation_vox.z()}},
                {"max_displacement_vox", p.max_displacement_vox}};
}

Vec3 vec3(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

PhantomSpec spec_from_json(const json& j) {
    PhantomSpec p;
    const auto& d = j.at("dims");
    p.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    p.spacing = vec3(j.at("spacing_um"));
    p.bmo_radius_um = j.at("bmo_radius_um").get<double>();
    p.cup_depth_um = j.at("cup_depth_um").get<double>();
    p.defect_class = defect_class_from_string(j.at("defect_class").get<std::string>());
    p.sector_strain_peak = j.at("sector_strain_peak").get<double>();
    p.baseline_strain = j.at("baseline_strain").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.speckle_amplitude = j.at("speckle_amplitude").get<double>();
    p.center_offset_um = vec3(j.at("center_offset_um"));
    p.translation_vox = vec3(j.at("translation_vox"));
    p.max_displacement_vox = j.at("max_displacement_vox").get<double>();
    return p;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    m.validate();
    json samples = json::array();
    for (const auto& s : m.samples)
        samples.push_back({{"id", s.id},
                           {"defect_class", std::string(to_string(s.defect))},
                           {"labels", s.labels},
                           {"fixed", s.fixed},
                           {"moving", s.moving},
                           {"labels_volume", s.labels_volume},
                           {"field", s.field},
                           {"cloud", s.cloud},
                           {"spec", spec_json(s.spec)}});
    io::write_text(path, json{{"seed", m.seed}, {"samples", samples}}.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    const auto dir = path.parent_path();
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& s : j.at("samples")) {
            SampleRecord r;
            r.id = s.at("id").get<std::string>();
            r.defect = defect_class_from_string(s.at("defect_class").get<std::string>());
            r.labels = s.at("labels").get<std::map<std::string, int>>();
            r.fixed = s.at("fixed").get<std::string>();
            r.moving = s.at("moving").get<std::string>();
            r.labels_volume = s.at("labels_volume").get<std::string>();
            r.field = s.at("field").get<std::string>();
            r.cloud = s.at("cloud").get<std::string>();
            r.spec = spec_from_json(s.at("spec"));
            m.samples.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }
    m.validate();
    for (const auto& s : m.samples)
        for (const auto* stem : {&s.fixed, &s.moving, &s.labels_volume})
            if (!std::filesystem::exists(dir / (*stem + ".json")) || !std::filesystem::exists(dir / (*stem + ".raw")))
                throw Error("manifest references a missing volume: " + (dir / *stem).string());
    return m;
}

Split stratified_split(const DatasetManifest& m, const std::string& task, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw InvalidSpec("train_frac must lie in (0, 1)");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < m.samples.size(); ++i) by_class[m.samples[i].label(task)].push_back(i);
    std::vector<std::uint8_t> in_train(m.samples.size(), 0);
    for (int c = 0; c < 2; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2) throw Error("task " + task + ": class " + std::to_string(c) + " has fewer than 2 samples");
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(idx.begin(), idx.end());
        const auto n = static_cast<long>(idx.size());
        const long n_train = std::clamp(std::lround(train_frac * static_cast<double>(n)), 1L, n - 1);
        for (long k = 0; k < n_train; ++k) in_train[idx[static_cast<std::size_t>(k)]] = 1;
    }
    Split s;
    for (std::size_t i = 0; i < m.samples.size(); ++i) (in_train[i] ? s.train : s.test).push_back(m.samples[i].id);
    return s;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw Error("roc_auc: scores and labels differ in length");
    RocResult r;
    r.scores = scores;
    r.labels = labels;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw Error("roc_auc: non-finite score");
        if (labels[i] == 1)
            ++r.n_pos;
        else if (labels[i] == 0)
            ++r.n_neg;
        else
            throw Error("roc_auc: labels must be 0 or 1");
    }
    if (r.n_pos == 0 || r.n_neg == 0) throw Error("roc_auc needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(r.n_pos), nn = static_cast<double>(r.n_neg);
    r.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
    return r;
}

TaskResult run_task(const Dataset& data, const std::string& task, const ModelConfig& mcfg, const TrainConfig& tcfg,
                    std::uint64_t split_seed, double train_frac) {
    if (data.clouds.size() != data.manifest.samples.size()) throw Error("dataset clouds and manifest differ in size");
    TaskResult out;
    out.split = stratified_split(data.manifest, task, train_frac, split_seed);

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.manifest.samples.size(); ++i) index[data.manifest.samples[i].id] = i;
    auto labelled = [&](const std::string& id) {
        const std::size_t i = index.at(id);
        OnhPointCloud c = data.clouds[i];
        c.label = data.manifest.samples[i].label(task);
        return c;
    };

    std::vector<OnhPointCloud> train;
    for (const auto& id : out.split.train) train.push_back(labelled(id));
    TrainConfig t = tcfg;
    t.seed = mix_seed(tcfg.seed, split_seed);
    auto trained = train_model(train, mcfg, t);
    out.params = std::move(trained.params);
    out.history = std::move(trained.history);

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& id : out.split.test) {
        const auto c = labelled(id);
        scores.push_back(predict(out.params, c));
        labels.push_back(*c.label);
    }
    out.roc = roc_auc(scores, labels);
    return out;
}

double sign_flip_p_value(const std::vector<double>& d) {
    if (d.empty() || d.size() > 30) throw InvalidSpec("sign-flip test needs 1..30 differences");
    const double observed = std::accumulate(d.begin(), d.end(), 0.0);
    const double tol = 1e-12 * std::max(1.0, std::accumulate(d.begin(), d.end(), 0.0, [](double a, double b) {
                                              return a + std::abs(b);
                                          }));
    const std::uint64_t total = std::uint64_t{1} << d.size();
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) s += (mask >> k & 1U) ? -d[k] : d[k];
        if (s >= observed - tol) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

AblationReport ablation_study(const Dataset& data, const std::string& task, const ModelConfig& mcfg,
                              const TrainConfig& tcfg, const std::vector<std::uint64_t>& split_seeds,
                              double train_frac) {
    AblationReport r;
    r.task = task;
    r.split_seeds = split_seeds;
    std::vector<double> diff;
    for (std::uint64_t seed : split_seeds) {
        TrainConfig with = tcfg, without = tcfg;
        with.use_strain = true;
        without.use_strain = false;
        auto a = run_task(data, task, mcfg, with, seed, train_frac);
        const auto b = run_task(data, task, mcfg, without, seed, train_frac);
        r.auc_with.push_back(a.roc.auc);
        r.auc_without.push_back(b.roc.auc);
        diff.push_back(a.roc.auc - b.roc.auc);
        r.with_runs.push_back(std::move(a));
    }
    r.mean_with = mean(r.auc_with);
    r.std_with = sample_std(r.auc_with);
    r.mean_without = mean(r.auc_without);
    r.std_without = sample_std(r.auc_without);
    r.mean_difference = r.mean_with - r.mean_without;
    r.p_value = sign_flip_p_value(diff);
    return r;
}

json to_json(const AblationReport& r, const std::string& config_hash) {
    json splits = json::array();
    for (std::size_t i = 0; i < r.split_seeds.size(); ++i)
        splits.push_back({{"split_seed", r.split_seeds[i]},
                          {"auc_with_strain", r.auc_with[i]},
                          {"auc_without_strain", r.auc_without[i]}});
    return json{{"task", r.task},
                {"splits", splits},
                {"mean_auc_with_strain", r.mean_with},
                {"std_auc_with_strain", r.std_with},
                {"mean_auc_without_strain", r.mean_without},
                {"std_auc_without_strain", r.std_without},
                {"mean_difference", r.mean_difference},
                {"p_value", r.p_value},
                {"test", "exact one-sided paired sign-flip permutation over all 2^n assignments"},
                {"config_hash", config_hash}};
}

std::string ablation_csv(const AblationReport& r) {
    std::string s = "split_seed,auc_with,auc_without,difference\n";
    for (std::size_t i = 0; i < r.split_seeds.size(); ++i)
        s += std::to_string(r.split_seeds[i]) + "," + io::fmt(r.auc_with[i]) + "," + io::fmt(r.auc_without[i]) +
             "," + io::fmt(r.auc_with[i] - r.auc_without[i]) + "\n";
    return s;
}

}  // namespace onh
