#include "onh/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "onh/io.hpp"
#include "onh/rng.hpp"

namespace onh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

DefectClass task_class(const std::string& task) {
    if (task == "nasal_step") return DefectClass::kNasalStep;
    if (task == "arcuate") return DefectClass::kArcuate;
    if (task == "hemifield") return DefectClass::kHemifield;
    throw Error("unknown task: " + task);
}

std::string subject_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%03d", i);
    return buf;
}

std::uint64_t cloud_seed(const PhantomSpec& spec) { return mix_seed(spec.seed, 0xC10D); }

}  // namespace

std::vector<PhantomSpec> cohort_specs(const PipelineConfig& config) {
    const auto& c = config.cohort;
    c.validate();
    const auto n = static_cast<std::size_t>(c.size);
    std::vector<DefectClass> classes;
    const std::pair<DefectClass, double> mix[] = {{DefectClass::kNasalStep, c.nasal_fraction},
                                                  {DefectClass::kArcuate, c.arcuate_fraction},
                                                  {DefectClass::kHemifield, c.hemifield_fraction}};
    for (const auto& [cls, frac] : mix)
        for (long k = 0; k < std::lround(frac * c.size) && classes.size() < n; ++k) classes.push_back(cls);
    classes.resize(n, DefectClass::kNone);
    Rng order(mix_seed(c.seed, 0xC0));
    order.shuffle(classes.begin(), classes.end());

    std::vector<PhantomSpec> specs;
    for (std::size_t i = 0; i < n; ++i) {
        Rng r(mix_seed(c.seed, 100 + i));
        PhantomSpec s = config.phantom;
        s.defect_class = classes[i];
        s.bmo_radius_um *= 1.0 + r.uniform(-c.radius_jitter, c.radius_jitter);
        s.cup_depth_um *= 1.0 + r.uniform(-c.cup_depth_jitter, c.cup_depth_jitter);
        s.sector_strain_peak = s.baseline_strain + (s.sector_strain_peak - s.baseline_strain) *
                                                       (1.0 + r.uniform(-c.strain_peak_jitter, c.strain_peak_jitter));
        const double ox = r.uniform(-c.center_jitter_um, c.center_jitter_um);
        const double oy = r.uniform(-c.center_jitter_um, c.center_jitter_um);
        s.center_offset_um = config.phantom.center_offset_um + Vec3(ox, oy, 0.0);
        s.seed = r.next_u64();
        s.validate();
        specs.push_back(s);
    }
    return specs;
}

DatasetManifest cohort_manifest(const PipelineConfig& config) {
    DatasetManifest m;
    m.seed = config.cohort.seed;
    const auto specs = cohort_specs(config);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        SampleRecord r;
        r.id = subject_id(static_cast<int>(i));
        r.defect = specs[i].defect_class;
        for (const auto& t : kTasks) r.labels[t] = r.defect == task_class(t) ? 1 : 0;
        r.fixed = "volumes/" + r.id + "_fixed";
        r.moving = "volumes/" + r.id + "_moving";
        r.labels_volume = "volumes/" + r.id + "_labels";
        r.field = "fields/" + r.id + ".csv";
        r.cloud = "clouds/" + r.id;
        r.spec = specs[i];
        m.samples.push_back(std::move(r));
    }
    m.validate();
    return m;
}

SubjectData simulate_subject(const PhantomSpec& spec, const DvcParams& dvc) {
    auto [fixed, labels] = generate_phantom(spec);
    const auto grid = make_node_grid(spec.dims, dvc.block_size, dvc.node_stride);
    auto moving = deform_phantom(fixed, spec, grid).deformed;
    return {std::move(fixed), std::move(moving), std::move(labels)};
}

ProcessedSubject process_subject(const SubjectData& s, const PipelineConfig& config, std::uint64_t seed,
                                 int threads) {
    ProcessedSubject p;
    p.field = displacement_field(s.fixed, s.moving, config.dvc, s.labels, threads);
    p.strain = strain_field(p.field);
    p.cloud = prepare_cloud(s.labels, &p.strain, config.cloud.target_n, seed);
    return p;
}

Dataset build_dataset(const PipelineConfig& config, int threads, const Progress& progress) {
    config.validate();
    Dataset d;
    d.manifest = cohort_manifest(config);
    for (const auto& r : d.manifest.samples) {
        const auto s = simulate_subject(r.spec, config.dvc);
        auto p = process_subject(s, config, cloud_seed(r.spec), threads);
        d.clouds.push_back(std::move(p.cloud));
        if (progress) progress(r.id);
    }
    return d;
}

DatasetManifest stage_phantom_gen(const PipelineConfig& config, const fs::path& out) {
    config.validate();
    const auto m = cohort_manifest(config);
    fs::create_directories(out / "volumes");
    for (const auto& r : m.samples) {
        const auto s = simulate_subject(r.spec, config.dvc);
        write_volume(out / r.fixed, s.fixed);
        write_volume(out / r.moving, s.moving);
        write_volume(out / r.labels_volume, s.labels);
    }
    write_manifest(out / "manifest.json", m);
    return m;
}

void stage_dvc_run(const PipelineConfig& config, const fs::path& out, int threads) {
    config.dvc.validate();
    const auto m = read_manifest(out / "manifest.json");
    fs::create_directories(out / "fields");
    for (const auto& r : m.samples) {
        const auto fixed = read_scalar_volume(out / r.fixed);
        const auto moving = read_scalar_volume(out / r.moving);
        const auto labels = read_label_volume(out / r.labels_volume);
        const auto field = displacement_field(fixed, moving, config.dvc, labels, threads);
        const auto strain = strain_field(field);
        write_field_csv(out / r.field, field, &strain);
    }
}

void stage_cloud_build(const PipelineConfig& config, const fs::path& out) {
    config.cloud.validate();
    const auto m = read_manifest(out / "manifest.json");
    fs::create_directories(out / "clouds");
    for (const auto& r : m.samples) {
        const auto labels = read_label_volume(out / r.labels_volume);
        if (!fs::exists(out / r.field)) throw Error("missing field " + (out / r.field).string() + "; run dvc-run first");
        const auto file = read_field_csv(out / r.field, labels.spacing);
        const auto strain = strain_field(file.field);
        auto cloud = prepare_cloud(labels, &strain, config.cloud.target_n, cloud_seed(r.spec));
        cloud.label = r.label(config.eval.ablation_task);
        write_cloud(out / r.cloud, cloud, r.id);
    }
}

Dataset load_dataset(const fs::path& out) {
    Dataset d;
    d.manifest = read_manifest(out / "manifest.json");
    for (const auto& r : d.manifest.samples) {
        if (!fs::exists(out / (r.cloud + ".csv")))
            throw Error("missing cloud " + (out / r.cloud).string() + "; run cloud-build first");
        d.clouds.push_back(read_cloud(out / r.cloud));
    }
    return d;
}

SaliencySummary saliency_maps(const Dataset& data, const ModelParams& params, const SaliencyConfig& cfg,
                              const fs::path* out_dir) {
    cfg.validate();
    const auto cls = task_class(cfg.task);
    SaliencySummary s;
    s.task = cfg.task;
    std::vector<GridMap> enface, is, nt;
    Eigen::MatrixXi footprint = Eigen::MatrixXi::Zero(kMapCells, kMapCells);
    for (std::size_t i = 0; i < data.clouds.size(); ++i) {
        const auto& rec = data.manifest.samples[i];
        if (rec.defect != cls) continue;
        const auto& cloud = data.clouds[i];
        const double r = cloud.bmo_radius_um;
        const auto sal = point_saliency(params, cloud);

        auto map = enface_project(sal, r, false);
        double kept = 0.0;
        for (std::size_t k = 0; k < sal.points.size(); ++k) {
            const int row = map_cell(sal.points[k].y() * r), col = map_cell(sal.points[k].x() * r);
            if (row < 0 || col < 0) continue;
            kept += sal.value[k];
            footprint(kMapCells - 1 - row, col) = 1;
        }
        if (kept > 0) s.max_conservation_error = std::max(s.max_conservation_error, std::abs(map.raw_mass - kept) / kept);
        normalize_map(map);
        enface.push_back(map);
        is.push_back(cross_section(sal, SectionAxis::kInferiorSuperior, cfg.is_slab_center_bmo * r, cfg.slab_width_um, r));
        nt.push_back(cross_section(sal, SectionAxis::kNasalTemporal, cfg.nt_slab_center_bmo * r, cfg.slab_width_um, r));
        if (out_dir) {
            fs::create_directories(*out_dir);
            write_map_csv(*out_dir / (rec.id + "_enface.csv"), map);
        }
    }
    if (enface.empty()) throw Error("no patients with the " + cfg.task + " defect");
    s.patients = enface.size();
    s.group_enface = group_average(enface);
    s.group_is = group_average(is);
    s.group_nt = group_average(nt);

    const SectorRegion region{causal_sector(cls), cfg.sector_radial_min, cfg.sector_radial_max};
    double mean_radius = s.group_enface.bmo_radius_um;
    int in_sector = 0, in_footprint = 0, sector_cells = 0;
    for (int row = 0; row < kMapCells; ++row)
        for (int col = 0; col < kMapCells; ++col) {
            const bool inside = cell_in_sector(row, col, region, mean_radius);
            sector_cells += inside;
            if (footprint(row, col)) {
                ++in_footprint;
                in_sector += inside;
            }
        }
    s.chance_fraction = in_footprint ? static_cast<double>(in_sector) / in_footprint : 0.0;
    s.whole_map_fraction = static_cast<double>(sector_cells) / (kMapCells * kMapCells);
    s.sector_mass = s.group_enface.normalized ? sector_mass(s.group_enface, region) : 0.0;

    if (out_dir) {
        for (const auto& [name, map] : {std::pair{"group_enface", &s.group_enface}, std::pair{"group_is", &s.group_is},
                                        std::pair{"group_nt", &s.group_nt}}) {
            write_map_csv(*out_dir / (std::string(name) + ".csv"), *map);
            write_map_pgm(*out_dir / (std::string(name) + ".pgm"), *map);
        }
        io::write_text(*out_dir / "summary.json", to_json(s).dump(2) + "\n");
    }
    return s;
}

json to_json(const SaliencySummary& s) {
    return json{{"task", s.task},
                {"patients", s.patients},
                {"sector_mass", s.sector_mass},
                {"chance_fraction", s.chance_fraction},
                {"whole_map_fraction", s.whole_map_fraction},
                {"max_conservation_error", s.max_conservation_error},
                {"group_enface_max", s.group_enface.cells.maxCoeff()}};
}

std::string config_hash(const PipelineConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a(canonical_string(config))));
    return buf;
}

}  // namespace onh
