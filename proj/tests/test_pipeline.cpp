#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "onh/cli.hpp"
#include "onh/io.hpp"
#include "onh/pipeline.hpp"

using namespace onh;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny() {
    PipelineConfig c;
    c.phantom.dims = {48, 48, 48};
    c.phantom.spacing = Vec3(10, 10, 10);
    c.phantom.bmo_radius_um = 150;
    c.phantom.cup_depth_um = 60;
    c.cohort.size = 20;
    c.cohort.center_jitter_um = 10;
    c.dvc.block_size = 11;
    c.dvc.node_stride = 6;
    c.dvc.search_radius = 4;
    c.cloud.target_n = 800;
    c.cloud.augment.sample_n = 300;
    c.model.point_mlp_widths = {8, 16};
    c.model.head_widths = {8, 1};
    c.train.epochs = 2;
    c.train.batch_size = 4;
    c.train.augmentation = c.cloud.augment;
    c.eval.split_seeds = {1, 2};
    c.eval.train_frac = 0.7;
    return c;
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = dispatch(args, out, err);
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST(CohortTest, ClassCountsFollowTheFractions) {
    PipelineConfig c;
    c.cohort.size = 200;
    const auto specs = cohort_specs(c);
    ASSERT_EQ(specs.size(), 200u);
    int counts[4] = {0, 0, 0, 0};
    for (const auto& s : specs) ++counts[static_cast<int>(s.defect_class)];
    EXPECT_EQ(counts[static_cast<int>(DefectClass::kNasalStep)], 22);  // round(200 * 26/237)
    EXPECT_EQ(counts[static_cast<int>(DefectClass::kArcuate)], 52);    // round(200 * 62/237)
    EXPECT_EQ(counts[static_cast<int>(DefectClass::kHemifield)], 21);  // round(200 * 25/237)
    EXPECT_EQ(counts[static_cast<int>(DefectClass::kNone)], 105);
}

TEST(CohortTest, SeededAndJittered) {
    PipelineConfig c;
    c.cohort.size = 30;
    const auto a = cohort_specs(c), b = cohort_specs(c);
    EXPECT_EQ(a, b);
    for (const auto& s : a) {
        EXPECT_LE(std::abs(s.bmo_radius_um / c.phantom.bmo_radius_um - 1.0), c.cohort.radius_jitter);
        EXPECT_LE(std::abs(s.center_offset_um.x()), c.cohort.center_jitter_um);
        EXPECT_EQ(s.center_offset_um.z(), 0.0);
    }
    EXPECT_NE(a[0].seed, a[1].seed);
    c.cohort.seed = 2;
    EXPECT_NE(cohort_specs(c), a);
}

TEST(CohortTest, ManifestLabelsMatchDefects) {
    const auto m = cohort_manifest(tiny());
    for (const auto& r : m.samples) {
        EXPECT_EQ(r.label("arcuate"), r.defect == DefectClass::kArcuate);
        EXPECT_EQ(r.label("nasal_step"), r.defect == DefectClass::kNasalStep);
        EXPECT_EQ(r.label("hemifield"), r.defect == DefectClass::kHemifield);
    }
}

TEST(PipelineTest, FileStagesReproduceTheInMemoryDataset) {
    auto c = tiny();
    c.cohort.size = 6;
    const auto dir = fs::temp_directory_path() / "onh_pipeline_stages";
    fs::remove_all(dir);
    stage_phantom_gen(c, dir);
    stage_dvc_run(c, dir, 2);
    for (const auto& r : read_manifest(dir / "manifest.json").samples) EXPECT_TRUE(fs::exists(dir / r.field));
    stage_cloud_build(c, dir);
    const auto files = load_dataset(dir);
    const auto memory = build_dataset(c, 1);
    ASSERT_EQ(files.clouds.size(), memory.clouds.size());
    for (std::size_t i = 0; i < files.clouds.size(); ++i) {
        EXPECT_EQ(files.clouds[i].points, memory.clouds[i].points);
        EXPECT_EQ(files.clouds[i].strain, memory.clouds[i].strain);
        EXPECT_EQ(files.clouds[i].tissue, memory.clouds[i].tissue);
        EXPECT_EQ(files.clouds[i].bmo_radius_um, memory.clouds[i].bmo_radius_um);
    }
    fs::remove_all(dir);
}

TEST(PipelineTest, CloudBuildWithoutFieldsFails) {
    auto c = tiny();
    c.cohort.size = 4;
    const auto dir = fs::temp_directory_path() / "onh_pipeline_missing";
    fs::remove_all(dir);
    stage_phantom_gen(c, dir);
    EXPECT_THROW(stage_cloud_build(c, dir), Error);
    fs::remove_all(dir);
}

TEST(CliTest, UsageAndConfigErrors) {
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"bogus"}), 2);
    EXPECT_EQ(run({"train"}), 2);  // --task is required
    const auto dir = fs::temp_directory_path() / "onh_cli_cfg";
    fs::create_directories(dir);
    io::write_text(dir / "bad.json", R"({"train": {"epochs": 3, "lr": 0.1}})");
    std::string err;
    EXPECT_EQ(run({"phantom-gen", "--config", (dir / "bad.json").string()}, &err), 2);
    EXPECT_NE(err.find("train.lr"), std::string::npos);
    io::write_text(dir / "broken.json", "{");
    EXPECT_EQ(run({"phantom-gen", "--config", (dir / "broken.json").string()}), 2);
    fs::remove_all(dir);
}

TEST(CliTest, RuntimeErrorsExitOne) {
    const auto dir = fs::temp_directory_path() / "onh_cli_empty";
    fs::remove_all(dir);
    std::string err;
    EXPECT_EQ(run({"dvc-run", "--out", dir.string()}, &err), 1);
    EXPECT_FALSE(err.empty());
}

TEST(CliTest, PhantomGenThenDvcRunWritesEveryField) {
    const auto dir = fs::temp_directory_path() / "onh_cli_run";
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto c = tiny();
    c.cohort.size = 5;
    io::write_text(dir / "cfg.json", to_json(c).dump());
    const auto out = (dir / "out").string();
    ASSERT_EQ(run({"phantom-gen", "--config", (dir / "cfg.json").string(), "--out", out}), 0);
    ASSERT_EQ(run({"dvc-run", "--config", (dir / "cfg.json").string(), "--out", out, "--threads", "2"}), 0);
    const auto m = read_manifest(fs::path(out) / "manifest.json");
    EXPECT_EQ(m.samples.size(), 5u);
    for (const auto& r : m.samples) EXPECT_TRUE(fs::exists(fs::path(out) / r.field));
    fs::remove_all(dir);
}

TEST(SaliencyPipelineTest, GroupMapsAndSummary) {
    const auto c = tiny();
    const auto d = build_dataset(c, 1);
    auto mc = c.model;
    const auto params = init_params(mc);
    const auto dir = fs::temp_directory_path() / "onh_saliency_maps";
    fs::remove_all(dir);
    const auto s = saliency_maps(d, params, c.saliency, &dir);
    std::size_t arcuate = 0;
    for (const auto& r : d.manifest.samples) arcuate += r.defect == DefectClass::kArcuate;
    EXPECT_EQ(s.patients, arcuate);
    EXPECT_EQ(s.group_enface.cells.maxCoeff(), 1.0);
    EXPECT_LE(s.max_conservation_error, 1e-12);
    EXPECT_GT(s.chance_fraction, 0.0);
    EXPECT_GE(s.sector_mass, 0.0);
    EXPECT_LE(s.sector_mass, 1.0);
    for (const char* f : {"group_enface.csv", "group_is.csv", "group_nt.csv", "group_enface.pgm", "summary.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(read_map_csv(dir / "group_enface.csv").cells, s.group_enface.cells);
    fs::remove_all(dir);
}
