#include "onh/cli.hpp"

#include <optional>

#include "CLI11.hpp"
#include "onh/io.hpp"
#include "onh/pipeline.hpp"

namespace onh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string task;
};

PipelineConfig resolve(const Options& o) {
    PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
    if (o.seed) c.override_seed(*o.seed);
    if (!o.out.empty()) c.output_dir = o.out;
    try {
        c.validate();
    } catch (const InvalidSpec& e) {
        throw ConfigError(e.what());
    }
    return c;
}

std::string model_path(const fs::path& out, const std::string& task) {
    return (out / "models" / (task + ".ckpt")).string();
}

TaskResult train_task(const PipelineConfig& c, const Dataset& d, const std::string& task) {
    return run_task(d, task, c.model, c.train, c.eval.split_seeds.front(), c.eval.train_frac);
}

void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    io::write_text(path, j.dump(2) + "\n");
}

void cmd_train(const PipelineConfig& c, const std::string& task, std::ostream& out) {
    const fs::path dir = c.output_dir;
    const auto d = load_dataset(dir);
    const auto r = train_task(c, d, task);
    fs::create_directories(dir / "models");
    save_checkpoint(model_path(dir, task), r.params, static_cast<int>(r.history.size()));
    write_history_csv(dir / "models" / (task + "_history.csv"), r.history);
    out << task << " test AUC " << io::fmt(r.roc.auc) << "\n";
}

void cmd_eval(const PipelineConfig& c, std::ostream& out) {
    const fs::path dir = c.output_dir;
    const auto d = load_dataset(dir);
    json rows = json::array();
    std::string csv = "task,auc,n_pos,n_neg\n";
    for (const auto& task : kTasks) {
        const auto r = train_task(c, d, task);
        rows.push_back({{"task", task}, {"auc", r.roc.auc}, {"n_pos", r.roc.n_pos}, {"n_neg", r.roc.n_neg}});
        csv += task + "," + io::fmt(r.roc.auc) + "," + std::to_string(r.roc.n_pos) + "," + std::to_string(r.roc.n_neg) + "\n";
        out << task << " AUC " << io::fmt(r.roc.auc) << "\n";
    }
    write_json(dir / "eval" / "auc_table.json",
               {{"split_seed", c.eval.split_seeds.front()}, {"use_strain", c.model.use_strain}, {"tasks", rows}});
    io::write_text(dir / "eval" / "auc_table.csv", csv);
}

void cmd_saliency(PipelineConfig c, std::ostream& out) {
    const fs::path dir = c.output_dir;
    const auto d = load_dataset(dir);
    const auto ckpt = model_path(dir, c.saliency.task);
    ModelParams params;
    if (fs::exists(ckpt)) {
        params = load_checkpoint(ckpt);
    } else {
        c.model.use_strain = c.train.use_strain = true;
        params = train_task(c, d, c.saliency.task).params;
    }
    const fs::path sdir = dir / "saliency";
    const auto s = saliency_maps(d, params, c.saliency, &sdir);
    out << "sector mass " << io::fmt(s.sector_mass) << " (chance " << io::fmt(s.chance_fraction) << ", "
        << s.patients << " patients)\n";
}

void cmd_ablate(const PipelineConfig& c, std::ostream& out) {
    const fs::path dir = c.output_dir;
    const auto d = load_dataset(dir);
    const auto r = ablation_study(d, c.eval.ablation_task, c.model, c.train, c.eval.split_seeds, c.eval.train_frac);
    write_json(dir / "ablation" / "ablation.json", to_json(r, config_hash(c)));
    io::write_text(dir / "ablation" / "ablation.csv", ablation_csv(r));
    out << "AUC with " << io::fmt(r.mean_with) << ", without " << io::fmt(r.mean_without) << ", p "
        << io::fmt(r.p_value) << "\n";
}

void cmd_report(const PipelineConfig& c, std::ostream& out) {
    const fs::path dir = c.output_dir;
    json report{{"config_hash", config_hash(c)}, {"config", json::parse(canonical_string(c))}};
    std::string csv = "section,metric,value\n";
    const std::pair<const char*, fs::path> parts[] = {{"eval", dir / "eval" / "auc_table.json"},
                                                      {"ablation", dir / "ablation" / "ablation.json"},
                                                      {"saliency", dir / "saliency" / "summary.json"}};
    for (const auto& [name, path] : parts) {
        if (!fs::exists(path)) continue;
        const auto j = json::parse(io::read_text(path));
        report[name] = j;
        for (const auto& [k, v] : j.items())
            if (v.is_number()) csv += std::string(name) + "," + k + "," + io::fmt(v.get<double>()) + "\n";
        if (j.contains("tasks"))
            for (const auto& t : j.at("tasks"))
                csv += std::string(name) + ",auc_" + t.at("task").get<std::string>() + "," +
                       io::fmt(t.at("auc").get<double>()) + "\n";
    }
    write_json(dir / "report.json", report);
    io::write_text(dir / "report.csv", csv);
    out << "wrote " << (dir / "report.json").string() << "\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Optic nerve head strain and point-cloud classification pipeline", "onh"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "Output directory (overrides output_dir)");
    app.add_option("--seed", o.seed, "Seed for cohort, model and training (overrides config)");
    app.add_option("--threads", o.threads, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("phantom-gen", "Generate the cohort of volume pairs and the manifest");
    auto* dvc = app.add_subcommand("dvc-run", "Displacement and strain fields for every pair");
    auto* cloud = app.add_subcommand("cloud-build", "Point clouds with attached strain");
    auto* train = app.add_subcommand("train", "Train one task on the first split");
    train->add_option("--task", o.task, "nasal_step, arcuate or hemifield")
        ->required()
        ->check(CLI::IsMember(kTasks));
    auto* eval = app.add_subcommand("eval", "Three-task AUC table on the first split");
    auto* sal = app.add_subcommand("saliency", "Per-patient and group saliency maps");
    auto* abl = app.add_subcommand("ablate", "With/without strain study over the split seeds");
    auto* rep = app.add_subcommand("report", "Aggregate JSON/CSV report");
    for (auto* s : {gen, dvc, cloud, train, eval, sal, abl, rep}) s->fallthrough();

    if (args.empty()) {
        out << app.help();
        return 2;
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        const auto c = resolve(o);
        const fs::path dir = c.output_dir;
        if (gen->parsed()) {
            const auto m = stage_phantom_gen(c, dir);
            out << m.samples.size() << " subjects written to " << dir.string() << "\n";
        } else if (dvc->parsed()) {
            stage_dvc_run(c, dir, o.threads);
        } else if (cloud->parsed()) {
            stage_cloud_build(c, dir);
        } else if (train->parsed()) {
            cmd_train(c, o.task, out);
        } else if (eval->parsed()) {
            cmd_eval(c, out);
        } else if (sal->parsed()) {
            cmd_saliency(c, out);
        } else if (abl->parsed()) {
            cmd_ablate(c, out);
        } else {
            cmd_report(c, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace onh
