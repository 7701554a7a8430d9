#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mosgsl/config.hpp"
#include "mosgsl/error.hpp"
#include "mosgsl/harness.hpp"

namespace fs = std::filesystem;
using namespace mosgsl;

namespace {

struct CommonArgs {
    std::string config;
    std::string dataset;
    std::string backbone;
    std::string regime;
    std::string variant;
    std::string structures;
    std::string data_dir;
    std::string out = "out";
    std::vector<std::string> sets;
    long long seed = -1;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config, "TOML run configuration");
    cmd->add_option("--dataset", a.dataset, "dataset name (data.name)");
    cmd->add_option("--backbone", a.backbone, "gcn, sage or gin");
    cmd->add_option("--regime", a.regime, "co, pre or test");
    cmd->add_option("--seed", a.seed, "base seed");
    cmd->add_option("--jobs", a.jobs, "folds trained in parallel");
    cmd->add_option("--data-dir", a.data_dir, "directory holding the TU files");
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_option("--set", a.sets, "override, e.g. --set train.max_epochs=50")->take_all();
}

// File (or dataset preset), then flags, then validation.
RunConfig resolve_config(const CommonArgs& a) {
    RunConfig c;
    if (!a.config.empty()) {
        c = load_config(a.config);
    } else if (!a.dataset.empty()) {
        try {
            c = preset_config(a.dataset);
        } catch (const ConfigError&) {
            c.dataset = a.dataset;
        }
    }
    if (!a.dataset.empty()) c.dataset = a.dataset;
    if (!a.backbone.empty()) c.backbone = parse_gnn_kind(a.backbone);
    if (!a.regime.empty()) c.regime = parse_regime(a.regime);
    if (!a.variant.empty()) c.variant = parse_variant(a.variant);
    if (!a.structures.empty()) c.structures = a.structures;
    if (!a.data_dir.empty()) c.data_dir = a.data_dir;
    if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
    if (a.jobs > 0) c.jobs = a.jobs;
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_run(const fs::path& dir, const RunConfig& config, const RunResult& result, bool checkpoints) {
    fs::create_directories(dir);
    write_text(dir / "summary.json", summary_json(config, result).dump(2) + "\n");
    write_text(dir / "traces.csv", traces_csv(result));
    write_text(dir / "effective_config.toml", config_to_toml(config));
    nlohmann::ordered_json timing;
    timing["wall_clock_seconds"] = result.wall_clock_seconds;
    write_text(dir / "timing.json", timing.dump(2) + "\n");
    if (!checkpoints) return;
    fs::create_directories(dir / "checkpoints");
    for (const auto& f : result.folds) {
        if (!f.model) continue;
        char name[32];
        std::snprintf(name, sizeof name, "fold_%02d.ckpt", f.fold);
        write_checkpoint(dir / "checkpoints" / name, *f.model);
    }
}

PreparedDataset load_prepared(const RunConfig& config) {
    return prepare_dataset(load_configured_dataset(config), config);
}

int cmd_train(const CommonArgs& a) {
    const RunConfig config = resolve_config(a);
    const PreparedDataset data = load_prepared(config);
    const RunResult result = run_regime(config, data);
    write_run(a.out, config, result, true);
    std::printf("%s %s/%s: %.2f +- %.2f over %zu folds\n", config.dataset.c_str(), to_string(config.regime).c_str(),
                result.variant.c_str(), result.mean, result.std, result.fold_accuracies.size());
    return 0;
}

int cmd_ablate(const CommonArgs& a, const std::string& variant_list) {
    std::vector<Variant> variants;
    std::set<std::string> seen;
    std::string item;
    for (std::size_t i = 0; i <= variant_list.size(); ++i) {
        if (i < variant_list.size() && variant_list[i] != ',') {
            item += variant_list[i];
            continue;
        }
        if (item.empty()) continue;
        const Variant v = parse_variant(item);
        if (!seen.insert(to_string(v)).second) {
            std::cerr << "warning: duplicate variant '" << item << "' ignored\n";
        } else {
            variants.push_back(v);
        }
        item.clear();
    }
    if (variants.empty()) throw ConfigError("--variants lists no variant");

    const RunConfig base = resolve_config(a);
    const PreparedDataset data = load_prepared(base);
    std::ostringstream csv;
    csv << "variant,mean,std";
    for (int f = 0; f < base.folds; ++f) csv << ",fold_" << f;
    csv << '\n';
    for (Variant v : variants) {
        RunConfig config = base;
        config.variant = v;
        const RunResult result = run_ablation(config, data, v);
        write_run(fs::path(a.out) / to_string(v), config, result, false);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", result.mean, result.std);
        csv << to_string(v) << ',' << buf;
        for (double acc : result.fold_accuracies) {
            std::snprintf(buf, sizeof buf, ",%.17g", acc);
            csv << buf;
        }
        csv << '\n';
        std::printf("%-12s %.2f +- %.2f\n", to_string(v).c_str(), result.mean, result.std);
    }
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "ablation.csv", csv.str());
    return 0;
}

int cmd_export(const CommonArgs& a, const std::string& checkpoint, int fold) {
    const RunConfig config = resolve_config(a);
    fs::path path = checkpoint;
    if (fs::is_directory(path)) {
        char name[32];
        std::snprintf(name, sizeof name, "fold_%02d.ckpt", fold);
        path = fs::exists(path / "checkpoints" / name) ? path / "checkpoints" / name : path / name;
    }
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    const PreparedDataset data = load_prepared(config);
    FoldModel model(config, static_cast<std::size_t>(data.data.feature_dim),
                    static_cast<std::size_t>(data.data.num_classes), config.seed + static_cast<std::uint64_t>(fold));
    read_checkpoint(path, model);
    const auto structures = export_structures(model, config, data);
    write_structures(a.out, structures);
    std::printf("wrote %zu structures to %s\n", structures.size(), a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motif-driven subgraph structure learning for graph classification"};
    app.require_subcommand(1);

    CommonArgs train_args, ablate_args, export_args;
    std::string variants;
    std::string checkpoint;
    int fold = 0;

    auto* train = app.add_subcommand("train", "cross-validated training under one regime");
    add_common(train, train_args);
    train->add_option("--variant", train_args.variant, "full, gsl, sgsl, gsl+motif, fixed-motif or backbone");
    train->add_option("--structures", train_args.structures, "refined structures for the pre regime");

    auto* ablate = app.add_subcommand("ablate", "run several variants under identical seeds");
    add_common(ablate, ablate_args);
    ablate->add_option("--variants", variants, "comma-separated variant list")->required();

    auto* exp = app.add_subcommand("export", "write refined structures from a checkpoint");
    add_common(exp, export_args);
    exp->add_option("--variant", export_args.variant, "variant the checkpoint was trained with");
    exp->add_option("--checkpoint", checkpoint, "checkpoint file or run directory")->required();
    exp->add_option("--fold", fold, "fold whose checkpoint to use");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(train_args);
        if (*ablate) return cmd_ablate(ablate_args, variants);
        if (*exp) return cmd_export(export_args, checkpoint, fold);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: training diverged: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
