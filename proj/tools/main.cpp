#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irispad/ensemble.hpp"
#include "irispad/errors.hpp"
#include "irispad/pipeline.hpp"
#include "irispad/synthetic.hpp"

namespace {

using irispad::Config;
using irispad::ConfigText;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* config = cmd->add_option("-c,--config", args.config_path, "configuration file");
    if (config_required) config->required();
    cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
    cmd->add_option("--seed", args.seed,
                    "base seed: sets split_seed, cv_seed=seed+1, tie_seed=seed+2");
}

bool known_key(const std::string& key) {
    for (const auto& k : irispad::known_config_keys())
        if (k == key) return true;
    return false;
}

Config make_config(const CommonArgs& args, const char* mode_key, bool require_mode) {
    ConfigText text;
    if (!args.config_path.empty()) text = irispad::load_config_file(args.config_path);
    if (mode_key) {
        text.set("extract_features", "false");
        text.set("train_models", "false");
        text.set("test_images", "false");
        text.set(mode_key, "true");
    }
    if (args.seed) {
        text.set("split_seed", std::to_string(*args.seed));
        text.set("cv_seed", std::to_string(*args.seed + 1));
        text.set("tie_seed", std::to_string(*args.seed + 2));
    }
    for (const auto& item : args.overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw irispad::ConfigError("--set expects key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        if (!known_key(key)) throw irispad::ConfigError("--set references unknown key '" + key + "'");
        text.set(key, item.substr(eq + 1));
    }

    std::vector<std::string> warnings;
    Config cfg = irispad::build_config(text, &warnings, require_mode);
    for (const auto& warning : warnings) std::cerr << "warning: " << warning << "\n";
    return cfg;
}

std::string seeds_of(const Config& cfg) {
    return "split:" + std::to_string(cfg.split_seed) + ",cv:" + std::to_string(cfg.cv_seed) +
           ",tie:" + std::to_string(cfg.tie_seed);
}

int run_extract(const CommonArgs& args) {
    const Config cfg = make_config(args, "extract_features", true);
    const auto summary = irispad::run_extraction(cfg);
    for (const auto& failure : summary.failed) std::cerr << "error: " << failure << "\n";
    std::cout << "summary mode=extract status=" << (summary.failed.empty() ? "ok" : "partial")
              << " images=" << summary.images << " files=" << summary.files
              << " errors=" << summary.failed.size() << " seeds=" << seeds_of(cfg) << "\n";
    return summary.failed.empty() ? 0 : 2;
}

int run_train(const CommonArgs& args) {
    const Config cfg = make_config(args, "train_models", true);
    const auto summary = irispad::run_training(cfg);
    std::cout << "summary mode=train status=ok models=" << summary.model_files.size()
              << " seeds=" << seeds_of(cfg) << "\n";
    return 0;
}

int run_test(const CommonArgs& args) {
    const Config cfg = make_config(args, "test_images", true);
    const auto summary = irispad::run_testing(cfg);
    if (summary.ensemble) {
        const auto& r = *summary.ensemble;
        std::cout << "summary mode=test status=ok voting=on"
                  << " ccr=" << r.ccr << " apcer=" << r.apcer << " bpcer=" << r.bpcer
                  << " tie_draws=" << r.tie_draws << " seeds=" << seeds_of(cfg) << "\n";
    } else {
        double worst = 1.0;
        for (const auto& [tag, report] : summary.per_model) worst = std::min(worst, report.ccr);
        std::cout << "summary mode=test status=ok voting=off models=" << summary.per_model.size()
                  << " min_ccr=" << worst << " seeds=" << seeds_of(cfg) << "\n";
        for (const auto& [tag, report] : summary.per_model)
            std::cout << "  " << tag << " ccr=" << report.ccr << "\n";
    }
    return 0;
}

int run_protocol_8020(const CommonArgs& args) {
    const Config cfg = make_config(args, nullptr, false);
    const auto summary = irispad::protocol_8020(cfg);
    std::cout << "summary mode=protocol-8020 status=ok train=" << summary.train_count
              << " validation=" << summary.validation_count << " best=" << summary.ranking.front().first
              << " best_ccr=" << summary.ranking.front().second
              << " ensemble_ccr=" << summary.ensemble.ccr << " seeds=" << seeds_of(cfg) << "\n";
    return 0;
}

int run_protocol_logo(const CommonArgs& args) {
    const Config cfg = make_config(args, nullptr, false);
    const auto summary = irispad::protocol_logo(cfg);
    std::cout << "summary mode=protocol-logo status=ok groups="
              << summary.outcome.permutations.size()
              << " models=" << summary.outcome.models_trained << " seeds=" << seeds_of(cfg) << "\n";
    return 0;
}

int run_show_config(const CommonArgs& args) {
    const Config cfg = make_config(args, nullptr, false);
    std::cout << irispad::show_config(cfg);
    std::cerr << "summary mode=show-config status=ok seeds=" << seeds_of(cfg) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Textured contact lens detection: BSIF features + RBF-SVM ensemble"};
    app.require_subcommand(1);

    CommonArgs extract_args, train_args, test_args, p8020_args, logo_args, show_args;
    auto* extract = app.add_subcommand("extract", "extract BSIF features to CSV files");
    add_common(extract, extract_args, true);
    auto* train = app.add_subcommand("train", "train one auto-tuned SVM per scale");
    add_common(train, train_args, true);
    auto* test = app.add_subcommand("test", "evaluate trained models on a test manifest");
    add_common(test, test_args, true);
    auto* p8020 = app.add_subcommand("protocol-8020",
                                     "80:20 split, per-model ranking and ensemble size sweep");
    add_common(p8020, p8020_args, true);
    auto* logo = app.add_subcommand("protocol-logo", "leave-one-group-out generalization protocol");
    add_common(logo, logo_args, true);
    auto* show = app.add_subcommand("show-config", "print the effective configuration");
    add_common(show, show_args, false);

    std::string gen_out;
    int gen_count = 20;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen-synthetic", "generate a synthetic two-class dataset");
    gen->add_option("-o,--out", gen_out, "output directory")->required();
    gen->add_option("-n,--count", gen_count, "images per class");
    gen->add_option("--seed", gen_seed, "generator seed");

    try {
        app.parse(argc, argv);

        if (*extract) return run_extract(extract_args);
        if (*train) return run_train(train_args);
        if (*test) return run_test(test_args);
        if (*p8020) return run_protocol_8020(p8020_args);
        if (*logo) return run_protocol_logo(logo_args);
        if (*show) return run_show_config(show_args);
        if (*gen) {
            const auto summary = irispad::gen_synthetic(gen_out, gen_count, gen_seed);
            std::cout << "summary mode=gen-synthetic status=ok images=" << summary.images
                      << " manifest=" << summary.manifest_path.string() << " seed=" << gen_seed
                      << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const irispad::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
