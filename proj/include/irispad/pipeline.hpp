#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irispad/ensemble.hpp"
#include "irispad/svm.hpp"

namespace irispad {

/// Effective configuration of a run. Defaults are applied by build_config;
/// show_config renders them back out as a re-parseable file.
struct Config {
    // modes
    bool extract_features = false;
    bool train_models = false;
    bool test_images = false;

    // paths
    std::filesystem::path image_dir;
    std::filesystem::path filter_dir;
    std::filesystem::path feature_dir;
    std::filesystem::path model_dir;
    std::filesystem::path output_dir;
    std::filesystem::path training_manifest;
    std::filesystem::path testing_manifest;

    // feature options
    int bits = 8;
    std::vector<int> scales = {3, 5, 7, 9, 11, 13, 15, 17};
    bool raw_counts = false;

    // classifier options
    bool majority_voting = true;
    std::vector<std::string> ensemble_scales; // empty = all trained models
    int ensemble_size = 0;                    // 0 = all ranked models (protocol-8020)
    std::vector<double> svm_c_grid = ParamGrid::default_grid().c_values;
    std::vector<double> svm_gamma_grid = ParamGrid::default_grid().gamma_values;
    int svm_folds = 10;
    double svm_tol = 1e-3;
    std::int64_t svm_max_iter = 10'000'000;

    // protocol options
    int logo_bonafide_train = 0; // 0 = match attack counts
    int logo_bonafide_test = 0;

    // seeds
    std::uint64_t split_seed = 1;
    std::uint64_t cv_seed = 2;
    std::uint64_t tie_seed = 3;

    unsigned threads = 0; // 0 = hardware concurrency

    ParamGrid grid() const { return {svm_c_grid, svm_gamma_grid}; }
    SmoOptions smo() const { return {svm_tol, svm_max_iter, 1e-8}; }
};

/// Raw "key = value" pairs from a config file, before defaulting/validation.
struct ConfigText {
    std::vector<std::pair<std::string, std::string>> entries;
    void set(const std::string& key, const std::string& value);
};

ConfigText load_config_file(const std::filesystem::path& path);

/// Every key build_config understands, for override validation.
const std::vector<std::string>& known_config_keys();

/// Applies defaults and validates values. Unknown keys produce warnings (see
/// warnings out-param); a missing required key or no enabled mode throws
/// ConfigError naming the key. require_mode=false is used by show-config.
Config build_config(const ConfigText& text, std::vector<std::string>* warnings = nullptr,
                    bool require_mode = true);

Config parse_config(const std::filesystem::path& path);

/// Renders the effective configuration; parsing the output again reproduces
/// the identical configuration.
std::string show_config(const Config& cfg);

struct Manifest {
    struct Entry {
        std::string filename;
        int label = 0; // +1 attack / -1 bonafide
        std::string group;
        std::string subject;
    };
    std::vector<Entry> entries;
};

/// CSV rows "filename,label[,group[,subject]]"; label is "attack" or
/// "bonafide". Filenames must be unique.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Scales configured in cfg, expanded over both resolutions in extraction
/// order (full ascending, then half ascending).
std::vector<ScaleId> configured_scale_ids(const Config& cfg);

std::filesystem::path feature_csv_path(const Config& cfg, const ScaleId& scale);
std::filesystem::path model_file_path(const Config& cfg, const ScaleId& scale);

/// One feature CSV: metadata line, column header, then one row per image.
struct FeatureTable {
    ScaleId scale;
    int bits = 0;
    bool raw_counts = false;
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
};

std::string write_feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(std::string_view text);
void save_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable load_feature_csv(const std::filesystem::path& path);

struct ExtractionSummary {
    int images = 0;
    int files = 0;
    std::vector<std::string> failed; // images that could not be processed
};

/// Extracts features for every image in the configured manifests and writes
/// one CSV per (scale, resolution). Unreadable images are recorded and
/// skipped; a missing filter asset is fatal.
ExtractionSummary run_extraction(const Config& cfg);

struct TrainingSummary {
    std::vector<std::string> model_files;
    std::vector<std::string> report_files;
};

/// Trains one auto-tuned model per configured scale from the stored feature
/// CSVs and writes model files plus per-model tuning reports.
TrainingSummary run_training(const Config& cfg);

struct TestingSummary {
    std::map<std::string, EvalReport> per_model; // voting off: one report per scale
    std::optional<EvalReport> ensemble;          // voting on
    std::vector<std::string> report_files;
};

TestingSummary run_testing(const Config& cfg);

struct Protocol8020Summary {
    std::vector<std::pair<std::string, double>> ranking; // scale tag -> validation CCR, best first
    std::map<int, double> sweep;                         // ensemble size -> test CCR
    EvalReport ensemble;                                 // ensemble of `ensemble_size` best models
    int train_count = 0;
    int validation_count = 0;
    std::vector<std::string> report_files;
    std::vector<std::string> model_files;
};

/// Splits the training manifest 80:20 with split_seed, trains on the 80%,
/// ranks every model on the 20% validation set and sweeps ensemble sizes.
Protocol8020Summary protocol_8020(const Config& cfg);

struct LogoSummary {
    LogoOutcome outcome;
    std::vector<std::string> report_files;
};

/// Leave-one-group-out over the training manifest's attack groups.
LogoSummary protocol_logo(const Config& cfg);

/// Loads stored features for the manifest entries at the given scales.
/// Missing rows are fatal and the error lists the offending images.
FeatureStore load_feature_store(const Config& cfg, const Manifest& manifest,
                                const std::vector<ScaleId>& scales);

} // namespace irispad
