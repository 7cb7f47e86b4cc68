#include "irispad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "irispad/errors.hpp"
#include "irispad/image.hpp"
#include "irispad/rng.hpp"
#include "parallel.hpp"
#include "textio.hpp"

namespace irispad {

namespace {

namespace fs = std::filesystem;

const char* bool_str(bool v) { return v ? "true" : "false"; }

bool parse_bool(const std::string& value, const std::string& key) {
    std::string v;
    for (const char c : value) v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("invalid boolean for key '" + key + "': '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> items;
    for (const auto& part : textio::split(value, ',')) {
        const auto t = textio::trim(part);
        if (!t.empty()) items.emplace_back(t);
    }
    return items;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += textio::format_double(values[i]);
    }
    return out;
}

std::string join_ints(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

std::string join_strings(const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += values[i];
    }
    return out;
}

void require_path(const fs::path& value, const char* key, const char* mode) {
    if (value.empty())
        throw ConfigError(std::string("missing required key '") + key + "' for " + mode);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
        throw IoError("cannot create directory: " + dir.string());
}

} // namespace

void ConfigText::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries.emplace_back(key, value);
}

ConfigText load_config_file(const fs::path& path) {
    const std::string content = textio::read_file(path);
    ConfigText text;
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = textio::trim(line);
        if (t.empty() || t.front() == '#' || t.front() == ';') continue;
        if (t.front() == '[') continue; // section headers are cosmetic
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("malformed line " + std::to_string(line_no) + " in " +
                              path.string() + ": '" + std::string(t) + "'");
        const std::string key{textio::trim(t.substr(0, eq))};
        const std::string value{textio::trim(t.substr(eq + 1))};
        if (key.empty())
            throw ConfigError("empty key on line " + std::to_string(line_no) + " in " + path.string());
        text.set(key, value);
    }
    return text;
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "extract_features", "train_models", "test_images",
        "image_dir", "filter_dir", "feature_dir", "model_dir", "output_dir",
        "training_manifest", "testing_manifest",
        "bits", "scales", "raw_counts",
        "majority_voting", "ensemble_scales", "ensemble_size",
        "svm_c_grid", "svm_gamma_grid", "svm_folds", "svm_tol", "svm_max_iter",
        "logo_bonafide_train", "logo_bonafide_test",
        "split_seed", "cv_seed", "tie_seed", "threads",
    };
    return keys;
}

Config build_config(const ConfigText& text, std::vector<std::string>* warnings, bool require_mode) {
    Config cfg;
    for (const auto& [key, value] : text.entries) {
        if (key == "extract_features") cfg.extract_features = parse_bool(value, key);
        else if (key == "train_models") cfg.train_models = parse_bool(value, key);
        else if (key == "test_images") cfg.test_images = parse_bool(value, key);
        else if (key == "image_dir") cfg.image_dir = value;
        else if (key == "filter_dir") cfg.filter_dir = value;
        else if (key == "feature_dir") cfg.feature_dir = value;
        else if (key == "model_dir") cfg.model_dir = value;
        else if (key == "output_dir") cfg.output_dir = value;
        else if (key == "training_manifest") cfg.training_manifest = value;
        else if (key == "testing_manifest") cfg.testing_manifest = value;
        else if (key == "bits") cfg.bits = static_cast<int>(textio::parse_int(value, key));
        else if (key == "scales") {
            cfg.scales.clear();
            for (const auto& item : parse_list(value))
                cfg.scales.push_back(static_cast<int>(textio::parse_int(item, key)));
        } else if (key == "raw_counts") cfg.raw_counts = parse_bool(value, key);
        else if (key == "majority_voting") cfg.majority_voting = parse_bool(value, key);
        else if (key == "ensemble_scales") cfg.ensemble_scales = parse_list(value);
        else if (key == "ensemble_size") cfg.ensemble_size = static_cast<int>(textio::parse_int(value, key));
        else if (key == "svm_c_grid") {
            cfg.svm_c_grid.clear();
            for (const auto& item : parse_list(value)) cfg.svm_c_grid.push_back(textio::parse_double(item, key));
        } else if (key == "svm_gamma_grid") {
            cfg.svm_gamma_grid.clear();
            for (const auto& item : parse_list(value)) cfg.svm_gamma_grid.push_back(textio::parse_double(item, key));
        } else if (key == "svm_folds") cfg.svm_folds = static_cast<int>(textio::parse_int(value, key));
        else if (key == "svm_tol") cfg.svm_tol = textio::parse_double(value, key);
        else if (key == "svm_max_iter") cfg.svm_max_iter = textio::parse_int(value, key);
        else if (key == "logo_bonafide_train") cfg.logo_bonafide_train = static_cast<int>(textio::parse_int(value, key));
        else if (key == "logo_bonafide_test") cfg.logo_bonafide_test = static_cast<int>(textio::parse_int(value, key));
        else if (key == "split_seed") cfg.split_seed = static_cast<std::uint64_t>(textio::parse_int(value, key));
        else if (key == "cv_seed") cfg.cv_seed = static_cast<std::uint64_t>(textio::parse_int(value, key));
        else if (key == "tie_seed") cfg.tie_seed = static_cast<std::uint64_t>(textio::parse_int(value, key));
        else if (key == "threads") cfg.threads = static_cast<unsigned>(textio::parse_int(value, key));
        else if (warnings) warnings->push_back("unknown config key '" + key + "'");
    }

    // value validation
    if (cfg.bits < 5 || cfg.bits > 12)
        throw ConfigError("bits must be in 5..12, got " + std::to_string(cfg.bits));
    if (cfg.scales.empty()) throw ConfigError("scales must not be empty");
    std::sort(cfg.scales.begin(), cfg.scales.end());
    cfg.scales.erase(std::unique(cfg.scales.begin(), cfg.scales.end()), cfg.scales.end());
    for (const int s : cfg.scales)
        if (!is_valid_combination(s, cfg.bits))
            throw ConfigError("invalid scale/bits combination " + std::to_string(s) + "/" +
                              std::to_string(cfg.bits));
    for (const auto& tag : cfg.ensemble_scales) ScaleId::parse_tag(tag); // throws on malformed tags
    if (cfg.svm_c_grid.empty() || cfg.svm_gamma_grid.empty())
        throw ConfigError("svm parameter grids must not be empty");
    for (const double v : cfg.svm_c_grid)
        if (!(v > 0.0)) throw ConfigError("svm_c_grid values must be positive");
    for (const double v : cfg.svm_gamma_grid)
        if (!(v > 0.0)) throw ConfigError("svm_gamma_grid values must be positive");
    std::sort(cfg.svm_c_grid.begin(), cfg.svm_c_grid.end());
    std::sort(cfg.svm_gamma_grid.begin(), cfg.svm_gamma_grid.end());
    if (cfg.svm_folds < 2) throw ConfigError("svm_folds must be at least 2");
    if (!(cfg.svm_tol > 0.0)) throw ConfigError("svm_tol must be positive");
    if (cfg.svm_max_iter < 1) throw ConfigError("svm_max_iter must be positive");
    if (cfg.ensemble_size < 0) throw ConfigError("ensemble_size must be non-negative");
    if (cfg.logo_bonafide_train < 0 || cfg.logo_bonafide_test < 0)
        throw ConfigError("logo bona fide counts must be non-negative");

    if (require_mode) {
        if (!cfg.extract_features && !cfg.train_models && !cfg.test_images)
            throw ConfigError("no mode enabled: set at least one of extract_features, "
                              "train_models, test_images");
        if (cfg.extract_features) {
            require_path(cfg.image_dir, "image_dir", "extract_features");
            require_path(cfg.filter_dir, "filter_dir", "extract_features");
            require_path(cfg.feature_dir, "feature_dir", "extract_features");
            if (cfg.training_manifest.empty() && cfg.testing_manifest.empty())
                throw ConfigError("missing required key 'training_manifest' or "
                                  "'testing_manifest' for extract_features");
        }
        if (cfg.train_models) {
            require_path(cfg.feature_dir, "feature_dir", "train_models");
            require_path(cfg.model_dir, "model_dir", "train_models");
            require_path(cfg.output_dir, "output_dir", "train_models");
            require_path(cfg.training_manifest, "training_manifest", "train_models");
        }
        if (cfg.test_images) {
            require_path(cfg.feature_dir, "feature_dir", "test_images");
            require_path(cfg.model_dir, "model_dir", "test_images");
            require_path(cfg.output_dir, "output_dir", "test_images");
            require_path(cfg.testing_manifest, "testing_manifest", "test_images");
        }
    }
    return cfg;
}

Config parse_config(const fs::path& path) {
    return build_config(load_config_file(path), nullptr, true);
}

std::string show_config(const Config& cfg) {
    std::ostringstream out;
    out << "[modes]\n";
    out << "extract_features = " << bool_str(cfg.extract_features) << "\n";
    out << "train_models = " << bool_str(cfg.train_models) << "\n";
    out << "test_images = " << bool_str(cfg.test_images) << "\n";
    out << "\n[paths]\n";
    out << "image_dir = " << cfg.image_dir.string() << "\n";
    out << "filter_dir = " << cfg.filter_dir.string() << "\n";
    out << "feature_dir = " << cfg.feature_dir.string() << "\n";
    out << "model_dir = " << cfg.model_dir.string() << "\n";
    out << "output_dir = " << cfg.output_dir.string() << "\n";
    out << "training_manifest = " << cfg.training_manifest.string() << "\n";
    out << "testing_manifest = " << cfg.testing_manifest.string() << "\n";
    out << "\n[features]\n";
    out << "bits = " << cfg.bits << "\n";
    out << "scales = " << join_ints(cfg.scales) << "\n";
    out << "raw_counts = " << bool_str(cfg.raw_counts) << "\n";
    out << "\n[classifier]\n";
    out << "majority_voting = " << bool_str(cfg.majority_voting) << "\n";
    out << "ensemble_scales = " << join_strings(cfg.ensemble_scales) << "\n";
    out << "ensemble_size = " << cfg.ensemble_size << "\n";
    out << "svm_c_grid = " << join_doubles(cfg.svm_c_grid) << "\n";
    out << "svm_gamma_grid = " << join_doubles(cfg.svm_gamma_grid) << "\n";
    out << "svm_folds = " << cfg.svm_folds << "\n";
    out << "svm_tol = " << textio::format_double(cfg.svm_tol) << "\n";
    out << "svm_max_iter = " << cfg.svm_max_iter << "\n";
    out << "\n[protocols]\n";
    out << "logo_bonafide_train = " << cfg.logo_bonafide_train << "\n";
    out << "logo_bonafide_test = " << cfg.logo_bonafide_test << "\n";
    out << "\n[seeds]\n";
    out << "split_seed = " << cfg.split_seed << "\n";
    out << "cv_seed = " << cfg.cv_seed << "\n";
    out << "tie_seed = " << cfg.tie_seed << "\n";
    out << "\n[execution]\n";
    out << "threads = " << cfg.threads << "\n";
    return out.str();
}

Manifest load_manifest(const fs::path& path) {
    const std::string content = textio::read_file(path);
    Manifest manifest;
    std::unordered_set<std::string> seen;
    std::istringstream in(content);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = textio::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto fields = textio::split(std::string(t), ',');
        if (line_no == 1 && !fields.empty() && textio::trim(fields[0]) == "filename") continue;
        if (fields.size() < 2 || fields.size() > 4)
            throw FormatError("manifest line " + std::to_string(line_no) + " in " + path.string() +
                              " must have 2-4 fields");

        Manifest::Entry entry;
        entry.filename = std::string(textio::trim(fields[0]));
        const std::string label{textio::trim(fields[1])};
        if (label == "attack") entry.label = kAttackLabel;
        else if (label == "bonafide") entry.label = kBonafideLabel;
        else throw FormatError("manifest line " + std::to_string(line_no) + ": label must be "
                               "'attack' or 'bonafide', got '" + label + "'");
        if (fields.size() > 2) entry.group = std::string(textio::trim(fields[2]));
        if (fields.size() > 3) entry.subject = std::string(textio::trim(fields[3]));
        if (entry.filename.empty())
            throw FormatError("manifest line " + std::to_string(line_no) + ": empty filename");
        if (!seen.insert(entry.filename).second)
            throw ValidationError("duplicate manifest filename: " + entry.filename);
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
    bool groups = false, subjects = false;
    for (const auto& e : manifest.entries) {
        groups |= !e.group.empty();
        subjects |= !e.subject.empty();
    }
    std::ostringstream out;
    out << "filename,label" << (groups || subjects ? ",group" : "") << (subjects ? ",subject" : "")
        << "\n";
    for (const auto& e : manifest.entries) {
        out << e.filename << "," << (e.label == kAttackLabel ? "attack" : "bonafide");
        if (groups || subjects) out << "," << e.group;
        if (subjects) out << "," << e.subject;
        out << "\n";
    }
    textio::atomic_write_file(path, out.str());
}

std::vector<ScaleId> configured_scale_ids(const Config& cfg) {
    std::vector<ScaleId> ids;
    for (const int s : cfg.scales) ids.push_back({s, Resolution::Full});
    for (const int s : cfg.scales) ids.push_back({s, Resolution::Half});
    return ids;
}

fs::path feature_csv_path(const Config& cfg, const ScaleId& scale) {
    return cfg.feature_dir / ("features_" + std::to_string(cfg.bits) + "bit_" + scale.tag() + ".csv");
}

fs::path model_file_path(const Config& cfg, const ScaleId& scale) {
    return cfg.model_dir / ("svm_" + scale.tag() + ".model");
}

std::string write_feature_csv(const FeatureTable& table) {
    const std::size_t bins = static_cast<std::size_t>(1) << table.bits;
    std::ostringstream out;
    out << "# bsif tag=" << table.scale.tag() << " bits=" << table.bits << " bins=" << bins
        << " values=" << (table.raw_counts ? "raw" : "normalized") << "\n";
    out << "filename";
    for (std::size_t b = 0; b < bins; ++b) out << ",bin" << b;
    out << "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out << table.names[r];
        for (const double v : table.rows[r]) out << "," << textio::format_double(v, 9);
        out << "\n";
    }
    return out.str();
}

FeatureTable parse_feature_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("# bsif ", 0) != 0)
        throw FormatError("feature CSV is missing its metadata line");

    FeatureTable table;
    bool have_tag = false, have_bits = false;
    for (const auto& token : textio::split(line.substr(7), ' ')) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "tag") {
            table.scale = ScaleId::parse_tag(value);
            have_tag = true;
        } else if (key == "bits") {
            table.bits = static_cast<int>(textio::parse_int(value, "bits"));
            have_bits = true;
        } else if (key == "values") {
            table.raw_counts = (value == "raw");
        }
    }
    if (!have_tag || !have_bits) throw FormatError("feature CSV metadata lacks tag or bits");
    if (table.bits < 5 || table.bits > 12)
        throw FormatError("feature CSV declares unsupported bit depth " +
                          std::to_string(table.bits));

    if (!std::getline(in, line) || line.rfind("filename,bin0", 0) != 0)
        throw FormatError("feature CSV is missing its column header");

    const std::size_t bins = static_cast<std::size_t>(1) << table.bits;
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (textio::trim(line).empty()) continue;
        const auto fields = textio::split(line, ',');
        if (fields.size() != bins + 1)
            throw FormatError("feature CSV line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(bins + 1));
        table.names.push_back(fields[0]);
        std::vector<double> row(bins);
        for (std::size_t b = 0; b < bins; ++b)
            row[b] = textio::parse_double(fields[b + 1], "bin value");
        table.rows.push_back(std::move(row));
    }
    return table;
}

void save_feature_csv(const FeatureTable& table, const fs::path& path) {
    textio::atomic_write_file(path, write_feature_csv(table));
}

FeatureTable load_feature_csv(const fs::path& path) {
    return parse_feature_csv(textio::read_file(path));
}

namespace {

// Entries from the training manifest followed by unseen testing entries.
std::vector<Manifest::Entry> extraction_entries(const Config& cfg) {
    std::vector<Manifest::Entry> entries;
    std::unordered_set<std::string> seen;
    for (const auto& manifest_path : {cfg.training_manifest, cfg.testing_manifest}) {
        if (manifest_path.empty()) continue;
        for (auto& entry : load_manifest(manifest_path).entries)
            if (seen.insert(entry.filename).second) entries.push_back(std::move(entry));
    }
    if (entries.empty() && cfg.training_manifest.empty() && cfg.testing_manifest.empty())
        throw ConfigError("extraction requires a training or testing manifest");
    return entries;
}

std::vector<FilterBank> load_configured_banks(const Config& cfg) {
    std::vector<FilterBank> banks;
    for (const int s : cfg.scales) {
        const fs::path path = cfg.filter_dir / filter_asset_name(s, cfg.bits);
        if (!fs::exists(path)) throw IoError("missing filter asset: " + path.string());
        banks.push_back(load_filter_bank(path));
    }
    return banks;
}

} // namespace

ExtractionSummary run_extraction(const Config& cfg) {
    require_path(cfg.image_dir, "image_dir", "extraction");
    require_path(cfg.filter_dir, "filter_dir", "extraction");
    require_path(cfg.feature_dir, "feature_dir", "extraction");

    const auto entries = extraction_entries(cfg);
    const auto banks = load_configured_banks(cfg);
    const auto scale_ids = configured_scale_ids(cfg);
    ensure_dir(cfg.feature_dir);

    // One slot per image; workers only touch their own slot.
    struct Extracted {
        bool ok = false;
        std::vector<std::vector<double>> rows;
    };
    std::vector<Extracted> results(entries.size());
    std::mutex failures_mutex;
    ExtractionSummary summary;
    summary.images = static_cast<int>(entries.size());

    parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
        try {
            const GrayImage img = load_image(cfg.image_dir / entries[i].filename);
            auto features = extract_all(img, banks);
            auto& slot = results[i];
            slot.rows.reserve(features.size());
            for (auto& fv : features) {
                if (cfg.raw_counts) {
                    // undo the normalization; counts are exact in double
                    const double total = static_cast<double>(img.width()) * img.height() /
                                         (fv.scale.res == Resolution::Half ? 4.0 : 1.0);
                    for (double& v : fv.bins) v = std::round(v * total);
                }
                slot.rows.push_back(std::move(fv.bins));
            }
            slot.ok = true;
        } catch (const Error& e) {
            std::lock_guard<std::mutex> lock(failures_mutex);
            summary.failed.push_back(entries[i].filename + ": " + e.what());
        }
    });

    for (std::size_t sc = 0; sc < scale_ids.size(); ++sc) {
        FeatureTable table;
        table.scale = scale_ids[sc];
        table.bits = cfg.bits;
        table.raw_counts = cfg.raw_counts;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!results[i].ok) continue;
            table.names.push_back(entries[i].filename);
            table.rows.push_back(results[i].rows[sc]);
        }
        save_feature_csv(table, feature_csv_path(cfg, scale_ids[sc]));
        ++summary.files;
    }
    std::sort(summary.failed.begin(), summary.failed.end());
    return summary;
}

FeatureStore load_feature_store(const Config& cfg, const Manifest& manifest,
                                const std::vector<ScaleId>& scales) {
    FeatureStore store;
    store.bits = cfg.bits;
    bool any_group = false, any_subject = false;
    for (const auto& e : manifest.entries) {
        store.names.push_back(e.filename);
        store.labels.push_back(e.label);
        store.groups.push_back(e.group);
        store.subjects.push_back(e.subject);
        any_group |= !e.group.empty();
        any_subject |= !e.subject.empty();
    }
    if (!any_group) store.groups.clear();
    if (!any_subject) store.subjects.clear();

    std::set<std::string> missing;
    for (const auto& scale : scales) {
        const FeatureTable table = load_feature_csv(feature_csv_path(cfg, scale));
        if (table.scale != scale || table.bits != cfg.bits)
            throw ValidationError("feature CSV metadata mismatch for scale " + scale.tag());

        std::unordered_map<std::string, std::size_t> index;
        index.reserve(table.names.size());
        for (std::size_t r = 0; r < table.names.size(); ++r) index.emplace(table.names[r], r);

        std::vector<std::vector<double>> rows;
        rows.reserve(store.names.size());
        for (const auto& name : store.names) {
            const auto it = index.find(name);
            if (it == index.end()) {
                missing.insert(name);
                rows.emplace_back();
            } else {
                rows.push_back(table.rows[it->second]);
            }
        }
        store.features_by_scale[scale.tag()] = std::move(rows);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& name : missing) {
            if (!list.empty()) list += ", ";
            list += name;
        }
        throw ValidationError("feature store is missing rows for: " + list);
    }
    return store;
}

namespace {

TrainSet train_set_for_scale(const FeatureStore& store, const ScaleId& scale, int bits) {
    TrainSet set;
    set.scale = scale;
    set.bits = bits;
    const auto& rows = store.features_by_scale.at(scale.tag());
    set.features = rows;
    set.labels = store.labels;
    return set;
}

std::string tuning_csv(const TuningReport& report, const ScaleId& scale) {
    std::ostringstream out;
    out << "# tuning tag=" << scale.tag() << " folds=" << report.folds << " seed=" << report.seed
        << "\n";
    out << "c,gamma,mean_ccr,selected\n";
    for (std::size_t i = 0; i < report.cells.size(); ++i) {
        const auto& cell = report.cells[i];
        out << textio::format_double(cell.c) << "," << textio::format_double(cell.gamma) << ","
            << textio::format_double(cell.mean_ccr, 9) << "," << (i == report.best_index ? 1 : 0)
            << "\n";
    }
    return out.str();
}

std::string report_csv(const EvalReport& report, std::uint64_t tie_seed, std::size_t members) {
    std::ostringstream out;
    out << "ccr,apcer,bpcer,tp,fn,fp,tn,tie_draws,members,tie_seed\n";
    out << textio::format_double(report.ccr, 9) << "," << textio::format_double(report.apcer, 9)
        << "," << textio::format_double(report.bpcer, 9) << "," << report.confusion.tp << ","
        << report.confusion.fn << "," << report.confusion.fp << "," << report.confusion.tn << ","
        << report.tie_draws << "," << members << "," << tie_seed << "\n";
    return out.str();
}

std::string per_model_csv(const std::map<std::string, EvalReport>& reports) {
    std::ostringstream out;
    out << "scale,ccr,apcer,bpcer,tp,fn,fp,tn\n";
    for (const auto& [tag, report] : reports) {
        out << tag << "," << textio::format_double(report.ccr, 9) << ","
            << textio::format_double(report.apcer, 9) << ","
            << textio::format_double(report.bpcer, 9) << "," << report.confusion.tp << ","
            << report.confusion.fn << "," << report.confusion.fp << "," << report.confusion.tn
            << "\n";
    }
    return out.str();
}

} // namespace

TrainingSummary run_training(const Config& cfg) {
    require_path(cfg.feature_dir, "feature_dir", "training");
    require_path(cfg.model_dir, "model_dir", "training");
    require_path(cfg.output_dir, "output_dir", "training");
    require_path(cfg.training_manifest, "training_manifest", "training");

    const Manifest manifest = load_manifest(cfg.training_manifest);
    const auto scales = configured_scale_ids(cfg);
    const FeatureStore store = load_feature_store(cfg, manifest, scales);
    ensure_dir(cfg.model_dir);
    ensure_dir(cfg.output_dir);

    TrainingSummary summary;
    for (const auto& scale : scales) {
        const TrainSet data = train_set_for_scale(store, scale, cfg.bits);
        const auto [model, report] =
            train_auto(data, cfg.grid(), cfg.svm_folds, cfg.cv_seed, cfg.smo(), cfg.threads);

        const fs::path model_path = model_file_path(cfg, scale);
        write_model_file(model, model_path);
        summary.model_files.push_back(model_path.string());

        const fs::path report_path = cfg.output_dir / ("tuning_" + scale.tag() + ".csv");
        textio::atomic_write_file(report_path, tuning_csv(report, scale));
        summary.report_files.push_back(report_path.string());
    }
    return summary;
}

namespace {

std::vector<SvmModel> load_configured_models(const Config& cfg) {
    std::vector<SvmModel> models;
    for (const auto& scale : configured_scale_ids(cfg)) {
        const fs::path path = model_file_path(cfg, scale);
        if (!fs::exists(path)) throw IoError("missing model file for scale " + scale.tag() +
                                             ": " + path.string());
        SvmModel model = read_model_file(path);
        if (model.scale != scale || model.bits != cfg.bits)
            throw ValidationError("model/feature scale mismatch for " + scale.tag());
        models.push_back(std::move(model));
    }
    return models;
}

} // namespace

TestingSummary run_testing(const Config& cfg) {
    require_path(cfg.feature_dir, "feature_dir", "testing");
    require_path(cfg.model_dir, "model_dir", "testing");
    require_path(cfg.output_dir, "output_dir", "testing");
    require_path(cfg.testing_manifest, "testing_manifest", "testing");

    const Manifest manifest = load_manifest(cfg.testing_manifest);
    const auto scales = configured_scale_ids(cfg);
    const FeatureStore store = load_feature_store(cfg, manifest, scales);
    auto models = load_configured_models(cfg);
    ensure_dir(cfg.output_dir);

    TestingSummary summary;
    if (!cfg.majority_voting) {
        for (const auto& model : models) {
            Ensemble single;
            single.members.push_back(model);
            single.tie_seed = cfg.tie_seed;
            summary.per_model[model.scale.tag()] = evaluate(single, store);
        }
        const fs::path path = cfg.output_dir / "per_model_ccr.csv";
        textio::atomic_write_file(path, per_model_csv(summary.per_model));
        summary.report_files.push_back(path.string());
        return summary;
    }

    Ensemble ensemble;
    ensemble.tie_seed = cfg.tie_seed;
    if (cfg.ensemble_scales.empty()) {
        ensemble.members = std::move(models);
    } else {
        for (const auto& tag : cfg.ensemble_scales) {
            const auto it = std::find_if(models.begin(), models.end(), [&](const SvmModel& m) {
                return m.scale.tag() == tag;
            });
            if (it == models.end())
                throw ValidationError("ensemble_scales names untrained scale " + tag);
            ensemble.members.push_back(*it);
        }
    }
    summary.ensemble = evaluate(ensemble, store);

    const fs::path report_path = cfg.output_dir / "ensemble_report.csv";
    textio::atomic_write_file(report_path,
                              report_csv(*summary.ensemble, cfg.tie_seed, ensemble.members.size()));
    summary.report_files.push_back(report_path.string());

    std::map<std::string, EvalReport> per_model;
    for (const auto& member : ensemble.members) {
        Ensemble single;
        single.members.push_back(member);
        single.tie_seed = cfg.tie_seed;
        per_model[member.scale.tag()] = evaluate(single, store);
    }
    summary.per_model = per_model;
    const fs::path per_model_path = cfg.output_dir / "per_model_ccr.csv";
    textio::atomic_write_file(per_model_path, per_model_csv(per_model));
    summary.report_files.push_back(per_model_path.string());
    return summary;
}

Protocol8020Summary protocol_8020(const Config& cfg) {
    require_path(cfg.feature_dir, "feature_dir", "protocol-8020");
    require_path(cfg.model_dir, "model_dir", "protocol-8020");
    require_path(cfg.output_dir, "output_dir", "protocol-8020");
    require_path(cfg.training_manifest, "training_manifest", "protocol-8020");

    const Manifest manifest = load_manifest(cfg.training_manifest);
    const auto scales = configured_scale_ids(cfg);
    const FeatureStore store = load_feature_store(cfg, manifest, scales);
    ensure_dir(cfg.model_dir);
    ensure_dir(cfg.output_dir);

    // Seeded random 80:20 split of the manifest (not subject disjoint).
    std::vector<std::size_t> order(store.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(cfg.split_seed);
    rng.shuffle(order);
    const std::size_t train_n = order.size() * 4 / 5;
    if (train_n == 0 || train_n == order.size())
        throw ValidationError("manifest too small for an 80:20 split");

    const auto subset = [&](std::size_t begin, std::size_t end) {
        FeatureStore sub;
        sub.bits = store.bits;
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t i = order[k];
            sub.names.push_back(store.names[i]);
            sub.labels.push_back(store.labels[i]);
        }
        for (const auto& [tag, rows] : store.features_by_scale) {
            auto& out = sub.features_by_scale[tag];
            out.reserve(end - begin);
            for (std::size_t k = begin; k < end; ++k) out.push_back(rows[order[k]]);
        }
        return sub;
    };
    const FeatureStore train_store = subset(0, train_n);
    const FeatureStore val_store = subset(train_n, order.size());

    Protocol8020Summary summary;
    summary.train_count = static_cast<int>(train_n);
    summary.validation_count = static_cast<int>(order.size() - train_n);

    std::vector<SvmModel> models;
    for (const auto& scale : scales) {
        const TrainSet data = train_set_for_scale(train_store, scale, cfg.bits);
        auto [model, report] =
            train_auto(data, cfg.grid(), cfg.svm_folds, cfg.cv_seed, cfg.smo(), cfg.threads);

        const fs::path model_path = model_file_path(cfg, scale);
        write_model_file(model, model_path);
        summary.model_files.push_back(model_path.string());
        const fs::path report_path = cfg.output_dir / ("tuning_" + scale.tag() + ".csv");
        textio::atomic_write_file(report_path, tuning_csv(report, scale));
        summary.report_files.push_back(report_path.string());
        models.push_back(std::move(model));
    }

    const auto ranked = rank_models(std::move(models), val_store);
    std::ostringstream ranking_csv;
    ranking_csv << "rank,scale,validation_ccr\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        summary.ranking.emplace_back(ranked[r].model.scale.tag(), ranked[r].validation_ccr);
        ranking_csv << (r + 1) << "," << ranked[r].model.scale.tag() << ","
                    << textio::format_double(ranked[r].validation_ccr, 9) << "\n";
    }
    const fs::path ranking_path = cfg.output_dir / "validation_ranking.csv";
    textio::atomic_write_file(ranking_path, ranking_csv.str());
    summary.report_files.push_back(ranking_path.string());

    summary.sweep = ensemble_size_sweep(ranked, val_store, cfg.tie_seed);
    std::ostringstream sweep_csv;
    sweep_csv << "size,ccr\n";
    for (const auto& [size, ccr] : summary.sweep)
        sweep_csv << size << "," << textio::format_double(ccr, 9) << "\n";
    const fs::path sweep_path = cfg.output_dir / "ensemble_sweep.csv";
    textio::atomic_write_file(sweep_path, sweep_csv.str());
    summary.report_files.push_back(sweep_path.string());

    const std::size_t size = cfg.ensemble_size > 0
                                 ? std::min<std::size_t>(cfg.ensemble_size, ranked.size())
                                 : ranked.size();
    Ensemble ensemble;
    ensemble.tie_seed = cfg.tie_seed;
    for (std::size_t i = 0; i < size; ++i) ensemble.members.push_back(ranked[i].model);
    summary.ensemble = evaluate(ensemble, val_store);

    const fs::path report_path = cfg.output_dir / "ensemble_report.csv";
    textio::atomic_write_file(report_path, report_csv(summary.ensemble, cfg.tie_seed, size));
    summary.report_files.push_back(report_path.string());
    return summary;
}

LogoSummary protocol_logo(const Config& cfg) {
    require_path(cfg.feature_dir, "feature_dir", "protocol-logo");
    require_path(cfg.output_dir, "output_dir", "protocol-logo");
    require_path(cfg.training_manifest, "training_manifest", "protocol-logo");

    const Manifest manifest = load_manifest(cfg.training_manifest);
    const auto scales = configured_scale_ids(cfg);
    const FeatureStore store = load_feature_store(cfg, manifest, scales);
    ensure_dir(cfg.output_dir);

    LogoOptions opts;
    opts.grid = cfg.grid();
    opts.folds = cfg.svm_folds;
    opts.cv_seed = cfg.cv_seed;
    opts.split_seed = cfg.split_seed;
    opts.bonafide_train = cfg.logo_bonafide_train;
    opts.bonafide_test = cfg.logo_bonafide_test;
    opts.smo = cfg.smo();
    opts.threads = cfg.threads;

    LogoSummary summary;
    summary.outcome = leave_one_group_out(store, opts);

    std::ostringstream ccr_csv;
    ccr_csv << "held_out_group,scale,ccr\n";
    for (const auto& perm : summary.outcome.permutations)
        for (const auto& [tag, ccr] : perm.per_scale_ccr)
            ccr_csv << perm.held_out_group << "," << tag << "," << textio::format_double(ccr, 9)
                    << "\n";
    const fs::path ccr_path = cfg.output_dir / "logo_ccr.csv";
    textio::atomic_write_file(ccr_path, ccr_csv.str());
    summary.report_files.push_back(ccr_path.string());

    const auto stats_csv = [](const std::map<std::string, ScaleStats>& stats, const char* key) {
        std::ostringstream out;
        out << key << ",median,q1,q3,iqr,whisker_low,whisker_high,outliers\n";
        for (const auto& [name, s] : stats) {
            out << name << "," << textio::format_double(s.median, 9) << ","
                << textio::format_double(s.q1, 9) << "," << textio::format_double(s.q3, 9) << ","
                << textio::format_double(s.iqr, 9) << ","
                << textio::format_double(s.whisker_low, 9) << ","
                << textio::format_double(s.whisker_high, 9) << ",";
            for (std::size_t i = 0; i < s.outliers.size(); ++i)
                out << (i ? "|" : "") << textio::format_double(s.outliers[i], 9);
            out << "\n";
        }
        return out.str();
    };
    const fs::path scale_path = cfg.output_dir / "logo_scale_stats.csv";
    textio::atomic_write_file(scale_path, stats_csv(summary.outcome.scale_stats, "scale"));
    summary.report_files.push_back(scale_path.string());
    const fs::path group_path = cfg.output_dir / "logo_group_stats.csv";
    textio::atomic_write_file(group_path, stats_csv(summary.outcome.group_stats, "held_out_group"));
    summary.report_files.push_back(group_path.string());
    return summary;
}

} // namespace irispad
