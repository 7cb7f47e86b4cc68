#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irispad/bsif.hpp"

namespace irispad {

// Class labels: +1 = attack (textured lens), -1 = bona fide (no lens or clear
// lens). Fixed convention across the whole pipeline.
inline constexpr int kAttackLabel = +1;
inline constexpr int kBonafideLabel = -1;

/// Trained binary RBF-kernel SVM for one BSIF scale.
struct SvmModel {
    ScaleId scale;
    int bits = 0;
    int dim = 0;
    double gamma = 0.0;
    double c = 0.0;
    double bias = 0.0;
    std::vector<double> dual_coefs; // alpha_i * y_i, one per support vector
    std::vector<std::vector<double>> support_vectors;
};

/// Labeled features of a single scale.
struct TrainSet {
    std::vector<std::vector<double>> features;
    std::vector<int> labels; // +1 / -1
    ScaleId scale;
    int bits = 0;
};

/// exp(-gamma * ||x - z||^2)
double rbf_kernel(std::span<const double> x, std::span<const double> z, double gamma);

struct SmoOptions {
    double tol = 1e-3;                  // KKT tolerance (max violating pair gap)
    std::int64_t max_iter = 10'000'000; // pair-update budget
    double sv_threshold = 1e-8;         // alpha below this is not a support vector
};

/// Solves the soft-margin dual by sequential minimal optimization with
/// maximal-violating-pair working set selection. Fully deterministic.
SvmModel train_smo(const TrainSet& data, double c, double gamma, const SmoOptions& opts = {});

struct ParamGrid {
    std::vector<double> c_values;     // ascending
    std::vector<double> gamma_values; // ascending

    // C in 2^-5..2^15, gamma in 2^-15..2^3, both stepping by 2^2.
    static ParamGrid default_grid();
};

struct TuningCell {
    double c = 0.0;
    double gamma = 0.0;
    double mean_ccr = 0.0;
    std::vector<double> fold_ccr;
};

struct TuningReport {
    std::vector<TuningCell> cells; // ordered by (c, gamma) ascending
    std::size_t best_index = 0;
    int folds = 0;
    std::uint64_t seed = 0;
};

/// Stratified fold assignment: each class is shuffled with the seeded source
/// and dealt round-robin, continuing the fold cycle across classes so fold
/// sizes differ by at most one. Requires at least k samples of each class.
std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

/// Grid search with k-fold cross validation: scores every (C, gamma) cell by
/// mean fold CCR, picks the best (ties: smaller C, then smaller gamma), and
/// retrains on the full set with the winner.
std::pair<SvmModel, TuningReport> train_auto(const TrainSet& data, const ParamGrid& grid, int k,
                                             std::uint64_t seed, const SmoOptions& opts = {},
                                             unsigned threads = 0);

struct Prediction {
    int label = 0; // sign of value; exactly 0 maps to -1 (bona fide)
    double value = 0.0;
};

Prediction predict(const SvmModel& model, std::span<const double> x);

/// Versioned text serialization; save -> load -> save is byte-identical.
std::string save_model(const SvmModel& model);
SvmModel load_model(std::string_view bytes);

void write_model_file(const SvmModel& model, const std::filesystem::path& path);
SvmModel read_model_file(const std::filesystem::path& path);

} // namespace irispad
