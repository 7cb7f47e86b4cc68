#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "irispad/rng.hpp"
#include "irispad/svm.hpp"

namespace irispad {

/// Labeled features for a set of images across one or more scales. Rows in
/// features_by_scale are aligned with names/labels by index.
struct FeatureStore {
    std::vector<std::string> names;
    std::vector<int> labels;            // +1 attack / -1 bona fide
    std::vector<std::string> groups;    // empty when the manifest has no group tags
    std::vector<std::string> subjects;  // empty when the manifest has no subject tags
    std::map<std::string, std::vector<std::vector<double>>> features_by_scale; // keyed by scale tag
    int bits = 0;

    std::size_t size() const { return names.size(); }
};

/// Ordered set of per-scale models deciding by majority vote.
struct Ensemble {
    std::vector<SvmModel> members; // pairwise distinct scales
    std::uint64_t tie_seed = 0;
};

struct ConfusionCounts {
    std::int64_t tp = 0; // attack classified attack
    std::int64_t fn = 0; // attack classified bona fide
    std::int64_t fp = 0; // bona fide classified attack
    std::int64_t tn = 0; // bona fide classified bona fide

    std::int64_t total() const { return tp + fn + fp + tn; }
};

struct EvalReport {
    ConfusionCounts confusion;
    double ccr = 0.0;
    double apcer = 0.0; // attacks called bona fide / attacks
    double bpcer = 0.0; // bona fide called attack / bona fide
    std::map<std::string, double> per_model_ccr; // scale tag -> individual CCR
    std::int64_t tie_draws = 0;
};

/// Box-plot statistics of one set of values (whiskers at Q1-1.5*IQR and
/// Q3+1.5*IQR, quartiles by linear interpolation of order statistics).
struct ScaleStats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
    std::vector<double> outliers;
};

ScaleStats boxplot_stats(std::span<const double> values);

/// Counts tie-break draws so odd ensembles can assert the tie path was never
/// taken.
class TieBreak {
public:
    explicit TieBreak(std::uint64_t seed) : rng_(seed) {}

    int draw_label() {
        ++draws_;
        return rng_.coin() ? kAttackLabel : kBonafideLabel;
    }
    std::int64_t draws() const { return draws_; }

private:
    Rng rng_;
    std::int64_t draws_ = 0;
};

/// Strict majority label; exact ties are resolved by a seeded draw.
int vote(std::span<const int> predictions, TieBreak& tie);

struct RankedModel {
    SvmModel model;
    double validation_ccr = 0.0;
};

/// Sorts models by descending validation CCR; ties by ascending filter size,
/// full resolution before half.
std::vector<RankedModel> rank_models(std::vector<SvmModel> models, const FeatureStore& validation);

/// Per-model CCR of one model over a store.
double model_ccr(const SvmModel& model, const FeatureStore& data);

EvalReport evaluate(const Ensemble& ensemble, const FeatureStore& test);

/// CCR of best-first ensembles of every size 1..|ranked|.
std::map<int, double> ensemble_size_sweep(std::span<const RankedModel> ranked,
                                          const FeatureStore& test, std::uint64_t tie_seed);

struct LogoOptions {
    ParamGrid grid = ParamGrid::default_grid();
    int folds = 10;
    std::uint64_t cv_seed = 0;
    std::uint64_t split_seed = 0;
    int bonafide_train = 0; // 0 = match the attack training count
    int bonafide_test = 0;  // 0 = match the attack testing count
    SmoOptions smo;
    unsigned threads = 0;
};

struct LogoPermutation {
    std::string held_out_group;
    std::map<std::string, double> per_scale_ccr; // scale tag -> CCR on the held-out set
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

struct LogoOutcome {
    std::vector<LogoPermutation> permutations;     // one per group, in group order
    std::map<std::string, ScaleStats> scale_stats; // per scale across permutations
    std::map<std::string, ScaleStats> group_stats; // per held-out group across scales
    int models_trained = 0;
};

/// Leave-one-group-out: for every attack group, trains one model per scale on
/// the other groups plus sampled bona fide images and tests on the held-out
/// group plus held-out bona fide images. Bona fide train/test splits are
/// subject-disjoint when subject tags exist.
LogoOutcome leave_one_group_out(const FeatureStore& data, const LogoOptions& opts);

} // namespace irispad
