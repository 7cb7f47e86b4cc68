#include "irispad/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "irispad/errors.hpp"
#include "textio.hpp"

namespace irispad {

namespace {

// Quantile by linear interpolation of order statistics at position (n-1)*p.
double quantile_sorted(std::span<const double> sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

const std::vector<std::vector<double>>& rows_for(const FeatureStore& store,
                                                 const std::string& tag) {
    const auto it = store.features_by_scale.find(tag);
    if (it == store.features_by_scale.end())
        throw ValidationError("feature store has no features for scale " + tag);
    if (it->second.size() != store.names.size())
        throw ValidationError("feature rows for scale " + tag + " are not aligned with the store");
    return it->second;
}

void validate_ensemble(const Ensemble& ensemble) {
    if (ensemble.members.empty()) throw ValidationError("ensemble has no members");
    if (ensemble.members.size() > 16)
        throw ValidationError("ensemble has more than 16 members");
    std::set<std::string> tags;
    for (const auto& member : ensemble.members)
        if (!tags.insert(member.scale.tag()).second)
            throw ValidationError("duplicate ensemble member scale " + member.scale.tag());
}

void accumulate(ConfusionCounts& counts, int truth, int predicted) {
    if (truth == kAttackLabel)
        (predicted == kAttackLabel ? counts.tp : counts.fn) += 1;
    else
        (predicted == kAttackLabel ? counts.fp : counts.tn) += 1;
}

EvalReport finalize_report(const ConfusionCounts& counts) {
    EvalReport report;
    report.confusion = counts;
    const auto attacks = counts.tp + counts.fn;
    const auto bonafide = counts.fp + counts.tn;
    report.ccr = static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
    report.apcer = attacks > 0 ? static_cast<double>(counts.fn) / static_cast<double>(attacks) : 0.0;
    report.bpcer = bonafide > 0 ? static_cast<double>(counts.fp) / static_cast<double>(bonafide) : 0.0;
    return report;
}

} // namespace

ScaleStats boxplot_stats(std::span<const double> values) {
    if (values.empty()) throw ValidationError("boxplot_stats requires at least one value");

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    ScaleStats stats;
    stats.q1 = quantile_sorted(sorted, 0.25);
    stats.median = quantile_sorted(sorted, 0.50);
    stats.q3 = quantile_sorted(sorted, 0.75);
    stats.iqr = stats.q3 - stats.q1;
    stats.whisker_low = stats.q1 - 1.5 * stats.iqr;
    stats.whisker_high = stats.q3 + 1.5 * stats.iqr;
    for (const double v : sorted)
        if (v < stats.whisker_low || v > stats.whisker_high) stats.outliers.push_back(v);
    return stats;
}

int vote(std::span<const int> predictions, TieBreak& tie) {
    if (predictions.empty()) throw ValidationError("vote requires at least one prediction");
    std::int64_t attack = 0, bonafide = 0;
    for (const int p : predictions) (p == kAttackLabel ? attack : bonafide) += 1;
    if (attack > bonafide) return kAttackLabel;
    if (bonafide > attack) return kBonafideLabel;
    return tie.draw_label();
}

double model_ccr(const SvmModel& model, const FeatureStore& data) {
    const auto& rows = rows_for(data, model.scale.tag());
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (predict(model, rows[i]).label == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

std::vector<RankedModel> rank_models(std::vector<SvmModel> models, const FeatureStore& validation) {
    std::vector<RankedModel> ranked;
    ranked.reserve(models.size());
    for (auto& model : models) {
        const double ccr = model_ccr(model, validation);
        ranked.push_back({std::move(model), ccr});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedModel& a, const RankedModel& b) {
        if (a.validation_ccr != b.validation_ccr) return a.validation_ccr > b.validation_ccr;
        if (a.model.scale.filter_size != b.model.scale.filter_size)
            return a.model.scale.filter_size < b.model.scale.filter_size;
        return a.model.scale.res < b.model.scale.res; // full before half
    });
    return ranked;
}

EvalReport evaluate(const Ensemble& ensemble, const FeatureStore& test) {
    validate_ensemble(ensemble);
    if (test.size() == 0) throw ValidationError("empty evaluation set");

    std::vector<const std::vector<std::vector<double>>*> member_rows;
    member_rows.reserve(ensemble.members.size());
    for (const auto& member : ensemble.members)
        member_rows.push_back(&rows_for(test, member.scale.tag()));

    TieBreak tie(ensemble.tie_seed);
    ConfusionCounts ensemble_counts;
    std::vector<ConfusionCounts> member_counts(ensemble.members.size());
    std::vector<int> predictions(ensemble.members.size());

    for (std::size_t img = 0; img < test.size(); ++img) {
        for (std::size_t mi = 0; mi < ensemble.members.size(); ++mi) {
            predictions[mi] = predict(ensemble.members[mi], (*member_rows[mi])[img]).label;
            accumulate(member_counts[mi], test.labels[img], predictions[mi]);
        }
        accumulate(ensemble_counts, test.labels[img], vote(predictions, tie));
    }

    EvalReport report = finalize_report(ensemble_counts);
    report.tie_draws = tie.draws();
    for (std::size_t mi = 0; mi < ensemble.members.size(); ++mi) {
        const auto& counts = member_counts[mi];
        report.per_model_ccr[ensemble.members[mi].scale.tag()] =
            static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
    }
    return report;
}

std::map<int, double> ensemble_size_sweep(std::span<const RankedModel> ranked,
                                          const FeatureStore& test, std::uint64_t tie_seed) {
    if (ranked.empty()) throw ValidationError("ensemble_size_sweep requires a ranking");
    std::map<int, double> sweep;
    for (std::size_t size = 1; size <= ranked.size(); ++size) {
        Ensemble ensemble;
        ensemble.tie_seed = tie_seed;
        for (std::size_t i = 0; i < size; ++i) ensemble.members.push_back(ranked[i].model);
        sweep[static_cast<int>(size)] = evaluate(ensemble, test).ccr;
    }
    return sweep;
}

namespace {

struct BonafideSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Seeded bona fide split. With subject tags, whole subjects are dealt to the
// test pool first and then to the training pool, so the two sides can never
// share a subject; without tags, a plain shuffled split is used.
BonafideSplit split_bonafide(const FeatureStore& data, const std::vector<std::size_t>& pool,
                             std::size_t want_train, std::size_t want_test, std::uint64_t seed,
                             const std::string& group) {
    const bool has_subjects =
        !data.subjects.empty() &&
        std::any_of(pool.begin(), pool.end(), [&](std::size_t i) { return !data.subjects[i].empty(); });

    BonafideSplit split;
    Rng rng(seed);
    if (!has_subjects) {
        auto shuffled = pool;
        rng.shuffle(shuffled);
        if (shuffled.size() < want_train + want_test)
            throw ValidationError("bona fide pool too small for group " + group + ": need " +
                                  std::to_string(want_train + want_test) + ", have " +
                                  std::to_string(shuffled.size()));
        split.test.assign(shuffled.begin(), shuffled.begin() + want_test);
        split.train.assign(shuffled.begin() + want_test, shuffled.begin() + want_test + want_train);
        return split;
    }

    std::vector<std::string> subjects;
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (const std::size_t i : pool) {
        auto& images = by_subject[data.subjects[i]];
        if (images.empty()) subjects.push_back(data.subjects[i]);
        images.push_back(i);
    }
    std::sort(subjects.begin(), subjects.end());
    rng.shuffle(subjects);

    for (const auto& subject : subjects) {
        auto& target = split.test.size() < want_test ? split.test : split.train;
        if (split.test.size() >= want_test && split.train.size() >= want_train) break;
        for (const std::size_t i : by_subject[subject]) target.push_back(i);
    }
    if (split.test.size() < want_test || split.train.size() < want_train)
        throw ValidationError("bona fide pool too small for a subject-disjoint split (group " +
                              group + ")");
    split.test.resize(want_test);
    split.train.resize(want_train);
    return split;
}

} // namespace

LogoOutcome leave_one_group_out(const FeatureStore& data, const LogoOptions& opts) {
    if (data.size() == 0) throw ValidationError("empty dataset");
    if (data.features_by_scale.empty()) throw ValidationError("dataset has no features");

    std::vector<std::size_t> bonafide_pool;
    std::map<std::string, std::vector<std::size_t>> attacks_by_group;
    std::vector<std::string> groups;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] == kBonafideLabel) {
            bonafide_pool.push_back(i);
            continue;
        }
        const std::string& group = data.groups.empty() ? std::string() : data.groups[i];
        if (group.empty())
            throw ValidationError("attack image " + data.names[i] + " has no group tag");
        auto& members = attacks_by_group[group];
        if (members.empty()) groups.push_back(group);
        members.push_back(i);
    }
    if (groups.size() < 2)
        throw ValidationError("leave-one-group-out needs at least two attack groups");
    std::sort(groups.begin(), groups.end());

    LogoOutcome outcome;
    std::map<std::string, std::vector<double>> ccr_by_scale;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::string& held_out = groups[g];

        std::vector<std::size_t> attack_train, attack_test;
        for (const auto& [group, members] : attacks_by_group) {
            auto& target = group == held_out ? attack_test : attack_train;
            target.insert(target.end(), members.begin(), members.end());
        }

        const std::size_t want_train =
            opts.bonafide_train > 0 ? static_cast<std::size_t>(opts.bonafide_train)
                                    : attack_train.size();
        const std::size_t want_test =
            opts.bonafide_test > 0 ? static_cast<std::size_t>(opts.bonafide_test)
                                   : attack_test.size();
        const auto bonafide =
            split_bonafide(data, bonafide_pool, want_train, want_test, opts.split_seed + g, held_out);

        LogoPermutation perm;
        perm.held_out_group = held_out;
        perm.train_indices = attack_train;
        perm.train_indices.insert(perm.train_indices.end(), bonafide.train.begin(),
                                  bonafide.train.end());
        perm.test_indices = attack_test;
        perm.test_indices.insert(perm.test_indices.end(), bonafide.test.begin(),
                                 bonafide.test.end());

        std::vector<double> group_ccrs;
        for (const auto& [tag, rows] : data.features_by_scale) {
            if (rows.size() != data.size())
                throw ValidationError("feature rows for scale " + tag +
                                      " are not aligned with the store");
            TrainSet train;
            train.scale = ScaleId::parse_tag(tag);
            train.bits = data.bits;
            for (const std::size_t i : perm.train_indices) {
                train.features.push_back(rows[i]);
                train.labels.push_back(data.labels[i]);
            }

            const auto [model, report] =
                train_auto(train, opts.grid, opts.folds, opts.cv_seed, opts.smo, opts.threads);
            ++outcome.models_trained;

            std::int64_t correct = 0;
            for (const std::size_t i : perm.test_indices)
                if (predict(model, rows[i]).label == data.labels[i]) ++correct;
            const double ccr =
                static_cast<double>(correct) / static_cast<double>(perm.test_indices.size());
            perm.per_scale_ccr[tag] = ccr;
            ccr_by_scale[tag].push_back(ccr);
            group_ccrs.push_back(ccr);
        }
        outcome.group_stats[held_out] = boxplot_stats(group_ccrs);
        outcome.permutations.push_back(std::move(perm));
    }

    for (const auto& [tag, ccrs] : ccr_by_scale) outcome.scale_stats[tag] = boxplot_stats(ccrs);
    return outcome;
}

} // namespace irispad
