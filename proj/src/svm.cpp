#include "irispad/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "irispad/errors.hpp"
#include "irispad/rng.hpp"
#include "parallel.hpp"
#include "textio.hpp"

namespace irispad {

namespace {

constexpr std::string_view kModelMagic = "irispad-svm-model";
constexpr int kModelVersion = 1;

// Eight independent accumulator lanes so the reduction vectorizes without
// reassociation; the lane layout is fixed, so every call site sums in the
// same order and kernel values are identical across all code paths.
double squared_distance(std::span<const double> x, std::span<const double> z) {
    double acc[8] = {};
    std::size_t k = 0;
    for (; k + 8 <= x.size(); k += 8) {
        for (int lane = 0; lane < 8; ++lane) {
            const double diff = x[k + lane] - z[k + lane];
            acc[lane] += diff * diff;
        }
    }
    for (; k < x.size(); ++k) {
        const double diff = x[k] - z[k];
        acc[k % 8] += diff * diff;
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void validate_train_set(const TrainSet& data) {
    if (data.features.empty()) throw ValidationError("empty training set");
    if (data.features.size() != data.labels.size())
        throw ValidationError("feature/label count mismatch");
    const std::size_t dim = data.features.front().size();
    if (dim == 0) throw ValidationError("zero-dimensional features");
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.features[i].size() != dim)
            throw ValidationError("inconsistent feature dimensions in training set");
        if (data.labels[i] == kAttackLabel)
            has_pos = true;
        else if (data.labels[i] == kBonafideLabel)
            has_neg = true;
        else
            throw ValidationError("labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw ValidationError("training data contains a single class");
}

// Full kernel matrix; training sets here are at most a few thousand points.
std::vector<double> kernel_matrix(const std::vector<std::vector<double>>& x, double gamma) {
    const std::size_t m = x.size();
    if (m > 12000) throw TrainingError("training set too large for the dense kernel matrix");
    std::vector<double> k(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        k[i * m + i] = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            const double v = std::exp(-gamma * squared_distance(x[i], x[j]));
            k[i * m + j] = v;
            k[j * m + i] = v;
        }
    }
    return k;
}

struct SmoSolution {
    std::vector<double> alpha;
    double bias = 0.0;
    std::int64_t iterations = 0;
};

// Sequential minimal optimization with maximal-violating-pair selection.
// r_t = y_t - f0_t is the bias that would put point t exactly on the margin;
// optimality is reached when max over the "up" set minus min over the "low"
// set is within tol, and the midpoint of that interval is the bias.
SmoSolution solve_smo(const std::vector<double>& kernel, std::span<const int> y, double c,
                      const SmoOptions& opts) {
    const int m = static_cast<int>(y.size());
    SmoSolution sol;
    sol.alpha.assign(m, 0.0);
    std::vector<double> f0(m, 0.0); // sum_j alpha_j y_j K(t, j)

    double gap_up = 0.0, gap_low = 0.0;
    while (true) {
        int i = -1, j = -1;
        double m_up = -std::numeric_limits<double>::infinity();
        double m_low = std::numeric_limits<double>::infinity();
        for (int t = 0; t < m; ++t) {
            const double r = static_cast<double>(y[t]) - f0[t];
            const bool positive = y[t] > 0;
            const double a = sol.alpha[t];
            if ((positive && a < c) || (!positive && a > 0.0)) {
                if (r > m_up) { m_up = r; i = t; }
            }
            if ((positive && a > 0.0) || (!positive && a < c)) {
                if (r < m_low) { m_low = r; j = t; }
            }
        }
        gap_up = m_up;
        gap_low = m_low;
        if (i < 0 || j < 0 || m_up - m_low <= opts.tol) break;
        if (sol.iterations >= opts.max_iter)
            throw TrainingError("SMO did not converge within " + std::to_string(opts.max_iter) +
                                " pair updates (KKT gap " +
                                textio::format_double(m_up - m_low, 6) + ", tol " +
                                textio::format_double(opts.tol, 6) + ")");

        const double* row_i = kernel.data() + static_cast<std::size_t>(i) * m;
        const double* row_j = kernel.data() + static_cast<std::size_t>(j) * m;
        const double eta = row_i[i] + row_j[j] - 2.0 * row_i[j];

        // Largest feasible step along the pair direction.
        const double cap_i = y[i] > 0 ? c - sol.alpha[i] : sol.alpha[i];
        const double cap_j = y[j] > 0 ? sol.alpha[j] : c - sol.alpha[j];
        double delta = eta > 1e-12 ? (m_up - m_low) / eta
                                   : std::numeric_limits<double>::infinity();
        delta = std::min(delta, std::min(cap_i, cap_j));

        // Land exactly on the bound when the step is capped, so bound/free
        // membership stays an exact comparison.
        if (delta == cap_i)
            sol.alpha[i] = y[i] > 0 ? c : 0.0;
        else
            sol.alpha[i] += y[i] > 0 ? delta : -delta;
        if (delta == cap_j)
            sol.alpha[j] = y[j] > 0 ? 0.0 : c;
        else
            sol.alpha[j] -= y[j] > 0 ? delta : -delta;

        for (int t = 0; t < m; ++t) f0[t] += delta * (row_i[t] - row_j[t]);
        ++sol.iterations;
    }

    sol.bias = (gap_up + gap_low) / 2.0;
    return sol;
}

} // namespace

double rbf_kernel(std::span<const double> x, std::span<const double> z, double gamma) {
    if (x.size() != z.size())
        throw ValidationError("rbf_kernel dimension mismatch: " + std::to_string(x.size()) +
                              " vs " + std::to_string(z.size()));
    if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
    return std::exp(-gamma * squared_distance(x, z));
}

SvmModel train_smo(const TrainSet& data, double c, double gamma, const SmoOptions& opts) {
    validate_train_set(data);
    if (!(c > 0.0)) throw ValidationError("C must be positive");
    if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
    if (!(opts.tol > 0.0)) throw ValidationError("tolerance must be positive");

    const auto kernel = kernel_matrix(data.features, gamma);
    const auto sol = solve_smo(kernel, data.labels, c, opts);

    SvmModel model;
    model.scale = data.scale;
    model.bits = data.bits;
    model.dim = static_cast<int>(data.features.front().size());
    model.gamma = gamma;
    model.c = c;
    model.bias = sol.bias;
    for (std::size_t t = 0; t < sol.alpha.size(); ++t) {
        if (sol.alpha[t] > opts.sv_threshold) {
            model.dual_coefs.push_back(sol.alpha[t] * data.labels[t]);
            model.support_vectors.push_back(data.features[t]);
        }
    }
    if (model.support_vectors.empty())
        throw TrainingError("training produced no support vectors");
    return model;
}

ParamGrid ParamGrid::default_grid() {
    ParamGrid grid;
    for (int e = -5; e <= 15; e += 2) grid.c_values.push_back(std::ldexp(1.0, e));
    for (int e = -15; e <= 3; e += 2) grid.gamma_values.push_back(std::ldexp(1.0, e));
    return grid;
}

std::vector<int> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("fold count must be at least 2");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == kAttackLabel ? pos : neg).push_back(i);
    if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k))
        throw ValidationError("stratified " + std::to_string(k) +
                              "-fold split impossible: class counts " + std::to_string(pos.size()) +
                              "/" + std::to_string(neg.size()));

    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);

    // Deal round-robin, continuing the cycle across classes: fold sizes then
    // differ by at most one overall and per class.
    std::vector<int> fold(labels.size(), 0);
    int counter = 0;
    for (const std::size_t idx : pos) fold[idx] = counter++ % k;
    for (const std::size_t idx : neg) fold[idx] = counter++ % k;
    return fold;
}

std::pair<SvmModel, TuningReport> train_auto(const TrainSet& data, const ParamGrid& grid, int k,
                                             std::uint64_t seed, const SmoOptions& opts,
                                             unsigned threads) {
    validate_train_set(data);
    if (grid.c_values.empty() || grid.gamma_values.empty())
        throw ValidationError("empty parameter grid");
    if (data.features.size() < static_cast<std::size_t>(k))
        throw ValidationError("fewer samples than folds");

    auto c_values = grid.c_values;
    auto gamma_values = grid.gamma_values;
    std::sort(c_values.begin(), c_values.end());
    std::sort(gamma_values.begin(), gamma_values.end());

    const auto fold_of = stratified_folds(data.labels, k, seed);

    // Shared per-fold training sets and held-out indices.
    std::vector<TrainSet> fold_train(k);
    std::vector<std::vector<std::size_t>> fold_val(k);
    for (int f = 0; f < k; ++f) {
        fold_train[f].scale = data.scale;
        fold_train[f].bits = data.bits;
    }
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        for (int f = 0; f < k; ++f) {
            if (fold_of[i] == f) {
                fold_val[f].push_back(i);
            } else {
                fold_train[f].features.push_back(data.features[i]);
                fold_train[f].labels.push_back(data.labels[i]);
            }
        }
    }

    TuningReport report;
    report.folds = k;
    report.seed = seed;
    report.cells.resize(c_values.size() * gamma_values.size());

    // Cells are scored independently and written to their own slots, so the
    // parallel schedule cannot affect the outcome.
    parallel_for(report.cells.size(), threads, [&](std::size_t cell) {
        const double c = c_values[cell / gamma_values.size()];
        const double gamma = gamma_values[cell % gamma_values.size()];

        TuningCell result;
        result.c = c;
        result.gamma = gamma;
        double sum = 0.0;
        for (int f = 0; f < k; ++f) {
            const SvmModel model = train_smo(fold_train[f], c, gamma, opts);
            std::int64_t correct = 0;
            for (const std::size_t idx : fold_val[f])
                if (predict(model, data.features[idx]).label == data.labels[idx]) ++correct;
            const double ccr = static_cast<double>(correct) / fold_val[f].size();
            result.fold_ccr.push_back(ccr);
            sum += ccr;
        }
        result.mean_ccr = sum / k;
        report.cells[cell] = std::move(result);
    });

    // Highest mean CCR wins; cells are ordered by (C, gamma) ascending so the
    // first strict maximum realizes the smaller-C-then-smaller-gamma tie-break.
    std::size_t best = 0;
    for (std::size_t cell = 1; cell < report.cells.size(); ++cell)
        if (report.cells[cell].mean_ccr > report.cells[best].mean_ccr) best = cell;
    report.best_index = best;

    SvmModel model = train_smo(data, report.cells[best].c, report.cells[best].gamma, opts);
    return {std::move(model), std::move(report)};
}

Prediction predict(const SvmModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim)
        throw ValidationError("prediction dimension " + std::to_string(x.size()) +
                              " does not match model dimension " + std::to_string(model.dim));
    double f = 0.0;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
        f += model.dual_coefs[i] * rbf_kernel(model.support_vectors[i], x, model.gamma);
    f += model.bias;
    return {f > 0.0 ? kAttackLabel : kBonafideLabel, f};
}

std::string save_model(const SvmModel& model) {
    std::ostringstream out;
    out << kModelMagic << " " << kModelVersion << "\n";
    out << "labels +1=attack -1=bonafide\n";
    out << "scale " << model.scale.tag() << "\n";
    out << "bits " << model.bits << "\n";
    out << "dim " << model.dim << "\n";
    out << "gamma " << textio::format_double(model.gamma) << "\n";
    out << "c " << textio::format_double(model.c) << "\n";
    out << "sv_count " << model.support_vectors.size() << "\n";
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
        out << "sv " << textio::format_double(model.dual_coefs[i]);
        for (const double v : model.support_vectors[i]) out << " " << textio::format_double(v);
        out << "\n";
    }
    out << "bias " << textio::format_double(model.bias) << "\n";
    std::string body = out.str();
    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "checksum %016llx\n",
                  static_cast<unsigned long long>(textio::fnv1a64(body)));
    body += checksum;
    return body;
}

namespace {

std::string expect_field(std::istringstream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("truncated model file (missing " + name + ")");
    if (line.rfind(name + " ", 0) != 0)
        throw FormatError("expected model field '" + name + "', got '" + line + "'");
    return line.substr(name.size() + 1);
}

} // namespace

SvmModel load_model(std::string_view bytes) {
    const auto checksum_pos = bytes.rfind("checksum ");
    if (checksum_pos == std::string_view::npos || checksum_pos == 0)
        throw FormatError("model file has no checksum");
    const std::string_view body = bytes.substr(0, checksum_pos);
    const std::string_view checksum_line = bytes.substr(checksum_pos);

    char expected[32];
    std::snprintf(expected, sizeof(expected), "checksum %016llx\n",
                  static_cast<unsigned long long>(textio::fnv1a64(body)));
    if (checksum_line != expected) throw FormatError("model file checksum mismatch");

    std::istringstream in{std::string(body)};
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kModelMagic) throw FormatError("not a model file");
    if (version != kModelVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');

    std::string line;
    if (!std::getline(in, line) || line.rfind("labels ", 0) != 0)
        throw FormatError("model file missing label map");

    SvmModel model;
    model.scale = ScaleId::parse_tag(expect_field(in, "scale"));
    model.bits = static_cast<int>(textio::parse_int(expect_field(in, "bits"), "bits"));
    model.dim = static_cast<int>(textio::parse_int(expect_field(in, "dim"), "dim"));
    model.gamma = textio::parse_double(expect_field(in, "gamma"), "gamma");
    model.c = textio::parse_double(expect_field(in, "c"), "c");
    if (model.dim < 1 || !(model.gamma > 0.0) || !(model.c > 0.0))
        throw FormatError("model file has out-of-range dim, gamma or c");
    const auto sv_count = textio::parse_int(expect_field(in, "sv_count"), "sv_count");
    if (sv_count < 1) throw FormatError("model must have at least one support vector");

    for (std::int64_t i = 0; i < sv_count; ++i) {
        const std::string values = expect_field(in, "sv");
        std::istringstream row(values);
        double dual = 0.0;
        if (!(row >> dual)) throw FormatError("malformed support vector line");
        std::vector<double> sv;
        sv.reserve(static_cast<std::size_t>(model.dim));
        double v = 0.0;
        while (row >> v) sv.push_back(v);
        if (static_cast<int>(sv.size()) != model.dim)
            throw FormatError("support vector has " + std::to_string(sv.size()) +
                              " values, expected " + std::to_string(model.dim));
        model.dual_coefs.push_back(dual);
        model.support_vectors.push_back(std::move(sv));
    }
    model.bias = textio::parse_double(expect_field(in, "bias"), "bias");
    return model;
}

void write_model_file(const SvmModel& model, const std::filesystem::path& path) {
    textio::atomic_write_file(path, save_model(model));
}

SvmModel read_model_file(const std::filesystem::path& path) {
    return load_model(textio::read_file(path));
}

} // namespace irispad
