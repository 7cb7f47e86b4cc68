#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "irispad/errors.hpp"
#include "irispad/rng.hpp"
#include "irispad/svm.hpp"
#include "oracles.hpp"

using namespace irispad;

namespace {

TrainSet make_set(std::vector<std::vector<double>> x, std::vector<int> y) {
    TrainSet set;
    set.features = std::move(x);
    set.labels = std::move(y);
    set.scale = {3, Resolution::Full};
    set.bits = 8;
    return set;
}

// Random dataset of 2..6 distinct 2-D points with both labels present.
oracles::DualProblem random_problem(Rng& rng) {
    oracles::DualProblem p;
    const std::size_t m = 2 + rng.below(5);
    for (std::size_t i = 0; i < m; ++i)
        p.x.push_back({rng.uniform(), rng.uniform()});
    p.y.assign(m, 0);
    p.y[0] = +1;
    p.y[1] = -1;
    for (std::size_t i = 2; i < m; ++i) p.y[i] = rng.coin() ? +1 : -1;
    const double cs[] = {0.5, 1.0, 10.0};
    const double gs[] = {0.5, 2.0};
    p.c = cs[rng.below(3)];
    p.gamma = gs[rng.below(2)];
    return p;
}

double model_dual_objective(const SvmModel& model) {
    double linear = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < model.dual_coefs.size(); ++i) {
        linear += std::abs(model.dual_coefs[i]);
        for (std::size_t j = 0; j < model.dual_coefs.size(); ++j)
            quad += model.dual_coefs[i] * model.dual_coefs[j] *
                    rbf_kernel(model.support_vectors[i], model.support_vectors[j], model.gamma);
    }
    return linear - 0.5 * quad;
}

// Recover per-training-point alphas from the model by matching features
// (points are distinct in all tests that use this).
std::vector<double> alphas_of(const SvmModel& model, const TrainSet& data) {
    std::vector<double> alpha(data.features.size(), 0.0);
    for (std::size_t s = 0; s < model.support_vectors.size(); ++s) {
        bool found = false;
        for (std::size_t i = 0; i < data.features.size(); ++i) {
            if (data.features[i] == model.support_vectors[s]) {
                alpha[i] = std::abs(model.dual_coefs[s]);
                found = true;
                break;
            }
        }
        REQUIRE(found);
    }
    return alpha;
}

} // namespace

TEST_CASE("rbf_kernel closed forms") {
    const std::vector<double> x = {0.25, 0.5, 0.125};
    CHECK(rbf_kernel(x, x, 3.0) == 1.0);

    const std::vector<double> a = {0.0, 0.0};
    const std::vector<double> b = {1.0, 0.0}; // squared distance 1
    CHECK(rbf_kernel(a, b, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    double prev = 1.0;
    for (double gamma = 1.0; gamma <= 256.0; gamma *= 4.0) {
        const double v = rbf_kernel(a, b, gamma);
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 1e-9);

    CHECK_THROWS_AS(rbf_kernel(a, x, 1.0), ValidationError);
    CHECK_THROWS_AS(rbf_kernel(a, b, 0.0), ValidationError);
}

TEST_CASE("two opposite points solve to the analytic dual") {
    // With C large both points stay free; alpha1 = alpha2 = 1/(1 - K12),
    // the bias is 0 and the points sit exactly on their margins.
    const std::vector<double> x1 = {0.2, 0.3};
    const std::vector<double> x2 = {0.7, 0.6};
    const double gamma = 1.5;
    const TrainSet data = make_set({x1, x2}, {+1, -1});

    SmoOptions opts;
    opts.tol = 1e-9;
    const SvmModel model = train_smo(data, 1000.0, gamma, opts);
    REQUIRE(model.support_vectors.size() == 2);

    const double k12 = rbf_kernel(x1, x2, gamma);
    const double expected_alpha = 1.0 / (1.0 - k12);
    CHECK(std::abs(model.dual_coefs[0]) == doctest::Approx(expected_alpha).epsilon(1e-7));
    CHECK(std::abs(model.dual_coefs[1]) == doctest::Approx(expected_alpha).epsilon(1e-7));
    CHECK(std::abs(model.dual_coefs[0] + model.dual_coefs[1]) <= 1e-9);
    CHECK(model.bias == doctest::Approx(0.0).epsilon(1e-9));

    const auto p1 = predict(model, x1);
    const auto p2 = predict(model, x2);
    CHECK(p1.label == +1);
    CHECK(p2.label == -1);
    CHECK(p1.value >= 1.0 - 1e-6);
    CHECK(p2.value <= -1.0 + 1e-6);
}

TEST_CASE("RBF separates the XOR configuration") {
    const TrainSet data = make_set({{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {+1, +1, -1, -1});
    const SvmModel model = train_smo(data, 10.0, 1.0, {});
    for (std::size_t i = 0; i < data.features.size(); ++i)
        CHECK(predict(model, data.features[i]).label == data.labels[i]);

    oracles::DualProblem p;
    p.x = data.features;
    p.y = data.labels;
    p.c = 10.0;
    p.gamma = 1.0;
    SmoOptions tight;
    tight.tol = 1e-9;
    const SvmModel precise = train_smo(data, 10.0, 1.0, tight);
    const auto oracle = oracles::brute_force_dual(p);
    CHECK(model_dual_objective(precise) == doctest::Approx(oracle.objective).epsilon(1e-9));
}

TEST_CASE("train_smo validates its inputs") {
    CHECK_THROWS_AS(train_smo(make_set({{0, 0}, {1, 1}}, {+1, +1}), 1.0, 1.0, {}),
                    ValidationError);
    CHECK_THROWS_AS(train_smo(make_set({}, {}), 1.0, 1.0, {}), ValidationError);
    CHECK_THROWS_AS(train_smo(make_set({{0, 0}, {1}}, {+1, -1}), 1.0, 1.0, {}), ValidationError);
    CHECK_THROWS_AS(train_smo(make_set({{0, 0}, {1, 1}}, {+1, -1}), -1.0, 1.0, {}),
                    ValidationError);
    CHECK_THROWS_AS(train_smo(make_set({{0, 0}, {1, 1}}, {+1, 2}), 1.0, 1.0, {}), ValidationError);
}

TEST_CASE("iteration budget exhaustion raises a training error with diagnostics") {
    Rng rng(3);
    oracles::DualProblem p = random_problem(rng);
    while (p.x.size() < 6) p = random_problem(rng);
    SmoOptions opts;
    opts.max_iter = 1;
    try {
        train_smo(make_set(p.x, p.y), 10.0, 0.5, opts);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        const std::string what = e.what();
        CHECK(what.find("pair updates") != std::string::npos);
        CHECK(what.find("gap") != std::string::npos);
    }
}

TEST_CASE("SMO matches brute-force dual maximization on small datasets") {
    Rng rng(1234);
    SmoOptions tight;
    tight.tol = 1e-9;

    std::vector<std::vector<double>> probes;
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 4; ++b) probes.push_back({a / 4.0, b / 4.0});

    for (int trial = 0; trial < 50; ++trial) {
        const oracles::DualProblem p = random_problem(rng);
        const SvmModel model = train_smo(make_set(p.x, p.y), p.c, p.gamma, tight);
        const auto oracle = oracles::brute_force_dual(p);

        REQUIRE(std::abs(model_dual_objective(model) - oracle.objective) <= 1e-6);
        for (const auto& probe : probes) {
            const double f_oracle = oracles::oracle_decision(p, oracle, probe);
            const int oracle_label = f_oracle > 0.0 ? +1 : -1;
            REQUIRE(predict(model, probe).label == oracle_label);
        }
    }
}

TEST_CASE("trained models satisfy dual feasibility and KKT conditions") {
    Rng rng(777);
    const double tol = 1e-3;
    for (int trial = 0; trial < 40; ++trial) {
        const oracles::DualProblem p = random_problem(rng);
        const TrainSet data = make_set(p.x, p.y);
        const SvmModel model = train_smo(data, p.c, p.gamma, {});

        double dual_sum = 0.0;
        for (const double d : model.dual_coefs) {
            REQUIRE(std::abs(d) <= p.c + 1e-9);
            dual_sum += d;
        }
        REQUIRE(std::abs(dual_sum) <= 1e-6);

        const auto alpha = alphas_of(model, data);
        for (std::size_t i = 0; i < data.features.size(); ++i) {
            const double margin = data.labels[i] * predict(model, data.features[i]).value;
            if (alpha[i] <= 1e-8) {
                REQUIRE(margin >= 1.0 - tol);
            } else if (alpha[i] >= p.c - 1e-8) {
                REQUIRE(margin <= 1.0 + tol);
            } else {
                REQUIRE(std::abs(margin - 1.0) <= tol);
            }
        }
    }
}

TEST_CASE("flipping labels negates duals, bias and decision values") {
    Rng rng(4242);
    for (int trial = 0; trial < 10; ++trial) {
        const oracles::DualProblem p = random_problem(rng);
        const TrainSet data = make_set(p.x, p.y);
        TrainSet flipped = data;
        for (int& y : flipped.labels) y = -y;

        const SvmModel a = train_smo(data, p.c, p.gamma, {});
        const SvmModel b = train_smo(flipped, p.c, p.gamma, {});

        REQUIRE(a.dual_coefs.size() == b.dual_coefs.size());
        CHECK(a.bias == -b.bias);
        for (std::size_t i = 0; i < a.dual_coefs.size(); ++i) {
            CHECK(a.dual_coefs[i] == -b.dual_coefs[i]);
            CHECK(a.support_vectors[i] == b.support_vectors[i]);
        }
        for (int k = 0; k < 5; ++k) {
            const std::vector<double> probe = {rng.uniform(), rng.uniform()};
            CHECK(predict(a, probe).value == -predict(b, probe).value);
        }
    }
}

TEST_CASE("stratified folds partition evenly with both classes everywhere") {
    std::vector<int> labels(40, kBonafideLabel);
    for (int i = 0; i < 25; ++i) labels[i] = kAttackLabel;

    const auto folds = stratified_folds(labels, 10, 5);
    REQUIRE(folds.size() == labels.size());

    std::vector<int> size(10, 0), pos(10, 0), neg(10, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        REQUIRE(folds[i] >= 0);
        REQUIRE(folds[i] < 10);
        ++size[folds[i]];
        ++(labels[i] == kAttackLabel ? pos : neg)[folds[i]];
    }
    const auto [min_it, max_it] = std::minmax_element(size.begin(), size.end());
    CHECK(*max_it - *min_it <= 1);
    for (int f = 0; f < 10; ++f) {
        CHECK(pos[f] > 0);
        CHECK(neg[f] > 0);
    }

    CHECK(folds == stratified_folds(labels, 10, 5));
    CHECK(folds != stratified_folds(labels, 10, 6));
    CHECK_THROWS_AS(stratified_folds(std::vector<int>(12, kAttackLabel), 10, 1), ValidationError);
}

namespace {

TrainSet blob_set(int per_class, double spread, std::uint64_t seed) {
    Rng rng(seed);
    TrainSet data;
    data.scale = {3, Resolution::Full};
    data.bits = 8;
    for (int i = 0; i < per_class; ++i) {
        data.features.push_back({0.3 + spread * (rng.uniform() - 0.5),
                                 0.3 + spread * (rng.uniform() - 0.5)});
        data.labels.push_back(kAttackLabel);
        data.features.push_back({0.7 + spread * (rng.uniform() - 0.5),
                                 0.7 + spread * (rng.uniform() - 0.5)});
        data.labels.push_back(kBonafideLabel);
    }
    return data;
}

} // namespace

TEST_CASE("a single grid cell degenerates to plain training") {
    const TrainSet data = blob_set(10, 0.6, 99);
    ParamGrid grid;
    grid.c_values = {4.0};
    grid.gamma_values = {2.0};

    const auto [model, report] = train_auto(data, grid, 5, 7, {});
    CHECK(report.cells.size() == 1);
    CHECK(report.best_index == 0);

    const SvmModel direct = train_smo(data, 4.0, 2.0, {});
    CHECK(save_model(model) == save_model(direct));
}

TEST_CASE("train_auto selection matches exhaustive independent re-evaluation") {
    const TrainSet data = blob_set(20, 0.9, 512); // overlapping blobs, 40 points
    ParamGrid grid;
    grid.c_values = {0.125, 2.0, 32.0};
    grid.gamma_values = {0.25, 4.0, 64.0};
    const int k = 10;
    const std::uint64_t seed = 21;

    const auto [model, report] = train_auto(data, grid, k, seed, {});

    // Independent pass: score every cell from scratch through the public API.
    const auto fold_of = stratified_folds(data.labels, k, seed);
    double best_ccr = -1.0;
    double best_c = 0.0, best_gamma = 0.0;
    for (const double c : grid.c_values) {
        for (const double gamma : grid.gamma_values) {
            double sum = 0.0;
            for (int f = 0; f < k; ++f) {
                TrainSet train;
                train.scale = data.scale;
                train.bits = data.bits;
                std::vector<std::size_t> val;
                for (std::size_t i = 0; i < data.features.size(); ++i) {
                    if (fold_of[i] == f) {
                        val.push_back(i);
                    } else {
                        train.features.push_back(data.features[i]);
                        train.labels.push_back(data.labels[i]);
                    }
                }
                const SvmModel fold_model = train_smo(train, c, gamma, {});
                std::int64_t correct = 0;
                for (const std::size_t i : val)
                    if (predict(fold_model, data.features[i]).label == data.labels[i]) ++correct;
                sum += static_cast<double>(correct) / static_cast<double>(val.size());
            }
            const double mean = sum / k;
            if (mean > best_ccr) {
                best_ccr = mean;
                best_c = c;
                best_gamma = gamma;
            }
        }
    }

    const auto& chosen = report.cells[report.best_index];
    CHECK(chosen.c == best_c);
    CHECK(chosen.gamma == best_gamma);
    CHECK(chosen.mean_ccr == best_ccr);
    CHECK(model.c == best_c);
    CHECK(model.gamma == best_gamma);

    // reruns are byte-identical
    const auto [model2, report2] = train_auto(data, grid, k, seed, {});
    CHECK(save_model(model) == save_model(model2));
    REQUIRE(report2.cells.size() == report.cells.size());
    for (std::size_t i = 0; i < report.cells.size(); ++i)
        CHECK(report.cells[i].mean_ccr == report2.cells[i].mean_ccr);
}

TEST_CASE("grid ties resolve to the smallest C then smallest gamma") {
    const TrainSet data = blob_set(10, 0.1, 33); // far apart: every cell is perfect
    ParamGrid grid;
    grid.c_values = {8.0, 0.5, 2.0}; // unsorted on purpose
    grid.gamma_values = {16.0, 1.0};

    const auto [model, report] = train_auto(data, grid, 5, 3, {});
    const auto& chosen = report.cells[report.best_index];
    CHECK(chosen.mean_ccr == 1.0);
    CHECK(chosen.c == 0.5);
    CHECK(chosen.gamma == 1.0);
}

TEST_CASE("train_auto validates folds and grid") {
    const TrainSet data = blob_set(4, 0.5, 1);
    CHECK_THROWS_AS(train_auto(data, ParamGrid{{}, {1.0}}, 2, 1, {}), ValidationError);
    CHECK_THROWS_AS(train_auto(data, ParamGrid{{1.0}, {1.0}}, 5, 1, {}), ValidationError);
}

TEST_CASE("predict closed forms and independent expansion") {
    SvmModel model;
    model.scale = {3, Resolution::Full};
    model.bits = 8;
    model.dim = 2;
    model.gamma = 2.0;
    model.c = 1.0;
    model.bias = 0.0;
    model.dual_coefs = {1.0};
    model.support_vectors = {{0.5, 0.5}};

    const auto at_sv = predict(model, model.support_vectors[0]);
    CHECK(at_sv.value == 1.0);
    CHECK(at_sv.label == +1);

    model.bias = -1.0; // forces f = 0 exactly at the support vector
    CHECK(predict(model, model.support_vectors[0]).value == 0.0);
    CHECK(predict(model, model.support_vectors[0]).label == -1);

    CHECK_THROWS_AS(predict(model, std::vector<double>{1.0, 2.0, 3.0}), ValidationError);

    Rng rng(9);
    SvmModel fuzz;
    fuzz.scale = {5, Resolution::Half};
    fuzz.bits = 8;
    fuzz.dim = 3;
    fuzz.gamma = 0.7;
    fuzz.c = 4.0;
    fuzz.bias = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < 6; ++i) {
        fuzz.dual_coefs.push_back(rng.uniform(-2.0, 2.0));
        fuzz.support_vectors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> x = {rng.uniform(), rng.uniform(), rng.uniform()};
        double expected = fuzz.bias;
        for (int i = 0; i < 6; ++i) {
            double d = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double diff = fuzz.support_vectors[i][k] - x[k];
                d += diff * diff;
            }
            expected += fuzz.dual_coefs[i] * std::exp(-0.7 * d);
        }
        CHECK(predict(fuzz, x).value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("model serialization round trips byte-exactly") {
    const TrainSet data = blob_set(8, 0.8, 77);
    const SvmModel model = train_smo(data, 3.0, 1.5, {});

    const std::string bytes = save_model(model);
    const SvmModel loaded = load_model(bytes);
    CHECK(save_model(loaded) == bytes);
    CHECK(loaded.scale == model.scale);
    CHECK(loaded.gamma == model.gamma);
    CHECK(loaded.c == model.c);
    CHECK(loaded.bias == model.bias);
    CHECK(loaded.dual_coefs == model.dual_coefs);
    CHECK(loaded.support_vectors == model.support_vectors);

    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> x = {rng.uniform(), rng.uniform()};
        CHECK(predict(model, x).value == predict(loaded, x).value);
    }
}

TEST_CASE("model deserialization rejects damage") {
    const SvmModel model = train_smo(blob_set(4, 0.8, 3), 2.0, 1.0, {});
    const std::string bytes = save_model(model);

    CHECK_THROWS_AS(load_model(bytes.substr(0, bytes.size() / 2)), FormatError);
    CHECK_THROWS_AS(load_model(bytes.substr(0, bytes.size() - 2)), FormatError);
    CHECK_THROWS_AS(load_model("irispad-svm-model 1\n"), FormatError);
    CHECK_THROWS_AS(load_model(""), FormatError);

    std::string tampered = bytes;
    const auto pos = tampered.find("gamma ");
    tampered[pos + 6] = '9';
    CHECK_THROWS_AS(load_model(tampered), FormatError);

    std::string wrong_version = bytes;
    wrong_version[std::string("irispad-svm-model ").size()] = '7';
    CHECK_THROWS_AS(load_model(wrong_version), FormatError);
}

TEST_CASE("model files round trip through disk") {
    const auto dir = std::filesystem::temp_directory_path() / "irispad_test_svm";
    std::filesystem::create_directories(dir);
    const SvmModel model = train_smo(blob_set(6, 0.7, 8), 2.0, 0.5, {});
    const auto path = dir / "model.txt";
    write_model_file(model, path);
    const SvmModel loaded = read_model_file(path);
    CHECK(save_model(loaded) == save_model(model));
}
