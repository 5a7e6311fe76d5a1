#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hawkesdx/classifier.hpp"
#include "oracles.hpp"

using namespace hawkesdx;

namespace {

constexpr Label D = Label::Depressed;
constexpr Label H = Label::Healthy;

std::vector<FeatureVector> labeled(const std::vector<std::vector<double>>& x, const std::vector<Label>& y) {
    std::vector<FeatureVector> out;
    for (std::size_t n = 0; n < x.size(); ++n)
        out.push_back({"u" + std::to_string(n), FeatureKind::phi, x[n], y[n]});
    return out;
}

} // namespace

TEST(Svm, OneDimensionalAnalytic) {
    const auto svm = train_svm(labeled({{-2.0}, {2.0}}, {H, D}), 10.0);
    EXPECT_NEAR(svm.weights[0], 0.5, 1e-9);
    EXPECT_NEAR(svm.bias, 0.0, 1e-9);
    Matrix X{{-2.0}, {2.0}};
    const std::vector<int> y = {-1, 1};
    EXPECT_NEAR(svm_objective(X, y, 10.0, svm.weights, svm.bias), 0.125, 1e-9);
}

TEST(Svm, DuplicatedDataWithHalvedC) {
    const std::vector<std::vector<double>> x = {{0.0, 1.0}, {1.0, 2.0}, {2.0, 0.5}, {3.0, 3.0}, {1.5, 1.4}};
    const std::vector<Label> y = {H, H, D, D, D};
    auto x2 = x;
    x2.insert(x2.end(), x.begin(), x.end());
    auto y2 = y;
    y2.insert(y2.end(), y.begin(), y.end());
    const auto a = train_svm(labeled(x, y), 2.0);
    const auto b = train_svm(labeled(x2, y2), 1.0);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a.weights[c], b.weights[c], 1e-6);
    EXPECT_NEAR(a.bias, b.bias, 1e-6);
}

TEST(Svm, SingleClassIsDegenerate) {
    EXPECT_THROW(train_svm(labeled({{1.0}, {2.0}}, {D, D}), 1.0), Error);
}

TEST(Svm, MatchesGridOracleOn2D) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<std::vector<double>> x;
        std::vector<Label> lab;
        std::vector<int> y;
        for (int n = 0; n < 16; ++n) {
            const bool pos = n % 2 == 0;
            x.push_back({g(rng) + (pos ? 0.8 : -0.8), g(rng) + (pos ? 0.3 : -0.3)});
            lab.push_back(pos ? D : H);
            y.push_back(pos ? 1 : -1);
        }
        const double C = trial % 2 ? 1.0 : 0.3;
        const auto svm = train_svm(labeled(x, lab), C);
        const double got = oracle::hinge_objective(x, y, C, svm.weights, svm.bias);
        const double best = oracle::svm_grid_minimum(x, y, C);
        EXPECT_LE(std::abs(got - best) / best, 1e-3) << got << " vs " << best;
        EXPECT_LE(got, best + 1e-9);
    }
}

TEST(Svm, NeverWorseThanOrigin) {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + trial * 3, p = 1 + trial % 5;
        Matrix X(n, p);
        for (auto& v : X.flat()) v = g(rng);
        std::vector<int> y(n);
        for (std::size_t k = 0; k < n; ++k) y[k] = k % 3 == 0 ? 1 : -1;
        const double C = 0.1 * (1 + trial);
        const auto svm = train_svm(X, y, C);
        EXPECT_LE(svm_objective(X, y, C, svm.weights, svm.bias), C * double(n) + 1e-9);
    }
}

TEST(Svm, TranslationInvariantOnStandardizedPath) {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<FeatureVector> data, shifted;
    for (int n = 0; n < 40; ++n) {
        const Label l = n % 2 ? D : H;
        std::vector<double> v = {g(rng) + (l == D), g(rng) - (l == D)};
        data.push_back({"u", FeatureKind::mu, v, l});
        shifted.push_back({"u", FeatureKind::mu, {v[0] + 7.5, v[1] - 3.25}, l});
    }
    const auto a = train_svm(standardize(data, {}).train, 1.0);
    const auto b = train_svm(standardize(shifted, {}).train, 1.0);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a.weights[c], b.weights[c], 1e-6);
}

TEST(Metrics, ConfusionHandExample) {
    // TP=8, FP=2, FN=2, TN=8
    std::vector<Label> pred, truth;
    std::vector<double> scores;
    auto add = [&](Label p, Label t, int count) {
        for (int k = 0; k < count; ++k) {
            pred.push_back(p);
            truth.push_back(t);
            scores.push_back(p == D ? 1.0 : -1.0);
        }
    };
    add(D, D, 8);
    add(D, H, 2);
    add(H, D, 2);
    add(H, H, 8);
    const auto m = metrics(pred, scores, truth);
    EXPECT_DOUBLE_EQ(m.depressed.precision, 0.8);
    EXPECT_DOUBLE_EQ(m.depressed.recall, 0.8);
    EXPECT_DOUBLE_EQ(m.depressed.f1, 0.8);
    EXPECT_DOUBLE_EQ(m.weighted_f1, 0.8);
    EXPECT_EQ(m.depressed.support, 10u);
}

TEST(Metrics, AucWorkedExample) {
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    const std::vector<Label> t = {H, H, D, D};
    EXPECT_EQ(oracle::brute_force_auc(s, t), 0.75);
    EXPECT_EQ(roc_auc(s, t), 0.75);
    EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.9, 1.0}, t), 1.0);
}

TEST(Metrics, AucEqualsPairCountingWithTies) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        std::vector<double> s(n);
        std::vector<Label> t(n);
        for (std::size_t k = 0; k < n; ++k) {
            s[k] = double(rng() % 20) / 4.0;  // heavy ties
            t[k] = rng() % 2 ? D : H;
        }
        t[0] = D;
        t[1] = H;
        EXPECT_EQ(roc_auc(s, t), oracle::brute_force_auc(s, t));
    }
}

TEST(Metrics, WeightedRecallIsAccuracyAndF1Between) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng() % 100;
        std::vector<Label> p(n), t(n);
        std::vector<double> s(n);
        std::size_t correct = 0;
        for (std::size_t k = 0; k < n; ++k) {
            p[k] = rng() % 2 ? D : H;
            t[k] = rng() % 3 ? D : H;
            s[k] = double(rng() % 1000);
            correct += p[k] == t[k];
        }
        const auto m = metrics(p, s, t);
        EXPECT_NEAR(m.weighted_recall, double(correct) / double(n), 1e-12);
        EXPECT_GE(m.weighted_f1, std::min(m.depressed.f1, m.healthy.f1) - 1e-12);
        EXPECT_LE(m.weighted_f1, std::max(m.depressed.f1, m.healthy.f1) + 1e-12);
        for (double v : m.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Metrics, ZeroOverZeroIsZeroAndLengthMismatch) {
    const std::vector<Label> all_h = {H, H};
    const auto m = metrics(all_h, std::vector<double>{0.0, 0.0}, std::vector<Label>{D, H});
    EXPECT_EQ(m.depressed.precision, 0.0);
    EXPECT_EQ(m.depressed.f1, 0.0);
    EXPECT_THROW(metrics(all_h, std::vector<double>{0.0}, std::vector<Label>{D, H}), Error);
}

TEST(Folds, StratificationWithinOne) {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + rng() % 481;
        std::vector<Label> labels(n);
        for (auto& l : labels) l = rng() % 2 ? D : H;
        const auto fold = stratified_folds(labels, 5, std::uint64_t(trial));
        const double pos = double(std::count(labels.begin(), labels.end(), D));
        const double neg = double(n) - pos;
        for (int f = 0; f < 5; ++f) {
            double fp = 0, fneg = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (fold[k] == f) (labels[k] == D ? fp : fneg) += 1;
            EXPECT_LE(std::abs(fp - pos / 5), 1.0);
            EXPECT_LE(std::abs(fneg - neg / 5), 1.0);
        }
    }
}

TEST(Folds, BalancedHundredHundred) {
    std::vector<Label> labels(200);
    for (std::size_t k = 0; k < 200; ++k) labels[k] = k < 100 ? D : H;
    const auto fold = stratified_folds(labels, 5, 1);
    for (int f = 0; f < 5; ++f) {
        int d = 0, h = 0;
        for (std::size_t k = 0; k < 200; ++k)
            if (fold[k] == f) (labels[k] == D ? d : h)++;
        EXPECT_NEAR(d, 20, 1);
        EXPECT_NEAR(h, 20, 1);
    }
}

TEST(CrossValidate, SeparableDataIsPerfect) {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<FeatureVector> data;
    for (int n = 0; n < 60; ++n) {
        const Label l = n % 2 ? D : H;
        data.push_back({"u", FeatureKind::phi, {(l == D ? 3.0 : -3.0) + g(rng), g(rng)}, l});
    }
    const auto r = cross_validate(data, 1.0);
    ASSERT_EQ(r.per_fold.size(), 5u);
    for (const auto& f : r.per_fold) EXPECT_EQ(f.weighted_f1, 1.0);
    EXPECT_EQ(r.auc(), 1.0);
}

TEST(CrossValidate, RandomLabelsGiveChanceAuc) {
    std::mt19937_64 rng(43);
    std::normal_distribution<double> g(0.0, 1.0);
    double total = 0.0;
    const int reps = 10;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<FeatureVector> data;
        for (int n = 0; n < 100; ++n) data.push_back({"u", FeatureKind::mu, {g(rng), g(rng), g(rng)}, n % 2 ? D : H});
        CvOptions opts;
        opts.seed = std::uint64_t(rep);
        total += cross_validate(data, 1.0, opts).auc();
    }
    EXPECT_NEAR(total / reps, 0.5, 0.15);
}

TEST(CrossValidate, TooFewPerClass) {
    std::vector<FeatureVector> data;
    for (int n = 0; n < 12; ++n) data.push_back({"u", FeatureKind::mu, {double(n)}, n < 3 ? D : H});
    EXPECT_THROW(cross_validate(data, 1.0), InsufficientData);
}

TEST(CrossValidate, SampleStdevAcrossFolds) {
    std::vector<Metrics> folds(3);
    folds[0].auc = 0.6;
    folds[1].auc = 0.8;
    folds[2].auc = 1.0;
    const auto r = summarize(folds);
    EXPECT_NEAR(r.auc(), 0.8, 1e-15);
    EXPECT_NEAR(r.stdev.back(), 0.2, 1e-15);
}
