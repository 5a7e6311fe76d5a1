#pragma once

// Linear soft-margin SVM, binary classification metrics and stratified
// k-fold cross-validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/features.hpp"
#include "hawkesdx/matrix.hpp"
#include "hawkesdx/random.hpp"

namespace hawkesdx {

// Depressed = +1, Healthy = -1.
inline int svm_sign(Label l) { return l == Label::Depressed ? 1 : -1; }

struct LinearSVM {
    std::vector<double> weights;
    double bias = 0.0;
    double C = 1.0;

    double score(std::span<const double> x) const { return dot(weights, x) + bias; }
    Label predict(std::span<const double> x) const { return score(x) >= 0.0 ? Label::Depressed : Label::Healthy; }
};

// (1/2)|w|^2 + C * sum max(0, 1 - y (w.x + b))
inline double svm_objective(const Matrix& X, std::span<const int> y, double C, std::span<const double> w, double b) {
    double hinge = 0.0;
    for (std::size_t n = 0; n < X.rows(); ++n) hinge += std::max(0.0, 1.0 - y[n] * (dot(w, X.row(n)) + b));
    return 0.5 * dot(w, w) + C * hinge;
}

struct SvmOptions {
    double tolerance = 1e-9;  // KKT violation gap
    std::size_t max_iterations = 10'000'000;
};

// Solves the dual with sequential minimal optimisation (second-order
// working-set selection) on the linear kernel; the bias is unregularized.
inline LinearSVM train_svm(const Matrix& X, std::span<const int> y, double C, const SvmOptions& opts = {}) {
    const std::size_t n = X.rows(), p = X.cols();
    if (y.size() != n) throw Error("train_svm: label count mismatch");
    if (!(C > 0.0) || !std::isfinite(C)) throw Error("train_svm: C must be positive");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw Error("train_svm: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw Error("degenerate training fold");

    Matrix Q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) Q(i, j) = Q(j, i) = y[i] * y[j] * dot(X.row(i), X.row(j));
    constexpr double kTau = 1e-12;
    std::vector<double> a(n, 0.0), G(n, -1.0);
    auto at_upper = [&](std::size_t t) { return a[t] >= C; };
    auto at_lower = [&](std::size_t t) { return a[t] <= 0.0; };

    for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] == 1 ? !at_upper(t) : !at_lower(t)) {
                const double v = -y[t] * G[t];
                if (v >= gmax) {
                    gmax = v;
                    i = t;
                }
            }
        }
        if (i == n) break;
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] == 1 ? at_lower(t) : at_upper(t)) continue;
            const double v = y[t] * G[t];
            gmax2 = std::max(gmax2, v);
            const double diff = gmax + v;
            if (diff > 0.0) {
                double quad = Q(i, i) + Q(t, t) - 2.0 * y[i] * y[t] * Q(i, t);
                if (quad <= 0.0) quad = kTau;
                const double obj = -diff * diff / quad;
                if (obj <= best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if (gmax + gmax2 < opts.tolerance || j == n) break;

        const double ai = a[i], aj = a[j];
        if (y[i] != y[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
            } else {
                if (a[i] < 0.0) { a[i] = 0.0; a[j] = -diff; }
            }
            if (diff > 0.0) {
                if (a[i] > C) { a[i] = C; a[j] = C - diff; }
            } else {
                if (a[j] > C) { a[j] = C; a[i] = C + diff; }
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > C) {
                if (a[i] > C) { a[i] = C; a[j] = sum - C; }
            } else {
                if (a[j] < 0.0) { a[j] = 0.0; a[i] = sum; }
            }
            if (sum > C) {
                if (a[j] > C) { a[j] = C; a[i] = sum - C; }
            } else {
                if (a[i] < 0.0) { a[i] = 0.0; a[j] = sum; }
            }
        }
        const double di = a[i] - ai, dj = a[j] - aj;
        for (std::size_t t = 0; t < n; ++t) G[t] += Q(i, t) * di + Q(j, t) * dj;
    }

    // Bias from free support vectors, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * G[t];
        if (at_upper(t)) {
            if (y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (at_lower(t)) {
            if (y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++free;
            sum_free += yg;
        }
    }
    const double rho = free > 0 ? sum_free / double(free) : 0.5 * (ub + lb);

    LinearSVM svm;
    svm.C = C;
    svm.bias = -rho;
    svm.weights.assign(p, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        if (a[t] == 0.0) continue;
        const auto x = X.row(t);
        for (std::size_t c = 0; c < p; ++c) svm.weights[c] += a[t] * y[t] * x[c];
    }
    return svm;
}

inline std::pair<Matrix, std::vector<int>> design_matrix(const std::vector<FeatureVector>& data) {
    const std::size_t p = data.empty() ? 0 : data.front().values.size();
    Matrix X(data.size(), p);
    std::vector<int> y(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        if (data[n].values.size() != p) throw Error("feature length mismatch");
        std::copy(data[n].values.begin(), data[n].values.end(), X.row(n).begin());
        y[n] = svm_sign(data[n].label);
    }
    return {std::move(X), std::move(y)};
}

inline LinearSVM train_svm(const std::vector<FeatureVector>& data, double C, const SvmOptions& opts = {}) {
    auto [X, y] = design_matrix(data);
    return train_svm(X, y, C, opts);
}

// ---------------------------------------------------------------------------
// Metrics

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct Metrics {
    ClassScores depressed;
    ClassScores healthy;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double auc = 0.0;

    static const std::vector<std::string>& names() {
        static const std::vector<std::string> n = {
            "depressed_precision", "depressed_recall", "depressed_f1", "healthy_precision", "healthy_recall",
            "healthy_f1",          "weighted_precision", "weighted_recall", "weighted_f1", "auc"};
        return n;
    }
    std::vector<double> values() const {
        return {depressed.precision, depressed.recall, depressed.f1, healthy.precision, healthy.recall,
                healthy.f1,          weighted_precision, weighted_recall, weighted_f1, auc};
    }
};

// Probability that a random positive outscores a random negative; ties get
// half credit. Mann-Whitney U with mid-ranks.
inline double roc_auc(std::span<const double> scores, std::span<const Label> truth) {
    if (scores.size() != truth.size()) throw Error("roc_auc: length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n;) {
        std::size_t e = k;
        while (e + 1 < n && scores[idx[e + 1]] == scores[idx[k]]) ++e;
        const double mid = 0.5 * double(k + e) + 1.0;  // 1-based mid-rank of the tie block
        for (std::size_t m = k; m <= e; ++m)
            if (truth[idx[m]] == Label::Depressed) {
                rank_sum += mid;
                ++pos;
            }
        k = e + 1;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return 0.0;
    const double u = rank_sum - double(pos) * double(pos + 1) / 2.0;
    return u / (double(pos) * double(neg));
}

inline Metrics metrics(std::span<const Label> predictions, std::span<const double> scores,
                       std::span<const Label> truth) {
    if (predictions.size() != truth.size() || scores.size() != truth.size())
        throw Error("metrics: length mismatch");
    if (truth.empty()) throw Error("metrics: empty input");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
        const bool pred = predictions[n] == Label::Depressed, real = truth[n] == Label::Depressed;
        if (pred && real) ++tp;
        else if (pred) ++fp;
        else if (real) ++fn;
        else ++tn;
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : double(a) / double(b); };
    auto scores_for = [&](std::size_t hit, std::size_t false_alarm, std::size_t miss) {
        ClassScores c;
        c.precision = ratio(hit, hit + false_alarm);
        c.recall = ratio(hit, hit + miss);
        c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
        c.support = hit + miss;
        return c;
    };
    Metrics m;
    m.depressed = scores_for(tp, fp, fn);
    m.healthy = scores_for(tn, fn, fp);
    const double total = double(truth.size());
    const double wd = double(m.depressed.support) / total, wh = double(m.healthy.support) / total;
    m.weighted_precision = wd * m.depressed.precision + wh * m.healthy.precision;
    m.weighted_recall = wd * m.depressed.recall + wh * m.healthy.recall;
    m.weighted_f1 = wd * m.depressed.f1 + wh * m.healthy.f1;
    m.auc = roc_auc(scores, truth);
    return m;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct EvalReport {
    std::vector<Metrics> per_fold;
    std::vector<double> mean;   // indexed like Metrics::names()
    std::vector<double> stdev;  // sample standard deviation across folds

    double mean_of(std::string_view name) const {
        const auto& n = Metrics::names();
        const auto it = std::find(n.begin(), n.end(), name);
        if (it == n.end()) throw Error("unknown metric '" + std::string(name) + "'");
        return mean[std::size_t(it - n.begin())];
    }
    double weighted_f1() const { return mean_of("weighted_f1"); }
    double auc() const { return mean_of("auc"); }
};

inline EvalReport summarize(std::vector<Metrics> folds) {
    EvalReport r;
    const std::size_t m = Metrics::names().size();
    r.mean.assign(m, 0.0);
    r.stdev.assign(m, 0.0);
    for (const auto& f : folds) {
        const auto v = f.values();
        for (std::size_t k = 0; k < m; ++k) r.mean[k] += v[k];
    }
    const double n = double(folds.size());
    for (double& v : r.mean) v /= n;
    if (folds.size() > 1) {
        for (const auto& f : folds) {
            const auto v = f.values();
            for (std::size_t k = 0; k < m; ++k) r.stdev[k] += (v[k] - r.mean[k]) * (v[k] - r.mean[k]);
        }
        for (double& v : r.stdev) v = std::sqrt(v / (n - 1.0));
    }
    r.per_fold = std::move(folds);
    return r;
}

inline nlohmann::json to_json(const Metrics& m) {
    nlohmann::json j = nlohmann::json::object();
    const auto& names = Metrics::names();
    const auto v = m.values();
    for (std::size_t k = 0; k < names.size(); ++k) j[names[k]] = v[k];
    j["depressed_support"] = m.depressed.support;
    j["healthy_support"] = m.healthy.support;
    return j;
}

// Fold index per example. Each class is shuffled and dealt round-robin,
// continuing the deal across classes so fold sizes stay balanced.
inline std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed) {
    if (folds < 2) throw Error("stratified_folds: need at least 2 folds");
    Rng rng(seed);
    std::vector<int> fold(labels.size(), -1);
    std::size_t deal = 0;
    for (Label cls : {Label::Depressed, Label::Healthy}) {
        std::vector<std::size_t> idx;
        for (std::size_t n = 0; n < labels.size(); ++n)
            if (labels[n] == cls) idx.push_back(n);
        for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[uniform_index(rng, k)]);
        for (std::size_t n : idx) fold[n] = int(deal++ % std::size_t(folds));
    }
    return fold;
}

struct CvOptions {
    int folds = 5;
    std::uint64_t seed = 0;
    bool standardize = true;
};

inline EvalReport cross_validate(const std::vector<FeatureVector>& data, double C, const CvOptions& opts = {}) {
    std::vector<Label> labels;
    labels.reserve(data.size());
    for (const auto& f : data) labels.push_back(f.label);
    const auto pos = std::size_t(std::count(labels.begin(), labels.end(), Label::Depressed));
    if (pos < std::size_t(opts.folds) || labels.size() - pos < std::size_t(opts.folds))
        throw InsufficientData("cross_validate: need at least " + std::to_string(opts.folds) +
                               " examples of each class");
    const auto fold_of = stratified_folds(labels, opts.folds, opts.seed);
    std::vector<Metrics> folds;
    for (int f = 0; f < opts.folds; ++f) {
        std::vector<FeatureVector> train, test;
        for (std::size_t n = 0; n < data.size(); ++n) (fold_of[n] == f ? test : train).push_back(data[n]);
        if (opts.standardize) {
            auto z = standardize(train, test);
            train = std::move(z.train);
            test = std::move(z.apply);
        }
        const LinearSVM svm = train_svm(train, C);
        std::vector<Label> pred, truth;
        std::vector<double> scores;
        for (const auto& t : test) {
            scores.push_back(svm.score(t.values));
            pred.push_back(scores.back() >= 0.0 ? Label::Depressed : Label::Healthy);
            truth.push_back(t.label);
        }
        folds.push_back(metrics(pred, scores, truth));
    }
    return summarize(std::move(folds));
}

} // namespace hawkesdx
