#pragma once

// Implicit topics: k-means over pooled event embeddings, nearest-centroid
// labelling, and the RBF similarity -> decay-rate matrix used by the
// Hawkes fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hawkesdx/error.hpp"
#include "hawkesdx/matrix.hpp"
#include "hawkesdx/random.hpp"

namespace hawkesdx {

inline constexpr double kDefaultBetaBase = 1.0;   // 1/day
inline constexpr double kDefaultBetaRatio = 10.0;

struct KMeansOptions {
    int max_iterations = 300;
    double relative_tolerance = 1e-6;
    int restarts = 3;  // independent k-means++ seedings; lowest inertia wins
};

struct TopicModel {
    std::size_t K = 0;
    Matrix centroids;   // K x d
    Matrix similarity;  // K x K, empty until build_similarity
    Matrix beta;        // K x K, 1/day, empty until build_decay
    double sigma = 0.0;
    double beta_base = kDefaultBetaBase;
    double beta_ratio = kDefaultBetaRatio;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // one entry per Lloyd assignment step

    std::size_t dimension() const noexcept { return centroids.cols(); }
};

namespace detail {

// Returns the nearest centroid index (lowest index on ties) and its squared distance.
inline std::pair<std::size_t, double> nearest(const Matrix& centroids, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.rows(); ++k) {
        const double d = squared_distance(centroids.row(k), x);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return {best, best_d};
}

inline std::size_t count_distinct_rows(const Matrix& points) {
    std::vector<std::size_t> idx(points.rows());
    std::iota(idx.begin(), idx.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        auto ra = points.row(a), rb = points.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(idx.begin(), idx.end(), less);
    std::size_t distinct = idx.empty() ? 0 : 1;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (less(idx[i - 1], idx[i])) ++distinct;
    return distinct;
}

inline Matrix kmeanspp_seed(const Matrix& points, std::size_t K, Rng& rng) {
    const std::size_t n = points.rows();
    Matrix centroids(K, points.cols());
    auto first = points.row(uniform_index(rng, n));
    std::copy(first.begin(), first.end(), centroids.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t k = 1; k < K; ++k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t chosen = 0;
        if (total > 0.0) {
            double r = uniform01(rng) * total;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r < 0.0 && d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
            while (d2[chosen] == 0.0) --chosen;  // never re-pick an existing centroid
        }
        auto row = points.row(chosen);
        std::copy(row.begin(), row.end(), centroids.row(k).begin());
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(k)));
    }
    return centroids;
}

struct LloydResult {
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> history;
};

inline LloydResult lloyd(const Matrix& points, Matrix centroids, const KMeansOptions& opts) {
    const std::size_t n = points.rows(), d = points.cols(), K = centroids.rows();
    std::vector<std::size_t> assign(n);
    std::vector<double> dist(n);
    LloydResult res;
    for (int it = 0; it < opts.max_iterations; ++it) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto [k, dd] = nearest(centroids, points.row(i));
            assign[i] = k;
            dist[i] = dd;
            inertia += dd;
        }
        const double prev = res.history.empty() ? std::numeric_limits<double>::infinity() : res.history.back();
        res.history.push_back(inertia);
        res.inertia = inertia;
        if (inertia == 0.0 || (std::isfinite(prev) && (prev - inertia) <= opts.relative_tolerance * prev)) break;
        if (it + 1 == opts.max_iterations) break;

        Matrix sums(K, d);
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto s = sums.row(assign[i]);
            auto p = points.row(i);
            for (std::size_t c = 0; c < d; ++c) s[c] += p[c];
            ++counts[assign[i]];
        }
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] == 0) continue;
            auto c = centroids.row(k);
            auto s = sums.row(k);
            for (std::size_t j = 0; j < d; ++j) c[j] = s[j] / double(counts[k]);
        }
        // Empty clusters take the point farthest from its own centroid.
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] != 0) continue;
            const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            auto p = points.row(far);
            std::copy(p.begin(), p.end(), centroids.row(k).begin());
            dist[far] = 0.0;
        }
    }
    res.centroids = std::move(centroids);
    return res;
}

} // namespace detail

// k-means with k-means++ seeding on an n x d point matrix.
inline TopicModel fit_topics(const Matrix& points, std::size_t K, std::uint64_t seed,
                             const KMeansOptions& opts = {}) {
    if (K < 2) throw Error("fit_topics: K must be at least 2");
    if (detail::count_distinct_rows(points) < K)
        throw Error("fit_topics: fewer than K = " + std::to_string(K) + " distinct embeddings");
    Rng rng(seed);
    TopicModel best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        auto run = detail::lloyd(points, detail::kmeanspp_seed(points, K, rng), opts);
        if (run.inertia < best.inertia) {
            best.centroids = std::move(run.centroids);
            best.inertia = run.inertia;
            best.inertia_history = std::move(run.history);
        }
    }
    best.K = K;
    return best;
}

inline TopicModel fit_topics(const std::vector<std::vector<double>>& embeddings, std::size_t K, std::uint64_t seed,
                             const KMeansOptions& opts = {}) {
    if (embeddings.empty()) throw Error("fit_topics: no embeddings");
    const std::size_t d = embeddings.front().size();
    Matrix points(embeddings.size(), d);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].size() != d) throw Error("fit_topics: embeddings have non-uniform dimensions");
        std::copy(embeddings[i].begin(), embeddings[i].end(), points.row(i).begin());
    }
    return fit_topics(points, K, seed, opts);
}

inline std::size_t assign_topic(const TopicModel& model, std::span<const double> embedding) {
    if (embedding.size() != model.dimension())
        throw Error("assign_topic: embedding dimension " + std::to_string(embedding.size()) + " != " +
                    std::to_string(model.dimension()));
    return detail::nearest(model.centroids, embedding).first;
}

// s[i][j] = exp(-|c_i - c_j|^2 / sigma^2). Off-diagonal entries underflow to
// 0 for small sigma relative to centroid spacing.
inline Matrix build_similarity(const Matrix& centroids, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("build_similarity: sigma must be positive");
    const std::size_t K = centroids.rows();
    Matrix s = Matrix::square(K);
    const double inv = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < K; ++i) {
        s(i, i) = 1.0;
        for (std::size_t j = i + 1; j < K; ++j) {
            const double v = std::exp(-squared_distance(centroids.row(i), centroids.row(j)) * inv);
            s(i, j) = s(j, i) = v;
        }
    }
    return s;
}

// beta = base * (ratio - (ratio - 1) * s): base on the diagonal, up to
// base * ratio for unrelated topics. Similar topics decay slower.
inline Matrix build_decay(const Matrix& similarity, double beta_base = kDefaultBetaBase,
                          double beta_ratio = kDefaultBetaRatio) {
    if (!(beta_base > 0.0)) throw Error("build_decay: beta_base must be positive");
    if (!(beta_ratio >= 1.0)) throw Error("build_decay: beta_ratio must be >= 1");
    Matrix beta(similarity.rows(), similarity.cols());
    for (std::size_t i = 0; i < similarity.rows(); ++i)
        for (std::size_t j = 0; j < similarity.cols(); ++j) {
            const double s = similarity(i, j);
            if (!(s >= 0.0 && s <= 1.0)) throw Error("build_decay: similarity outside [0, 1]");
            beta(i, j) = beta_base * (beta_ratio - (beta_ratio - 1.0) * s);
        }
    return beta;
}

// Fills similarity and beta in place.
inline void attach_decay(TopicModel& model, double sigma, double beta_base = kDefaultBetaBase,
                         double beta_ratio = kDefaultBetaRatio) {
    model.sigma = sigma;
    model.beta_base = beta_base;
    model.beta_ratio = beta_ratio;
    model.similarity = build_similarity(model.centroids, sigma);
    model.beta = build_decay(model.similarity, beta_base, beta_ratio);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json matrix_to_json(const Matrix& m) {
    auto out = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        out.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error("expected a matrix (array of arrays)");
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j[0].size() : 0;
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw Error("ragged matrix");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline nlohmann::json to_json(const TopicModel& m) {
    return {{"K", m.K},
            {"sigma", m.sigma},
            {"beta_base", m.beta_base},
            {"beta_ratio", m.beta_ratio},
            {"inertia", m.inertia},
            {"centroids", matrix_to_json(m.centroids)},
            {"similarity", matrix_to_json(m.similarity)},
            {"beta", matrix_to_json(m.beta)}};
}

inline TopicModel topic_model_from_json(const nlohmann::json& j) {
    TopicModel m;
    m.K = j.at("K").get<std::size_t>();
    m.sigma = j.at("sigma").get<double>();
    m.beta_base = j.at("beta_base").get<double>();
    m.beta_ratio = j.at("beta_ratio").get<double>();
    m.inertia = j.value("inertia", 0.0);
    m.centroids = matrix_from_json(j.at("centroids"));
    m.similarity = matrix_from_json(j.at("similarity"));
    m.beta = matrix_from_json(j.at("beta"));
    if (m.centroids.rows() != m.K) throw Error("topic model: centroid count != K");
    return m;
}

// FNV-1a over the canonical JSON dump; identifies the beta a model was fit with.
inline std::string topic_model_hash(const TopicModel& m) {
    const std::string text = to_json(m).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace hawkesdx
