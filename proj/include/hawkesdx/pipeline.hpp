#pragma once

// Cohort-level orchestration: topics per K, decay per (K, sigma), per-user
// fits per window D, features and cross-validation per (C, kind), and the
// grid harness that ranks every configuration.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hawkesdx/classifier.hpp"
#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/features.hpp"
#include "hawkesdx/hawkes.hpp"
#include "hawkesdx/topics.hpp"

namespace hawkesdx {

struct GridSpec {
    std::vector<std::size_t> K = {5, 10, 15, 20, 25};
    std::vector<double> sigma = {0.001, 0.01, 0.1, 1, 10};
    std::vector<double> C = {0.1, 1, 10, 100};
    std::vector<DurationSpec> D = {DurationSpec::w2, DurationSpec::w4, DurationSpec::m3,
                                   DurationSpec::m6, DurationSpec::m12, DurationSpec::full};
    std::vector<FeatureKind> kinds = {FeatureKind::mu, FeatureKind::phi};
    int folds = 5;

    static GridSpec single(std::size_t K, double sigma, double C, DurationSpec D,
                           std::vector<FeatureKind> kinds = {FeatureKind::mu, FeatureKind::phi}) {
        GridSpec g;
        g.K = {K};
        g.sigma = {sigma};
        g.C = {C};
        g.D = {D};
        g.kinds = std::move(kinds);
        return g;
    }

    std::size_t size() const { return K.size() * sigma.size() * C.size() * D.size() * kinds.size(); }

    void validate() const {
        if (K.empty() || sigma.empty() || C.empty() || D.empty() || kinds.empty())
            throw Error("grid: every hyperparameter set must be non-empty");
        for (auto k : K)
            if (k < 2) throw Error("grid: K must be >= 2");
        for (double s : sigma)
            if (!(s > 0.0)) throw Error("grid: sigma must be positive");
        for (double c : C)
            if (!(c > 0.0)) throw Error("grid: C must be positive");
        if (folds < 2) throw Error("grid: folds must be >= 2");
    }
};

inline nlohmann::json to_json(const GridSpec& g) {
    std::vector<std::string> D, kinds;
    for (auto d : g.D) D.emplace_back(to_string(d));
    for (auto k : g.kinds) kinds.emplace_back(to_string(k));
    return {{"K", g.K}, {"sigma", g.sigma}, {"C", g.C}, {"D", D}, {"kinds", kinds}, {"folds", g.folds}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
    GridSpec g;
    if (j.contains("K")) g.K = j["K"].get<std::vector<std::size_t>>();
    if (j.contains("sigma")) g.sigma = j["sigma"].get<std::vector<double>>();
    if (j.contains("C")) g.C = j["C"].get<std::vector<double>>();
    if (j.contains("D")) {
        g.D.clear();
        for (const auto& d : j["D"]) g.D.push_back(parse_duration(d.get<std::string>()));
    }
    if (j.contains("kinds")) {
        g.kinds.clear();
        for (const auto& k : j["kinds"]) g.kinds.push_back(parse_feature_kind(k.get<std::string>()));
    }
    g.folds = j.value("folds", 5);
    g.validate();
    return g;
}

struct PipelineOptions {
    double beta_base = kDefaultBetaBase;
    double beta_ratio = kDefaultBetaRatio;
    std::size_t min_events = kDefaultMinEvents;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    bool standardize = true;
    FitOptions fit;
    KMeansOptions kmeans;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
// written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, unsigned(std::max<std::size_t>(n, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Topics over the cohort

enum class TopicSource { clustered, given };

struct CohortTopics {
    TopicModel model;                     // decay not attached
    std::vector<std::vector<int>> labels; // per user, aligned with UserLog::events
    TopicSource source = TopicSource::clustered;
};

inline TopicSource detect_topic_source(const Cohort& cohort) {
    bool all_embedded = true, all_topiced = true;
    for (const auto& u : cohort.users)
        for (const auto& e : u.events) {
            all_embedded = all_embedded && e.embedding.has_value();
            all_topiced = all_topiced && e.topic.has_value();
        }
    if (all_embedded) return TopicSource::clustered;
    if (all_topiced) return TopicSource::given;
    throw Error("events lack both embeddings and topic labels; embed the text first");
}

// Largest given topic label + 1.
inline std::size_t given_topic_count(const Cohort& cohort) {
    int top = -1;
    for (const auto& u : cohort.users)
        for (const auto& e : u.events) top = std::max(top, e.topic.value_or(-1));
    return std::size_t(top + 1);
}

// Pools embeddings from every user's full log, clusters into K topics and
// labels each event with its nearest centroid. With pre-labelled events
// (no embeddings) the given labels are used and topics are treated as
// mutually dissimilar; K then comes from the data.
inline CohortTopics build_topics(const Cohort& cohort, std::size_t K, std::uint64_t seed,
                                 const KMeansOptions& opts = {}) {
    CohortTopics out;
    out.source = detect_topic_source(cohort);
    out.labels.resize(cohort.users.size());
    if (out.source == TopicSource::given) {
        const std::size_t given = given_topic_count(cohort);
        out.model.K = given;
        out.model.centroids = Matrix(given, 0);
        for (std::size_t u = 0; u < cohort.users.size(); ++u)
            for (const auto& e : cohort.users[u].events) out.labels[u].push_back(*e.topic);
        return out;
    }
    std::size_t total = 0, d = 0;
    for (const auto& u : cohort.users)
        for (const auto& e : u.events) {
            if (total == 0) d = e.embedding->size();
            else if (e.embedding->size() != d) throw Error("embeddings have non-uniform dimensions");
            ++total;
        }
    if (total == 0) throw InsufficientData("no events to cluster");
    Matrix points(total, d);
    std::size_t r = 0;
    for (const auto& u : cohort.users)
        for (const auto& e : u.events) std::copy(e.embedding->begin(), e.embedding->end(), points.row(r++).begin());
    out.model = fit_topics(points, K, seed, opts);
    for (std::size_t u = 0; u < cohort.users.size(); ++u)
        for (const auto& e : cohort.users[u].events)
            out.labels[u].push_back(int(assign_topic(out.model, *e.embedding)));
    return out;
}

// Given topics have no centroids: identity similarity.
inline void attach_cohort_decay(CohortTopics& topics, double sigma, double beta_base, double beta_ratio) {
    if (topics.source == TopicSource::clustered) {
        attach_decay(topics.model, sigma, beta_base, beta_ratio);
        return;
    }
    if (!(sigma > 0.0)) throw Error("sigma must be positive");
    const std::size_t K = topics.model.K;
    topics.model.sigma = sigma;
    topics.model.beta_base = beta_base;
    topics.model.beta_ratio = beta_ratio;
    topics.model.similarity = Matrix::square(K);
    for (std::size_t i = 0; i < K; ++i) topics.model.similarity(i, i) = 1.0;
    topics.model.beta = build_decay(topics.model.similarity, beta_base, beta_ratio);
}

// ---------------------------------------------------------------------------
// Per-user fits

struct UserFit {
    std::string user_id;
    Label label = Label::Healthy;
    bool excluded = false;
    std::size_t events = 0;
    HawkesModel model;
    FitReport report;
};

inline UserFit fit_user(const UserLog& log, std::span<const int> labels, const Matrix& beta, DurationSpec D,
                        const FitOptions& fit_opts) {
    UserFit out;
    out.user_id = log.user_id;
    out.label = log.label;
    const ObservationWindow w = make_window(log, D);
    const auto [lo, hi] = window_range(log, w);
    out.events = hi - lo;
    if (out.events < fit_opts.min_events) {
        out.excluded = true;
        out.report.excluded_reason =
            "insufficient data: " + std::to_string(out.events) + " events < " + std::to_string(fit_opts.min_events);
        out.model = HawkesModel::make(std::vector<double>(beta.rows(), fit_opts.mu_floor),
                                      Matrix::square(beta.rows()), beta, w.horizon_days());
        return out;
    }
    UserLog windowed;
    windowed.user_id = log.user_id;
    windowed.events.assign(log.events.begin() + std::ptrdiff_t(lo), log.events.begin() + std::ptrdiff_t(hi));
    const auto seq = to_relative_days(windowed, w, labels.subspan(lo, hi - lo));
    auto res = fit(seq, beta, fit_opts);
    out.model = std::move(res.model);
    out.report = std::move(res.report);
    return out;
}

inline std::vector<UserFit> fit_cohort(const Cohort& cohort, const CohortTopics& topics, DurationSpec D,
                                       const PipelineOptions& opts) {
    std::vector<UserFit> fits(cohort.users.size());
    FitOptions fo = opts.fit;
    fo.min_events = opts.min_events;
    parallel_for(cohort.users.size(), opts.jobs, [&](std::size_t u) {
        fits[u] = fit_user(cohort.users[u], topics.labels[u], topics.model.beta, D, fo);
    });
    return fits;
}

inline std::vector<FeatureVector> cohort_features(const std::vector<UserFit>& fits, FeatureKind kind) {
    std::vector<FeatureVector> out;
    for (const auto& f : fits)
        if (!f.excluded) out.push_back(extract(f.model, kind, f.user_id, f.label));
    return out;
}

// ---------------------------------------------------------------------------
// Grid

struct ConfigResult {
    std::size_t K = 0;
    double sigma = 0.0;
    double C = 0.0;
    DurationSpec D = DurationSpec::full;
    FeatureKind kind = FeatureKind::phi;
    std::size_t users = 0;
    std::size_t excluded_users = 0;
    bool valid = true;
    std::string invalid_reason;
    EvalReport report;
    int rank = 0;  // 1-based among valid configurations, 0 if invalid
};

// Called once per (K, sigma, D) after the per-user fits.
using FitObserver = std::function<void(const CohortTopics&, DurationSpec, const std::vector<UserFit>&)>;

// Valid configurations first, by mean weighted F1 then mean AUC (both
// descending); ties keep enumeration order.
inline void rank_results(std::vector<ConfigResult>& results) {
    std::stable_sort(results.begin(), results.end(), [](const ConfigResult& a, const ConfigResult& b) {
        if (a.valid != b.valid) return a.valid;
        if (!a.valid) return false;
        const double fa = a.report.weighted_f1(), fb = b.report.weighted_f1();
        if (fa != fb) return fa > fb;
        return a.report.auc() > b.report.auc();
    });
    int r = 0;
    for (auto& c : results) c.rank = c.valid ? ++r : 0;
}

inline std::vector<ConfigResult> grid_search(const Cohort& cohort, const GridSpec& grid,
                                             const PipelineOptions& opts, const FitObserver& observer = {}) {
    grid.validate();
    std::vector<ConfigResult> results;
    std::vector<std::size_t> Ks = grid.K;
    const TopicSource source = detect_topic_source(cohort);
    if (source == TopicSource::given) Ks = {given_topic_count(cohort)};
    for (std::size_t K : Ks) {
        CohortTopics topics = build_topics(cohort, K, opts.seed, opts.kmeans);
        for (double sigma : grid.sigma) {
            attach_cohort_decay(topics, sigma, opts.beta_base, opts.beta_ratio);
            for (DurationSpec D : grid.D) {
                const auto fits = fit_cohort(cohort, topics, D, opts);
                if (observer) observer(topics, D, fits);
                const auto excluded =
                    std::size_t(std::count_if(fits.begin(), fits.end(), [](const UserFit& f) { return f.excluded; }));
                for (double C : grid.C)
                    for (FeatureKind kind : grid.kinds) {
                        ConfigResult r;
                        r.K = topics.model.K;
                        r.sigma = sigma;
                        r.C = C;
                        r.D = D;
                        r.kind = kind;
                        r.users = fits.size();
                        r.excluded_users = excluded;
                        if (2 * excluded > fits.size()) {
                            r.valid = false;
                            r.invalid_reason = "more than half of the users have insufficient data";
                        } else {
                            try {
                                CvOptions cv;
                                cv.folds = grid.folds;
                                cv.seed = opts.seed;
                                cv.standardize = opts.standardize;
                                r.report = cross_validate(cohort_features(fits, kind), C, cv);
                            } catch (const InsufficientData& e) {
                                r.valid = false;
                                r.invalid_reason = e.what();
                            }
                        }
                        results.push_back(std::move(r));
                    }
            }
        }
    }
    rank_results(results);
    return results;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json metric_map(const std::vector<double>& values) {
    nlohmann::json j = nlohmann::json::object();
    const auto& names = Metrics::names();
    for (std::size_t k = 0; k < names.size() && k < values.size(); ++k) j[names[k]] = values[k];
    return j;
}

inline nlohmann::json to_json(const ConfigResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.report.per_fold) folds.push_back(to_json(f));
    nlohmann::json j = {{"K", r.K},
                        {"sigma", r.sigma},
                        {"C", r.C},
                        {"D", to_string(r.D)},
                        {"kind", to_string(r.kind)},
                        {"rank", r.rank},
                        {"valid", r.valid},
                        {"users", r.users},
                        {"excluded_users", r.excluded_users},
                        {"per_fold", folds},
                        {"mean", metric_map(r.report.mean)},
                        {"std", metric_map(r.report.stdev)}};
    if (!r.valid) j["invalid_reason"] = r.invalid_reason;
    return j;
}

inline nlohmann::json report_json(const std::vector<ConfigResult>& results) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) arr.push_back(to_json(r));
    return arr;
}

inline void write_report_csv(std::ostream& os, const std::vector<ConfigResult>& results) {
    const auto& names = Metrics::names();
    os << "rank,K,sigma,C,D,kind,valid,users,excluded_users";
    for (const auto& n : names) os << ",mean_" << n;
    for (const auto& n : names) os << ",std_" << n;
    os << '\n';
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : results) {
        os << r.rank << ',' << r.K << ',' << num(r.sigma) << ',' << num(r.C) << ',' << to_string(r.D) << ','
           << to_string(r.kind) << ',' << (r.valid ? 1 : 0) << ',' << r.users << ',' << r.excluded_users;
        for (std::size_t k = 0; k < names.size(); ++k) os << ',' << (r.valid ? num(r.report.mean[k]) : "");
        for (std::size_t k = 0; k < names.size(); ++k) os << ',' << (r.valid ? num(r.report.stdev[k]) : "");
        os << '\n';
    }
}

inline nlohmann::json fitted_model_json(const UserFit& f, const std::string& beta_ref) {
    nlohmann::json j = {{"user_id", f.user_id},
                        {"K", f.model.K},
                        {"T", f.model.horizon},
                        {"mu", f.model.mu},
                        {"alpha", matrix_to_json(f.model.alpha)},
                        {"beta_ref", beta_ref},
                        {"ll", f.report.log_likelihood},
                        {"converged", f.report.converged},
                        {"iterations", f.report.iterations},
                        {"gradient_norm", f.report.gradient_norm},
                        {"events", f.events}};
    if (f.report.excluded_reason) j["excluded_reason"] = *f.report.excluded_reason;
    return j;
}

} // namespace hawkesdx
