#pragma once

// Synthetic cohorts with a known group difference in excitation structure.
// Used as the end-to-end oracle for the pipeline.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/hawkes.hpp"
#include "hawkesdx/matrix.hpp"
#include "hawkesdx/random.hpp"
#include "hawkesdx/topics.hpp"

namespace hawkesdx {

struct SyntheticSpec {
    std::size_t n_depressed = 100;
    std::size_t n_healthy = 100;
    std::size_t K = 10;
    std::size_t embedding_dim = 16;
    double centroid_scale = 1.0;  // stdev of topic centroid coordinates
    double blob_stdev = 0.05;     // stdev of event embeddings around their centroid
    double horizon_days = 365.0;
    // Only the last `signal_days` before the survey carry the group
    // difference; earlier activity uses the healthy pattern for everyone.
    double signal_days = 365.0;
    double mu_low = 0.05;
    double mu_high = 0.25;
    double background_alpha_high = 0.05;  // healthy alpha entries ~ U(0, this)
    double excited_alpha = 0.35;
    // (receiver i, source j) pairs whose alpha_ij is raised in the depressed group.
    std::vector<std::pair<std::size_t, std::size_t>> excited_pairs = {{1, 0}, {3, 2}, {5, 4}, {7, 6}, {9, 8}};
    double max_spectral_radius = 0.95;
    // Decay used for simulation: RBF similarity of the synthetic centroids
    // at this bandwidth, mapped through build_decay.
    double decay_sigma = 0.01;
    double beta_base = kDefaultBetaBase;
    double beta_ratio = kDefaultBetaRatio;
    EpochSeconds start_epoch = 1'609'459'200;  // 2021-01-01T00:00:00Z

    void validate() const {
        if (K < 1) throw Error("synth: K must be positive");
        if (embedding_dim < 1) throw Error("synth: embedding_dim must be positive");
        if (!(horizon_days > 0.0)) throw Error("synth: horizon_days must be positive");
        if (!(signal_days > 0.0) || signal_days > horizon_days)
            throw Error("synth: signal_days must lie in (0, horizon_days]");
        if (!(decay_sigma > 0.0)) throw Error("synth: decay_sigma must be positive");
        if (!(mu_low > 0.0) || mu_high < mu_low) throw Error("synth: invalid baseline range");
        for (auto [i, j] : excited_pairs)
            if (i >= K || j >= K) throw Error("synth: excited pair outside [0, K)");
    }
};

inline nlohmann::json to_json(const SyntheticSpec& s) {
    nlohmann::json pairs = nlohmann::json::array();
    for (auto [i, j] : s.excited_pairs) pairs.push_back({i, j});
    return {{"n_depressed", s.n_depressed},     {"n_healthy", s.n_healthy},
            {"K", s.K},                         {"embedding_dim", s.embedding_dim},
            {"centroid_scale", s.centroid_scale}, {"blob_stdev", s.blob_stdev},
            {"horizon_days", s.horizon_days},   {"signal_days", s.signal_days},
            {"mu_low", s.mu_low},               {"mu_high", s.mu_high},
            {"background_alpha_high", s.background_alpha_high},
            {"excited_alpha", s.excited_alpha}, {"excited_pairs", pairs},
            {"max_spectral_radius", s.max_spectral_radius}, {"decay_sigma", s.decay_sigma},
            {"beta_base", s.beta_base},         {"beta_ratio", s.beta_ratio},
            {"start_epoch", s.start_epoch}};
}

// splitmix64 finaliser; derives independent per-user streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct SyntheticUser {
    UserLog log;
    HawkesModel healthy_part;  // parameters before the signal window
    HawkesModel signal_part;   // parameters inside it
    std::size_t rescaled = 0;  // draws rescaled to stay subcritical
};

struct SyntheticCohort {
    Matrix topic_centroids;  // K x embedding_dim
    Matrix beta;
    std::vector<SyntheticUser> users;
    std::size_t rescaled_draws = 0;
};

namespace detail {

inline std::size_t enforce_subcritical(Matrix& alpha, double cap) {
    const double rho = alpha.rows() ? spectral_radius_nonnegative(alpha) : 0.0;
    if (rho < cap) return 0;
    alpha = scaled(std::move(alpha), 0.9 * cap / rho);
    return 1;
}

} // namespace detail

// Depressed users come first (ids user_0000 ...), then healthy ones.
inline SyntheticCohort generate_cohort(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t K = spec.K, d = spec.embedding_dim;
    SyntheticCohort cohort;
    Rng topic_rng(mix_seed(seed, 0));
    cohort.topic_centroids = Matrix(K, d);
    for (double& v : cohort.topic_centroids.flat()) v = spec.centroid_scale * standard_normal(topic_rng);

    cohort.beta = build_decay(build_similarity(cohort.topic_centroids, spec.decay_sigma), spec.beta_base, spec.beta_ratio);
    const Matrix& beta = cohort.beta;
    const std::size_t n_users = spec.n_depressed + spec.n_healthy;
    const double split = spec.horizon_days - spec.signal_days;
    for (std::size_t u = 0; u < n_users; ++u) {
        const bool depressed = u < spec.n_depressed;
        Rng rng(mix_seed(seed, u + 1));
        std::vector<double> mu(K);
        for (double& m : mu) m = uniform(rng, spec.mu_low, spec.mu_high);
        Matrix alpha(K, K);
        for (double& a : alpha.flat()) a = uniform(rng, 0.0, spec.background_alpha_high);
        Matrix signal_alpha = alpha;
        if (depressed)
            for (auto [i, j] : spec.excited_pairs) signal_alpha(i, j) = spec.excited_alpha;

        SyntheticUser user;
        user.rescaled += detail::enforce_subcritical(alpha, spec.max_spectral_radius);
        user.rescaled += detail::enforce_subcritical(signal_alpha, spec.max_spectral_radius);
        user.healthy_part = HawkesModel::make(mu, alpha, beta, split);
        user.signal_part = HawkesModel::make(mu, signal_alpha, beta, spec.signal_days);
        cohort.rescaled_draws += user.rescaled;

        TimedSequence seq;
        if (split > 0.0) seq = simulate(user.healthy_part, split, rng());
        const TimedSequence tail = simulate(user.signal_part, spec.signal_days, rng());
        for (std::size_t n = 0; n < tail.size(); ++n) {
            seq.times.push_back(split + tail.times[n]);
            seq.marks.push_back(tail.marks[n]);
        }

        std::vector<Event> events;
        events.reserve(seq.size());
        for (std::size_t n = 0; n < seq.size(); ++n) {
            Event e;
            e.timestamp = spec.start_epoch + EpochSeconds(std::floor(seq.times[n] * double(kSecondsPerDay)));
            e.source = uniform01(rng) < 0.5 ? Source::search : Source::youtube;
            e.topic = seq.marks[n];
            std::vector<double> emb(d);
            const auto c = cohort.topic_centroids.row(std::size_t(seq.marks[n]));
            for (std::size_t k = 0; k < d; ++k)
                emb[k] = std::round((c[k] + spec.blob_stdev * standard_normal(rng)) * 1e6) / 1e6;
            e.embedding = std::move(emb);
            events.push_back(std::move(e));
        }
        char id[32];
        std::snprintf(id, sizeof id, "user_%04zu", u);
        const EpochSeconds survey =
            spec.start_epoch + EpochSeconds(std::llround(spec.horizon_days * double(kSecondsPerDay)));
        user.log = make_user_log(id, std::move(events), survey, depressed ? 20 : 5);
        cohort.users.push_back(std::move(user));
    }
    return cohort;
}

inline void write_cohort(const SyntheticCohort& cohort, std::ostream& events_out, std::ostream& labels_out) {
    labels_out << "user_id,phq9,survey_ts\n";
    for (const auto& u : cohort.users) {
        labels_out << u.log.user_id << ',' << u.log.phq9 << ',' << u.log.survey_time << '\n';
        for (const auto& e : u.log.events) events_out << event_to_json(u.log.user_id, e).dump() << '\n';
    }
}

inline Cohort to_cohort(const SyntheticCohort& synthetic) {
    Cohort c;
    for (const auto& u : synthetic.users) {
        c.users.push_back(u.log);
        c.report.events += u.log.events.size();
    }
    std::sort(c.users.begin(), c.users.end(),
              [](const UserLog& a, const UserLog& b) { return a.user_id < b.user_id; });
    c.report.users = c.users.size();
    return c;
}

} // namespace hawkesdx
