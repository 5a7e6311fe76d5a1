#pragma once

// K-dimensional Hawkes process with exponential kernels
//
//   lambda_i(t) = mu_i + sum_j sum_{t_m^j < t} alpha_ij * beta_ij * exp(-beta_ij (t - t_m^j))
//
// alpha_ij is the branching ratio (expected topic-i children of one topic-j
// event) and beta is fixed. Only mu and alpha are fitted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/matrix.hpp"
#include "hawkesdx/random.hpp"

namespace hawkesdx {

inline constexpr double kMuFloor = 1e-8;

struct HawkesModel {
    std::size_t K = 0;
    std::vector<double> mu;  // events/day
    Matrix alpha;            // dimensionless
    Matrix beta;             // 1/day, never modified by fitting
    double horizon = 0.0;    // days

    static HawkesModel make(std::vector<double> mu, Matrix alpha, Matrix beta, double horizon = 0.0) {
        HawkesModel m;
        m.K = mu.size();
        m.mu = std::move(mu);
        m.alpha = std::move(alpha);
        m.beta = std::move(beta);
        m.horizon = horizon;
        m.validate();
        return m;
    }

    void validate() const {
        if (mu.size() != K || alpha.rows() != K || alpha.cols() != K || beta.rows() != K || beta.cols() != K)
            throw Error("HawkesModel: inconsistent dimensions");
        for (double b : beta.flat())
            if (!(b > 0.0) || !std::isfinite(b)) throw Error("HawkesModel: beta must be strictly positive");
        for (double a : alpha.flat())
            if (!(a >= 0.0) || !std::isfinite(a)) throw Error("HawkesModel: alpha must be non-negative");
        for (double m : mu)
            if (!(m >= 0.0) || !std::isfinite(m)) throw Error("HawkesModel: mu must be non-negative");
    }

    double branching_radius() const { return spectral_radius_nonnegative(alpha); }
};

namespace detail {

inline void check_sequence(const TimedSequence& seq, std::size_t K) {
    if (seq.times.size() != seq.marks.size()) throw Error("timed sequence: times/marks length mismatch");
    for (std::size_t n = 0; n < seq.size(); ++n) {
        if (seq.marks[n] < 0 || std::size_t(seq.marks[n]) >= K) throw Error("timed sequence: mark out of range");
        if (n > 0 && !(seq.times[n] > seq.times[n - 1])) throw Error("timed sequence: events not strictly ordered");
    }
    if (!seq.times.empty() && (seq.times.front() < 0.0 || !(seq.times.back() < seq.horizon)))
        throw Error("timed sequence: events outside [0, T)");
}

// Lazily decayed kernel sums A_ij(t) = sum_{t_m^j < t} beta_ij exp(-beta_ij (t - t_m^j)).
// Each entry carries its own last-update time so that an event touches
// only one row (read) and one column (write): O(K) work per event.
class KernelState {
public:
    explicit KernelState(const Matrix& beta)
        : beta_(beta), value_(beta.rows(), beta.cols()), stamp_(beta.rows(), beta.cols()) {}

    // Row i of A at time t, for strictly prior events.
    void read_row(std::size_t i, double t, std::span<double> out) {
        for (std::size_t j = 0; j < beta_.cols(); ++j) out[j] = advance(i, j, t);
    }

    // Register an event of mark j at time t.
    void add_event(std::size_t j, double t) {
        for (std::size_t i = 0; i < beta_.rows(); ++i) value_(i, j) = advance(i, j, t) + beta_(i, j);
    }

private:
    double advance(std::size_t i, std::size_t j, double t) {
        double& v = value_(i, j);
        double& s = stamp_(i, j);
        if (v != 0.0 && t != s) v *= std::exp(-beta_(i, j) * (t - s));
        s = t;
        return v;
    }

    const Matrix& beta_;
    Matrix value_;
    Matrix stamp_;
};

} // namespace detail

// lambda_i(t) from strictly prior events (left limit at event times).
inline double intensity(const HawkesModel& model, const TimedSequence& history, std::size_t i, double t) {
    if (i >= model.K) throw Error("intensity: topic out of range");
    double lambda = model.mu[i];
    for (std::size_t m = 0; m < history.size(); ++m) {
        const double tm = history.times[m];
        if (tm > t) throw Error("intensity: evaluation time precedes a history event");
        if (tm == t) continue;
        const std::size_t j = std::size_t(history.marks[m]);
        const double b = model.beta(i, j);
        lambda += model.alpha(i, j) * b * std::exp(-b * (t - tm));
    }
    return lambda;
}

// Everything the log-likelihood needs that does not depend on (mu, alpha):
// kernel sums at each event for its own mark's row, and the integrated
// kernel per (i, j). Built once per sequence and reused across optimizer steps.
struct ExcitationStats {
    std::size_t K = 0;
    double horizon = 0.0;
    std::vector<int> marks;
    Matrix kernel_at_event;  // N x K: A_{k_n, j}(t_n)
    Matrix integrated;       // K x K: sum_{m in j} (1 - exp(-beta_ij (T - t_m)))
    std::vector<std::size_t> counts;

    std::size_t size() const noexcept { return marks.size(); }
};

inline ExcitationStats excitation_stats(const TimedSequence& seq, const Matrix& beta) {
    const std::size_t K = beta.rows();
    detail::check_sequence(seq, K);
    ExcitationStats st;
    st.K = K;
    st.horizon = seq.horizon;
    st.marks = seq.marks;
    st.kernel_at_event = Matrix(seq.size(), K);
    st.integrated = Matrix::square(K);
    st.counts.assign(K, 0);
    detail::KernelState state(beta);
    for (std::size_t n = 0; n < seq.size(); ++n) {
        const std::size_t k = std::size_t(seq.marks[n]);
        state.read_row(k, seq.times[n], st.kernel_at_event.row(n));
        state.add_event(k, seq.times[n]);
        ++st.counts[k];
        for (std::size_t i = 0; i < K; ++i)
            st.integrated(i, k) += -std::expm1(-beta(i, k) * (seq.horizon - seq.times[n]));
    }
    return st;
}

struct LikelihoodResult {
    double value = 0.0;
    std::vector<double> grad_mu;
    Matrix grad_alpha;
};

inline LikelihoodResult log_likelihood(const ExcitationStats& st, std::span<const double> mu, const Matrix& alpha,
                                       bool with_gradient = true) {
    const std::size_t K = st.K;
    LikelihoodResult r;
    if (with_gradient) {
        r.grad_mu.assign(K, -st.horizon);
        r.grad_alpha = scaled(st.integrated, -1.0);
    }
    double ll = 0.0;
    for (std::size_t n = 0; n < st.size(); ++n) {
        const std::size_t i = std::size_t(st.marks[n]);
        const auto s = st.kernel_at_event.row(n);
        const auto a = alpha.row(i);
        const double lambda = mu[i] + dot(a, s);
        ll += std::log(lambda);
        if (with_gradient) {
            const double inv = 1.0 / lambda;
            r.grad_mu[i] += inv;
            auto g = r.grad_alpha.row(i);
            for (std::size_t j = 0; j < K; ++j) g[j] += s[j] * inv;
        }
    }
    for (std::size_t i = 0; i < K; ++i) {
        ll -= mu[i] * st.horizon;
        ll -= dot(alpha.row(i), st.integrated.row(i));
    }
    r.value = ll;
    return r;
}

// Exact log-likelihood on [0, T) and its gradient in (mu, alpha), O(N*K).
inline LikelihoodResult log_likelihood(const HawkesModel& model, const TimedSequence& seq) {
    return log_likelihood(excitation_stats(seq, model.beta), model.mu, model.alpha);
}

// Compensator Lambda_{k_n}(t_n) at every event (own mark) and Lambda_i(T) per topic.
struct CompensatorTrace {
    std::vector<double> at_event;
    std::vector<double> at_horizon;
};

inline CompensatorTrace compensator(const HawkesModel& model, const TimedSequence& seq) {
    const std::size_t K = model.K;
    detail::check_sequence(seq, K);
    // Lambda_i(t) = mu_i t + sum_j alpha_ij (n_j(t) - A_ij(t) / beta_ij)
    detail::KernelState state(model.beta);
    std::vector<double> count(K, 0.0), row(K);
    CompensatorTrace out;
    out.at_event.resize(seq.size());
    auto evaluate = [&](std::size_t i, double t) {
        state.read_row(i, t, row);
        double v = model.mu[i] * t;
        for (std::size_t j = 0; j < K; ++j) v += model.alpha(i, j) * (count[j] - row[j] / model.beta(i, j));
        return v;
    };
    for (std::size_t n = 0; n < seq.size(); ++n) {
        const std::size_t k = std::size_t(seq.marks[n]);
        out.at_event[n] = evaluate(k, seq.times[n]);
        state.add_event(k, seq.times[n]);
        count[k] += 1.0;
    }
    out.at_horizon.resize(K);
    for (std::size_t i = 0; i < K; ++i) out.at_horizon[i] = evaluate(i, seq.horizon);
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitOptions {
    double mu_floor = kMuFloor;
    double gradient_tolerance = 1e-6;
    double relative_ll_tolerance = 1e-8;
    int max_iterations = 1000;
    double armijo_c = 1e-4;
    int max_backtracks = 60;
    std::size_t min_events = kDefaultMinEvents;
};

struct FitReport {
    double log_likelihood = -std::numeric_limits<double>::infinity();
    double initial_log_likelihood = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;  // projected
    std::optional<std::string> excluded_reason;
    std::vector<double> trace;   // LL after each accepted iteration, starting with the initial point
};

struct FitResult {
    HawkesModel model;
    FitReport report;
};

namespace detail {

struct Box {
    double mu_floor;

    void project(std::vector<double>& x, std::size_t K) const {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], i < K ? mu_floor : 0.0);
    }
};

inline std::vector<double> pack(std::span<const double> mu, const Matrix& alpha) {
    std::vector<double> x(mu.begin(), mu.end());
    x.insert(x.end(), alpha.flat().begin(), alpha.flat().end());
    return x;
}

inline double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g, const Box& box,
                                      std::size_t K) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lo = i < K ? box.mu_floor : 0.0;
        const double step = std::max(x[i] + g[i], lo) - x[i];
        s += step * step;
    }
    return std::sqrt(s);
}

} // namespace detail

// Box-constrained maximum likelihood for (mu, alpha) with beta fixed.
// Projected gradient ascent: Barzilai-Borwein trial step, then Armijo
// backtracking (halving) along the projection arc, so every accepted step
// increases the likelihood.
inline FitResult fit(const TimedSequence& seq, const Matrix& beta, const FitOptions& opts = {}) {
    const std::size_t K = beta.rows();
    if (beta.cols() != K || K == 0) throw Error("fit: beta must be a non-empty square matrix");
    if (!(seq.horizon > 0.0)) throw Error("fit: horizon must be positive");
    const ExcitationStats st = excitation_stats(seq, beta);
    const double T = seq.horizon;

    FitResult res;
    std::vector<double> mu0(K);
    for (std::size_t i = 0; i < K; ++i) mu0[i] = std::max(opts.mu_floor, 0.5 * double(st.counts[i]) / T);
    res.model = HawkesModel::make(mu0, Matrix::square(K, 0.1 / double(K)), beta, T);
    if (seq.size() < opts.min_events) {
        res.report.excluded_reason = "insufficient data: " + std::to_string(seq.size()) + " events < " +
                                     std::to_string(opts.min_events);
        return res;
    }

    const detail::Box box{opts.mu_floor};
    const std::size_t P = K + K * K;
    auto evaluate = [&](const std::vector<double>& x, bool grad) {
        Matrix alpha(K, K);
        std::copy(x.begin() + K, x.end(), alpha.flat().begin());
        return log_likelihood(st, std::span<const double>(x.data(), K), alpha, grad);
    };
    auto flat_grad = [&](const LikelihoodResult& r) { return detail::pack(r.grad_mu, r.grad_alpha); };

    std::vector<double> x = detail::pack(res.model.mu, res.model.alpha);
    LikelihoodResult cur = evaluate(x, true);
    if (!std::isfinite(cur.value)) throw Error("fit: non-finite log-likelihood at the initial point");
    std::vector<double> g = flat_grad(cur);
    FitReport& rep = res.report;
    rep.initial_log_likelihood = cur.value;
    rep.trace.push_back(cur.value);

    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    double step = gmax > 0.0 ? 1e-2 / gmax : 1.0;
    std::vector<double> x_new(P), g_new;
    rep.gradient_norm = detail::projected_gradient_norm(x, g, box, K);

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (rep.gradient_norm <= opts.gradient_tolerance) {
            rep.converged = true;
            break;
        }
        bool accepted = false;
        LikelihoodResult trial;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            for (std::size_t p = 0; p < P; ++p) x_new[p] = x[p] + step * g[p];
            box.project(x_new, K);
            double directional = 0.0;
            for (std::size_t p = 0; p < P; ++p) directional += g[p] * (x_new[p] - x[p]);
            if (directional <= 0.0) break;  // projection left no ascent direction
            trial = evaluate(x_new, true);
            if (std::isfinite(trial.value) && trial.value >= cur.value + opts.armijo_c * directional) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No further ascent available at working precision.
            rep.converged = true;
            break;
        }
        g_new = flat_grad(trial);
        // BB1 step for ascent: s's / -(s'y), with y = g_new - g.
        double ss = 0.0, sy = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            const double s = x_new[p] - x[p];
            ss += s * s;
            sy += s * (g_new[p] - g[p]);
        }
        const double improvement = trial.value - cur.value;
        const double prev_value = cur.value;
        x.swap(x_new);
        g.swap(g_new);
        cur = std::move(trial);
        rep.trace.push_back(cur.value);
        rep.gradient_norm = detail::projected_gradient_norm(x, g, box, K);
        step = sy < 0.0 ? std::clamp(ss / -sy, 1e-12, 1e12) : std::min(step * 4.0, 1e12);
        if (improvement < opts.relative_ll_tolerance * std::abs(prev_value)) {
            rep.converged = true;
            ++it;
            break;
        }
    }
    rep.iterations = it;
    rep.log_likelihood = cur.value;
    std::copy(x.begin(), x.begin() + K, res.model.mu.begin());
    std::copy(x.begin() + K, x.end(), res.model.alpha.flat().begin());
    return res;
}

// ---------------------------------------------------------------------------
// Simulation

inline constexpr std::size_t kSimulationEventCap = 1'000'000;

// Ogata thinning on [0, T). Between events every kernel decays, so the total
// intensity just after the current time bounds it until the next event.
inline TimedSequence simulate(const HawkesModel& model, double T, std::uint64_t seed,
                              std::size_t max_events = kSimulationEventCap) {
    model.validate();
    if (!(T > 0.0)) throw Error("simulate: horizon must be positive");
    const std::size_t K = model.K;
    if (model.branching_radius() >= 1.0)
        std::cerr << "warning: simulating a supercritical Hawkes model (spectral radius >= 1); capping at "
                  << max_events << " events\n";
    Rng rng(seed);
    TimedSequence out;
    out.horizon = T;
    Matrix A(K, K);  // kernel sums at the current time
    std::vector<double> lambda(K);
    auto refresh = [&]() {
        double total = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
            lambda[i] = model.mu[i] + dot(model.alpha.row(i), A.row(i));
            total += lambda[i];
        }
        return total;
    };
    double t = 0.0;
    double bound = refresh();
    while (out.size() < max_events) {
        if (!(bound > 0.0)) break;
        const double dt = exponential(rng, bound);
        t += dt;
        if (!(t < T)) break;
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) A(i, j) *= std::exp(-model.beta(i, j) * dt);
        const double total = refresh();
        if (uniform01(rng) * bound < total) {
            double r = uniform01(rng) * total;
            std::size_t k = 0;
            while (k + 1 < K && r >= lambda[k]) r -= lambda[k++];
            if (!out.times.empty() && !(t > out.times.back())) continue;  // zero-length gap at double resolution
            out.times.push_back(t);
            out.marks.push_back(int(k));
            for (std::size_t i = 0; i < K; ++i) A(i, k) += model.beta(i, k);
            bound = refresh();
        } else {
            bound = total;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Goodness of fit

inline constexpr std::size_t kMinEventsForKS = 5;

struct TopicDiagnostic {
    std::size_t events = 0;
    bool insufficient = false;
    double ks_statistic = 0.0;
    double critical_value = 0.0;
    bool pass = false;
};

// Kolmogorov-Smirnov statistic of a sample against Exp(1).
inline double ks_exponential(std::vector<double> sample) {
    std::sort(sample.begin(), sample.end());
    const double n = double(sample.size());
    double d = 0.0;
    for (std::size_t k = 0; k < sample.size(); ++k) {
        const double F = -std::expm1(-sample[k]);
        d = std::max({d, double(k + 1) / n - F, F - double(k) / n});
    }
    return d;
}

// Time-rescaling check: compensator increments between successive events
// of each topic are i.i.d. Exp(1) under the true model. 5% asymptotic
// critical value 1.358 / sqrt(n).
inline std::vector<TopicDiagnostic> residual_diagnostics(const HawkesModel& model, const TimedSequence& seq) {
    const auto trace = compensator(model, seq);
    std::vector<std::vector<double>> gaps(model.K);
    std::vector<double> last(model.K, 0.0);
    for (std::size_t n = 0; n < seq.size(); ++n) {
        const std::size_t k = std::size_t(seq.marks[n]);
        gaps[k].push_back(trace.at_event[n] - last[k]);
        last[k] = trace.at_event[n];
    }
    std::vector<TopicDiagnostic> out(model.K);
    for (std::size_t i = 0; i < model.K; ++i) {
        TopicDiagnostic& d = out[i];
        d.events = gaps[i].size();
        if (d.events < kMinEventsForKS) {
            d.insufficient = true;
            continue;
        }
        d.ks_statistic = ks_exponential(gaps[i]);
        d.critical_value = 1.358 / std::sqrt(double(d.events));
        d.pass = d.ks_statistic <= d.critical_value;
    }
    return out;
}

} // namespace hawkesdx
