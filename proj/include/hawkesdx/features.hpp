#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/hawkes.hpp"

namespace hawkesdx {

inline constexpr double kPhiEpsilon = 1e-8;

enum class FeatureKind { mu, phi };

inline std::string_view to_string(FeatureKind k) { return k == FeatureKind::mu ? "mu" : "phi"; }

inline FeatureKind parse_feature_kind(std::string_view s) {
    if (s == "mu") return FeatureKind::mu;
    if (s == "phi") return FeatureKind::phi;
    throw Error("unknown feature kind '" + std::string(s) + "' (expected mu or phi)");
}

struct FeatureVector {
    std::string user_id;
    FeatureKind kind = FeatureKind::mu;
    std::vector<double> values;
    Label label = Label::Healthy;
};

// Baseline rates, verbatim.
inline FeatureVector extract_mu(const HawkesModel& model, std::string user_id = {}, Label label = Label::Healthy) {
    return {std::move(user_id), FeatureKind::mu, model.mu, label};
}

// phi_i = (sum_j alpha_ij + eps) / (sum_j alpha_ji + eps): excitation a
// topic receives over excitation it emits. Self-loops count on both sides.
inline FeatureVector extract_phi(const HawkesModel& model, std::string user_id = {}, Label label = Label::Healthy) {
    const std::size_t K = model.K;
    std::vector<double> phi(K);
    for (std::size_t i = 0; i < K; ++i) {
        double in = 0.0, out = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            in += model.alpha(i, j);
            out += model.alpha(j, i);
        }
        phi[i] = (in + kPhiEpsilon) / (out + kPhiEpsilon);
    }
    return {std::move(user_id), FeatureKind::phi, std::move(phi), label};
}

inline FeatureVector extract(const HawkesModel& model, FeatureKind kind, std::string user_id = {},
                             Label label = Label::Healthy) {
    return kind == FeatureKind::mu ? extract_mu(model, std::move(user_id), label)
                                   : extract_phi(model, std::move(user_id), label);
}

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stdev;  // population; < 1e-12 replaced by 1

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != mean.size()) throw Error("standardize: feature length mismatch");
        std::vector<double> z(x.size());
        for (std::size_t c = 0; c < x.size(); ++c) z[c] = (x[c] - mean[c]) / stdev[c];
        return z;
    }
};

inline Standardizer fit_standardizer(const std::vector<FeatureVector>& train) {
    if (train.empty()) throw Error("standardize: empty training set");
    const std::size_t d = train.front().values.size();
    const FeatureKind kind = train.front().kind;
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stdev.assign(d, 0.0);
    for (const auto& f : train) {
        if (f.kind != kind) throw Error("standardize: mixed feature kinds");
        if (f.values.size() != d) throw Error("standardize: feature length mismatch");
        for (std::size_t c = 0; c < d; ++c) s.mean[c] += f.values[c];
    }
    const double n = double(train.size());
    for (double& m : s.mean) m /= n;
    for (const auto& f : train)
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = f.values[c] - s.mean[c];
            s.stdev[c] += dv * dv;
        }
    for (double& v : s.stdev) {
        v = std::sqrt(v / n);
        if (v < 1e-12) v = 1.0;
    }
    return s;
}

struct Standardized {
    std::vector<FeatureVector> train;
    std::vector<FeatureVector> apply;
    Standardizer params;
};

// z-scores both sets with statistics from `train` only.
inline Standardized standardize(const std::vector<FeatureVector>& train, const std::vector<FeatureVector>& apply) {
    Standardized out;
    out.params = fit_standardizer(train);
    const FeatureKind kind = train.front().kind;
    auto transform = [&](const std::vector<FeatureVector>& in) {
        std::vector<FeatureVector> res = in;
        for (auto& f : res) {
            if (f.kind != kind) throw Error("standardize: mixed feature kinds");
            f.values = out.params.apply(f.values);
        }
        return res;
    };
    out.train = transform(train);
    out.apply = transform(apply);
    return out;
}

// features.csv: user_id,label,kind,f0,...,f{K-1}. label is 1 for Depressed.
inline void write_features_csv(std::ostream& os, const std::vector<FeatureVector>& features) {
    const std::size_t K = features.empty() ? 0 : features.front().values.size();
    os << "user_id,label,kind";
    for (std::size_t c = 0; c < K; ++c) os << ",f" << c;
    os << '\n';
    char buf[32];
    for (const auto& f : features) {
        os << f.user_id << ',' << int(f.label) << ',' << to_string(f.kind);
        for (double v : f.values) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

} // namespace hawkesdx
