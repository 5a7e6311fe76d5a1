// hawkesdx: topic-level Hawkes features for activity-log classification.
//
//   hawkesdx synth    --out DIR [--n-depressed N --n-healthy N --K K ...]
//   hawkesdx topics   --events F --labels F --out DIR [--K K --sigma S]
//   hawkesdx fit-user --events F --labels F --out DIR --user ID [--K --sigma --D]
//   hawkesdx run      --events F --labels F --out DIR [--K --sigma --C --D --kind]
//   hawkesdx grid     --events F --labels F --out DIR [--config FILE]
//
// Exit codes: 0 success, 1 usage/config/data error, 2 insufficient data.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hawkesdx/hawkesdx.hpp"

namespace fs = std::filesystem;
using namespace hawkesdx;

namespace {

struct StageError : Error {
    StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what) {}
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InsufficientData& e) {
        throw InsufficientData(name + ": " + e.what());
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

struct CliArgs {
    std::string events, labels, out, config, user;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    bool dry_run = false;
    std::optional<std::size_t> K;
    std::optional<double> sigma, C;
    std::optional<std::string> D;
    std::vector<std::string> kinds;
    std::optional<double> beta_base, beta_ratio;
    std::optional<std::size_t> min_events;
    bool no_standardize = false;

    // synth
    SyntheticSpec synth;
};

struct Resolved {
    std::string events, labels, out;
    GridSpec grid;
    bool grid_from_config = false;
    PipelineOptions opts;
};

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        throw Error("config file '" + path + "': " + e.what());
    }
}

Resolved resolve(const CliArgs& a, GridSpec default_grid) {
    Resolved r;
    r.grid = std::move(default_grid);
    r.opts.jobs = std::max(1u, std::thread::hardware_concurrency());
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        r.events = j.value("events", std::string());
        r.labels = j.value("labels", std::string());
        r.out = j.value("out", std::string());
        if (j.contains("grid")) {
            r.grid = grid_from_json(j["grid"]);
            r.grid_from_config = true;
        }
        r.opts.beta_base = j.value("beta_base", r.opts.beta_base);
        r.opts.beta_ratio = j.value("beta_ratio", r.opts.beta_ratio);
        r.opts.min_events = j.value("min_events", r.opts.min_events);
        r.opts.seed = j.value("seed", r.opts.seed);
        r.opts.jobs = j.value("jobs", r.opts.jobs);
        r.opts.standardize = j.value("standardize", r.opts.standardize);
    }
    if (!a.events.empty()) r.events = a.events;
    if (!a.labels.empty()) r.labels = a.labels;
    if (!a.out.empty()) r.out = a.out;
    if (a.seed) r.opts.seed = *a.seed;
    if (a.jobs) r.opts.jobs = std::max(1u, *a.jobs);
    if (a.beta_base) r.opts.beta_base = *a.beta_base;
    if (a.beta_ratio) r.opts.beta_ratio = *a.beta_ratio;
    if (a.min_events) r.opts.min_events = *a.min_events;
    if (a.no_standardize) r.opts.standardize = false;
    if (a.K) r.grid.K = {*a.K};
    if (a.sigma) r.grid.sigma = {*a.sigma};
    if (a.C) r.grid.C = {*a.C};
    if (a.D) r.grid.D = {parse_duration(*a.D)};
    if (!a.kinds.empty()) {
        r.grid.kinds.clear();
        for (const auto& k : a.kinds) r.grid.kinds.push_back(parse_feature_kind(k));
    }
    r.grid.validate();
    if (r.events.empty() || r.labels.empty()) throw Error("--events and --labels are required");
    if (!fs::exists(r.events)) throw Error("events file '" + r.events + "' does not exist");
    if (!fs::exists(r.labels)) throw Error("labels file '" + r.labels + "' does not exist");
    return r;
}

nlohmann::json options_json(const Resolved& r) {
    return {{"events", r.events},
            {"labels", r.labels},
            {"out", r.out},
            {"grid", to_json(r.grid)},
            {"beta_base", r.opts.beta_base},
            {"beta_ratio", r.opts.beta_ratio},
            {"min_events", r.opts.min_events},
            {"seed", r.opts.seed},
            {"standardize", r.opts.standardize}};
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    return format_iso8601(EpochSeconds(t));
}

std::string number_tag(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Cohort load(const Resolved& r) {
    auto cohort = stage("ingest", [&] { return ingest_events(r.events, r.labels); });
    if (cohort.report.unsorted_warnings)
        std::cerr << "warning: " << cohort.report.unsorted_warnings << " out-of-order events were sorted\n";
    if (cohort.users.empty()) std::cerr << "warning: 0 users\n";
    return cohort;
}

// ---------------------------------------------------------------------------

int cmd_pipeline(const CliArgs& a, bool single_default) {
    GridSpec def = single_default ? GridSpec::single(10, 0.01, 1.0, DurationSpec::m6) : GridSpec{};
    const Resolved r = stage("config", [&] { return resolve(a, def); });
    if (r.out.empty() && !a.dry_run) throw StageError("config", "--out is required");
    const Cohort cohort = load(r);
    if (a.dry_run) {
        const auto source = stage("topics", [&] { return detect_topic_source(cohort); });
        std::size_t configs = r.grid.size();
        if (source == TopicSource::given) configs = configs / r.grid.K.size();
        std::cout << "plan: " << configs << " configurations, " << cohort.users.size() << " users, "
                  << cohort.report.events << " events, topics "
                  << (source == TopicSource::clustered ? "clustered from embeddings" : "taken from event labels")
                  << "\n";
        return 0;
    }
    const fs::path out(r.out);
    fs::create_directories(out);
    const bool write_models = single_default;
    std::size_t insufficient = 0;

    FitObserver observer = [&](const CohortTopics& topics, DurationSpec D, const std::vector<UserFit>& fits) {
        std::size_t excluded = 0;
        for (const auto& f : fits) excluded += f.excluded;
        insufficient = std::max(insufficient, excluded);
        if (!write_models) return;
        const std::string tag =
            "K" + std::to_string(topics.model.K) + "_sigma" + number_tag(topics.model.sigma) + "_D" + std::string(to_string(D));
        const fs::path dir = out / "models" / tag;
        fs::create_directories(dir);
        const std::string ref = topic_model_hash(topics.model);
        write_text(out / ("topics_K" + std::to_string(topics.model.K) + "_sigma" + number_tag(topics.model.sigma) + ".json"),
                   to_json(topics.model).dump(1) + "\n");
        for (const auto& f : fits) write_text(dir / (f.user_id + ".json"), fitted_model_json(f, ref).dump(1) + "\n");
        fs::create_directories(out / "features");
        for (FeatureKind kind : r.grid.kinds) {
            std::ostringstream os;
            write_features_csv(os, cohort_features(fits, kind));
            write_text(out / "features" / (tag + "_" + std::string(to_string(kind)) + ".csv"), os.str());
        }
    };
    const auto results = stage("grid", [&] { return grid_search(cohort, r.grid, r.opts, observer); });

    stage("report", [&] {
        write_text(out / "report.json", report_json(results).dump(1) + "\n");
        std::ostringstream csv;
        write_report_csv(csv, results);
        write_text(out / "report.csv", csv.str());
        IngestReport ingest = cohort.report;
        ingest.insufficient_data_users = insufficient;
        write_text(out / "ingest_report.json", ingest.to_json().dump(1) + "\n");
        nlohmann::json run = {{"generated_at", now_iso8601()},
                              {"options", options_json(r)},
                              {"configurations", results.size()},
                              {"ingest", ingest.to_json()}};
        if (!results.empty() && results.front().valid) run["best"] = to_json(results.front());
        write_text(out / "run.json", run.dump(1) + "\n");
        return 0;
    });

    std::cout << "users " << cohort.users.size() << ", configurations " << results.size() << "\n";
    for (const auto& c : results) {
        if (!c.valid) continue;
        std::printf("#%d K=%zu sigma=%g C=%g D=%s kind=%s  weighted F1 %.3f +- %.3f  AUC %.3f +- %.3f\n", c.rank,
                    c.K, c.sigma, c.C, std::string(to_string(c.D)).c_str(), std::string(to_string(c.kind)).c_str(),
                    c.report.weighted_f1(), c.report.stdev[8], c.report.auc(), c.report.stdev[9]);
        if (c.rank >= 10) break;
    }
    if (std::none_of(results.begin(), results.end(), [](const ConfigResult& c) { return c.valid; })) {
        std::cerr << "error: no valid configuration (insufficient data)\n";
        return 2;
    }
    return 0;
}

int cmd_topics(const CliArgs& a) {
    const Resolved r = stage("config", [&] { return resolve(a, GridSpec::single(10, 0.01, 1.0, DurationSpec::m6)); });
    if (r.out.empty()) throw StageError("config", "--out is required");
    const Cohort cohort = load(r);
    auto topics = stage("topics", [&] { return build_topics(cohort, r.grid.K.front(), r.opts.seed, r.opts.kmeans); });
    stage("topics", [&] {
        attach_cohort_decay(topics, r.grid.sigma.front(), r.opts.beta_base, r.opts.beta_ratio);
        return 0;
    });
    fs::create_directories(r.out);
    write_text(fs::path(r.out) / "topics.json", to_json(topics.model).dump(1) + "\n");
    std::cout << "K " << topics.model.K << ", inertia " << topics.model.inertia << ", hash "
              << topic_model_hash(topics.model) << "\n";
    return 0;
}

int cmd_fit_user(const CliArgs& a) {
    if (a.user.empty()) throw StageError("config", "--user is required");
    const Resolved r = stage("config", [&] { return resolve(a, GridSpec::single(10, 0.01, 1.0, DurationSpec::m6)); });
    if (r.out.empty()) throw StageError("config", "--out is required");
    const Cohort cohort = load(r);
    const auto it = std::find_if(cohort.users.begin(), cohort.users.end(),
                                 [&](const UserLog& u) { return u.user_id == a.user; });
    if (it == cohort.users.end()) throw StageError("fit-user", "unknown user '" + a.user + "'");
    const std::size_t idx = std::size_t(it - cohort.users.begin());
    auto topics = stage("topics", [&] { return build_topics(cohort, r.grid.K.front(), r.opts.seed, r.opts.kmeans); });
    stage("topics", [&] {
        attach_cohort_decay(topics, r.grid.sigma.front(), r.opts.beta_base, r.opts.beta_ratio);
        return 0;
    });
    FitOptions fo = r.opts.fit;
    fo.min_events = r.opts.min_events;
    const auto fitted =
        stage("fit", [&] { return fit_user(*it, topics.labels[idx], topics.model.beta, r.grid.D.front(), fo); });
    fs::create_directories(r.out);
    auto j = fitted_model_json(fitted, topic_model_hash(topics.model));
    j["report"] = {{"log_likelihood", fitted.report.log_likelihood},
                   {"initial_log_likelihood", fitted.report.initial_log_likelihood},
                   {"iterations", fitted.report.iterations},
                   {"converged", fitted.report.converged},
                   {"gradient_norm", fitted.report.gradient_norm}};
    write_text(fs::path(r.out) / (a.user + ".json"), j.dump(1) + "\n");
    if (fitted.excluded) {
        std::cerr << "error: " << *fitted.report.excluded_reason << "\n";
        return 2;
    }
    std::cout << a.user << ": " << fitted.events << " events, ll " << fitted.report.log_likelihood << ", converged "
              << (fitted.report.converged ? "true" : "false") << " after " << fitted.report.iterations
              << " iterations\n";
    return 0;
}

int cmd_synth(const CliArgs& a) {
    if (a.out.empty()) throw StageError("config", "--out is required");
    SyntheticSpec spec = a.synth;
    if (a.K) {
        spec.K = *a.K;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (auto p : spec.excited_pairs)
            if (p.first < spec.K && p.second < spec.K) pairs.push_back(p);
        spec.excited_pairs = pairs;
    }
    const std::uint64_t seed = a.seed.value_or(0);
    const auto cohort = stage("synth", [&] { return generate_cohort(spec, seed); });
    if (cohort.rescaled_draws)
        std::cerr << "note: " << cohort.rescaled_draws << " supercritical draws rescaled to spectral radius < "
                  << spec.max_spectral_radius << "\n";
    if (a.dry_run) {
        std::cout << "plan: " << cohort.users.size() << " users\n";
        return 0;
    }
    fs::create_directories(a.out);
    std::ofstream ev(fs::path(a.out) / "events.jsonl", std::ios::binary);
    std::ofstream lab(fs::path(a.out) / "labels.csv", std::ios::binary);
    if (!ev || !lab) throw StageError("synth", "cannot write to '" + a.out + "'");
    write_cohort(cohort, ev, lab);
    auto meta = to_json(spec);
    meta["seed"] = seed;
    write_text(fs::path(a.out) / "synth.json", meta.dump(1) + "\n");
    std::size_t events = 0;
    for (const auto& u : cohort.users) events += u.log.events.size();
    std::cout << "wrote " << cohort.users.size() << " users, " << events << " events to " << a.out << "\n";
    return 0;
}

void add_common(CLI::App* sub, CliArgs& a) {
    sub->add_option("--events", a.events, "events.jsonl");
    sub->add_option("--labels", a.labels, "labels.csv");
    sub->add_option("--out", a.out, "output directory");
    sub->add_option("--config", a.config, "JSON config file");
    sub->add_option("--seed", a.seed, "random seed");
    sub->add_option("--jobs", a.jobs, "worker threads (default: all cores)");
    sub->add_flag("--dry-run", a.dry_run, "print the plan and write nothing");
}

void add_model(CLI::App* sub, CliArgs& a, bool classifier) {
    sub->add_option("--K", a.K, "number of topics");
    sub->add_option("--sigma", a.sigma, "RBF bandwidth");
    sub->add_option("--D", a.D, "window: 2w, 4w, 3m, 6m, 12m or full");
    sub->add_option("--beta-base", a.beta_base, "decay rate for identical topics (1/day)");
    sub->add_option("--beta-ratio", a.beta_ratio, "decay ratio unrelated/identical topics");
    sub->add_option("--min-events", a.min_events, "minimum events in the window");
    if (classifier) {
        sub->add_option("--C", a.C, "SVM regularization");
        sub->add_option("--kind", a.kinds, "feature kind: mu or phi (repeatable)");
        sub->add_flag("--no-standardize", a.no_standardize, "skip per-fold z-scoring");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topic-level Hawkes process features and classification for activity logs"};
    app.require_subcommand(1);
    CliArgs a;

    auto* run = app.add_subcommand("run", "fit and evaluate one configuration (default K=10 sigma=0.01 C=1 D=6m)");
    add_common(run, a);
    add_model(run, a, true);
    auto* grid = app.add_subcommand("grid", "grid search over K, sigma, C, D and feature kind");
    add_common(grid, a);
    add_model(grid, a, true);
    auto* topics = app.add_subcommand("topics", "fit the cohort topic model and decay matrix");
    add_common(topics, a);
    add_model(topics, a, false);
    auto* fit_user = app.add_subcommand("fit-user", "fit one user's Hawkes model");
    add_common(fit_user, a);
    add_model(fit_user, a, false);
    fit_user->add_option("--user", a.user, "user id")->required();
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    add_common(synth, a);
    synth->add_option("--K", a.K, "number of topics");
    synth->add_option("--n-depressed", a.synth.n_depressed);
    synth->add_option("--n-healthy", a.synth.n_healthy);
    synth->add_option("--dim", a.synth.embedding_dim, "embedding dimension");
    synth->add_option("--horizon-days", a.synth.horizon_days);
    synth->add_option("--signal-days", a.synth.signal_days);
    synth->add_option("--excited-alpha", a.synth.excited_alpha);
    synth->add_option("--blob-stdev", a.synth.blob_stdev);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (synth->parsed() && !synth->count("--signal-days") && synth->count("--horizon-days"))
        a.synth.signal_days = a.synth.horizon_days;

    try {
        if (run->parsed()) return cmd_pipeline(a, true);
        if (grid->parsed()) return cmd_pipeline(a, false);
        if (topics->parsed()) return cmd_topics(a);
        if (fit_user->parsed()) return cmd_fit_user(a);
        if (synth->parsed()) return cmd_synth(a);
    } catch (const InsufficientData& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
