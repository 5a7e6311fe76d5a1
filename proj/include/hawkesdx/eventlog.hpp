#pragma once

// Per-user activity logs: data model, JSONL/CSV ingestion, observation
// windows and conversion to relative event times.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hawkesdx/error.hpp"

namespace hawkesdx {

using EpochSeconds = std::int64_t;

inline constexpr EpochSeconds kSecondsPerDay = 86'400;
inline constexpr int kDepressedCutoff = 15;
inline constexpr std::size_t kDefaultMinEvents = 20;
inline constexpr double kTieStepDays = 1e-9;

enum class Source { search, youtube };
enum class Label { Healthy = 0, Depressed = 1 };

inline std::string_view to_string(Source s) { return s == Source::search ? "search" : "youtube"; }
inline std::string_view to_string(Label l) { return l == Label::Depressed ? "Depressed" : "Healthy"; }

inline Label label_from_phq9(int phq9) {
    if (phq9 < 0 || phq9 > 27) throw Error("phq9 out of range [0, 27]: " + std::to_string(phq9));
    return phq9 >= kDepressedCutoff ? Label::Depressed : Label::Healthy;
}

struct Event {
    EpochSeconds timestamp = 0;
    Source source = Source::search;
    std::optional<std::string> text;
    std::optional<std::vector<double>> embedding;
    std::optional<int> topic;

    bool usable() const noexcept { return text || embedding || topic; }
};

enum class DurationSpec { w2, w4, m3, m6, m12, full };

inline constexpr DurationSpec kAllDurations[] = {DurationSpec::w2, DurationSpec::w4, DurationSpec::m3,
                                                 DurationSpec::m6, DurationSpec::m12, DurationSpec::full};

inline std::string_view to_string(DurationSpec d) {
    switch (d) {
    case DurationSpec::w2: return "2w";
    case DurationSpec::w4: return "4w";
    case DurationSpec::m3: return "3m";
    case DurationSpec::m6: return "6m";
    case DurationSpec::m12: return "12m";
    case DurationSpec::full: return "full";
    }
    return "full";
}

inline DurationSpec parse_duration(std::string_view s) {
    for (DurationSpec d : kAllDurations)
        if (to_string(d) == s) return d;
    throw Error("unknown duration '" + std::string(s) + "' (expected 2w, 4w, 3m, 6m, 12m or full)");
}

// Week = 7 days, month = 30 days. Empty for `full`.
inline std::optional<EpochSeconds> duration_seconds(DurationSpec d) {
    switch (d) {
    case DurationSpec::w2: return 14 * kSecondsPerDay;
    case DurationSpec::w4: return 28 * kSecondsPerDay;
    case DurationSpec::m3: return 90 * kSecondsPerDay;
    case DurationSpec::m6: return 180 * kSecondsPerDay;
    case DurationSpec::m12: return 360 * kSecondsPerDay;
    case DurationSpec::full: return std::nullopt;
    }
    return std::nullopt;
}

// Half-open [start, end).
struct ObservationWindow {
    EpochSeconds start = 0;
    EpochSeconds end = 0;
    DurationSpec duration = DurationSpec::full;

    double horizon_days() const { return double(end - start) / double(kSecondsPerDay); }
};

struct UserLog {
    std::string user_id;
    std::vector<Event> events;  // non-decreasing timestamps
    EpochSeconds survey_time = 0;
    int phq9 = 0;
    Label label = Label::Healthy;
    std::optional<ObservationWindow> window;
    bool insufficient_data = false;
};

inline UserLog make_user_log(std::string user_id, std::vector<Event> events, EpochSeconds survey_time, int phq9) {
    UserLog log;
    log.user_id = std::move(user_id);
    log.label = label_from_phq9(phq9);
    log.phq9 = phq9;
    log.survey_time = survey_time;
    log.events = std::move(events);
    std::stable_sort(log.events.begin(), log.events.end(), [](const Event& a, const Event& b) {
        return a.timestamp < b.timestamp;
    });
    return log;
}

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

inline bool parse_int(std::string_view s, std::int64_t& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool parse_fixed_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    out = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        out = out * 10 + (s[i] - '0');
    }
    return true;
}

} // namespace detail

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" with optional fractional
// seconds (truncated) and an optional "Z" or "+HH:MM"/"-HH:MM" suffix.
// A missing suffix means UTC.
inline EpochSeconds parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    auto fail = [&]() -> EpochSeconds { throw Error("invalid ISO-8601 timestamp '" + std::string(s) + "'"); };
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (!detail::parse_fixed_digits(s, 0, 4, y) || s.size() < 10 || s[4] != '-' || s[7] != '-' ||
        !detail::parse_fixed_digits(s, 5, 2, mo) || !detail::parse_fixed_digits(s, 8, 2, d))
        return fail();
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        if (s.size() < pos + 9 || s[pos + 3] != ':' || s[pos + 6] != ':' ||
            !detail::parse_fixed_digits(s, pos + 1, 2, h) || !detail::parse_fixed_digits(s, pos + 4, 2, mi) ||
            !detail::parse_fixed_digits(s, pos + 7, 2, sec))
            return fail();
        pos += 9;
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        }
    }
    std::int64_t offset = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            ++pos;
        } else if ((s[pos] == '+' || s[pos] == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
            int oh = 0, om = 0;
            if (!detail::parse_fixed_digits(s, pos + 1, 2, oh) || !detail::parse_fixed_digits(s, pos + 4, 2, om))
                return fail();
            offset = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
            pos += 6;
        } else {
            return fail();
        }
    }
    const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return fail();
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return EpochSeconds(days) * kSecondsPerDay + h * 3600 + mi * 60 + sec - offset;
}

inline std::string format_iso8601(EpochSeconds t) {
    using namespace std::chrono;
    const auto days = t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
    const auto rem = t - days * kSecondsPerDay;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(rem / 3600), int(rem % 3600 / 60), int(rem % 60));
    return buf;
}

inline EpochSeconds parse_timestamp_text(std::string_view s) {
    std::int64_t v = 0;
    if (detail::parse_int(s, v)) return v;
    return parse_iso8601(s);
}

// Integer epoch seconds or an ISO-8601 string.
inline EpochSeconds parse_timestamp(const nlohmann::json& j) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) {
        const double v = j.get<double>();
        if (!std::isfinite(v)) throw Error("non-finite timestamp");
        return static_cast<EpochSeconds>(std::floor(v));
    }
    if (j.is_string()) return parse_timestamp_text(j.get_ref<const std::string&>());
    throw Error("timestamp must be an integer or an ISO-8601 string");
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestReport {
    std::size_t users = 0;
    std::size_t events = 0;
    std::size_t unlabeled_users = 0;  // in events, missing from labels
    std::size_t unsorted_warnings = 0;
    std::size_t insufficient_data_users = 0;
    std::vector<std::string> users_without_events;  // in labels, missing from events

    nlohmann::json to_json() const {
        return {{"users", users},
                {"events", events},
                {"unlabeled_users", unlabeled_users},
                {"unsorted_warnings", unsorted_warnings},
                {"insufficient_data_users", insufficient_data_users},
                {"users_without_events", users_without_events}};
    }
};

struct Cohort {
    std::vector<UserLog> users;  // sorted by user_id
    IngestReport report;
};

inline Event parse_event_json(const nlohmann::json& j, std::string& user_id) {
    if (!j.is_object()) throw Error("expected a JSON object");
    if (!j.contains("user_id") || !j["user_id"].is_string()) throw Error("missing string field 'user_id'");
    if (!j.contains("ts")) throw Error("missing field 'ts'");
    user_id = j["user_id"].get<std::string>();
    Event e;
    e.timestamp = parse_timestamp(j["ts"]);
    const std::string src = j.value("source", std::string("search"));
    if (src == "search") e.source = Source::search;
    else if (src == "youtube") e.source = Source::youtube;
    else throw Error("unknown source '" + src + "'");
    if (auto it = j.find("text"); it != j.end() && !it->is_null()) e.text = it->get<std::string>();
    if (auto it = j.find("embedding"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw Error("'embedding' must be an array");
        std::vector<double> v;
        v.reserve(it->size());
        for (const auto& x : *it) {
            if (!x.is_number()) throw Error("'embedding' entries must be numbers");
            v.push_back(x.get<double>());
            if (!std::isfinite(v.back())) throw Error("non-finite embedding entry");
        }
        e.embedding = std::move(v);
    }
    if (auto it = j.find("topic"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw Error("'topic' must be an integer");
        const int t = it->get<int>();
        if (t < 0) throw Error("'topic' must be non-negative");
        e.topic = t;
    }
    if (!e.usable()) throw Error("event has none of text, embedding, topic");
    return e;
}

inline nlohmann::json event_to_json(const std::string& user_id, const Event& e) {
    nlohmann::json j = {{"user_id", user_id}, {"ts", e.timestamp}, {"source", to_string(e.source)}};
    if (e.text) j["text"] = *e.text;
    if (e.embedding) j["embedding"] = *e.embedding;
    if (e.topic) j["topic"] = *e.topic;
    return j;
}

struct LabelRow {
    int phq9 = 0;
    EpochSeconds survey_time = 0;
};

inline std::map<std::string, LabelRow> read_labels_csv(std::istream& in) {
    std::map<std::string, LabelRow> out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line != "user_id,phq9,survey_ts")
                throw Error("labels.csv line 1: expected header 'user_id,phq9,survey_ts'");
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 3) throw Error("labels.csv line " + std::to_string(line_no) + ": expected 3 columns");
        std::int64_t phq9 = 0;
        if (!detail::parse_int(cells[1], phq9))
            throw Error("labels.csv line " + std::to_string(line_no) + ": phq9 is not an integer");
        if (phq9 < 0 || phq9 > 27)
            throw Error("labels.csv line " + std::to_string(line_no) + ": phq9 out of range [0, 27]");
        LabelRow row;
        row.phq9 = int(phq9);
        try {
            row.survey_time = parse_timestamp_text(cells[2]);
        } catch (const Error& e) {
            throw Error("labels.csv line " + std::to_string(line_no) + ": " + e.what());
        }
        out[cells[0]] = row;
    }
    return out;
}

// Reads events JSONL and labels CSV, joins on user_id. Users present on only
// one side are counted in the report and dropped.
inline Cohort ingest_events(std::istream& events_in, std::istream& labels_in) {
    const auto labels = read_labels_csv(labels_in);
    std::map<std::string, std::vector<Event>> by_user;
    std::map<std::string, EpochSeconds> last_ts;
    Cohort cohort;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(events_in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string user_id;
        Event e;
        try {
            e = parse_event_json(nlohmann::json::parse(line), user_id);
        } catch (const std::exception& ex) {
            throw Error("events.jsonl line " + std::to_string(line_no) + ": " + ex.what());
        }
        auto [it, inserted] = last_ts.try_emplace(user_id, e.timestamp);
        if (!inserted) {
            if (e.timestamp < it->second) ++cohort.report.unsorted_warnings;
            else it->second = e.timestamp;
        }
        by_user[user_id].push_back(std::move(e));
    }
    for (auto& [user_id, events] : by_user) {
        auto lab = labels.find(user_id);
        if (lab == labels.end()) {
            ++cohort.report.unlabeled_users;
            continue;
        }
        cohort.report.events += events.size();
        cohort.users.push_back(make_user_log(user_id, std::move(events), lab->second.survey_time, lab->second.phq9));
    }
    for (const auto& [user_id, row] : labels)
        if (!by_user.count(user_id)) cohort.report.users_without_events.push_back(user_id);
    cohort.report.users = cohort.users.size();
    return cohort;
}

inline Cohort ingest_events(const std::string& events_path, const std::string& labels_path) {
    std::ifstream ev(events_path);
    if (!ev) throw Error("cannot open events file '" + events_path + "'");
    std::ifstream lab(labels_path);
    if (!lab) throw Error("cannot open labels file '" + labels_path + "'");
    return ingest_events(ev, lab);
}

// ---------------------------------------------------------------------------
// Windows

inline ObservationWindow make_window(const UserLog& log, DurationSpec spec) {
    ObservationWindow w;
    w.duration = spec;
    w.end = log.survey_time;
    if (auto d = duration_seconds(spec)) {
        w.start = log.survey_time - *d;
    } else {
        // The earliest event anchors an untruncated log.
        w.start = log.survey_time - 1;
        if (!log.events.empty()) w.start = std::min(w.start, log.events.front().timestamp);
    }
    return w;
}

// Index range [first, last) of the (sorted) events inside the window.
inline std::pair<std::size_t, std::size_t> window_range(const UserLog& log, const ObservationWindow& w) {
    auto ts_less = [](const Event& e, EpochSeconds t) { return e.timestamp < t; };
    const auto lo = std::lower_bound(log.events.begin(), log.events.end(), w.start, ts_less);
    const auto hi = std::lower_bound(lo, log.events.end(), w.end, ts_less);
    return {std::size_t(lo - log.events.begin()), std::size_t(hi - log.events.begin())};
}

// Events with timestamp in [survey - D, survey). Flags (does not throw) when
// fewer than `min_events` remain.
inline UserLog truncate(const UserLog& log, DurationSpec spec, std::size_t min_events = kDefaultMinEvents) {
    UserLog out;
    out.user_id = log.user_id;
    out.survey_time = log.survey_time;
    out.phq9 = log.phq9;
    out.label = log.label;
    const ObservationWindow w = make_window(log, spec);
    const auto [lo, hi] = window_range(log, w);
    out.events.assign(log.events.begin() + std::ptrdiff_t(lo), log.events.begin() + std::ptrdiff_t(hi));
    out.window = w;
    out.insufficient_data = out.events.size() < min_events;
    return out;
}

// Event times in days since window start, strictly increasing.
struct TimedSequence {
    std::vector<double> times;
    std::vector<int> marks;
    double horizon = 0.0;

    std::size_t size() const noexcept { return times.size(); }
};

// `topics`, when given, overrides the per-event topic field (index-aligned
// with log.events).
inline TimedSequence to_relative_days(const UserLog& log, const ObservationWindow& window,
                                      std::span<const int> topics = {}) {
    if (!(window.start < window.end)) throw Error("observation window is empty");
    if (!topics.empty() && topics.size() != log.events.size())
        throw Error("topic assignment length does not match the event count");
    TimedSequence seq;
    seq.horizon = window.horizon_days();
    seq.times.reserve(log.events.size());
    seq.marks.reserve(log.events.size());
    EpochSeconds prev = 0;
    std::size_t tie_rank = 0;
    for (std::size_t n = 0; n < log.events.size(); ++n) {
        const Event& e = log.events[n];
        if (e.timestamp < window.start || e.timestamp >= window.end)
            throw Error("event outside the observation window");
        int topic = -1;
        if (!topics.empty()) topic = topics[n];
        else if (e.topic) topic = *e.topic;
        if (topic < 0) throw Error("untopiced event");
        if (n > 0 && e.timestamp < prev) throw Error("events are not sorted by timestamp");
        tie_rank = (n > 0 && e.timestamp == prev) ? tie_rank + 1 : 0;
        prev = e.timestamp;
        seq.times.push_back(double(e.timestamp - window.start) / double(kSecondsPerDay) +
                            kTieStepDays * double(tie_rank));
        seq.marks.push_back(topic);
    }
    return seq;
}

} // namespace hawkesdx
