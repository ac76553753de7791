#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "common.hpp"

namespace optimus {

enum class LabelSource { human, simulator };

inline std::string to_string(LabelSource s) { return s == LabelSource::human ? "human" : "simulator"; }

inline LabelSource label_source_from_string(const std::string& s) {
    if (s == "human")
        return LabelSource::human;
    if (s == "simulator")
        return LabelSource::simulator;
    throw Error("unknown label source '" + s + "'");
}

struct LabelRecord {
    std::string target;  // series or patch id
    int label = 0;
    std::string annotator;
    std::string timestamp;  // ISO-8601, UTC
    LabelSource source = LabelSource::human;

    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

inline std::string iso8601_utc(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json to_json(const LabelRecord& r) {
    return {{"target", r.target}, {"label", r.label}, {"annotator", r.annotator}, {"timestamp", r.timestamp},
            {"source", to_string(r.source)}};
}

inline LabelRecord label_record_from_json(const nlohmann::json& j) {
    LabelRecord r;
    try {
        r.target = j.at("target").get<std::string>();
        r.label = j.at("label").get<int>();
        r.annotator = j.at("annotator").get<std::string>();
        r.timestamp = j.at("timestamp").get<std::string>();
        r.source = label_source_from_string(j.at("source").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
        throw Error(std::string("malformed label record: ") + ex.what());
    }
    if (r.label != 0 && r.label != 1)
        throw Error("label of '" + r.target + "' must be 0 or 1");
    if (r.target.empty())
        throw Error("label record has an empty target");
    return r;
}

/// Latest record per (target, annotator), in log order of the superseding record's key.
class ActiveLabels {
public:
    void apply(const LabelRecord& r) { active_[{r.target, r.annotator}] = r; }

    std::vector<LabelRecord> records() const {
        std::vector<LabelRecord> out;
        for (const auto& [key, r] : active_)
            out.push_back(r);
        return out;
    }

    bool has_target(const std::string& target) const {
        auto it = active_.lower_bound({target, std::string()});
        return it != active_.end() && it->first.first == target;
    }

    std::size_t size() const { return active_.size(); }

private:
    std::map<std::pair<std::string, std::string>, LabelRecord> active_;
};

/// Parses a JSON-lines log; blank lines are skipped, a bad line is an error naming its line number.
inline std::vector<LabelRecord> parse_label_log(const std::string& text, const std::string& origin = "label log") {
    std::vector<LabelRecord> out;
    std::istringstream in(text);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            out.push_back(label_record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& ex) {
            throw Error(origin + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

inline ActiveLabels replay(const std::vector<LabelRecord>& log) {
    ActiveLabels a;
    for (const auto& r : log)
        a.apply(r);
    return a;
}

/// Append-only JSON-lines store. Appends are serialized through one mutex and
/// flushed before returning; the in-memory view always equals a replay of the file.
class LabelStore {
public:
    using Clock = std::function<std::chrono::system_clock::time_point()>;

    explicit LabelStore(std::filesystem::path path, Clock clock = [] { return std::chrono::system_clock::now(); })
        : path_(std::move(path)), clock_(std::move(clock)) {
        if (std::filesystem::exists(path_)) {
            std::ifstream in(path_, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            for (const auto& r : parse_label_log(ss.str(), path_.string()))
                active_.apply(r);
        }
    }

    LabelRecord add(const std::string& target, int label, const std::string& annotator, LabelSource source = LabelSource::human) {
        if (label != 0 && label != 1)
            throw Error("label must be 0 or 1");
        if (target.empty())
            throw Error("label target must not be empty");
        LabelRecord r{target, label, annotator, iso8601_utc(clock_()), source};
        std::lock_guard lock(mutex_);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out)
            throw Error("cannot open label log " + path_.string());
        out << to_json(r).dump() << '\n';
        out.flush();
        if (!out)
            throw Error("failed to append to label log " + path_.string());
        active_.apply(r);
        return r;
    }

    std::vector<LabelRecord> active() const {
        std::lock_guard lock(mutex_);
        return active_.records();
    }

    bool labeled(const std::string& target) const {
        std::lock_guard lock(mutex_);
        return active_.has_target(target);
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    Clock clock_;
    mutable std::mutex mutex_;
    ActiveLabels active_;
};

inline std::string export_jsonl(const std::vector<LabelRecord>& records) {
    std::string out;
    for (const auto& r : records)
        out += to_json(r).dump() + "\n";
    return out;
}

}  // namespace optimus
