#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "common.hpp"
#include "dataset_io.hpp"
#include "labels.hpp"
#include "scoring.hpp"

namespace optimus {

/// Everything the triage endpoints read. The dataset and score tables are
/// never written; the label store is the only mutable part.
struct ServeState {
    std::filesystem::path dataset_root;
    Manifest manifest;
    std::map<std::string, ChangeResult> scores;
    std::map<std::string, ScoreSeries> score_series;
    LabelStore* labels = nullptr;
};

inline ServeState make_serve_state(const std::filesystem::path& dataset_root, const std::vector<ChangeResult>& results,
                                   const std::vector<ScoreSeries>& series_scores, LabelStore& labels) {
    ServeState st;
    st.dataset_root = dataset_root;
    st.manifest = load_manifest(dataset_root / "manifest.json");
    for (const auto& r : results) {
        if (!st.manifest.find(r.series_id))
            throw Error("score table names unknown series '" + r.series_id + "'");
        st.scores[r.series_id] = r;
    }
    for (const auto& s : series_scores) {
        if (!st.manifest.find(s.parent_id))
            throw Error("score series names unknown series '" + s.parent_id + "'");
        st.score_series[s.parent_id] = s;
    }
    st.labels = &labels;
    return st;
}

namespace detail {

inline void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void error_reply(httplib::Response& res, int status, const std::string& message) {
    json_reply(res, status, {{"error", message}});
}

inline std::optional<long long> parse_nonnegative(const std::string& s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v < 0)
        return std::nullopt;
    return v;
}

inline nlohmann::json optional_json(const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace detail

inline constexpr long long default_page_limit = 50;

/// Registers the triage API on `server`. `state` must outlive the server.
inline void register_routes(httplib::Server& server, const ServeState& state) {
    using nlohmann::json;

    server.Get("/api/series", [&state](const httplib::Request& req, httplib::Response& res) {
        const std::string sort = req.has_param("sort") ? req.get_param_value("sort") : "score";
        if (sort != "score" && sort != "id")
            return detail::error_reply(res, 400, "sort must be 'score' or 'id'");
        const std::string order = req.has_param("order") ? req.get_param_value("order") : (sort == "score" ? "desc" : "asc");
        if (order != "asc" && order != "desc")
            return detail::error_reply(res, 400, "order must be 'asc' or 'desc'");
        long long offset = 0, limit = default_page_limit;
        if (req.has_param("offset")) {
            auto v = detail::parse_nonnegative(req.get_param_value("offset"));
            if (!v)
                return detail::error_reply(res, 400, "offset must be a non-negative integer");
            offset = *v;
        }
        if (req.has_param("limit")) {
            auto v = detail::parse_nonnegative(req.get_param_value("limit"));
            if (!v)
                return detail::error_reply(res, 400, "limit must be a non-negative integer");
            limit = *v;
        }

        std::vector<const ManifestEntry*> rows;
        for (const auto& e : state.manifest.series)
            rows.push_back(&e);
        const bool desc = order == "desc";
        auto score_of = [&](const ManifestEntry* e) -> std::optional<double> {
            auto it = state.scores.find(e->id);
            return it == state.scores.end() ? std::nullopt : std::optional(it->second.score);
        };
        // Unscored series always come last; equal keys fall back to id ascending.
        std::stable_sort(rows.begin(), rows.end(), [&](const ManifestEntry* a, const ManifestEntry* b) {
            if (sort == "score") {
                const auto sa = score_of(a), sb = score_of(b);
                if (sa.has_value() != sb.has_value())
                    return sa.has_value();
                if (sa && *sa != *sb)
                    return desc ? *sa > *sb : *sa < *sb;
                return a->id < b->id;
            }
            return desc ? a->id > b->id : a->id < b->id;
        });

        json items = json::array();
        const auto total = static_cast<long long>(rows.size());
        for (long long i = offset; i < total && i < offset + limit; ++i) {
            const auto* e = rows[static_cast<std::size_t>(i)];
            const auto s = state.scores.find(e->id);
            const bool has = s != state.scores.end();
            items.push_back({{"id", e->id},
                             {"n", e->n},
                             {"change_score", has ? json(s->second.score) : json(nullptr)},
                             {"pivot_month", has ? detail::optional_json(s->second.pivot_month) : json(nullptr)},
                             {"labeled", state.labels->labeled(e->id)}});
        }
        detail::json_reply(res, 200, {{"items", std::move(items)}, {"total", total}, {"offset", offset}, {"limit", limit}});
    });

    server.Get(R"(/api/series/([^/]+))", [&state](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto* e = state.manifest.find(id);
        if (!e)
            return detail::error_reply(res, 404, "unknown series '" + id + "'");
        json body = {{"id", e->id},
                     {"n", e->n},
                     {"height", e->height},
                     {"width", e->width},
                     {"timestamps", e->timestamps},
                     {"image_format", "ppm"},
                     {"image_content_type", "image/x-portable-pixmap"},
                     {"labeled", state.labels->labeled(e->id)}};
        if (auto s = state.scores.find(id); s != state.scores.end()) {
            body["measure"] = to_string(s->second.measure);
            body["change_score"] = s->second.score;
            body["pivot_index"] = detail::optional_json(s->second.pivot_index);
            body["pivot_month"] = detail::optional_json(s->second.pivot_month);
        } else {
            body["measure"] = nullptr;
            body["change_score"] = nullptr;
            body["pivot_index"] = nullptr;
            body["pivot_month"] = nullptr;
        }
        if (auto s = state.score_series.find(id); s != state.score_series.end())
            body["scores"] = {{"query_indices", s->second.query_indices},
                              {"timestamps", s->second.timestamps},
                              {"values", s->second.values}};
        else
            body["scores"] = nullptr;
        detail::json_reply(res, 200, body);
    });

    server.Get(R"(/api/series/([^/]+)/image/([^/]+))", [&state](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto* e = state.manifest.find(id);
        if (!e)
            return detail::error_reply(res, 404, "unknown series '" + id + "'");
        const auto index = detail::parse_nonnegative(req.matches[2]);
        if (!index || *index >= e->n)
            return detail::error_reply(res, 404, "series '" + id + "' has no image " + std::string(req.matches[2]));
        try {
            const auto path = state.dataset_root / e->directory / frame_name(static_cast<std::size_t>(*index), "ppm");
            res.status = 200;
            res.set_content(read_file(path), "image/x-portable-pixmap");
        } catch (const std::exception& ex) {
            detail::error_reply(res, 500, ex.what());
        }
    });

    server.Post(R"(/api/series/([^/]+)/label)", [&state](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!state.manifest.find(id))
            return detail::error_reply(res, 404, "unknown series '" + id + "'");
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            return detail::error_reply(res, 400, "body is not valid JSON");
        }
        if (!body.is_object() || !body.contains("label") || !body["label"].is_number_integer())
            return detail::error_reply(res, 400, "label must be the integer 0 or 1");
        const auto label = body["label"].get<long long>();
        if (label != 0 && label != 1)
            return detail::error_reply(res, 400, "label must be the integer 0 or 1");
        if (!body.contains("annotator") || !body["annotator"].is_string() || body["annotator"].get<std::string>().empty())
            return detail::error_reply(res, 400, "annotator must be a non-empty string");
        try {
            const auto r = state.labels->add(id, static_cast<int>(label), body["annotator"].get<std::string>(), LabelSource::human);
            detail::json_reply(res, 200, to_json(r));
        } catch (const std::exception& ex) {
            detail::error_reply(res, 500, ex.what());
        }
    });

    server.Get("/api/labels/export", [&state](const httplib::Request&, httplib::Response& res) {
        res.status = 200;
        res.set_content(export_jsonl(state.labels->active()), "application/x-ndjson");
    });
}

}  // namespace optimus
