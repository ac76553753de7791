#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "common.hpp"
#include "image.hpp"
#include "scene.hpp"

namespace optimus {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Portable pixmaps

inline std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline float dequantize(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Binary P6 encoding, 8 bits per channel.
inline std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out[header + i] = static_cast<char>(quantize(img.pixels[i]));
    return out;
}

namespace detail {

struct PnmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 1;
    std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::string& bytes, bool with_maxval, const std::string& origin) {
    PnmHeader h;
    std::size_t pos = 0;
    auto fail = [&](const std::string& why) { return Error(origin + ": corrupt header (" + why + ")"); };
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() {
        skip_space();
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        if (start == pos)
            throw fail("expected integer");
        if (pos - start > 9)
            throw fail("integer too large");
        return std::stoi(bytes.substr(start, pos - start));
    };
    if (bytes.size() < 2)
        throw fail("truncated");
    h.magic = bytes.substr(0, 2);
    pos = 2;
    h.width = read_int();
    h.height = read_int();
    if (with_maxval)
        h.maxval = read_int();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw fail("missing separator before raster");
    h.data_offset = pos + 1;
    if (h.width <= 0 || h.height <= 0)
        throw fail("non-positive dimensions");
    return h;
}

}  // namespace detail

inline Image decode_ppm(const std::string& bytes, const std::string& origin = "<memory>") {
    auto h = detail::parse_pnm_header(bytes, true, origin);
    if (h.magic != "P6")
        throw Error(origin + ": corrupt header (not a binary P6 pixmap)");
    if (h.maxval != 255)
        throw Error(origin + ": corrupt header (only maxval 255 is supported)");
    Image img(h.height, h.width);
    if (bytes.size() - h.data_offset != img.pixels.size())
        throw Error(origin + ": raster size does not match header");
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = dequantize(static_cast<std::uint8_t>(bytes[h.data_offset + i]));
    return img;
}

/// Binary P4 bitmap of a mask (1 = cloud).
inline std::string encode_pbm(const std::vector<std::uint8_t>& mask, int height, int width) {
    std::string out = "P4\n" + std::to_string(width) + " " + std::to_string(height) + "\n";
    const int row_bytes = (width + 7) / 8;
    for (int y = 0; y < height; ++y) {
        std::string row(static_cast<std::size_t>(row_bytes), '\0');
        for (int x = 0; x < width; ++x)
            if (mask[static_cast<std::size_t>(y) * width + x])
                row[static_cast<std::size_t>(x / 8)] = static_cast<char>(row[static_cast<std::size_t>(x / 8)] | (0x80 >> (x % 8)));
        out += row;
    }
    return out;
}

inline std::vector<std::uint8_t> decode_pbm(const std::string& bytes, int height, int width, const std::string& origin) {
    auto h = detail::parse_pnm_header(bytes, false, origin);
    if (h.magic != "P4")
        throw Error(origin + ": corrupt header (not a binary P4 bitmap)");
    if (h.width != width || h.height != height)
        throw Error(origin + ": mask size does not match its image");
    const int row_bytes = (width + 7) / 8;
    if (bytes.size() - h.data_offset != static_cast<std::size_t>(row_bytes) * height)
        throw Error(origin + ": raster size does not match header");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const auto byte = static_cast<unsigned char>(bytes[h.data_offset + static_cast<std::size_t>(y) * row_bytes + x / 8]);
            mask[static_cast<std::size_t>(y) * width + x] = (byte >> (7 - x % 8)) & 1;
        }
    return mask;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error(p.string() + ": cannot open for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(p.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(p.string() + ": write failed");
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
    std::string id;
    std::string directory;  // relative to the dataset root
    int n = 0;
    int height = 0;
    int width = 0;
    std::vector<int> timestamps;
    std::optional<bool> changed;
    std::optional<ChangeEvent> event;
    bool cloud_masks = false;
};

struct Manifest {
    static constexpr int format_version = 1;
    std::vector<ManifestEntry> series;

    const ManifestEntry* find(const std::string& id) const {
        auto it = std::find_if(series.begin(), series.end(), [&](const auto& e) { return e.id == id; });
        return it == series.end() ? nullptr : &*it;
    }
};

struct Dataset {
    std::vector<TimeSeries> series;
    Manifest manifest;
};

inline nlohmann::json to_json(const ChangeEvent& ev) {
    return {{"kind", to_string(ev.kind)},
            {"onset_month", ev.onset_month},
            {"region", {{"row", ev.region.row}, {"col", ev.region.col}, {"height", ev.region.height}, {"width", ev.region.width}}},
            {"delta", {ev.delta[0], ev.delta[1], ev.delta[2]}},
            {"ramp_duration", ev.ramp_duration}};
}

inline ChangeEvent change_event_from_json(const nlohmann::json& j) {
    ChangeEvent ev;
    ev.kind = change_kind_from_string(j.at("kind").get<std::string>());
    ev.onset_month = j.at("onset_month").get<int>();
    const auto& r = j.at("region");
    ev.region = {r.at("row").get<int>(), r.at("col").get<int>(), r.at("height").get<int>(), r.at("width").get<int>()};
    const auto& d = j.at("delta");
    for (std::size_t i = 0; i < 3; ++i)
        ev.delta[i] = d.at(i).get<float>();
    ev.ramp_duration = j.value("ramp_duration", 0);
    return ev;
}

inline nlohmann::json to_json(const Manifest& m) {
    nlohmann::json series = nlohmann::json::array();
    for (const auto& e : m.series) {
        nlohmann::json j = {{"id", e.id},           {"directory", e.directory}, {"n", e.n},
                            {"height", e.height},   {"width", e.width},         {"timestamps", e.timestamps},
                            {"cloud_masks", e.cloud_masks}};
        if (e.changed)
            j["changed"] = *e.changed;
        if (e.event)
            j["event"] = to_json(*e.event);
        series.push_back(std::move(j));
    }
    return {{"format", Manifest::format_version}, {"series", std::move(series)}};
}

inline Manifest manifest_from_json(const nlohmann::json& j, const std::string& origin = "manifest") {
    try {
        if (j.at("format").get<int>() != Manifest::format_version)
            throw Error(origin + ": unsupported manifest format " + j.at("format").dump());
        Manifest m;
        for (const auto& s : j.at("series")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            e.directory = s.value("directory", e.id);
            e.n = s.at("n").get<int>();
            e.height = s.value("height", 0);
            e.width = s.value("width", 0);
            e.timestamps = s.at("timestamps").get<std::vector<int>>();
            if (s.contains("changed") && !s["changed"].is_null())
                e.changed = s["changed"].get<bool>();
            if (s.contains("event") && !s["event"].is_null())
                e.event = change_event_from_json(s["event"]);
            e.cloud_masks = s.value("cloud_masks", false);
            if (static_cast<int>(e.timestamps.size()) != e.n)
                throw Error(origin + ": series '" + e.id + "' lists " + std::to_string(e.timestamps.size()) +
                            " timestamps for n = " + std::to_string(e.n));
            m.series.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(origin + ": malformed manifest (" + ex.what() + ")");
    }
}

inline Manifest load_manifest(const fs::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(path.string() + ": invalid JSON (" + ex.what() + ")");
    }
    return manifest_from_json(j, path.string());
}

/// Manifest entry describing `s`, with ground truth taken from the scene spec that produced it.
inline ManifestEntry manifest_entry(const TimeSeries& s, const std::optional<SceneSpec>& spec = std::nullopt) {
    ManifestEntry e;
    e.id = s.id;
    e.directory = s.id;
    e.n = static_cast<int>(s.size());
    e.height = s.height();
    e.width = s.width();
    e.timestamps = s.timestamps;
    e.cloud_masks = !s.images.empty() &&
                    std::all_of(s.images.begin(), s.images.end(), [](const Image& i) { return i.cloud_mask.has_value(); });
    if (spec) {
        e.changed = spec->change.has_value();
        e.event = spec->change;
    }
    return e;
}

inline std::string frame_name(std::size_t index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.%s", index, ext);
    return buf;
}

/// Writes `<root>/manifest.json`, `<root>/<dir>/<index:04>.ppm` and, where
/// recorded, `<root>/<dir>/clouds/<index:04>.pbm`.
inline void save_dataset(const Dataset& ds, const fs::path& root) {
    if (ds.series.size() != ds.manifest.series.size())
        throw Error("manifest lists " + std::to_string(ds.manifest.series.size()) + " series, dataset holds " +
                    std::to_string(ds.series.size()));
    fs::create_directories(root);
    for (std::size_t k = 0; k < ds.series.size(); ++k) {
        const auto& s = ds.series[k];
        const auto& e = ds.manifest.series[k];
        if (e.id != s.id || e.n != static_cast<int>(s.size()))
            throw Error("manifest entry " + std::to_string(k) + " does not describe series '" + s.id + "'");
        const fs::path dir = root / e.directory;
        fs::create_directories(dir);
        for (std::size_t i = 0; i < s.images.size(); ++i) {
            write_file(dir / frame_name(i, "ppm"), encode_ppm(s.images[i]));
            if (e.cloud_masks) {
                fs::create_directories(dir / "clouds");
                const auto& img = s.images[i];
                write_file(dir / "clouds" / frame_name(i, "pbm"), encode_pbm(*img.cloud_mask, img.height, img.width));
            }
        }
    }
    write_file(root / "manifest.json", to_json(ds.manifest).dump(2) + "\n");
}

inline Dataset load_dataset(const fs::path& root) {
    Dataset ds;
    ds.manifest = load_manifest(root / "manifest.json");
    for (const auto& e : ds.manifest.series) {
        const fs::path dir = root / e.directory;
        if (!fs::is_directory(dir))
            throw Error(dir.string() + ": series directory missing");
        std::size_t files = 0;
        for (const auto& f : fs::directory_iterator(dir))
            if (f.is_regular_file() && f.path().extension() == ".ppm")
                ++files;
        if (files != static_cast<std::size_t>(e.n))
            throw Error(dir.string() + ": holds " + std::to_string(files) + " images, manifest says " + std::to_string(e.n));
        TimeSeries s;
        s.id = e.id;
        s.timestamps = e.timestamps;
        for (std::size_t i = 0; i < static_cast<std::size_t>(e.n); ++i) {
            const fs::path p = dir / frame_name(i, "ppm");
            Image img = decode_ppm(read_file(p), p.string());
            if (e.cloud_masks) {
                const fs::path mp = dir / "clouds" / frame_name(i, "pbm");
                img.cloud_mask = decode_pbm(read_file(mp), img.height, img.width, mp.string());
            }
            s.images.push_back(std::move(img));
        }
        ds.series.push_back(std::move(s));
    }
    return ds;
}

/// Quantizes every channel to the 8-bit grid, the state a dataset is in after one save/load.
inline void quantize_in_place(TimeSeries& s) {
    for (auto& img : s.images)
        for (auto& v : img.pixels)
            v = dequantize(quantize(v));
}

}  // namespace optimus
