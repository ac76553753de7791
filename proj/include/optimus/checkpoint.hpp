#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "common.hpp"
#include "dataset_io.hpp"
#include "model.hpp"
#include "train.hpp"

namespace optimus {

struct Checkpoint {
    SiameseModel<float> model;
    TrainConfig train_config;
};

inline constexpr int checkpoint_format = 1;

inline nlohmann::json to_json(const EncoderConfig& c) {
    return {{"input_channels", c.input_channels}, {"stages", c.stages}, {"kernel", c.kernel}, {"stride", c.stride},
            {"embedding_dim", c.embedding_dim()}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.stages = j.at("stages").get<std::vector<int>>();
    c.kernel = j.at("kernel").get<int>();
    c.stride = j.at("stride").get<int>();
    c.validate();
    if (j.contains("embedding_dim") && j["embedding_dim"].get<int>() != c.embedding_dim())
        throw Error("embedding_dim does not equal the last stage width");
    return c;
}

/// JSON container: configs plus every tensor as {name, shape, data}.
inline nlohmann::json checkpoint_to_json(const SiameseModel<float>& model, const TrainConfig& train_config) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t layer = 0;
    model.params.for_each_tensor([&](const std::string& name, const std::vector<float>& v) {
        std::vector<int> shape;
        if (name.starts_with("conv")) {
            const auto& l = model.params.conv[layer];
            if (name.ends_with(".weight"))
                shape = {l.out_channels, l.in_channels, l.kernel, l.kernel};
            else {
                shape = {l.out_channels};
                ++layer;
            }
        } else if (name == "head.weight") {
            shape = {2, 2 * model.config.embedding_dim()};
        } else {
            shape = {2};
        }
        tensors.push_back({{"name", name}, {"shape", shape}, {"data", v}});
    });
    return {{"format", checkpoint_format},
            {"encoder", to_json(model.config)},
            {"train", to_json(train_config)},
            {"tensors", std::move(tensors)}};
}

/// Rebuilds a model; rejects tensors that disagree with the stored encoder
/// config, and the whole checkpoint if `expected` is given and differs.
inline Checkpoint checkpoint_from_json(const nlohmann::json& j, const std::optional<EncoderConfig>& expected = std::nullopt,
                                       const std::string& origin = "checkpoint") {
    try {
        if (j.at("format").get<int>() != checkpoint_format)
            throw Error(origin + ": unsupported checkpoint format");
        Checkpoint ck;
        ck.model.config = encoder_config_from_json(j.at("encoder"));
        ck.train_config = train_config_from_json(j.at("train"));
        if (expected && !(*expected == ck.model.config))
            throw Error(origin + ": encoder config does not match the expected configuration");
        if (ck.train_config.context != ck.model.config.context())
            throw Error(origin + ": training context disagrees with encoder input channels");
        ck.model.params = ModelParams<float>::zeros(ck.model.config);
        const auto& tensors = j.at("tensors");
        std::size_t k = 0;
        ck.model.params.for_each_tensor([&](const std::string& name, std::vector<float>& v) {
            if (k >= tensors.size())
                throw Error(origin + ": missing tensor " + name);
            const auto& t = tensors[k++];
            if (t.at("name").get<std::string>() != name)
                throw Error(origin + ": expected tensor " + name + ", found " + t.at("name").get<std::string>());
            auto data = t.at("data").get<std::vector<float>>();
            std::size_t count = 1;
            for (int d : t.at("shape").get<std::vector<int>>())
                count *= static_cast<std::size_t>(d);
            if (data.size() != v.size() || count != v.size())
                throw Error(origin + ": tensor " + name + " has the wrong shape for this encoder");
            v = std::move(data);
        });
        if (k != tensors.size())
            throw Error(origin + ": unexpected extra tensors");
        check_compatible(ck.model.config, ck.model.params);
        return ck;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(origin + ": malformed checkpoint (" + ex.what() + ")");
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const SiameseModel<float>& model, const TrainConfig& train_config) {
    write_file(path, checkpoint_to_json(model, train_config).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<EncoderConfig>& expected = std::nullopt) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& ex) {
        throw Error(path.string() + ": invalid JSON (" + ex.what() + ")");
    }
    return checkpoint_from_json(j, expected, path.string());
}

}  // namespace optimus
