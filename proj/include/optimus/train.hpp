#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "common.hpp"
#include "model.hpp"
#include "sampler.hpp"

namespace optimus {

struct TrainConfig {
    double learning_rate = 3e-4;
    int batch_size = 5;
    int epochs = 5;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double train_fraction = 0.8;
    int context = 3;
    std::vector<int> stages{16, 32, 64, 64};
    // An epoch draws this many triplets per training series.
    int triplets_per_series = 32;
    int validation_triplets_per_series = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw Error("train fraction must lie strictly between 0 and 1");
        if (!(learning_rate > 0.0))
            throw Error("learning rate must be positive");
        if (batch_size < 1 || epochs < 0 || context < 1 || triplets_per_series < 1 || validation_triplets_per_series < 0)
            throw Error("batch size, context and triplet counts must be positive");
        if (weight_decay < 0 || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0))
            throw Error("invalid optimizer hyperparameters");
    }

    AdamWConfig optimizer() const { return {learning_rate, beta1, beta2, epsilon, weight_decay}; }
    EncoderConfig encoder() const { return EncoderConfig::for_context(context, stages); }
};

struct EpochStats {
    int epoch = 0;
    long steps = 0;
    double train_loss = 0.0;
    double validation_loss = std::numeric_limits<double>::quiet_NaN();
    double validation_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    SiameseModel<float> model;
    TrainReport report;
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"train_fraction", c.train_fraction},
            {"context", c.context},
            {"stages", c.stages},
            {"triplets_per_series", c.triplets_per_series},
            {"validation_triplets_per_series", c.validation_triplets_per_series},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.context = j.value("context", c.context);
    c.stages = j.value("stages", c.stages);
    c.triplets_per_series = j.value("triplets_per_series", c.triplets_per_series);
    c.validation_triplets_per_series = j.value("validation_triplets_per_series", c.validation_triplets_per_series);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline nlohmann::json to_json(const TrainReport& r) {
    nlohmann::json epochs = nlohmann::json::array();
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"steps", e.steps},
                          {"train_loss", num(e.train_loss)},
                          {"validation_loss", num(e.validation_loss)},
                          {"validation_accuracy", num(e.validation_accuracy)}});
    return {{"train_ids", r.train_ids}, {"validation_ids", r.validation_ids}, {"epochs", std::move(epochs)}};
}

/// Series-level split: a shuffled index order, the first `round(f * N)` for training.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                                   std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, n > 0 ? 1 : 0, n > 1 ? n - 1 : n);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {train, val};
}

/// Accuracy (prediction > 0.5 agrees with the label) and mean loss on fixed examples.
template <class T>
std::pair<double, double> evaluate_triplets(const SiameseModel<T>& model, std::span<const TrainingExample<T>> examples) {
    if (examples.empty())
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    std::size_t correct = 0;
    double total = 0.0;
    for (const auto& ex : examples) {
        const double w = model.predict(ex.first, ex.second);
        correct += (w > 0.5) == (ex.label == 1);
        total += loss(Prediction{w}, ex.label);
    }
    return {static_cast<double>(correct) / static_cast<double>(examples.size()), total / static_cast<double>(examples.size())};
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains a fresh classifier. Deterministic for a given dataset and config.
inline TrainResult train(std::span<const TimeSeries> dataset, const TrainConfig& config, const EpochCallback& on_epoch = {}) {
    config.validate();
    if (dataset.empty())
        throw Error("cannot train on an empty dataset");

    auto [train_idx, val_idx] = split_indices(dataset.size(), config.train_fraction, derive_seed(config.seed, 0));
    TrainResult result;
    std::vector<const TimeSeries*> pool;
    for (auto i : train_idx) {
        result.report.train_ids.push_back(dataset[i].id);
        if (static_cast<int>(dataset[i].size()) >= min_series_length(config.context))
            pool.push_back(&dataset[i]);
    }
    for (auto i : val_idx)
        result.report.validation_ids.push_back(dataset[i].id);
    if (pool.empty())
        throw Error("no training series has the " + std::to_string(min_series_length(config.context)) +
                    " images needed for context " + std::to_string(config.context));

    std::vector<TrainingExample<float>> val_examples;
    {
        std::mt19937_64 vrng(derive_seed(config.seed, 2));
        for (auto i : val_idx) {
            const TimeSeries& s = dataset[i];
            if (static_cast<int>(s.size()) < min_series_length(config.context))
                continue;
            for (int k = 0; k < config.validation_triplets_per_series; ++k)
                val_examples.push_back(make_example<float>(s, sample_triplet(s, config.context, vrng)));
        }
    }

    auto& model = result.model;
    model.config = config.encoder();
    model.params = init_params<float>(model.config, derive_seed(config.seed, 1));
    auto moments = AdamMoments<float>::zeros_like(model.params);
    const auto opt = config.optimizer();
    std::mt19937_64 rng(derive_seed(config.seed, 3));

    const long steps_per_epoch =
        (static_cast<long>(config.triplets_per_series) * static_cast<long>(train_idx.size()) + config.batch_size - 1) /
        config.batch_size;
    long step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (long s = 0; s < steps_per_epoch; ++s) {
            const auto batch = sample_batch<float>(pool, config.batch_size, config.context, rng);
            auto g = gradients<float>(batch, model.params, model.config.stride);
            optimizer_step(model.params, g.grads, moments, opt, ++step);
            loss_sum += g.mean_loss;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.steps = steps_per_epoch;
        stats.train_loss = loss_sum / static_cast<double>(std::max(1L, steps_per_epoch));
        std::tie(stats.validation_accuracy, stats.validation_loss) = evaluate_triplets<float>(model, val_examples);
        result.report.epochs.push_back(stats);
        if (on_epoch)
            on_epoch(stats);
    }
    return result;
}

}  // namespace optimus
