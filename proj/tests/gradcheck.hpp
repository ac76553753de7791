#pragma once

// Central finite differences against the analytic backward pass, in double precision.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "optimus.hpp"

namespace gradcheck {

using namespace optimus;

struct Setup {
    EncoderConfig config = EncoderConfig::for_context(1, {4, 5});
    int edge = 8;
    int batch = 3;
    double h = 1e-5;
    double floor = 1e-8;  // denominators below this count as zero gradient
};

struct Outcome {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t step_reductions = 0;
};

inline double exact_loss(std::span<const TrainingExample<double>> batch, const ModelParams<double>& p, int stride) {
    double total = 0.0;
    for (const auto& ex : batch) {
        const auto e1 = encoder_forward(ex.first, p, stride);
        const auto e2 = encoder_forward(ex.second, p, stride);
        const double gap = head_logit_gap<double>(e1, e2, p);
        total += ex.label ? detail::softplus(-gap) : detail::softplus(gap);
    }
    return total / static_cast<double>(batch.size());
}

/// Which ReLUs are active, over every tower of every example.
inline std::vector<bool> activation_pattern(std::span<const TrainingExample<double>> batch, const ModelParams<double>& p, int stride) {
    std::vector<bool> out;
    detail::TowerCache<double> cache;
    for (const auto& ex : batch)
        for (const auto* t : {&ex.first, &ex.second}) {
            detail::tower_forward(*t, p, stride, cache);
            for (const auto& st : cache.stages)
                for (Eigen::Index i = 0; i < st.act.size(); ++i)
                    out.push_back(st.act.data()[i] > 0.0);
        }
    return out;
}

inline std::vector<TrainingExample<double>> random_batch(const Setup& s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int ch = s.config.input_channels;
    std::vector<TrainingExample<double>> batch;
    for (int b = 0; b < s.batch; ++b) {
        TrainingExample<double> ex;
        for (auto* t : {&ex.first, &ex.second}) {
            t->channels = ch;
            t->height = s.edge;
            t->width = s.edge;
            t->data.resize(static_cast<std::size_t>(ch) * s.edge * s.edge);
            for (auto& v : t->data)
                v = u(rng);
        }
        ex.label = b % 2;
        batch.push_back(std::move(ex));
    }
    return batch;
}

inline ModelParams<double> random_params(const EncoderConfig& cfg, std::mt19937_64& rng) {
    auto p = ModelParams<double>::zeros(cfg);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    p.for_each_tensor([&](const std::string&, std::vector<double>& v) {
        for (auto& x : v)
            x = u(rng);
    });
    return p;
}

/// Checks every parameter. When a ReLU flips inside [theta - h, theta + h] the
/// loss is not differentiable on that interval, so the step shrinks until no
/// flip occurs.
inline Outcome check_batch(const Setup& s, const std::vector<TrainingExample<double>>& batch, ModelParams<double> p) {
    const int stride = s.config.stride;
    const auto analytic = gradients<double>(batch, p, stride).grads;
    const auto base_pattern = activation_pattern(batch, p, stride);

    std::vector<const std::vector<double>*> grads;
    analytic.for_each_tensor([&](const std::string&, const std::vector<double>& v) { grads.push_back(&v); });
    std::vector<std::vector<double>*> tensors;
    p.for_each_tensor([&](const std::string&, std::vector<double>& v) { tensors.push_back(&v); });

    Outcome out;
    for (std::size_t t = 0; t < tensors.size(); ++t)
        for (std::size_t i = 0; i < tensors[t]->size(); ++i) {
            double& theta = (*tensors[t])[i];
            const double orig = theta;
            double h = s.h, numeric = 0.0;
            for (int attempt = 0; attempt < 6; ++attempt, h /= 10.0) {
                theta = orig + h;
                const double lp = exact_loss(batch, p, stride);
                const bool same_plus = activation_pattern(batch, p, stride) == base_pattern;
                theta = orig - h;
                const double lm = exact_loss(batch, p, stride);
                const bool same_minus = activation_pattern(batch, p, stride) == base_pattern;
                numeric = (lp - lm) / (2.0 * h);
                if (same_plus && same_minus)
                    break;
                ++out.step_reductions;
            }
            theta = orig;
            const double a = (*grads[t])[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), s.floor});
            out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
            ++out.checked;
        }
    return out;
}

/// Runs `batches` independent random (params, batch) draws.
inline Outcome run(const Setup& s, int batches, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Outcome total;
    for (int k = 0; k < batches; ++k) {
        const auto p = random_params(s.config, rng);
        const auto batch = random_batch(s, rng);
        const auto o = check_batch(s, batch, p);
        total.max_rel_error = std::max(total.max_rel_error, o.max_rel_error);
        total.checked += o.checked;
        total.step_reductions += o.step_reductions;
    }
    return total;
}

}  // namespace gradcheck
