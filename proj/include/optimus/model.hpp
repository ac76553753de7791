#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "sampler.hpp"

namespace optimus {

/// Shared encoder: `stages.size()` blocks of (k x k conv, stride 2, ReLU),
/// then global average pooling. The embedding has `stages.back()` entries.
struct EncoderConfig {
    int input_channels = 12;
    std::vector<int> stages{16, 32, 64, 64};
    int kernel = 3;
    int stride = 2;

    int embedding_dim() const { return stages.empty() ? 0 : stages.back(); }
    int context() const { return input_channels / 3 - 1; }

    static EncoderConfig for_context(int context, std::vector<int> stages = {16, 32, 64, 64}) {
        return {3 * (context + 1), std::move(stages), 3, 2};
    }

    void validate() const {
        if (input_channels < 6 || input_channels % 3 != 0)
            throw Error("encoder input channels must be 3 * (context + 1) with context >= 1");
        if (stages.empty() || std::any_of(stages.begin(), stages.end(), [](int c) { return c < 1; }))
            throw Error("encoder needs at least one stage with positive width");
        if (kernel < 1 || kernel % 2 == 0 || stride < 1)
            throw Error("encoder kernel must be odd and stride positive");
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class T>
struct ConvLayer {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 0;
    std::vector<T> weight;  // [out][in][ky][kx]
    std::vector<T> bias;    // [out]

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Every learnable tensor of the classifier. Also used as the gradient container.
template <class T>
struct ModelParams {
    std::vector<ConvLayer<T>> conv;
    std::vector<T> head_weight;  // 2 x (2 * embedding_dim), row-major
    std::vector<T> head_bias;    // 2

    static ModelParams zeros(const EncoderConfig& cfg) {
        cfg.validate();
        ModelParams p;
        int in = cfg.input_channels;
        for (int out : cfg.stages) {
            ConvLayer<T> l;
            l.out_channels = out;
            l.in_channels = in;
            l.kernel = cfg.kernel;
            l.weight.assign(static_cast<std::size_t>(out) * in * cfg.kernel * cfg.kernel, T(0));
            l.bias.assign(static_cast<std::size_t>(out), T(0));
            p.conv.push_back(std::move(l));
            in = out;
        }
        p.head_weight.assign(static_cast<std::size_t>(2 * 2 * cfg.embedding_dim()), T(0));
        p.head_bias.assign(2, T(0));
        return p;
    }

    ModelParams zeros_like() const {
        ModelParams z = *this;
        z.for_each_tensor([](const std::string&, std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); });
        return z;
    }

    /// Visits tensors in a fixed order with stable names.
    template <class F>
    void for_each_tensor(F&& f) {
        for (std::size_t i = 0; i < conv.size(); ++i) {
            f("conv" + std::to_string(i) + ".weight", conv[i].weight);
            f("conv" + std::to_string(i) + ".bias", conv[i].bias);
        }
        f(std::string("head.weight"), head_weight);
        f(std::string("head.bias"), head_bias);
    }

    template <class F>
    void for_each_tensor(F&& f) const {
        const_cast<ModelParams*>(this)->for_each_tensor(
            [&](const std::string& name, std::vector<T>& v) { f(name, static_cast<const std::vector<T>&>(v)); });
    }

    std::size_t size() const {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, const std::vector<T>& v) { n += v.size(); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](const std::string&, const std::vector<T>& v) {
            ok = ok && std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
        });
        return ok;
    }

    template <class U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        for (const auto& l : conv)
            out.conv.push_back({l.out_channels, l.in_channels, l.kernel, std::vector<U>(l.weight.begin(), l.weight.end()),
                                std::vector<U>(l.bias.begin(), l.bias.end())});
        out.head_weight.assign(head_weight.begin(), head_weight.end());
        out.head_bias.assign(head_bias.begin(), head_bias.end());
        return out;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Uniform fan-in scaled initialization: conv weights in +-sqrt(6 / fan_in),
/// head weights in +-1 / sqrt(fan_in), zero biases.
template <class T>
ModelParams<T> init_params(const EncoderConfig& cfg, std::uint64_t seed) {
    auto p = ModelParams<T>::zeros(cfg);
    std::mt19937_64 rng(seed);
    for (auto& l : p.conv) {
        const double bound = std::sqrt(6.0 / (l.in_channels * l.kernel * l.kernel));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& w : l.weight)
            w = static_cast<T>(u(rng));
    }
    const double hb = 1.0 / std::sqrt(2.0 * cfg.embedding_dim());
    std::uniform_real_distribution<double> u(-hb, hb);
    for (auto& w : p.head_weight)
        w = static_cast<T>(u(rng));
    return p;
}

inline void check_compatible(const EncoderConfig& cfg, const auto& params) {
    if (params.conv.size() != cfg.stages.size())
        throw Error("parameter stage count does not match encoder config");
    int in = cfg.input_channels;
    for (std::size_t i = 0; i < params.conv.size(); ++i) {
        const auto& l = params.conv[i];
        if (l.in_channels != in || l.out_channels != cfg.stages[i] || l.kernel != cfg.kernel ||
            l.weight.size() != static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel ||
            l.bias.size() != static_cast<std::size_t>(l.out_channels))
            throw Error("stage " + std::to_string(i) + " parameters do not match encoder config");
        in = l.out_channels;
    }
    if (params.head_weight.size() != static_cast<std::size_t>(4 * cfg.embedding_dim()) || params.head_bias.size() != 2)
        throw Error("head parameters do not match encoder config");
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline int conv_out(int in, int kernel, int stride) { return (in + 2 * (kernel / 2) - kernel) / stride + 1; }

template <class T>
void im2col(const T* in, int channels, int h, int w, int k, int stride, int ho, int wo, Mat<T>& cols) {
    const int pad = k / 2;
    cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(ho) * wo);
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    T* dst = row + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = in + (static_cast<std::size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
}

template <class T>
void col2im(const Mat<T>& dcols, int channels, int h, int w, int k, int stride, int ho, int wo, std::vector<T>& din) {
    const int pad = k / 2;
    din.assign(static_cast<std::size_t>(channels) * h * w, T(0));
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = dcols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h)
                        continue;
                    T* dst = din.data() + (static_cast<std::size_t>(c) * h + iy) * w;
                    const T* src = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w)
                            dst[ix] += src[ox];
                    }
                }
            }
}

template <class T>
struct TowerCache {
    struct Stage {
        int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
        Mat<T> cols;  // im2col of the stage input
        Mat<T> act;   // rectified output, out_channels x (out_h * out_w)
    };
    std::vector<Stage> stages;
    Vec<T> embedding;
};

template <class T>
void tower_forward(const PairTensor<T>& x, const ModelParams<T>& p, int stride, TowerCache<T>& cache) {
    if (p.conv.empty() || x.channels != p.conv.front().in_channels)
        throw Error("pair tensor has " + std::to_string(x.channels) + " channels, encoder expects " +
                    std::to_string(p.conv.empty() ? 0 : p.conv.front().in_channels));
    if (x.data.size() != static_cast<std::size_t>(x.channels) * x.plane() || x.height < 1 || x.width < 1)
        throw Error("pair tensor buffer does not match its shape");
    cache.stages.resize(p.conv.size());
    const T* in = x.data.data();
    int h = x.height, w = x.width;
    for (std::size_t s = 0; s < p.conv.size(); ++s) {
        const auto& l = p.conv[s];
        auto& st = cache.stages[s];
        st.in_h = h;
        st.in_w = w;
        st.out_h = conv_out(h, l.kernel, stride);
        st.out_w = conv_out(w, l.kernel, stride);
        im2col(in, l.in_channels, h, w, l.kernel, stride, st.out_h, st.out_w, st.cols);
        Eigen::Map<const Mat<T>> wmat(l.weight.data(), l.out_channels, static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel);
        Eigen::Map<const Vec<T>> b(l.bias.data(), l.out_channels);
        st.act.noalias() = wmat * st.cols;
        st.act.colwise() += b;
        st.act = st.act.cwiseMax(T(0));
        in = st.act.data();
        h = st.out_h;
        w = st.out_w;
    }
    cache.embedding = cache.stages.back().act.rowwise().mean();
}

/// Backpropagates d(loss)/d(embedding) through one tower, accumulating into `g`.
template <class T>
void tower_backward(const TowerCache<T>& cache, const Vec<T>& d_embedding, const ModelParams<T>& p, int stride,
                    ModelParams<T>& g) {
    const auto& last = cache.stages.back();
    const Eigen::Index positions = last.act.cols();
    Mat<T> dact = (d_embedding / static_cast<T>(positions)).replicate(1, positions);
    std::vector<T> din;
    for (std::size_t s = cache.stages.size(); s-- > 0;) {
        const auto& st = cache.stages[s];
        const auto& l = p.conv[s];
        auto& gl = g.conv[s];
        Mat<T> dz = dact.cwiseProduct((st.act.array() > T(0)).template cast<T>().matrix());
        const Eigen::Index k = static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel;
        Eigen::Map<Mat<T>> gw(gl.weight.data(), l.out_channels, k);
        Eigen::Map<Vec<T>> gb(gl.bias.data(), l.out_channels);
        gw.noalias() += dz * st.cols.transpose();
        gb += dz.rowwise().sum();
        if (s == 0)
            break;
        Eigen::Map<const Mat<T>> wmat(l.weight.data(), l.out_channels, k);
        Mat<T> dcols = wmat.transpose() * dz;
        col2im(dcols, l.in_channels, st.in_h, st.in_w, l.kernel, stride, st.out_h, st.out_w, din);
        dact = Eigen::Map<const Mat<T>>(din.data(), l.in_channels, static_cast<Eigen::Index>(st.in_h) * st.in_w);
    }
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double clamp_probability(double w) {
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    return std::clamp(w, lo, hi);
}

}  // namespace detail

/// Probability that the query is closer to the second anchor.
struct Prediction {
    double omega = 0.5;
};

template <class T>
std::vector<T> encoder_forward(const PairTensor<T>& x, const ModelParams<T>& p, int stride = 2) {
    detail::TowerCache<T> cache;
    detail::tower_forward(x, p, stride, cache);
    return {cache.embedding.data(), cache.embedding.data() + cache.embedding.size()};
}

/// Logit difference z1 - z0 of the two-way head on concatenated embeddings.
template <class T>
double head_logit_gap(std::span<const T> e1, std::span<const T> e2, const ModelParams<T>& p) {
    const std::size_t d = e1.size();
    if (e2.size() != d || p.head_weight.size() != 4 * d)
        throw Error("embedding size does not match head");
    double z[2];
    for (std::size_t r = 0; r < 2; ++r) {
        double acc = static_cast<double>(p.head_bias[r]);
        const T* row = &p.head_weight[r * 2 * d];
        for (std::size_t i = 0; i < d; ++i)
            acc += static_cast<double>(row[i]) * static_cast<double>(e1[i]) +
                   static_cast<double>(row[d + i]) * static_cast<double>(e2[i]);
        z[r] = acc;
    }
    return z[1] - z[0];
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

template <class T>
Prediction classify(const PairTensor<T>& first, const PairTensor<T>& second, const ModelParams<T>& p, int stride = 2) {
    const auto e1 = encoder_forward(first, p, stride);
    const auto e2 = encoder_forward(second, p, stride);
    return {detail::clamp_probability(sigmoid(head_logit_gap<T>(e1, e2, p)))};
}

/// Binary cross-entropy of a prediction against label y.
inline double loss(Prediction pred, int y) {
    const double w = pred.omega;
    if (!(w > 0.0 && w < 1.0))
        throw Error("prediction outside (0,1)");
    return -(y ? std::log(w) : std::log1p(-w));
}

/// Loss of one example, with gradients accumulated into `g` scaled by `weight`.
template <class T>
double accumulate_example(const TrainingExample<T>& ex, const ModelParams<T>& p, ModelParams<T>& g, double weight,
                          int stride = 2) {
    detail::TowerCache<T> c1, c2;
    detail::tower_forward(ex.first, p, stride, c1);
    detail::tower_forward(ex.second, p, stride, c2);
    const std::span<const T> e1(c1.embedding.data(), static_cast<std::size_t>(c1.embedding.size()));
    const std::span<const T> e2(c2.embedding.data(), static_cast<std::size_t>(c2.embedding.size()));
    const double gap = head_logit_gap<T>(e1, e2, p);
    const double value = ex.label ? detail::softplus(-gap) : detail::softplus(gap);
    // d loss / d z1 = omega - y, d loss / d z0 = -(omega - y)
    const double dgap = (sigmoid(gap) - ex.label) * weight;
    const std::size_t d = e1.size();
    detail::Vec<T> de1 = detail::Vec<T>::Zero(static_cast<Eigen::Index>(d));
    detail::Vec<T> de2 = detail::Vec<T>::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < 2; ++r) {
        const double dz = r == 1 ? dgap : -dgap;
        g.head_bias[r] += static_cast<T>(dz);
        T* grow = &g.head_weight[r * 2 * d];
        const T* prow = &p.head_weight[r * 2 * d];
        for (std::size_t i = 0; i < d; ++i) {
            grow[i] += static_cast<T>(dz * static_cast<double>(e1[i]));
            grow[d + i] += static_cast<T>(dz * static_cast<double>(e2[i]));
            de1[static_cast<Eigen::Index>(i)] += static_cast<T>(dz * static_cast<double>(prow[i]));
            de2[static_cast<Eigen::Index>(i)] += static_cast<T>(dz * static_cast<double>(prow[d + i]));
        }
    }
    detail::tower_backward(c1, de1, p, stride, g);
    detail::tower_backward(c2, de2, p, stride, g);
    return value;
}

template <class T>
struct GradientResult {
    ModelParams<T> grads;
    double mean_loss = 0.0;
};

/// Mean loss and mean gradient over the batch. Examples are reduced in order.
template <class T>
GradientResult<T> gradients(std::span<const TrainingExample<T>> batch, const ModelParams<T>& p, int stride = 2) {
    if (batch.empty())
        throw Error("gradient of an empty batch");
    GradientResult<T> r{p.zeros_like(), 0.0};
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch)
        r.mean_loss += w * accumulate_example(ex, p, r.grads, w, stride);
    return r;
}

template <class T>
double batch_loss(std::span<const TrainingExample<T>> batch, const ModelParams<T>& p, int stride = 2) {
    double total = 0.0;
    for (const auto& ex : batch)
        total += loss(classify(ex.first, ex.second, p, stride), ex.label);
    return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// AdamW

struct AdamWConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
struct AdamMoments {
    ModelParams<T> first;
    ModelParams<T> second;

    static AdamMoments zeros_like(const ModelParams<T>& p) { return {p.zeros_like(), p.zeros_like()}; }
};

/// One decoupled-weight-decay Adam update, elementwise:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta)
template <class T>
void optimizer_step(ModelParams<T>& p, const ModelParams<T>& g, AdamMoments<T>& moments, const AdamWConfig& cfg,
                    long step_index) {
    if (step_index < 1)
        throw Error("optimizer step index must be >= 1");
    if (!g.all_finite())
        throw Error("non-finite gradient at optimizer step " + std::to_string(step_index));
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));

    std::vector<const std::vector<T>*> gt;
    g.for_each_tensor([&](const std::string&, const std::vector<T>& v) { gt.push_back(&v); });
    std::vector<std::vector<T>*> mt, vt;
    moments.first.for_each_tensor([&](const std::string&, std::vector<T>& v) { mt.push_back(&v); });
    moments.second.for_each_tensor([&](const std::string&, std::vector<T>& v) { vt.push_back(&v); });

    std::size_t k = 0;
    p.for_each_tensor([&](const std::string& name, std::vector<T>& theta) {
        const auto& gv = *gt[k];
        auto& mv = *mt[k];
        auto& vv = *vt[k];
        ++k;
        if (gv.size() != theta.size() || mv.size() != theta.size() || vv.size() != theta.size())
            throw Error("optimizer state shape mismatch in " + name);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = gv[i];
            const double m = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gi;
            const double v = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gi * gi;
            mv[i] = static_cast<T>(m);
            vv[i] = static_cast<T>(v);
            const double update = (m / c1) / (std::sqrt(v / c2) + cfg.epsilon) + cfg.weight_decay * theta[i];
            theta[i] = static_cast<T>(theta[i] - cfg.learning_rate * update);
        }
    });
    if (!p.all_finite() || !moments.first.all_finite() || !moments.second.all_finite())
        throw Error("non-finite parameters after optimizer step " + std::to_string(step_index));
}

// ---------------------------------------------------------------------------

/// Encoder configuration plus weights; the classifier used everywhere downstream.
template <class T = float>
struct SiameseModel {
    EncoderConfig config;
    ModelParams<T> params;

    int context() const { return config.context(); }

    std::vector<T> embed(const PairTensor<T>& x) const { return encoder_forward(x, params, config.stride); }

    double predict(const PairTensor<T>& first, const PairTensor<T>& second) const {
        return classify(first, second, params, config.stride).omega;
    }
};

}  // namespace optimus
