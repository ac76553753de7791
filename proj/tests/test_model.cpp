#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"

using namespace optimus;

namespace {

/// Direct nested-loop convolution stack, independent of the im2col path.
std::vector<double> naive_encoder(const PairTensor<double>& x, const ModelParams<double>& p, int stride) {
    std::vector<double> in = x.data;
    int ch = x.channels, h = x.height, w = x.width;
    for (const auto& l : p.conv) {
        const int pad = l.kernel / 2;
        const int ho = (h + 2 * pad - l.kernel) / stride + 1, wo = (w + 2 * pad - l.kernel) / stride + 1;
        std::vector<double> out(static_cast<std::size_t>(l.out_channels) * ho * wo);
        for (int o = 0; o < l.out_channels; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = l.bias[static_cast<std::size_t>(o)];
                    for (int c = 0; c < ch; ++c)
                        for (int ky = 0; ky < l.kernel; ++ky)
                            for (int kx = 0; kx < l.kernel; ++kx) {
                                const int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w)
                                    continue;
                                acc += l.weight[((static_cast<std::size_t>(o) * ch + c) * l.kernel + ky) * l.kernel + kx] *
                                       in[(static_cast<std::size_t>(c) * h + iy) * w + ix];
                            }
                    out[(static_cast<std::size_t>(o) * ho + oy) * wo + ox] = std::max(acc, 0.0);
                }
        in = std::move(out);
        ch = l.out_channels;
        h = ho;
        w = wo;
    }
    std::vector<double> e(static_cast<std::size_t>(ch), 0.0);
    for (int c = 0; c < ch; ++c) {
        for (int i = 0; i < h * w; ++i)
            e[static_cast<std::size_t>(c)] += in[static_cast<std::size_t>(c) * h * w + i];
        e[static_cast<std::size_t>(c)] /= h * w;
    }
    return e;
}

PairTensor<double> random_tensor(int ch, int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    PairTensor<double> t{ch, h, w, std::vector<double>(static_cast<std::size_t>(ch) * h * w)};
    for (auto& v : t.data)
        v = u(rng);
    return t;
}

}  // namespace

TEST(Encoder, ZeroInputZeroWeights) {
    const auto cfg = EncoderConfig::for_context(3);
    const auto p = ModelParams<float>::zeros(cfg);
    PairTensor<float> x{12, 16, 16, std::vector<float>(12 * 16 * 16, 0.0f)};
    const auto e = encoder_forward(x, p);
    ASSERT_EQ(e.size(), 64u);
    for (float v : e)
        EXPECT_EQ(v, 0.0f);
}

TEST(Encoder, OneByOneInputIsRectifiedLinearMap) {
    // With a 1x1 input only the kernel centre touches data: e = relu(W[:, :, 1, 1] x + b).
    EncoderConfig cfg = EncoderConfig::for_context(1, {3});
    auto p = ModelParams<double>::zeros(cfg);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : p.conv[0].weight)
        v = u(rng);
    p.conv[0].bias = {0.1, -2.0, 0.0};
    PairTensor<double> x{6, 1, 1, {0.2, 0.4, 0.6, 0.8, 1.0, 0.3}};
    const auto e = encoder_forward(x, p);
    ASSERT_EQ(e.size(), 3u);
    for (int o = 0; o < 3; ++o) {
        double z = p.conv[0].bias[static_cast<std::size_t>(o)];
        for (int c = 0; c < 6; ++c)
            z += p.conv[0].weight[(static_cast<std::size_t>(o) * 6 + c) * 9 + 4] * x.data[static_cast<std::size_t>(c)];
        EXPECT_NEAR(e[static_cast<std::size_t>(o)], std::max(z, 0.0), 1e-15);
    }
}

TEST(Encoder, MatchesNaiveConvolution) {
    std::mt19937_64 rng(5);
    for (auto [edge_h, edge_w, c] : {std::tuple{16, 16, 3}, {11, 13, 1}, {5, 3, 2}, {64, 64, 3}}) {
        const auto cfg = EncoderConfig::for_context(c, {8, 6, 5, 4});
        const auto p = gradcheck::random_params(cfg, rng);
        const auto x = random_tensor(cfg.input_channels, edge_h, edge_w, rng);
        const auto got = encoder_forward(x, p);
        const auto want = naive_encoder(x, p, 2);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(Encoder, ShapeMismatchRejected) {
    const auto p = ModelParams<float>::zeros(EncoderConfig::for_context(3));
    PairTensor<float> x{6, 8, 8, std::vector<float>(6 * 64)};
    EXPECT_THROW(encoder_forward(x, p), Error);
    PairTensor<float> bad{12, 8, 8, std::vector<float>(10)};
    EXPECT_THROW(encoder_forward(bad, p), Error);
}

TEST(Classify, ZeroHeadGivesHalf) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    auto p = init_params<double>(cfg, 3);
    std::fill(p.head_weight.begin(), p.head_weight.end(), 0.0);
    std::mt19937_64 rng(1);
    for (int k = 0; k < 10; ++k)
        EXPECT_EQ(classify(random_tensor(6, 8, 8, rng), random_tensor(6, 8, 8, rng), p).omega, 0.5);
}

TEST(Classify, SwappedHeadRowsGiveComplement) {
    const auto cfg = EncoderConfig::for_context(2, {4, 6});
    std::mt19937_64 rng(2);
    for (int k = 0; k < 20; ++k) {
        const auto p = gradcheck::random_params(cfg, rng);
        auto q = p;
        const std::size_t d = 2 * 6;
        std::swap_ranges(q.head_weight.begin(), q.head_weight.begin() + d, q.head_weight.begin() + d);
        std::swap(q.head_bias[0], q.head_bias[1]);
        const auto a = random_tensor(9, 10, 10, rng), b = random_tensor(9, 10, 10, rng);
        EXPECT_NEAR(classify(a, b, q).omega, 1.0 - classify(a, b, p).omega, 1e-12);
    }
}

TEST(Loss, KnownValues) {
    EXPECT_NEAR(loss({0.5}, 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(loss({0.5}, 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(loss({0.9}, 1), 0.10536051565782628, 1e-14);
    EXPECT_NEAR(loss({0.9}, 0), -std::log(0.1), 1e-14);
    EXPECT_THROW(loss({0.0}, 1), Error);
    EXPECT_THROW(loss({1.0}, 1), Error);
    for (double w = 0.01; w < 1.0; w += 0.01) {
        EXPECT_GE(loss({w}, 0), 0.0);
        EXPECT_GE(loss({w}, 1), 0.0);
    }
}

TEST(Siamese, SwapInputsAndHeadHalvesFlipsLabel) {
    // Shared tower weights: swapping (t1, t2), flipping y and swapping the head's
    // input halves (plus negating its logit gap) leaves the loss unchanged.
    const auto cfg = EncoderConfig::for_context(1, {4, 5});
    std::mt19937_64 rng(6);
    for (int k = 0; k < 20; ++k) {
        const auto p = gradcheck::random_params(cfg, rng);
        auto q = p;
        const std::size_t d = 5;
        for (std::size_t r = 0; r < 2; ++r)
            std::swap_ranges(q.head_weight.begin() + r * 2 * d, q.head_weight.begin() + r * 2 * d + d,
                             q.head_weight.begin() + r * 2 * d + d);
        TrainingExample<double> ex{random_tensor(6, 8, 8, rng), random_tensor(6, 8, 8, rng), k % 2};
        TrainingExample<double> swapped{ex.second, ex.first, 1 - ex.label};
        std::swap_ranges(q.head_weight.begin(), q.head_weight.begin() + 2 * d, q.head_weight.begin() + 2 * d);
        std::swap(q.head_bias[0], q.head_bias[1]);
        const std::vector<TrainingExample<double>> a{ex}, b{swapped};
        EXPECT_NEAR(gradcheck::exact_loss(a, p, 2), gradcheck::exact_loss(b, q, 2), 1e-12);
    }
}

TEST(Gradients, VanishAtZeroLossLimit) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    std::mt19937_64 rng(7);
    auto p = gradcheck::random_params(cfg, rng);
    std::fill(p.head_weight.begin(), p.head_weight.end(), 0.0);
    // every example has label 1; a growing class-1 bias drives omega to 1
    std::vector<TrainingExample<double>> batch;
    for (int k = 0; k < 4; ++k)
        batch.push_back({random_tensor(6, 8, 8, rng), random_tensor(6, 8, 8, rng), 1});
    double prev = std::numeric_limits<double>::infinity();
    for (double bias : {1.0, 5.0, 10.0, 20.0, 40.0}) {
        p.head_bias = {0.0, bias};
        const auto g = gradients<double>(batch, p).grads;
        double norm = 0;
        g.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
            for (double x : v)
                norm += x * x;
        });
        EXPECT_LT(std::sqrt(norm), prev);
        prev = std::sqrt(norm);
    }
    EXPECT_LT(prev, 1e-15);
}

TEST(Gradients, MeanLossMatchesBatchLoss) {
    const auto cfg = EncoderConfig::for_context(1, {4, 5});
    std::mt19937_64 rng(8);
    const auto p = gradcheck::random_params(cfg, rng);
    gradcheck::Setup s;
    const auto batch = gradcheck::random_batch(s, rng);
    EXPECT_NEAR(gradients<double>(batch, p).mean_loss, batch_loss<double>(batch, p), 1e-12);
}

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    auto p = init_params<double>(cfg, 1);
    const auto before = p;
    auto m = AdamMoments<double>::zeros_like(p);
    AdamWConfig o;
    o.weight_decay = 0.0;
    optimizer_step(p, p.zeros_like(), m, o, 1);
    EXPECT_EQ(p, before);
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    auto p = init_params<double>(cfg, 2);
    const auto before = p;
    auto g = p.zeros_like();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    g.for_each_tensor([&](const std::string&, std::vector<double>& v) {
        for (auto& x : v)
            x = u(rng);
    });
    auto m = AdamMoments<double>::zeros_like(p);
    AdamWConfig o;
    o.weight_decay = 0.0;
    o.learning_rate = 1e-3;
    optimizer_step(p, g, m, o, 1);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    std::vector<const std::vector<double>*> gs, bs;
    g.for_each_tensor([&](const std::string&, const std::vector<double>& v) { gs.push_back(&v); });
    before.for_each_tensor([&](const std::string&, const std::vector<double>& v) { bs.push_back(&v); });
    std::size_t t = 0;
    p.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double gi = (*gs[t])[i];
            EXPECT_NEAR(v[i] - (*bs[t])[i], -1e-3 * gi / (std::abs(gi) + o.epsilon), 1e-15);
        }
        ++t;
    });
}

TEST(AdamW, DecoupledDecayAlone) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    auto p = init_params<double>(cfg, 4);
    const auto before = p;
    auto m = AdamMoments<double>::zeros_like(p);
    AdamWConfig o;
    o.learning_rate = 0.01;
    o.weight_decay = 0.1;
    optimizer_step(p, p.zeros_like(), m, o, 1);
    std::vector<const std::vector<double>*> bs;
    before.for_each_tensor([&](const std::string&, const std::vector<double>& v) { bs.push_back(&v); });
    std::size_t t = 0;
    p.for_each_tensor([&](const std::string&, const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i)
            EXPECT_NEAR(v[i], (*bs[t])[i] * (1 - 0.01 * 0.1), 1e-15);
        ++t;
    });
}

TEST(AdamW, NonFiniteGradientAborts) {
    const auto cfg = EncoderConfig::for_context(1, {4});
    auto p = init_params<float>(cfg, 5);
    auto g = p.zeros_like();
    g.head_bias[1] = std::numeric_limits<float>::quiet_NaN();
    auto m = AdamMoments<float>::zeros_like(p);
    EXPECT_THROW(optimizer_step(p, g, m, AdamWConfig{}, 1), Error);
    EXPECT_THROW(optimizer_step(p, p.zeros_like(), m, AdamWConfig{}, 0), Error);
}

TEST(Params, InitRangesAndCompatibility) {
    const auto cfg = EncoderConfig::for_context(3);
    const auto p = init_params<float>(cfg, 9);
    EXPECT_NO_THROW(check_compatible(cfg, p));
    for (const auto& l : p.conv) {
        const float bound = std::sqrt(6.0f / static_cast<float>(l.in_channels * 9));
        for (float w : l.weight)
            EXPECT_LE(std::abs(w), bound);
        for (float b : l.bias)
            EXPECT_EQ(b, 0.0f);
    }
    EXPECT_EQ(p, init_params<float>(cfg, 9));
    EXPECT_NE(p, init_params<float>(cfg, 10));
    EXPECT_THROW(check_compatible(EncoderConfig::for_context(2), p), Error);
    EXPECT_THROW(check_compatible(EncoderConfig::for_context(3, {16, 32}), p), Error);
    EXPECT_EQ(cfg.embedding_dim(), 64);
    EXPECT_EQ(cfg.context(), 3);
}
