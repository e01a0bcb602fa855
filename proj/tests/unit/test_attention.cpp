#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nsnp/attention.h"
#include "nsnp/error.h"
#include "nsnp/nn_gradcheck.h"
#include "nsnp/ops.h"

using namespace nsnp;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void zero(Tensor& t) { std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0); }

Tensor rand_tensor(std::mt19937_64& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    return gradcheck::random_tensor(rng, std::move(s), lo, hi);
}

}  // namespace

TEST(ChannelAttention, HandExampleWithIdentityWeights) {
    Initializer init(0);
    attention::ChannelAttention ca(2, init);
    ca.w_fc = Tensor({2, 2}, {1, 0, 0, 1});
    // constant channels: avg == max == (1, 3)
    Tensor f({1, 2, 2, 2}, {1, 1, 1, 1, 3, 3, 3, 3});
    Tensor w = attention::channel_weights(f, ca);
    EXPECT_NEAR(w[0], 0.88080, 1e-5);
    EXPECT_NEAR(w[1], 0.99753, 1e-5);
    EXPECT_DOUBLE_EQ(w[0], sig(2.0));
    EXPECT_DOUBLE_EQ(w[1], sig(6.0));
    Tensor out = attention::channel_attention(f, ca);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(out[i], sig(2.0));
        EXPECT_DOUBLE_EQ(out[4 + i], 3 * sig(6.0));
    }
}

TEST(ChannelAttention, ZeroWeightsHalveEveryChannel) {
    Initializer init(1);
    attention::ChannelAttention ca(3, init);
    zero(ca.w_fc);
    std::mt19937_64 rng(2);
    Tensor f = rand_tensor(rng, {2, 3, 3, 3});
    Tensor out = attention::channel_attention(f, ca);
    for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * f[i]);
}

TEST(ChannelAttention, SingleChannelClosedForm) {
    Initializer init(3);
    attention::ChannelAttention ca(1, init);
    std::mt19937_64 rng(4);
    Tensor f = rand_tensor(rng, {1, 1, 3, 4});
    double avg = 0, mx = f[0];
    for (double v : f.values()) {
        avg += v;
        mx = std::max(mx, v);
    }
    avg /= 12;
    const double w = ca.w_fc[0];
    Tensor out = attention::channel_attention(f, ca);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(out[i], sig(w * avg + w * mx) * f[i], 1e-14);
}

TEST(SpatialAttention, ZeroKernelGivesHalf) {
    Initializer init(5);
    attention::SpatialAttention sa(init);
    zero(sa.w);
    Tensor m = attention::spatial_attention(Tensor({2, 3, 4, 5}, 1.5), sa);
    ASSERT_EQ(m.shape(), (Shape{2, 1, 4, 5}));
    for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, SingleChannelSeesDuplicatedMap) {
    Initializer init(6);
    attention::SpatialAttention sa(init);
    std::mt19937_64 rng(7);
    Tensor f = rand_tensor(rng, {1, 1, 3, 3});
    // kernel over two identical maps == one map with summed kernel taps
    Tensor k1({1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) k1.mutable_values()[i] = sa.w[i] + sa.w[4 + i];
    Tensor want = ops::sigmoid(ops::conv2d(f, k1, {1, 1}, {0, 1, 0, 1}));
    Tensor got = attention::spatial_attention(f, sa);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
}

TEST(SpatialAttention, MatchesLoopOracle) {
    Initializer init(8);
    attention::SpatialAttention sa(init);
    std::mt19937_64 rng(9);
    Tensor f = rand_tensor(rng, {1, 3, 4, 4});
    Tensor got = attention::spatial_attention(f, sa);
    auto pooled = [&](std::size_t which, long r, long c) {
        if (r >= 4 || c >= 4) return 0.0;  // bottom/right padding
        double avg = 0, mx = -1e300;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = f.at({0, ch, static_cast<std::size_t>(r), static_cast<std::size_t>(c)});
            avg += v / 3;
            mx = std::max(mx, v);
        }
        return which == 0 ? avg : mx;
    };
    for (long i = 0; i < 4; ++i) {
        for (long j = 0; j < 4; ++j) {
            double acc = 0;
            for (std::size_t ch = 0; ch < 2; ++ch) {
                for (long a = 0; a < 2; ++a) {
                    for (long b = 0; b < 2; ++b) {
                        acc += sa.w.at({0, ch, static_cast<std::size_t>(a), static_cast<std::size_t>(b)}) *
                               pooled(ch, i + a, j + b);
                    }
                }
            }
            EXPECT_NEAR(got.at({0, 0, static_cast<std::size_t>(i), static_cast<std::size_t>(j)}), sig(acc), 1e-14);
        }
    }
}

TEST(SpatialAttention, InvariantToChannelPermutation) {
    Initializer init(10);
    attention::SpatialAttention sa(init);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor f = rand_tensor(rng, {1, 4, 3, 3});
        std::vector<std::size_t> perm{0, 1, 2, 3};
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor p({1, 4, 3, 3});
        for (std::size_t c = 0; c < 4; ++c) {
            for (std::size_t q = 0; q < 9; ++q) p.mutable_values()[c * 9 + q] = f[perm[c] * 9 + q];
        }
        Tensor a = attention::spatial_attention(f, sa), b = attention::spatial_attention(p, sa);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
    }
}

TEST(SpatialAttention, RejectsTinyMaps) {
    Initializer init(12);
    attention::SpatialAttention sa(init);
    EXPECT_THROW(attention::spatial_attention(Tensor::zeros({1, 2, 1, 4}), sa), ShapeError);
}

TEST(Fusion, StageSizesCollapseToStageThree) {
    Initializer init(13);
    attention::FusionBlock fb(init);
    Tensor out = attention::fuse_stages(Tensor({1, 1, 28, 28}, 0.3), Tensor({1, 1, 14, 14}, 0.4),
                                        Tensor({1, 1, 7, 7}, 0.5), fb);
    EXPECT_EQ(out.shape(), (Shape{1, 1, 7, 7}));
    for (std::size_t s = 1; s <= 64; ++s) {
        Tensor o = attention::fuse_stages(Tensor::zeros({1, 1, 4 * s, 4 * s}), Tensor::zeros({1, 1, 2 * s, 2 * s}),
                                          Tensor::zeros({1, 1, s, s}), fb);
        EXPECT_EQ(o.shape(), (Shape{1, 1, s, s}));
    }
}

TEST(Fusion, ZeroFusionKernelGivesHalf) {
    Initializer init(14);
    attention::FusionBlock fb(init);
    zero(fb.w_fusion);
    std::mt19937_64 rng(15);
    Tensor out = attention::fuse_stages(rand_tensor(rng, {2, 1, 8, 8}), rand_tensor(rng, {2, 1, 4, 4}),
                                        rand_tensor(rng, {2, 1, 2, 2}), fb);
    for (double v : out.values()) EXPECT_EQ(v, 0.5);
}

TEST(Fusion, ConstantMapsWithUnitSumKernels) {
    Initializer init(16);
    attention::FusionBlock fb(init);
    // w1, w2 start as 0.25 taps: each stride-2 pass averages a 2x2 block
    const double a1 = 0.2, a2 = 0.6, a3 = 0.9;
    Tensor out = attention::fuse_stages(Tensor({1, 1, 16, 16}, a1), Tensor({1, 1, 8, 8}, a2),
                                        Tensor({1, 1, 4, 4}, a3), fb);
    // interior position: every 3x3 tap sees the aligned constants
    double s1 = 0, s2 = 0, s3 = 0;
    for (std::size_t t = 0; t < 9; ++t) {
        s1 += fb.w_fusion[t];
        s2 += fb.w_fusion[9 + t];
        s3 += fb.w_fusion[18 + t];
    }
    const double want = sig(s1 * a1 + s2 * a2 + s3 * a3);
    EXPECT_NEAR(out.at({0, 0, 1, 1}), want, 1e-14);
    EXPECT_NEAR(out.at({0, 0, 2, 2}), want, 1e-14);
}

TEST(Fusion, RatioViolationsAreErrors) {
    Initializer init(17);
    attention::FusionBlock fb(init);
    EXPECT_THROW(attention::fuse_stages(Tensor::zeros({1, 1, 8, 8}), Tensor::zeros({1, 1, 4, 4}),
                                        Tensor::zeros({1, 1, 3, 3}), fb),
                 ShapeError);
    EXPECT_THROW(attention::fuse_stages(Tensor::zeros({1, 1, 8, 8}), Tensor::zeros({1, 1, 8, 8}),
                                        Tensor::zeros({1, 1, 2, 2}), fb),
                 ShapeError);
    EXPECT_THROW(attention::fuse_stages(Tensor::zeros({1, 2, 8, 8}), Tensor::zeros({1, 1, 4, 4}),
                                        Tensor::zeros({1, 1, 2, 2}), fb),
                 ShapeError);
}

TEST(ApplyAttention, OnesZerosAndBroadcast) {
    std::mt19937_64 rng(18);
    Tensor f = rand_tensor(rng, {1, 3, 2, 2});
    Tensor same = attention::apply_attention(f, Tensor({1, 1, 2, 2}, 1.0));
    Tensor none = attention::apply_attention(f, Tensor::zeros({1, 1, 2, 2}));
    for (std::size_t i = 0; i < f.numel(); ++i) {
        EXPECT_EQ(same[i], f[i]);
        EXPECT_EQ(none[i], 0.0);
    }
    Tensor f3({1, 3, 2, 2}, 3.0);
    Tensor a({1, 1, 2, 2}, {1, 2, 1, 1});
    Tensor out = attention::apply_attention(f3, a);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at({0, c, 0, 1}), 6.0);
    EXPECT_THROW(attention::apply_attention(f3, Tensor::zeros({1, 1, 2, 3})), ShapeError);
}

TEST(AttentionWeights, StrictlyInsideUnitInterval) {
    Initializer init(19);
    attention::ChannelAttention ca(4, init);
    attention::SpatialAttention sa(init);
    std::mt19937_64 rng(20);
    Tensor f = rand_tensor(rng, {2, 4, 5, 5}, -3.0, 3.0);
    for (const Tensor& t : {attention::channel_weights(f, ca), attention::spatial_attention(f, sa)}) {
        for (double v : t.values()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(AttentionGradients, PassFiniteDifferenceCheck) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        for (const auto& r : gradcheck::run(gradcheck::attention_cases(), seed)) {
            EXPECT_TRUE(r.passed) << r.name << " seed " << seed << " err " << r.max_rel_error;
        }
    }
}
