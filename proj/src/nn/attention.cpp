#include "nsnp/attention.h"

#include "nsnp/error.h"
#include "nsnp/ops.h"

namespace nsnp::attention {

namespace {

constexpr ops::Stride2d kHalve{2, 2};
constexpr ops::Padding2d kSamePad2x2{0, 1, 0, 1};

void require_map(const Tensor& t, const char* what) {
    if (t.rank() != 4 || t.dim(1) != 1) {
        throw ShapeError(std::string("fuse_stages: ") + what + " must be [N,1,H,W], got " + shape_str(t.shape()));
    }
}

}  // namespace

ChannelAttention::ChannelAttention(std::size_t channels, Initializer& init)
    : w_fc(init.uniform_fan_in({channels, channels}, channels)) {
    w_fc.set_requires_grad();
}

void ChannelAttention::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "w_fc"), w_fc, true});
}

SpatialAttention::SpatialAttention(Initializer& init) : w(init.kaiming({1, 2, 2, 2})) { w.set_requires_grad(); }

void SpatialAttention::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "w"), w, true});
}

FusionBlock::FusionBlock(Initializer& init)
    : w1(init.constant({1, 1, 2, 2}, 0.25)), w2(init.constant({1, 1, 2, 2}, 0.25)), w_fusion(init.kaiming({1, 3, 3, 3})) {
    w1.set_requires_grad();
    w2.set_requires_grad();
    w_fusion.set_requires_grad();
}

void FusionBlock::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "w1"), w1, true});
    out.push_back({join_name(prefix, "w2"), w2, true});
    out.push_back({join_name(prefix, "w_fusion"), w_fusion, true});
}

Tensor channel_weights(const Tensor& f, const ChannelAttention& ca) {
    if (f.rank() != 4) throw ShapeError("channel_attention expects [N,C,H,W], got " + shape_str(f.shape()));
    const std::size_t n = f.dim(0), c = f.dim(1);
    Tensor avg = ops::reshape(ops::pool_spatial(f, ops::PoolKind::avg), {n, c});
    Tensor mx = ops::reshape(ops::pool_spatial(f, ops::PoolKind::max), {n, c});
    Tensor gate = ops::sigmoid(ops::add(ops::fully_connected(avg, ca.w_fc), ops::fully_connected(mx, ca.w_fc)));
    return ops::reshape(gate, {n, c, 1, 1});
}

Tensor channel_attention(const Tensor& f, const ChannelAttention& ca) { return ops::mul(f, channel_weights(f, ca)); }

Tensor spatial_attention(const Tensor& f, const SpatialAttention& sa) {
    if (f.rank() != 4 || f.dim(2) < 2 || f.dim(3) < 2) {
        throw ShapeError("spatial_attention expects [N,C,H,W] with H,W >= 2, got " + shape_str(f.shape()));
    }
    Tensor pooled = ops::concat_channels({ops::pool_channel(f, ops::PoolKind::avg), ops::pool_channel(f, ops::PoolKind::max)});
    return ops::sigmoid(ops::conv2d(pooled, sa.w, {1, 1}, kSamePad2x2));
}

Tensor fuse_stages(const Tensor& a1, const Tensor& a2, const Tensor& a3, const FusionBlock& fb) {
    require_map(a1, "stage-1 map");
    require_map(a2, "stage-2 map");
    require_map(a3, "stage-3 map");
    const std::size_t h = a3.dim(2), w = a3.dim(3);
    if (a1.dim(2) != 4 * h || a1.dim(3) != 4 * w || a2.dim(2) != 2 * h || a2.dim(3) != 2 * w) {
        throw ShapeError("fuse_stages: map sizes " + shape_str(a1.shape()) + ", " + shape_str(a2.shape()) + ", " +
                         shape_str(a3.shape()) + " violate the 4:2:1 ratio");
    }
    if (a1.dim(0) != a3.dim(0) || a2.dim(0) != a3.dim(0)) throw ShapeError("fuse_stages: batch sizes differ");
    Tensor d1 = ops::conv2d(ops::conv2d(a1, fb.w1, kHalve), fb.w1, kHalve);
    Tensor d2 = ops::conv2d(a2, fb.w2, kHalve);
    Tensor stacked = ops::concat_channels({d1, d2, a3});
    return ops::sigmoid(ops::conv2d(stacked, fb.w_fusion, {1, 1}, ops::Padding2d::symmetric(1, 1)));
}

Tensor apply_attention(const Tensor& f3, const Tensor& map) {
    if (f3.rank() != 4 || map.rank() != 4 || map.dim(1) != 1 || map.dim(0) != f3.dim(0) ||
        map.dim(2) != f3.dim(2) || map.dim(3) != f3.dim(3)) {
        throw ShapeError("apply_attention: map " + shape_str(map.shape()) + " does not match features " +
                         shape_str(f3.shape()));
    }
    return ops::mul(f3, map);
}

}  // namespace nsnp::attention
