#pragma once

#include <cstddef>

#include "nsnp/module.h"

namespace nsnp::attention {

// Sigmoid gate over w_fc * avgpool(F) + w_fc * maxpool(F); one shared C x C
// matrix, no bias.
struct ChannelAttention {
    Tensor w_fc;  // [C, C]

    ChannelAttention(std::size_t channels, Initializer& init);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// sigmoid(conv(concat(avg_c(F), max_c(F)))) with a 2x2 kernel over the two
// pooled maps. Padding (0,1)x(0,1) keeps the input's spatial size.
struct SpatialAttention {
    Tensor w;  // [1, 2, 2, 2]

    explicit SpatialAttention(Initializer& init);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Aligns stage maps at 4:2:1 resolution and fuses them into one map at the
// finest-stage (stage 3) size.
struct FusionBlock {
    Tensor w1;        // [1,1,2,2], stride 2, applied twice to stage-1 map
    Tensor w2;        // [1,1,2,2], stride 2, applied once to stage-2 map
    Tensor w_fusion;  // [1,3,3,3], stride 1, pad 1

    explicit FusionBlock(Initializer& init);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

Tensor channel_attention(const Tensor& f, const ChannelAttention& ca);
// The per-channel weights alone, [N,C,1,1].
Tensor channel_weights(const Tensor& f, const ChannelAttention& ca);
Tensor spatial_attention(const Tensor& f, const SpatialAttention& sa);
// Throws ShapeError unless a1 is 4x and a2 is 2x the size of a3 on both axes.
Tensor fuse_stages(const Tensor& a1, const Tensor& a2, const Tensor& a3, const FusionBlock& fb);
// f3 [N,C,H,W] scaled by map [N,1,H,W] broadcast over channels.
Tensor apply_attention(const Tensor& f3, const Tensor& map);

}  // namespace nsnp::attention
