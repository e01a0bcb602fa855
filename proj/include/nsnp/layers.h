#pragma once

#include <cstddef>

#include "nsnp/module.h"
#include "nsnp/ops.h"

namespace nsnp::layers {

using ops::Mode;

struct BatchNorm2d {
    Tensor gamma;
    Tensor beta;
    ops::BatchNormStats stats;

    explicit BatchNorm2d(std::size_t channels);
    Tensor forward(const Tensor& x, Mode mode);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Backbone unit: conv -> batch norm -> ReLU.
struct ConvBnRelu {
    Tensor kernel;
    ops::Stride2d stride;
    ops::Padding2d padding;
    BatchNorm2d bn;

    ConvBnRelu(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Initializer& init);
    Tensor forward(const Tensor& x, Mode mode);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Pre-activation NSNP convolution: u_out = W * relu(bn(u_in)).
struct NsnpConvLayer {
    Tensor kernel;  // [Cout, Cin, k, k]
    ops::Stride2d stride;
    ops::Padding2d padding;
    BatchNorm2d bn;

    NsnpConvLayer(std::size_t cin, std::size_t cout, std::size_t k, ops::Stride2d stride, ops::Padding2d padding,
                  Initializer& init);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

Tensor nsnp_conv_forward(const Tensor& u_in, NsnpConvLayer& layer, Mode mode);

// NSNP encoder: reduces F1 [N,C,H,W] to a C-vector.
//
// The conv path applies relu -> conv three times. W1 and W2 are 3x3, stride 2,
// pad 1; W3 spans whatever spatial extent remains, so any H, W >= 1 reduces to
// 1x1. The additive path adds A2 + A3 where A3 is the per-channel spatial mean
// and A2 = A3 - mean_c(A3).
struct NsnpModule {
    std::size_t channels;
    std::size_t in_h, in_w;
    std::size_t mid_h, mid_w;  // after W1
    std::size_t end_h, end_w;  // after W2, covered by W3
    Tensor w1, w2, w3;

    NsnpModule(std::size_t channels, std::size_t in_h, std::size_t in_w, Initializer& init);
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// A3: per-channel spatial average, [N,C].
Tensor channel_means(const Tensor& f1);
// A2 = A1 - mean over channels of A1, with A1 = A3.
Tensor mean_deviation(const Tensor& f1);
// A2 + A3 = 2 * A3 - mean(A3).
Tensor nsnp_additive_path(const Tensor& f1);
// relu -> W1 -> relu -> W2 -> relu -> W3, flattened to [N,C].
Tensor nsnp_conv_path(const Tensor& f1, const NsnpModule& module);
Tensor nsnp_module_forward(const Tensor& f1, const NsnpModule& module);

}  // namespace nsnp::layers
