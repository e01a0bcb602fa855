#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "nsnp/tensor.h"

namespace nsnp::ops {

struct Stride2d {
    std::size_t h = 1;
    std::size_t w = 1;
};

// Zero padding, possibly asymmetric (the 2x2 size-preserving case pads one side).
struct Padding2d {
    std::size_t top = 0;
    std::size_t bottom = 0;
    std::size_t left = 0;
    std::size_t right = 0;

    static Padding2d symmetric(std::size_t ph, std::size_t pw) { return {ph, ph, pw, pw}; }
};

// Cross-correlation of input [N,Cin,H,W] with kernel [Cout,Cin,kh,kw]; no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Stride2d stride = {}, Padding2d padding = {});

std::size_t conv_out_extent(std::size_t in, std::size_t pad_lo, std::size_t pad_hi, std::size_t k,
                            std::size_t stride);

Tensor relu(const Tensor& x);

// While alive, records on this thread the smallest nonzero distance of any
// relu input from its kink and of any max-pool winner from the runner-up.
// Exact zeros are skipped: they come from upstream clamps and stay put under
// small perturbations.
struct KinkProbe {
    double min_margin = std::numeric_limits<double>::infinity();

    KinkProbe();
    ~KinkProbe();
    KinkProbe(const KinkProbe&) = delete;
    KinkProbe& operator=(const KinkProbe&) = delete;

private:
    KinkProbe* previous_;
};
Tensor sigmoid(const Tensor& x);

enum class Mode { train, eval };

// Running statistics of one batch-norm layer. Updated in train mode only.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;

    explicit BatchNormStats(std::size_t channels)
        : running_mean(Tensor::zeros({channels})), running_var(Tensor::ones({channels})) {}
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   Mode mode, double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

enum class PoolKind { avg, max };

// Per-channel reduction over all spatial positions: [N,C,H,W] -> [N,C,1,1].
Tensor pool_spatial(const Tensor& x, PoolKind kind);
// Per-position reduction across channels: [N,C,H,W] -> [N,1,H,W].
Tensor pool_channel(const Tensor& x, PoolKind kind);

Tensor concat_channels(const std::vector<Tensor>& xs);

// x [N,Cin] times weight [Cout,Cin] transposed, plus optional bias [Cout].
Tensor fully_connected(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt);

// Mean over the batch of -log softmax(logits)[target].
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets);

// Elementwise arithmetic with same-rank broadcasting: every axis must match
// or be 1 in one operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
// Mean along one axis, kept with extent 1.
Tensor mean_axis(const Tensor& x, std::size_t axis);

// Stacks equally-shaped tensors along a new leading axis (no gradient).
Tensor stack_batch(const std::vector<const Tensor*>& items);

}  // namespace nsnp::ops
