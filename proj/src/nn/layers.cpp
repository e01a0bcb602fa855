#include "nsnp/layers.h"

#include "nsnp/error.h"

namespace nsnp::layers {

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::ones({channels})), beta(Tensor::zeros({channels})), stats(channels) {
    gamma.set_requires_grad();
    beta.set_requires_grad();
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) { return ops::batchnorm2d(x, gamma, beta, stats, mode); }

void BatchNorm2d::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "gamma"), gamma, true});
    out.push_back({join_name(prefix, "beta"), beta, true});
    out.push_back({join_name(prefix, "running_mean"), stats.running_mean, false});
    out.push_back({join_name(prefix, "running_var"), stats.running_var, false});
}

ConvBnRelu::ConvBnRelu(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s, Initializer& init)
    : kernel(init.kaiming({cout, cin, k, k})),
      stride{s, s},
      padding(ops::Padding2d::symmetric(k / 2, k / 2)),
      bn(cout) {
    kernel.set_requires_grad();
}

Tensor ConvBnRelu::forward(const Tensor& x, Mode mode) {
    return ops::relu(bn.forward(ops::conv2d(x, kernel, stride, padding), mode));
}

void ConvBnRelu::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "kernel"), kernel, true});
    bn.collect(join_name(prefix, "bn"), out);
}

namespace {

std::size_t checked_kernel_size(std::size_t k) {
    if (k == 0) throw ValidationError("NSNP convolution kernel size must be >= 1");
    return k;
}

}  // namespace

NsnpConvLayer::NsnpConvLayer(std::size_t cin, std::size_t cout, std::size_t k, ops::Stride2d s, ops::Padding2d p,
                             Initializer& init)
    : kernel(init.kaiming({cout, cin, checked_kernel_size(k), k})), stride(s), padding(p), bn(cin) {
    kernel.set_requires_grad();
}

void NsnpConvLayer::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "kernel"), kernel, true});
    bn.collect(join_name(prefix, "bn"), out);
}

Tensor nsnp_conv_forward(const Tensor& u_in, NsnpConvLayer& layer, Mode mode) {
    return ops::conv2d(ops::relu(layer.bn.forward(u_in, mode)), layer.kernel, layer.stride, layer.padding);
}

namespace {

constexpr ops::Stride2d kHalve{2, 2};
const ops::Padding2d kPadOne = ops::Padding2d::symmetric(1, 1);

}  // namespace

NsnpModule::NsnpModule(std::size_t c, std::size_t h, std::size_t w, Initializer& init)
    : channels(c), in_h(h), in_w(w) {
    if (c == 0 || h == 0 || w == 0) {
        throw ShapeError("NSNP module: channels and spatial extents must be positive");
    }
    mid_h = ops::conv_out_extent(h, 1, 1, 3, 2);
    mid_w = ops::conv_out_extent(w, 1, 1, 3, 2);
    end_h = ops::conv_out_extent(mid_h, 1, 1, 3, 2);
    end_w = ops::conv_out_extent(mid_w, 1, 1, 3, 2);
    w1 = init.kaiming({c, c, 3, 3});
    w2 = init.kaiming({c, c, 3, 3});
    w3 = init.kaiming({c, c, end_h, end_w});
    w1.set_requires_grad();
    w2.set_requires_grad();
    w3.set_requires_grad();
}

void NsnpModule::collect(const std::string& prefix, NamedTensors& out) const {
    out.push_back({join_name(prefix, "w1"), w1, true});
    out.push_back({join_name(prefix, "w2"), w2, true});
    out.push_back({join_name(prefix, "w3"), w3, true});
}

Tensor channel_means(const Tensor& f1) {
    if (f1.rank() != 4) throw ShapeError("NSNP additive path expects [N,C,H,W], got " + shape_str(f1.shape()));
    return ops::reshape(ops::pool_spatial(f1, ops::PoolKind::avg), {f1.dim(0), f1.dim(1)});
}

Tensor mean_deviation(const Tensor& f1) {
    Tensor a3 = channel_means(f1);
    return ops::sub(a3, ops::mean_axis(a3, 1));
}

Tensor nsnp_additive_path(const Tensor& f1) {
    Tensor a3 = channel_means(f1);
    return ops::sub(ops::scale(a3, 2.0), ops::mean_axis(a3, 1));
}

Tensor nsnp_conv_path(const Tensor& f1, const NsnpModule& m) {
    if (f1.rank() != 4 || f1.dim(1) != m.channels || f1.dim(2) != m.in_h || f1.dim(3) != m.in_w) {
        throw ShapeError("NSNP module built for [N," + std::to_string(m.channels) + "," + std::to_string(m.in_h) +
                         "," + std::to_string(m.in_w) + "], got " + shape_str(f1.shape()) +
                         "; its downsampling plan cannot reduce this input to 1x1");
    }
    Tensor x = ops::conv2d(ops::relu(f1), m.w1, kHalve, kPadOne);
    x = ops::conv2d(ops::relu(x), m.w2, kHalve, kPadOne);
    x = ops::conv2d(ops::relu(x), m.w3);
    return ops::reshape(x, {f1.dim(0), m.channels});
}

Tensor nsnp_module_forward(const Tensor& f1, const NsnpModule& m) {
    return ops::add(nsnp_conv_path(f1, m), nsnp_additive_path(f1));
}

}  // namespace nsnp::layers
