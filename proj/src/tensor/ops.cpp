#include "nsnp/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nsnp/error.h"
#include "nsnp/parallel.h"

namespace nsnp::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
    Stride2d stride;
    Padding2d pad;

    std::size_t patch() const { return cin * kh * kw; }
    std::size_t positions() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        const double* plane = x + c * g.h * g.w;
        for (std::size_t a = 0; a < g.kh; ++a) {
            for (std::size_t b = 0; b < g.kw; ++b) {
                double* row = col + ((c * g.kh + a) * g.kw + b) * p;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride.h + a) - static_cast<long>(g.pad.top);
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride.w + b) - static_cast<long>(g.pad.left);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                            ix < static_cast<long>(g.w);
                        row[oy * g.wo + ox] = inside ? plane[iy * static_cast<long>(g.w) + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
    const std::size_t p = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        double* plane = dx + c * g.h * g.w;
        for (std::size_t a = 0; a < g.kh; ++a) {
            for (std::size_t b = 0; b < g.kw; ++b) {
                const double* row = col + ((c * g.kh + a) * g.kw + b) * p;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride.h + a) - static_cast<long>(g.pad.top);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride.w + b) - static_cast<long>(g.pad.left);
                        if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                        plane[iy * static_cast<long>(g.w) + ix] += row[oy * g.wo + ox];
                    }
                }
            }
        }
    }
}

// Index maps for same-rank broadcasting.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> a_index;
    std::vector<std::size_t> b_index;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    const std::size_t rank = a.size();
    Broadcast plan;
    plan.out.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
            throw ShapeError(std::string(op) + ": dimension " + std::to_string(i) + " mismatch (" +
                             std::to_string(a[i]) + " vs " + std::to_string(b[i]) + ")");
        }
        plan.out[i] = std::max(a[i], b[i]);
    }
    std::vector<std::size_t> sa(rank), sb(rank);
    std::size_t acc_a = 1, acc_b = 1;
    for (std::size_t i = rank; i-- > 0;) {
        sa[i] = a[i] == 1 ? 0 : acc_a;
        sb[i] = b[i] == 1 ? 0 : acc_b;
        acc_a *= a[i];
        acc_b *= b[i];
    }
    const std::size_t total = shape_numel(plan.out);
    plan.a_index.resize(total);
    plan.b_index.resize(total);
    std::vector<std::size_t> coord(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        plan.a_index[flat] = ia;
        plan.b_index[flat] = ib;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++coord[ax];
            ia += sa[ax];
            ib += sb[ax];
            if (coord[ax] < plan.out[ax]) break;
            ia -= sa[ax] * coord[ax];
            ib -= sb[ax] * coord[ax];
            coord[ax] = 0;
        }
    }
    return plan;
}

enum class Arith { add, sub, mul };

Tensor broadcast_arith(const Tensor& a, const Tensor& b, Arith kind) {
    const char* name = kind == Arith::add ? "add" : kind == Arith::sub ? "sub" : "mul";
    auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(plan->a_index.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = av[plan->a_index[i]];
        const double y = bv[plan->b_index[i]];
        out[i] = kind == Arith::add ? x + y : kind == Arith::sub ? x - y : x * y;
    }
    auto ai = a.impl();
    auto bi = b.impl();
    return make_op_result(name, plan->out, std::move(out), {a, b}, [ai, bi, plan, kind](const TensorImpl& o) {
        const auto& g = o.grad;
        if (ai->requires_grad) {
            auto& ga = ai->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double local = kind == Arith::mul ? bi->values[plan->b_index[i]] : 1.0;
                ga[plan->a_index[i]] += g[i] * local;
            }
        }
        if (bi->requires_grad) {
            auto& gb = bi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double local = kind == Arith::mul  ? ai->values[plan->a_index[i]]
                                     : kind == Arith::sub ? -1.0
                                                          : 1.0;
                gb[plan->b_index[i]] += g[i] * local;
            }
        }
    });
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t pad_lo, std::size_t pad_hi, std::size_t k,
                            std::size_t stride) {
    return (in + pad_lo + pad_hi - k) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, Stride2d stride, Padding2d padding) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(kernel, 4, "conv2d", "kernel");
    if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d: stride must be positive");
    ConvGeometry g{};
    g.n = input.dim(0);
    g.cin = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.cout = kernel.dim(0);
    g.kh = kernel.dim(2);
    g.kw = kernel.dim(3);
    g.stride = stride;
    g.pad = padding;
    if (kernel.dim(1) != g.cin) {
        throw ShapeError("conv2d: input channels (dim 1) " + std::to_string(g.cin) + " != kernel in-channels " +
                         std::to_string(kernel.dim(1)));
    }
    if (g.h + padding.top + padding.bottom < g.kh) {
        throw ShapeError("conv2d: padded height (dim 2) " + std::to_string(g.h + padding.top + padding.bottom) +
                         " smaller than kernel height " + std::to_string(g.kh));
    }
    if (g.w + padding.left + padding.right < g.kw) {
        throw ShapeError("conv2d: padded width (dim 3) " + std::to_string(g.w + padding.left + padding.right) +
                         " smaller than kernel width " + std::to_string(g.kw));
    }
    g.ho = conv_out_extent(g.h, padding.top, padding.bottom, g.kh, stride.h);
    g.wo = conv_out_extent(g.w, padding.left, padding.right, g.kw, stride.w);

    const std::size_t in_plane = g.cin * g.h * g.w;
    const std::size_t out_plane = g.cout * g.positions();
    std::vector<double> out(g.n * out_plane);
    const double* xv = input.values().data();
    const double* kv = kernel.values().data();
    parallel_for(0, g.n, [&](std::size_t n) {
        std::vector<double> col(g.patch() * g.positions());
        im2col(xv + n * in_plane, g, col.data());
        ConstMatMap k(kv, g.cout, g.patch());
        ConstMatMap c(col.data(), g.patch(), g.positions());
        MatMap o(out.data() + n * out_plane, g.cout, g.positions());
        o.noalias() = k * c;
    });

    auto xi = input.impl();
    auto ki = kernel.impl();
    return make_op_result("conv2d", {g.n, g.cout, g.ho, g.wo}, std::move(out), {input, kernel},
                          [xi, ki, g](const TensorImpl& o) {
        const std::size_t in_plane = g.cin * g.h * g.w;
        const std::size_t out_plane = g.cout * g.positions();
        const bool need_dx = xi->requires_grad;
        const bool need_dk = ki->requires_grad;
        double* dx = need_dx ? xi->grad_buffer().data() : nullptr;
        std::vector<double> dk_parts(need_dk ? g.n * g.cout * g.patch() : 0);
        parallel_for(0, g.n, [&](std::size_t n) {
            ConstMatMap go(o.grad.data() + n * out_plane, g.cout, g.positions());
            if (need_dk) {
                std::vector<double> col(g.patch() * g.positions());
                im2col(xi->values.data() + n * in_plane, g, col.data());
                ConstMatMap c(col.data(), g.patch(), g.positions());
                MatMap part(dk_parts.data() + n * g.cout * g.patch(), g.cout, g.patch());
                part.noalias() = go * c.transpose();
            }
            if (need_dx) {
                std::vector<double> dcol(g.patch() * g.positions());
                ConstMatMap k(ki->values.data(), g.cout, g.patch());
                MatMap dc(dcol.data(), g.patch(), g.positions());
                dc.noalias() = k.transpose() * go;
                col2im_add(dcol.data(), g, dx + n * in_plane);
            }
        });
        if (need_dk) {
            auto& dk = ki->grad_buffer();
            const std::size_t per = g.cout * g.patch();
            for (std::size_t n = 0; n < g.n; ++n) {
                for (std::size_t i = 0; i < per; ++i) dk[i] += dk_parts[n * per + i];
            }
        }
    });
}

namespace {

thread_local KinkProbe* active_probe = nullptr;

void note_margin(double m) {
    if (active_probe != nullptr && m > 0.0 && m < active_probe->min_margin) active_probe->min_margin = m;
}

}  // namespace

KinkProbe::KinkProbe() : previous_(active_probe) { active_probe = this; }
KinkProbe::~KinkProbe() { active_probe = previous_; }

Tensor relu(const Tensor& x) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    // NaN passes through so divergence stays visible downstream.
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] <= 0.0 ? 0.0 : xv[i];
    if (active_probe != nullptr) {
        for (double v : xv) note_margin(std::abs(v));
    }
    auto xi = x.impl();
    return make_op_result("relu", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
        auto& gx = xi->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xi->values[i] > 0.0) gx[i] += o.grad[i];
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Split by sign so exp never overflows.
        if (xv[i] >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
        } else {
            const double e = std::exp(xv[i]);
            out[i] = e / (1.0 + e);
        }
    }
    auto xi = x.impl();
    return make_op_result("sigmoid", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
        auto& gx = xi->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double s = o.values[i];
            gx[i] += o.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode,
                   double eps, double momentum) {
    require_rank(x, 4, "batchnorm2d", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.numel() != c || beta.numel() != c || stats.running_mean.numel() != c ||
        stats.running_var.numel() != c) {
        throw ShapeError("batchnorm2d: parameters must have " + std::to_string(c) + " entries (dim 1 of input)");
    }
    const std::size_t m = n * hw;
    if (mode == Mode::train && m < 2) {
        throw ShapeError("batchnorm2d: train mode needs N*H*W >= 2, got " + std::to_string(m));
    }
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();

    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(c);
    std::vector<double> out(xv.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        double mu, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = xv.data() + (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) s += p[i];
            }
            mu = s / static_cast<double>(m);
            double ss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = xv.data() + (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
            }
            var = ss / static_cast<double>(m);
            auto rm = stats.running_mean.mutable_values();
            auto rv = stats.running_var.mutable_values();
            rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu;
            rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var * static_cast<double>(m) / static_cast<double>(m - 1);
        } else {
            mu = stats.running_mean[ch];
            var = stats.running_var[ch];
        }
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[ch] = is;
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
                const double h = (xv[base + i] - mu) * is;
                (*xhat)[base + i] = h;
                out[base + i] = gv[ch] * h + bv[ch];
            }
        }
    }

    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    return make_op_result("batchnorm2d", x.shape(), std::move(out), {x, gamma, beta},
                          [xi, gi, bi, xhat, inv_std, n, c, hw, m, mode](const TensorImpl& o) {
        const auto& g = o.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t base = (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * (*xhat)[base + i];
                }
            }
            if (bi->requires_grad) bi->grad_buffer()[ch] += sum_g;
            if (gi->requires_grad) gi->grad_buffer()[ch] += sum_gx;
            if (!xi->requires_grad) continue;
            auto& gx = xi->grad_buffer();
            const double gamma_is = gi->values[ch] * (*inv_std)[ch];
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t base = (b * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    if (mode == Mode::train) {
                        gx[base + i] += gamma_is * (g[base + i] - inv_m * sum_g - (*xhat)[base + i] * inv_m * sum_gx);
                    } else {
                        gx[base + i] += gamma_is * g[base + i];
                    }
                }
            }
        }
    });
}

Tensor pool_spatial(const Tensor& x, PoolKind kind) {
    require_rank(x, 4, "pool_spatial", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const auto xv = x.values();
    std::vector<double> out(n * c);
    auto argmax = std::make_shared<std::vector<std::size_t>>(n * c, 0);
    for (std::size_t p = 0; p < n * c; ++p) {
        const double* plane = xv.data() + p * hw;
        if (kind == PoolKind::avg) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += plane[i];
            out[p] = s / static_cast<double>(hw);
        } else {
            std::size_t best = 0;
            for (std::size_t i = 1; i < hw; ++i) {
                if (plane[i] > plane[best]) best = i;
            }
            (*argmax)[p] = best;
            out[p] = plane[best];
            if (active_probe != nullptr) {
                for (std::size_t i = 0; i < hw; ++i) note_margin(plane[best] - plane[i]);
            }
        }
    }
    auto xi = x.impl();
    return make_op_result(kind == PoolKind::avg ? "pool_spatial_avg" : "pool_spatial_max", {n, c, 1, 1},
                          std::move(out), {x}, [xi, argmax, kind, hw](const TensorImpl& o) {
        auto& gx = xi->grad_buffer();
        for (std::size_t p = 0; p < o.grad.size(); ++p) {
            if (kind == PoolKind::avg) {
                const double share = o.grad[p] / static_cast<double>(hw);
                for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += share;
            } else {
                gx[p * hw + (*argmax)[p]] += o.grad[p];
            }
        }
    });
}

Tensor pool_channel(const Tensor& x, PoolKind kind) {
    require_rank(x, 4, "pool_channel", "input");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const auto xv = x.values();
    std::vector<double> out(n * hw);
    auto argmax = std::make_shared<std::vector<std::size_t>>(n * hw, 0);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < hw; ++i) {
            const double* first = xv.data() + b * c * hw + i;
            if (kind == PoolKind::avg) {
                double s = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) s += first[ch * hw];
                out[b * hw + i] = s / static_cast<double>(c);
            } else {
                std::size_t best = 0;
                for (std::size_t ch = 1; ch < c; ++ch) {
                    if (first[ch * hw] > first[best * hw]) best = ch;
                }
                (*argmax)[b * hw + i] = best;
                out[b * hw + i] = first[best * hw];
                if (active_probe != nullptr) {
                    for (std::size_t ch = 0; ch < c; ++ch) note_margin(first[best * hw] - first[ch * hw]);
                }
            }
        }
    }
    auto xi = x.impl();
    return make_op_result(kind == PoolKind::avg ? "pool_channel_avg" : "pool_channel_max",
                          {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x},
                          [xi, argmax, kind, n, c, hw](const TensorImpl& o) {
        auto& gx = xi->grad_buffer();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < hw; ++i) {
                const double g = o.grad[b * hw + i];
                if (kind == PoolKind::avg) {
                    for (std::size_t ch = 0; ch < c; ++ch) gx[(b * c + ch) * hw + i] += g / static_cast<double>(c);
                } else {
                    gx[(b * c + (*argmax)[b * hw + i]) * hw + i] += g;
                }
            }
        }
    });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    for (const Tensor& t : xs) require_rank(t, 4, "concat_channels", "every input");
    const std::size_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
    std::size_t total_c = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor& t = xs[k];
        for (std::size_t axis : {std::size_t{0}, std::size_t{2}, std::size_t{3}}) {
            if (t.dim(axis) != xs[0].dim(axis)) {
                throw ShapeError("concat_channels: input " + std::to_string(k) + " dimension " +
                                 std::to_string(axis) + " is " + std::to_string(t.dim(axis)) + ", expected " +
                                 std::to_string(xs[0].dim(axis)));
            }
        }
        total_c += t.dim(1);
    }
    const std::size_t hw = h * w;
    std::vector<double> out(n * total_c * hw);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& t : xs) {
        offsets.push_back(off);
        const std::size_t ct = t.dim(1);
        const auto v = t.values();
        for (std::size_t b = 0; b < n; ++b) {
            std::copy(v.begin() + b * ct * hw, v.begin() + (b + 1) * ct * hw,
                      out.begin() + (b * total_c + off) * hw);
        }
        off += ct;
    }
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : xs) impls.push_back(t.impl());
    return make_op_result("concat_channels", {n, total_c, h, w}, std::move(out), xs,
                          [impls, offsets, n, total_c, hw](const TensorImpl& o) {
        for (std::size_t k = 0; k < impls.size(); ++k) {
            if (!impls[k]->requires_grad) continue;
            auto& g = impls[k]->grad_buffer();
            const std::size_t ct = impls[k]->shape[1];
            for (std::size_t b = 0; b < n; ++b) {
                const double* src = o.grad.data() + (b * total_c + offsets[k]) * hw;
                double* dst = g.data() + b * ct * hw;
                for (std::size_t i = 0; i < ct * hw; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor fully_connected(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
    require_rank(x, 2, "fully_connected", "input");
    require_rank(weight, 2, "fully_connected", "weight");
    const std::size_t n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
    if (weight.dim(1) != cin) {
        throw ShapeError("fully_connected: input features (dim 1) " + std::to_string(cin) +
                         " != weight in-features " + std::to_string(weight.dim(1)));
    }
    if (bias && bias->numel() != cout) {
        throw ShapeError("fully_connected: bias has " + std::to_string(bias->numel()) + " entries, expected " +
                         std::to_string(cout));
    }
    std::vector<double> out(n * cout);
    ConstMatMap xm(x.values().data(), n, cin);
    ConstMatMap wm(weight.values().data(), cout, cin);
    MatMap om(out.data(), n, cout);
    om.noalias() = xm * wm.transpose();
    if (bias) {
        const auto bv = bias->values();
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < cout; ++j) out[b * cout + j] += bv[j];
        }
    }
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi = bias ? bias->impl() : nullptr;
    return make_op_result("fully_connected", {n, cout}, std::move(out), inputs,
                          [xi, wi, bi, n, cin, cout](const TensorImpl& o) {
        ConstMatMap go(o.grad.data(), n, cout);
        if (xi->requires_grad) {
            MatMap gx(xi->grad_buffer().data(), n, cin);
            gx += go * ConstMatMap(wi->values.data(), cout, cin);
        }
        if (wi->requires_grad) {
            MatMap gw(wi->grad_buffer().data(), cout, cin);
            gw += go.transpose() * ConstMatMap(xi->values.data(), n, cin);
        }
        if (bi && bi->requires_grad) {
            auto& gb = bi->grad_buffer();
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t j = 0; j < cout; ++j) gb[j] += o.grad[b * cout + j];
            }
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
    require_rank(logits, 2, "softmax_cross_entropy", "logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (targets.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                         std::to_string(n));
    }
    for (std::size_t b = 0; b < n; ++b) {
        if (targets[b] >= k) {
            throw ValidationError("softmax_cross_entropy: target " + std::to_string(targets[b]) + " at sample " +
                                  std::to_string(b) + " outside [0, " + std::to_string(k) + ")");
        }
    }
    const auto z = logits.values();
    auto probs = std::make_shared<std::vector<double>>(n * k);
    double loss = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const double* row = z.data() + b * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        const double log_s = std::log(s);
        for (std::size_t j = 0; j < k; ++j) (*probs)[b * k + j] = std::exp(row[j] - mx - log_s);
        loss += log_s + mx - row[targets[b]];
    }
    loss /= static_cast<double>(n);
    auto li = logits.impl();
    return make_op_result("softmax_cross_entropy", {1}, {loss}, {logits},
                          [li, probs, targets, n, k](const TensorImpl& o) {
        auto& g = li->grad_buffer();
        const double scale = o.grad[0] / static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < k; ++j) {
                const double onehot = j == targets[b] ? 1.0 : 0.0;
                g[b * k + j] += scale * ((*probs)[b * k + j] - onehot);
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) { return broadcast_arith(a, b, Arith::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return broadcast_arith(a, b, Arith::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return broadcast_arith(a, b, Arith::mul); }

Tensor scale(const Tensor& x, double factor) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
    auto xi = x.impl();
    return make_op_result("scale", x.shape(), std::move(out), {x}, [xi, factor](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    auto xi = x.impl();
    return make_op_result("reshape", std::move(shape), std::move(out), {x}, [xi](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto xi = x.impl();
    return make_op_result("sum", {1}, {s}, {x}, [xi](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (double& v : g) v += o.grad[0];
    });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Shape out_shape = s;
    out_shape[axis] = 1;
    const auto xv = x.values();
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t a = 0; a < len; ++a) {
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + a) * inner + i];
        }
    }
    for (double& v : out) v /= static_cast<double>(len);
    auto xi = x.impl();
    return make_op_result("mean_axis", std::move(out_shape), std::move(out), {x},
                          [xi, outer, inner, len](const TensorImpl& o) {
        auto& g = xi->grad_buffer();
        for (std::size_t oo = 0; oo < outer; ++oo) {
            for (std::size_t a = 0; a < len; ++a) {
                for (std::size_t i = 0; i < inner; ++i) {
                    g[(oo * len + a) * inner + i] += o.grad[oo * inner + i] / static_cast<double>(len);
                }
            }
        }
    });
}

Tensor stack_batch(const std::vector<const Tensor*>& items) {
    if (items.empty()) throw ShapeError("stack_batch: no inputs");
    const Shape& inner = items[0]->shape();
    Shape shape{items.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> values;
    values.reserve(shape_numel(shape));
    for (const Tensor* t : items) {
        if (t->shape() != inner) {
            throw ShapeError("stack_batch: item shape " + shape_str(t->shape()) + " != " + shape_str(inner));
        }
        values.insert(values.end(), t->values().begin(), t->values().end());
    }
    return Tensor(std::move(shape), std::move(values));
}

}  // namespace nsnp::ops
