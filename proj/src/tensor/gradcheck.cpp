#include "nsnp/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsnp/error.h"
#include "nsnp/ops.h"

namespace nsnp::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

Result check(const Problem& problem, const std::string& name, double tolerance, Options options) {
    Result result;
    result.name = name;
    result.tolerance = tolerance;

    for (const Tensor& t : problem.inputs) {
        Tensor leaf = t;
        leaf.zero_grad();
        leaf.set_requires_grad(true);
    }
    Tensor loss = problem.forward(problem.inputs);
    backward(loss);

    for (const Tensor& t : problem.inputs) {
        Tensor leaf = t;
        const std::vector<double> analytic = leaf.grad();
        auto values = leaf.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double plus, minus;
            {
                NoGradGuard guard;
                values[i] = saved + options.step;
                plus = problem.forward(problem.inputs).item();
                values[i] = saved - options.step;
                minus = problem.forward(problem.inputs).item();
            }
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double err = relative_error(analytic[i], numeric, options.floor);
            if (!std::isfinite(err)) {
                result.max_rel_error = std::numeric_limits<double>::infinity();
            } else {
                result.max_rel_error = std::max(result.max_rel_error, err);
            }
            ++result.checked;
        }
    }
    result.passed = result.max_rel_error < tolerance;
    return result;
}

std::vector<Result> run(const std::vector<Case>& cases, std::uint64_t seed, Options options) {
    std::vector<Result> results;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        std::mt19937_64 rng(seed * 1000003ULL + i);
        Problem p = cases[i].build(rng);
        results.push_back(check(p, cases[i].name, cases[i].tolerance, options));
    }
    return results;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

Tensor distinct_tensor(std::mt19937_64& rng, Shape shape) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    std::uniform_real_distribution<double> jitter(0.0, 0.01);
    for (double& x : v) x = (x - static_cast<double>(n) / 2.0) * 0.05 + jitter(rng);
    return Tensor(std::move(shape), std::move(v));
}

Shape random_shape(std::mt19937_64& rng, std::size_t max_n, std::size_t max_c, std::size_t min_hw,
                   std::size_t max_hw) {
    std::uniform_int_distribution<std::size_t> dn(1, max_n), dc(1, max_c), dhw(min_hw, max_hw);
    return {dn(rng), dc(rng), dhw(rng), dhw(rng)};
}

Tensor project(const Tensor& out, std::uint64_t salt) {
    std::mt19937_64 rng(salt ^ (out.numel() * 0x9E3779B97F4A7C15ULL));
    Tensor weights = random_tensor(rng, out.shape(), -1.0, 1.0);
    return ops::sum(ops::mul(out, weights));
}

Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
    Tensor t = random_tensor(rng, std::move(shape), 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (double& v : t.mutable_values()) {
        if (sign(rng)) v = -v;
    }
    return t;
}

std::vector<Case> primitive_cases() {
    using ops::PoolKind;
    std::vector<Case> cases;

    cases.push_back({"conv2d", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 3, 8);
        std::uniform_int_distribution<std::size_t> kd(1, 3), sd(1, 2), pd(0, 1);
        const std::size_t kh = kd(rng), kw = kd(rng);
        ops::Stride2d stride{sd(rng), sd(rng)};
        ops::Padding2d pad = ops::Padding2d::symmetric(pd(rng), pd(rng));
        std::uniform_int_distribution<std::size_t> cd(1, 4);
        Tensor x = random_tensor(rng, s);
        Tensor k = random_tensor(rng, {cd(rng), s[1], kh, kw});
        return Problem{{x, k}, [stride, pad](const std::vector<Tensor>& in) {
            return project(ops::conv2d(in[0], in[1], stride, pad), 11);
        }};
    }});
    cases.push_back({"conv2d_asymmetric_pad", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 2, 8);
        Tensor x = random_tensor(rng, s);
        Tensor k = random_tensor(rng, {1, s[1], 2, 2});
        return Problem{{x, k}, [](const std::vector<Tensor>& in) {
            return project(ops::conv2d(in[0], in[1], {1, 1}, {0, 1, 0, 1}), 12);
        }};
    }});
    cases.push_back({"relu", [](std::mt19937_64& rng) {
        Tensor x = away_from_zero(rng, random_shape(rng, 2, 4, 1, 8));
        return Problem{{x}, [](const std::vector<Tensor>& in) { return project(ops::relu(in[0]), 13); }};
    }});
    cases.push_back({"sigmoid", [](std::mt19937_64& rng) {
        Tensor x = random_tensor(rng, random_shape(rng, 2, 4, 1, 8), -3.0, 3.0);
        return Problem{{x}, [](const std::vector<Tensor>& in) { return project(ops::sigmoid(in[0]), 14); }};
    }});
    cases.push_back({"batchnorm2d_train", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 2, 8);
        Tensor x = random_tensor(rng, s, -2.0, 2.0);
        Tensor gamma = random_tensor(rng, {s[1]}, 0.5, 1.5);
        Tensor beta = random_tensor(rng, {s[1]});
        auto stats = std::make_shared<ops::BatchNormStats>(s[1]);
        return Problem{{x, gamma, beta}, [stats](const std::vector<Tensor>& in) {
            return project(ops::batchnorm2d(in[0], in[1], in[2], *stats, ops::Mode::train), 15);
        }};
    }});
    cases.push_back({"batchnorm2d_eval", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Tensor x = random_tensor(rng, s, -2.0, 2.0);
        Tensor gamma = random_tensor(rng, {s[1]}, 0.5, 1.5);
        Tensor beta = random_tensor(rng, {s[1]});
        auto stats = std::make_shared<ops::BatchNormStats>(s[1]);
        stats->running_mean = random_tensor(rng, {s[1]});
        stats->running_var = random_tensor(rng, {s[1]}, 0.5, 2.0);
        return Problem{{x, gamma, beta}, [stats](const std::vector<Tensor>& in) {
            return project(ops::batchnorm2d(in[0], in[1], in[2], *stats, ops::Mode::eval), 16);
        }};
    }});
    for (PoolKind kind : {PoolKind::avg, PoolKind::max}) {
        const std::string suffix = kind == PoolKind::avg ? "avg" : "max";
        cases.push_back({"pool_spatial_" + suffix, [kind](std::mt19937_64& rng) {
            Tensor x = distinct_tensor(rng, random_shape(rng, 2, 4, 1, 8));
            return Problem{{x}, [kind](const std::vector<Tensor>& in) {
                return project(ops::pool_spatial(in[0], kind), 17);
            }};
        }});
        cases.push_back({"pool_channel_" + suffix, [kind](std::mt19937_64& rng) {
            Tensor x = distinct_tensor(rng, random_shape(rng, 2, 4, 1, 8));
            return Problem{{x}, [kind](const std::vector<Tensor>& in) {
                return project(ops::pool_channel(in[0], kind), 18);
            }};
        }});
    }
    cases.push_back({"concat_channels", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Shape s2 = s;
        s2[1] = 1 + s[1] % 3;
        Tensor a = random_tensor(rng, s);
        Tensor b = random_tensor(rng, s2);
        return Problem{{a, b}, [](const std::vector<Tensor>& in) {
            return project(ops::concat_channels({in[0], in[1]}), 19);
        }};
    }});
    cases.push_back({"fully_connected", [](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> d(1, 8);
        const std::size_t n = 1 + d(rng) % 2, cin = d(rng), cout = d(rng);
        Tensor x = random_tensor(rng, {n, cin});
        Tensor w = random_tensor(rng, {cout, cin});
        Tensor b = random_tensor(rng, {cout});
        return Problem{{x, w, b}, [](const std::vector<Tensor>& in) {
            return project(ops::fully_connected(in[0], in[1], in[2]), 20);
        }};
    }});
    cases.push_back({"softmax_cross_entropy", [](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> d(2, 8);
        const std::size_t n = 1 + d(rng) % 2, k = d(rng);
        Tensor z = random_tensor(rng, {n, k}, -2.0, 2.0);
        std::vector<std::size_t> targets(n);
        std::uniform_int_distribution<std::size_t> td(0, k - 1);
        for (auto& t : targets) t = td(rng);
        return Problem{{z}, [targets](const std::vector<Tensor>& in) {
            return ops::softmax_cross_entropy(in[0], targets);
        }};
    }});
    cases.push_back({"mul_broadcast", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Tensor f = random_tensor(rng, s);
        Tensor channel = random_tensor(rng, {s[0], s[1], 1, 1});
        Tensor spatial = random_tensor(rng, {s[0], 1, s[2], s[3]});
        return Problem{{f, channel, spatial}, [](const std::vector<Tensor>& in) {
            return project(ops::mul(ops::mul(in[0], in[1]), in[2]), 21);
        }};
    }});
    cases.push_back({"add_sub_scale", [](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> d(1, 8);
        const std::size_t n = 1 + d(rng) % 2, c = d(rng);
        Tensor a = random_tensor(rng, {n, c});
        Tensor b = random_tensor(rng, {n, 1});
        return Problem{{a, b}, [](const std::vector<Tensor>& in) {
            return project(ops::sub(ops::scale(ops::add(in[0], in[1]), 2.5), in[1]), 22);
        }};
    }});
    cases.push_back({"mean_axis_reshape", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Tensor x = random_tensor(rng, s);
        return Problem{{x}, [s](const std::vector<Tensor>& in) {
            Tensor flat = ops::reshape(in[0], {s[0], s[1] * s[2] * s[3]});
            return project(ops::mean_axis(flat, 1), 23);
        }};
    }});
    return cases;
}

}  // namespace nsnp::gradcheck
