#include "nsnp/nn_gradcheck.h"

#include <memory>

#include "nsnp/attention.h"
#include "nsnp/layers.h"
#include "nsnp/model.h"
#include "nsnp/ops.h"

namespace nsnp::gradcheck {

namespace {

using ops::Mode;

void randomize(std::mt19937_64& rng, Tensor& t, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.mutable_values()) v = dist(rng);
}

Case nsnp_conv_case(const char* name, Mode mode) {
    return {name, [mode](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 2, 8);
        std::uniform_int_distribution<std::size_t> cd(1, 4), kd(1, 3), sd(1, 2);
        const std::size_t k = kd(rng);
        Initializer init(rng());
        auto layer = std::make_shared<layers::NsnpConvLayer>(s[1], cd(rng), k, ops::Stride2d{sd(rng), sd(rng)},
                                                             ops::Padding2d::symmetric(k / 2, k / 2), init);
        randomize(rng, layer->bn.gamma, 0.5, 1.5);
        randomize(rng, layer->bn.beta, -0.5, 0.5);
        randomize(rng, layer->bn.stats.running_mean, -0.5, 0.5);
        randomize(rng, layer->bn.stats.running_var, 0.5, 2.0);
        Tensor x = random_tensor(rng, s);
        if (mode == Mode::train && s[0] * s[2] * s[3] < 2) x = random_tensor(rng, {2, s[1], s[2], s[3]});
        return Problem{{x, layer->kernel, layer->bn.gamma, layer->bn.beta},
                       [layer, mode](const std::vector<Tensor>& in) {
                           return project(layers::nsnp_conv_forward(in[0], *layer, mode), 31);
                       }};
    }};
}

}  // namespace

std::vector<Case> layer_cases() {
    std::vector<Case> cases;
    cases.push_back(nsnp_conv_case("nsnp_conv_forward_train", Mode::train));
    cases.push_back(nsnp_conv_case("nsnp_conv_forward_eval", Mode::eval));
    cases.push_back({"nsnp_additive_path", [](std::mt19937_64& rng) {
        Tensor x = random_tensor(rng, random_shape(rng, 2, 4, 1, 8));
        return Problem{{x}, [](const std::vector<Tensor>& in) { return project(layers::nsnp_additive_path(in[0]), 32); }};
    }});
    cases.push_back({"nsnp_module_forward", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Initializer init(rng());
        auto m = std::make_shared<layers::NsnpModule>(s[1], s[2], s[3], init);
        Tensor x = away_from_zero(rng, s);
        return Problem{{x, m->w1, m->w2, m->w3}, [m](const std::vector<Tensor>& in) {
            return project(layers::nsnp_module_forward(in[0], *m), 33);
        }};
    }});
    return cases;
}

std::vector<Case> attention_cases() {
    std::vector<Case> cases;
    cases.push_back({"channel_attention", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Initializer init(rng());
        auto ca = std::make_shared<attention::ChannelAttention>(s[1], init);
        Tensor x = distinct_tensor(rng, s);
        return Problem{{x, ca->w_fc}, [ca](const std::vector<Tensor>& in) {
            return project(attention::channel_attention(in[0], *ca), 41);
        }};
    }});
    cases.push_back({"spatial_attention", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 2, 8);
        Initializer init(rng());
        auto sa = std::make_shared<attention::SpatialAttention>(init);
        Tensor x = distinct_tensor(rng, s);
        return Problem{{x, sa->w}, [sa](const std::vector<Tensor>& in) {
            return project(attention::spatial_attention(in[0], *sa), 42);
        }};
    }});
    cases.push_back({"fuse_stages", [](std::mt19937_64& rng) {
        std::uniform_int_distribution<std::size_t> nd(1, 2), hd(1, 2), wd(1, 2);
        const std::size_t n = nd(rng), h = hd(rng), w = wd(rng);
        Initializer init(rng());
        auto fb = std::make_shared<attention::FusionBlock>(init);
        randomize(rng, fb->w1);
        randomize(rng, fb->w2);
        Tensor a1 = random_tensor(rng, {n, 1, 4 * h, 4 * w}, 0.0, 1.0);
        Tensor a2 = random_tensor(rng, {n, 1, 2 * h, 2 * w}, 0.0, 1.0);
        Tensor a3 = random_tensor(rng, {n, 1, h, w}, 0.0, 1.0);
        return Problem{{a1, a2, a3, fb->w1, fb->w2, fb->w_fusion}, [fb](const std::vector<Tensor>& in) {
            return project(attention::fuse_stages(in[0], in[1], in[2], *fb), 43);
        }};
    }});
    cases.push_back({"apply_attention", [](std::mt19937_64& rng) {
        Shape s = random_shape(rng, 2, 4, 1, 8);
        Tensor f = random_tensor(rng, s);
        Tensor a = random_tensor(rng, {s[0], 1, s[2], s[3]}, 0.0, 1.0);
        return Problem{{f, a}, [](const std::vector<Tensor>& in) {
            return project(attention::apply_attention(in[0], in[1]), 44);
        }};
    }});
    return cases;
}

namespace {

constexpr double kKinkMargin = 1e-4;

model::ModelConfig small_model_config(bool msa, bool nsnp) {
    model::ModelConfig cfg;
    cfg.backbone.input_size = 32;
    cfg.backbone.stem_channels = 4;
    cfg.backbone.stage_channels = {4, 6, 8};
    cfg.backbone.blocks_per_stage = 1;
    cfg.num_classes = 2;
    cfg.enable_msa = msa;
    cfg.enable_nsnp = nsnp;
    return cfg;
}

Case model_case(const char* name, bool msa, bool nsnp) {
    return {name,
            [msa, nsnp](std::mt19937_64& rng) {
                // Central differences are meaningless within h of a relu or
                // max-pool kink, so redraw until every kink is well clear.
                std::shared_ptr<model::Model> m;
                Tensor image;
                for (int attempt = 0; attempt < 50; ++attempt) {
                    m = std::make_shared<model::Model>(small_model_config(msa, nsnp), rng());
                    image = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
                    ops::KinkProbe probe;
                    NoGradGuard guard;
                    m->forward(image, Mode::train);
                    if (probe.min_margin >= kKinkMargin) break;
                }
                std::vector<Tensor> leaves{image};
                for (const Tensor& p : m->parameters()) leaves.push_back(p);
                return Problem{leaves, [m](const std::vector<Tensor>& in) {
                    return project(m->forward(in[0], Mode::train), 51);
                }};
            },
            1e-3};
}

}  // namespace

std::vector<Case> model_cases() {
    return {model_case("model_full", true, true), model_case("model_msa_only", true, false),
            model_case("model_nsnp_only", false, true), model_case("model_backbone_gap", false, false)};
}

std::vector<Case> all_cases() {
    std::vector<Case> cases = primitive_cases();
    for (auto group : {layer_cases(), attention_cases(), model_cases()}) {
        cases.insert(cases.end(), group.begin(), group.end());
    }
    return cases;
}

}  // namespace nsnp::gradcheck
