#include "nsnp/model.h"

#include <cstring>
#include <map>
#include <set>

#include "nsnp/error.h"
#include "nsnp/io.h"
#include "nsnp/ops.h"

namespace nsnp::model {

using nlohmann::json;

std::vector<std::string> ModelConfig::problems() const {
    std::vector<std::string> out;
    const auto& b = backbone;
    if (b.input_size == 0 || b.input_size % 32 != 0) {
        out.push_back("input_size must be a positive multiple of 32, got " + std::to_string(b.input_size));
    }
    if (b.stem_channels == 0) out.push_back("stem_channels must be >= 1");
    for (std::size_t k = 0; k < 3; ++k) {
        if (b.stage_channels[k] == 0) out.push_back("stage_channels[" + std::to_string(k) + "] must be >= 1");
    }
    if (b.blocks_per_stage == 0) out.push_back("blocks_per_stage must be >= 1");
    if (num_classes != 2 && num_classes != 8) {
        out.push_back("num_classes must be 2 or 8, got " + std::to_string(num_classes));
    }
    return out;
}

void ModelConfig::validate() const {
    auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid model config:";
    for (const auto& s : p) msg += "\n  " + s;
    throw ValidationError(msg);
}

json to_json(const ModelConfig& cfg) {
    const auto& b = cfg.backbone;
    return json{{"input_size", b.input_size},
                {"stem_channels", b.stem_channels},
                {"stage_channels", {b.stage_channels[0], b.stage_channels[1], b.stage_channels[2]}},
                {"blocks_per_stage", b.blocks_per_stage},
                {"num_classes", cfg.num_classes},
                {"enable_msa", cfg.enable_msa},
                {"enable_nsnp", cfg.enable_nsnp}};
}

namespace {

std::size_t get_count(const json& v, const std::string& key, std::vector<std::string>& errs) {
    if (!v.is_number_unsigned()) {
        errs.push_back(key + " must be a non-negative integer");
        return 0;
    }
    return v.get<std::size_t>();
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("model config must be a JSON object");
    ModelConfig cfg;
    std::vector<std::string> errs;
    for (const auto& [key, v] : j.items()) {
        if (key == "input_size") {
            cfg.backbone.input_size = get_count(v, key, errs);
        } else if (key == "stem_channels") {
            cfg.backbone.stem_channels = get_count(v, key, errs);
        } else if (key == "stage_channels") {
            if (!v.is_array() || v.size() != 3) {
                errs.push_back("stage_channels must be an array of 3 integers");
                continue;
            }
            for (std::size_t k = 0; k < 3; ++k) {
                cfg.backbone.stage_channels[k] = get_count(v[k], "stage_channels[" + std::to_string(k) + "]", errs);
            }
        } else if (key == "blocks_per_stage") {
            cfg.backbone.blocks_per_stage = get_count(v, key, errs);
        } else if (key == "num_classes") {
            cfg.num_classes = get_count(v, key, errs);
        } else if (key == "enable_msa" || key == "enable_nsnp") {
            if (!v.is_boolean()) {
                errs.push_back(key + " must be true or false");
                continue;
            }
            (key == "enable_msa" ? cfg.enable_msa : cfg.enable_nsnp) = v.get<bool>();
        } else {
            errs.push_back("unknown key '" + key + "'");
        }
    }
    if (errs.empty()) errs = cfg.problems();
    if (!errs.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& s : errs) msg += "\n  " + s;
        throw ValidationError(msg);
    }
    return cfg;
}

Backbone::Backbone(const BackboneConfig& cfg, Initializer& init)
    : cfg_(cfg),
      stem_(3, cfg.stem_channels, 3, 2, init),
      downsample_(cfg.stem_channels, cfg.stage_channels[0], 3, 2, init) {
    std::size_t cin = cfg.stage_channels[0];
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t cout = cfg.stage_channels[k];
        for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
            const std::size_t stride = (k > 0 && b == 0) ? 2 : 1;
            stages_[k].emplace_back(cin, cout, 3, stride, init);
            cin = cout;
        }
    }
}

StageOutputs Backbone::forward(const Tensor& image, Mode mode) {
    const std::size_t s = cfg_.input_size;
    if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != s || image.dim(3) != s) {
        throw ShapeError("backbone expects [N,3," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                         shape_str(image.shape()));
    }
    Tensor x = downsample_.forward(stem_.forward(image, mode), mode);
    std::array<Tensor, 3> f;
    for (std::size_t k = 0; k < 3; ++k) {
        for (auto& block : stages_[k]) x = block.forward(x, mode);
        f[k] = x;
    }
    return {f[0], f[1], f[2]};
}

void Backbone::collect(const std::string& prefix, NamedTensors& out) const {
    stem_.collect(join_name(prefix, "stem"), out);
    downsample_.collect(join_name(prefix, "downsample"), out);
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t b = 0; b < stages_[k].size(); ++b) {
            stages_[k][b].collect(join_name(prefix, "stage" + std::to_string(k + 1) + "." + std::to_string(b)), out);
        }
    }
}

namespace {

const BackboneConfig& checked(const ModelConfig& cfg) {
    cfg.validate();
    return cfg.backbone;
}

}  // namespace

// Member initialisation order fixes the draw order from the seeded stream.
Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), backbone_([&]() -> Backbone {
          Initializer init(seed);
          return Backbone(checked(cfg), init);
      }()) {
    // A second stream for the head keeps backbone weights independent of the
    // ablation flags, so ablated variants share their common parameters.
    Initializer init(seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t c3 = cfg.backbone.stage_channels[2];
    const std::size_t s3 = cfg.backbone.stage_size(2);
    if (cfg.enable_msa) {
        attention_.emplace(AttentionBlocks{
            {attention::SpatialAttention(init), attention::SpatialAttention(init), attention::SpatialAttention(init)},
            attention::FusionBlock(init),
            attention::ChannelAttention(c3, init)});
    }
    if (cfg.enable_nsnp) nsnp_.emplace(c3, s3, s3, init);
    Initializer head(seed ^ 0xc2b2ae3d27d4eb4fULL);
    fc_weight_ = head.uniform_fan_in({cfg.num_classes, c3}, c3);
    fc_bias_ = head.uniform_fan_in({cfg.num_classes}, c3);
    fc_weight_.set_requires_grad();
    fc_bias_.set_requires_grad();
}

ForwardResult Model::forward_detailed(const Tensor& images, Mode mode) {
    ForwardResult r;
    r.stages = backbone_.forward(images, mode);
    Tensor features = r.stages.f3;
    if (attention_) {
        auto& a = *attention_;
        std::array<Tensor, 3> maps{attention::spatial_attention(r.stages.f1, a.spatial[0]),
                                   attention::spatial_attention(r.stages.f2, a.spatial[1]),
                                   attention::spatial_attention(r.stages.f3, a.spatial[2])};
        Tensor fused = attention::fuse_stages(maps[0], maps[1], maps[2], a.fusion);
        features = attention::channel_attention(attention::apply_attention(features, fused), a.channel);
        r.stage_maps = maps;
        r.fused_map = fused;
    }
    const std::size_t n = features.dim(0), c = features.dim(1);
    Tensor encoded = nsnp_ ? layers::nsnp_module_forward(features, *nsnp_)
                           : ops::reshape(ops::pool_spatial(features, ops::PoolKind::avg), {n, c});
    r.logits = ops::fully_connected(encoded, fc_weight_, fc_bias_);
    return r;
}

Tensor Model::forward(const Tensor& images, Mode mode) { return forward_detailed(images, mode).logits; }

NamedTensors Model::state() const {
    NamedTensors out;
    backbone_.collect("backbone", out);
    if (attention_) {
        for (std::size_t k = 0; k < 3; ++k) attention_->spatial[k].collect("sa" + std::to_string(k + 1), out);
        attention_->fusion.collect("fusion", out);
        attention_->channel.collect("ca", out);
    }
    if (nsnp_) nsnp_->collect("nsnp", out);
    out.push_back({"fc.weight", fc_weight_, true});
    out.push_back({"fc.bias", fc_bias_, true});
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : state()) {
        if (nt.trainable) out.push_back(nt.tensor);
    }
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += p.numel();
    return total;
}

void Model::round_state_to_float() {
    for (auto& nt : state()) round_to_float(nt.tensor);
}

// Checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'S', 'N', 'P', 'C', 'K', 'P', 'T'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_bytes(std::vector<char>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    explicit Reader(const std::vector<char>& b) : bytes_(b) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw ValidationError(std::string("checkpoint truncated while reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    float f32() {
        const std::uint32_t bits = u32("tensor data");
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> serialize_checkpoint(const Model& model) {
    std::vector<char> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kCheckpointVersion);
    put_bytes(out, to_json(model.config()).dump());
    const NamedTensors st = model.state();
    put_u32(out, static_cast<std::uint32_t>(st.size()));
    for (const auto& nt : st) {
        put_bytes(out, nt.name);
        put_u32(out, static_cast<std::uint32_t>(nt.tensor.rank()));
        for (std::size_t d : nt.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : nt.tensor.values()) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
    return out;
}

Model deserialize_checkpoint(const std::vector<char>& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError("not a checkpoint file (bad magic)");
    }
    std::vector<char> rest(bytes.begin() + sizeof(kMagic), bytes.end());
    Reader r(rest);
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    json cfg_json;
    try {
        cfg_json = json::parse(r.str("config"));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    Model model(model_config_from_json(cfg_json), 0);

    std::map<std::string, Tensor> slots;
    for (auto& nt : model.state()) slots.emplace(nt.name, nt.tensor);
    std::set<std::string> seen;
    const std::uint32_t count = r.u32("entry count");
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string name = r.str("entry name");
        auto it = slots.find(name);
        if (it == slots.end()) throw ValidationError("checkpoint entry '" + name + "' does not belong to this model");
        if (!seen.insert(name).second) throw ValidationError("checkpoint entry '" + name + "' appears twice");
        const std::uint32_t rank = r.u32("rank");
        Shape shape(rank);
        for (auto& d : shape) d = r.u32("extent");
        Tensor& dst = it->second;
        if (shape != dst.shape()) {
            throw ValidationError("checkpoint entry '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                  shape_str(dst.shape()));
        }
        for (double& v : dst.mutable_values()) v = static_cast<double>(r.f32());
    }
    if (seen.size() != slots.size()) {
        for (const auto& [name, t] : slots) {
            if (!seen.count(name)) throw ValidationError("checkpoint is missing entry '" + name + "'");
        }
    }
    if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
    return model;
}

void save_checkpoint(const Model& model, const std::string& path) { write_file_atomic(path, serialize_checkpoint(model)); }

Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace nsnp::model
