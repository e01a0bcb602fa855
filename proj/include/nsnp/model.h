#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "nsnp/attention.h"
#include "nsnp/layers.h"

namespace nsnp::model {

using ops::Mode;

struct BackboneConfig {
    std::size_t input_size = 64;  // square, divisible by 32
    std::size_t stem_channels = 16;
    std::array<std::size_t, 3> stage_channels{24, 48, 96};
    std::size_t blocks_per_stage = 1;

    // Spatial extent of stage k (0-based): S/4, S/8, S/16.
    std::size_t stage_size(std::size_t k) const { return input_size / (4u << k); }
};

struct ModelConfig {
    BackboneConfig backbone;
    std::size_t num_classes = 2;
    bool enable_msa = true;
    bool enable_nsnp = true;

    // All violations, empty when valid.
    std::vector<std::string> problems() const;
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct StageOutputs {
    Tensor f1, f2, f3;
};

// Stem (stride-2 conv) and initial downsample (stride-2 conv) reduce the input
// 4x; stage 1 keeps that size, stages 2 and 3 open with a stride-2 conv.
class Backbone {
public:
    Backbone(const BackboneConfig& cfg, Initializer& init);
    StageOutputs forward(const Tensor& image, Mode mode);
    void collect(const std::string& prefix, NamedTensors& out) const;

private:
    BackboneConfig cfg_;
    layers::ConvBnRelu stem_;
    layers::ConvBnRelu downsample_;
    std::array<std::vector<layers::ConvBnRelu>, 3> stages_;
};

// Intermediate maps of one forward pass, for inspection and export.
struct ForwardResult {
    Tensor logits;
    StageOutputs stages;
    std::optional<std::array<Tensor, 3>> stage_maps;  // SA(F1), SA(F2), SA(F3)
    std::optional<Tensor> fused_map;
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    Tensor forward(const Tensor& images, Mode mode);
    ForwardResult forward_detailed(const Tensor& images, Mode mode);

    // Parameters and buffers in a fixed order with dotted path names.
    NamedTensors state() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    // Rounds every parameter and buffer to float precision.
    void round_state_to_float();

    bool has_attention() const { return attention_.has_value(); }
    bool has_nsnp() const { return nsnp_.has_value(); }

private:
    struct AttentionBlocks {
        std::array<attention::SpatialAttention, 3> spatial;
        attention::FusionBlock fusion;
        attention::ChannelAttention channel;
    };

    ModelConfig cfg_;
    Backbone backbone_;
    std::optional<AttentionBlocks> attention_;
    std::optional<layers::NsnpModule> nsnp_;
    Tensor fc_weight_;
    Tensor fc_bias_;
};

// Checkpoint layout (all integers little-endian):
//   "NSNPCKPT" | u32 version | u32 config length | config JSON |
//   u32 entry count | entries { u32 name length | name | u32 rank |
//   rank x u32 extent | numel x f32 }
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
std::vector<char> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<char>& bytes);

}  // namespace nsnp::model
