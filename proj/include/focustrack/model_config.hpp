#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "focustrack/tensor.hpp"

namespace focustrack {

struct EncoderConfig {
    std::size_t patch = 8;
    std::size_t embed_dim = 64;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t template_side = 32;
    std::size_t search_side = 64;
    std::size_t channels = 1;
    std::size_t ffn_ratio = 4;
    std::vector<std::size_t> tap_layers{2, 3, 4};
    // false reproduces the plain template+search backbone without a CLS token.
    bool use_cls = true;

    std::size_t template_tokens() const { return (template_side / patch) * (template_side / patch); }
    std::size_t search_tokens() const { return grid() * grid(); }
    std::size_t grid() const { return search_side / patch; }
    std::size_t sequence_length() const { return (use_cls ? 1 : 0) + template_tokens() + search_tokens(); }
    void validate() const;
};

// Box head: per branch, 3x3 convs channels -> channels/2 -> channels/4, then a
// 1x1 projection.
struct HeadConfig {
    std::size_t channels = 32;
    void validate(const EncoderConfig& enc) const;
};

// Attention pooling + two-layer presence MLP.
struct PresenceConfig {
    std::size_t heads = 4;
};

struct AtmConfig {
    std::size_t blocks = 3;
    std::size_t layers_per_block = 3;
    std::size_t hidden = 32;
    std::size_t heads = 4;
    std::size_t ffn_ratio = 2;
    void validate(const EncoderConfig& enc) const;
};

struct ModelConfig {
    std::string preset = "toy";
    EncoderConfig encoder;
    HeadConfig head;
    PresenceConfig presence;
    AtmConfig atm;
    DType dtype = DType::f32;
    std::uint64_t seed = 0;

    static ModelConfig toy();
    static ModelConfig full();
    static ModelConfig preset_named(const std::string& name);
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace focustrack
