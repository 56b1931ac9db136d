#include "focustrack/model_config.hpp"

#include "focustrack/errors.hpp"

namespace focustrack {

void EncoderConfig::validate() const {
    if (patch == 0 || embed_dim == 0 || heads == 0 || channels == 0 || ffn_ratio == 0) {
        throw ConfigError("encoder: extents must be positive");
    }
    if (template_side % patch != 0 || search_side % patch != 0) {
        throw ConfigError("encoder: template/search sides must be divisible by the patch size");
    }
    if (embed_dim % heads != 0) throw ConfigError("encoder: embed_dim not divisible by heads");
    for (std::size_t i = 0; i < tap_layers.size(); ++i) {
        if (tap_layers[i] < 1 || tap_layers[i] > layers) throw ConfigError("encoder: tap layer out of range");
        if (i > 0 && tap_layers[i] <= tap_layers[i - 1]) throw ConfigError("encoder: tap layers must increase");
    }
}

void HeadConfig::validate(const EncoderConfig&) const {
    if (channels < 4 || channels % 4 != 0) throw ConfigError("head: channels must be a positive multiple of 4");
}

void AtmConfig::validate(const EncoderConfig& enc) const {
    if (blocks != enc.tap_layers.size()) throw ConfigError("atm: block count must equal the number of tap layers");
    if (layers_per_block == 0) throw ConfigError("atm: need at least one cross-attention layer per block");
    if (heads == 0 || hidden % heads != 0) throw ConfigError("atm: hidden not divisible by heads");
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.preset = "toy";
    return c;
}

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.preset = "full";
    c.encoder.patch = 16;
    c.encoder.embed_dim = 768;
    c.encoder.layers = 12;
    c.encoder.heads = 12;
    c.encoder.template_side = 128;
    c.encoder.search_side = 256;
    c.encoder.channels = 3;
    c.encoder.tap_layers = {6, 8, 12};
    c.head.channels = 256;
    c.presence.heads = 8;
    c.atm.hidden = 384;
    c.atm.heads = 8;
    c.atm.ffn_ratio = 4;
    return c;
}

ModelConfig ModelConfig::preset_named(const std::string& name) {
    if (name == "toy") return toy();
    if (name == "full") return full();
    throw ConfigError("unknown preset '" + name + "' (expected toy or full)");
}

void ModelConfig::validate() const {
    encoder.validate();
    head.validate(encoder);
    if (presence.heads == 0 || encoder.embed_dim % presence.heads != 0) {
        throw ConfigError("presence: embed_dim not divisible by heads");
    }
    atm.validate(encoder);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"preset", c.preset},
                       {"patch", c.encoder.patch},
                       {"embed_dim", c.encoder.embed_dim},
                       {"layers", c.encoder.layers},
                       {"heads", c.encoder.heads},
                       {"template_side", c.encoder.template_side},
                       {"search_side", c.encoder.search_side},
                       {"channels", c.encoder.channels},
                       {"ffn_ratio", c.encoder.ffn_ratio},
                       {"tap_layers", c.encoder.tap_layers},
                       {"use_cls", c.encoder.use_cls},
                       {"head_channels", c.head.channels},
                       {"presence_heads", c.presence.heads},
                       {"atm_blocks", c.atm.blocks},
                       {"atm_layers_per_block", c.atm.layers_per_block},
                       {"atm_hidden", c.atm.hidden},
                       {"atm_heads", c.atm.heads},
                       {"atm_ffn_ratio", c.atm.ffn_ratio},
                       {"dtype", c.dtype == DType::f32 ? "f32" : "f64"},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c = ModelConfig::preset_named(j.value("preset", std::string("toy")));
    c.encoder.patch = j.value("patch", c.encoder.patch);
    c.encoder.embed_dim = j.value("embed_dim", c.encoder.embed_dim);
    c.encoder.layers = j.value("layers", c.encoder.layers);
    c.encoder.heads = j.value("heads", c.encoder.heads);
    c.encoder.template_side = j.value("template_side", c.encoder.template_side);
    c.encoder.search_side = j.value("search_side", c.encoder.search_side);
    c.encoder.channels = j.value("channels", c.encoder.channels);
    c.encoder.ffn_ratio = j.value("ffn_ratio", c.encoder.ffn_ratio);
    c.encoder.tap_layers = j.value("tap_layers", c.encoder.tap_layers);
    c.encoder.use_cls = j.value("use_cls", c.encoder.use_cls);
    c.head.channels = j.value("head_channels", c.head.channels);
    c.presence.heads = j.value("presence_heads", c.presence.heads);
    c.atm.blocks = j.value("atm_blocks", c.atm.blocks);
    c.atm.layers_per_block = j.value("atm_layers_per_block", c.atm.layers_per_block);
    c.atm.hidden = j.value("atm_hidden", c.atm.hidden);
    c.atm.heads = j.value("atm_heads", c.atm.heads);
    c.atm.ffn_ratio = j.value("atm_ffn_ratio", c.atm.ffn_ratio);
    const std::string dt = j.value("dtype", std::string(c.dtype == DType::f32 ? "f32" : "f64"));
    if (dt != "f32" && dt != "f64") throw ConfigError("dtype must be f32 or f64");
    c.dtype = dt == "f32" ? DType::f32 : DType::f64;
    c.seed = j.value("seed", c.seed);
}

}  // namespace focustrack
