#include "focustrack/encoder.hpp"

#include <algorithm>

#include "focustrack/attention.hpp"
#include "focustrack/errors.hpp"
#include "focustrack/layers.hpp"

namespace focustrack {

namespace {
std::string blk(std::size_t l, const char* part) { return "blk" + std::to_string(l) + "." + part; }
}  // namespace

void init_encoder(const EncoderConfig& cfg, GradientTape& tape, Rng& rng, DType dtype) {
    cfg.validate();
    const std::size_t c = cfg.embed_dim;
    add_linear(tape, "patch_embed", cfg.channels * cfg.patch * cfg.patch, c, rng, dtype);
    if (cfg.use_cls) {
        add_embedding(tape, "cls.token", {1, c}, rng, dtype);
        add_embedding(tape, "pos.cls", {1, c}, rng, dtype);
    }
    add_embedding(tape, "pos.z", {cfg.template_tokens(), c}, rng, dtype);
    add_embedding(tape, "pos.x", {cfg.search_tokens(), c}, rng, dtype);
    add_embedding(tape, "id.z", {1, c}, rng, dtype);
    add_embedding(tape, "id.x", {1, c}, rng, dtype);
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        add_layer_norm(tape, blk(l, "ln1"), c, dtype);
        add_linear(tape, blk(l, "qkv"), c, 3 * c, rng, dtype);
        add_linear(tape, blk(l, "proj"), c, c, rng, dtype);
        add_layer_norm(tape, blk(l, "ln2"), c, dtype);
        add_linear(tape, blk(l, "fc1"), c, cfg.ffn_ratio * c, rng, dtype);
        add_linear(tape, blk(l, "fc2"), cfg.ffn_ratio * c, c, rng, dtype);
    }
}

ad::Var patch_embed(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind) {
    const Tensor& img = image.value();
    if (img.rank() != 3 || img.dim(0) != cfg.channels || img.dim(1) != img.dim(2)) {
        throw DimensionError("patch_embed: expected [" + std::to_string(cfg.channels) + " x S x S], got " +
                             shape_string(img.shape()));
    }
    return apply_linear(bind, "patch_embed", ad::unfold_patches(image, cfg.patch));
}

Tensor patch_embed(const Tensor& image, const EncoderConfig& cfg, const GradientTape& weights) {
    ad::Binding bind(weights);
    return patch_embed(ad::constant(image), cfg, bind).value();
}

namespace {

ad::Var embed(const ad::Var& image, std::size_t side, const char* pos, const char* id, const EncoderConfig& cfg,
              ad::Binding& bind) {
    if (image.value().rank() != 3 || image.dim(1) != side) {
        throw DimensionError(std::string("embed: expected side ") + std::to_string(side) + ", got " +
                             shape_string(image.shape()));
    }
    ad::Var tokens = ad::add(patch_embed(image, cfg, bind), bind(pos));
    return ad::add_row(tokens, bind(id));
}

}  // namespace

ad::Var embed_template(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind) {
    return embed(image, cfg.template_side, "pos.z", "id.z", cfg, bind);
}

ad::Var embed_search(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind) {
    return embed(image, cfg.search_side, "pos.x", "id.x", cfg, bind);
}

EncoderVars run_encoder(const ad::Var& z, const ad::Var& x, const EncoderConfig& cfg, ad::Binding& bind) {
    const std::size_t c = cfg.embed_dim;
    const std::size_t nz = cfg.template_tokens(), nx = cfg.search_tokens();
    if (z.value().shape() != Shape{nz, c}) throw DimensionError("encoder: template tokens " + shape_string(z.shape()));
    if (x.value().shape() != Shape{nx, c}) throw DimensionError("encoder: search tokens " + shape_string(x.shape()));

    std::vector<ad::Var> parts;
    if (cfg.use_cls) parts.push_back(ad::add(bind("cls.token"), bind("pos.cls")));
    parts.push_back(z);
    parts.push_back(x);
    ad::Var seq = ad::concat_rows(parts);
    const std::size_t off = cfg.use_cls ? 1 : 0;

    EncoderVars out;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        ad::Var h = apply_layer_norm(bind, blk(l, "ln1"), seq);
        ad::Var qkv = apply_linear(bind, blk(l, "qkv"), h);
        AttentionResult att = attention_core(ad::slice_cols(qkv, 0, c), ad::slice_cols(qkv, c, 2 * c),
                                             ad::slice_cols(qkv, 2 * c, 3 * c), cfg.heads);
        seq = ad::add(seq, apply_linear(bind, blk(l, "proj"), att.out));
        ad::Var h2 = apply_layer_norm(bind, blk(l, "ln2"), seq);
        ad::Var ffn = apply_linear(bind, blk(l, "fc2"), ad::gelu(apply_linear(bind, blk(l, "fc1"), h2)));
        seq = ad::add(seq, ffn);
        if (std::find(cfg.tap_layers.begin(), cfg.tap_layers.end(), l) != cfg.tap_layers.end()) {
            out.taps.push_back(ad::slice_rows(seq, off + nz, off + nz + nx));
        }
    }
    if (cfg.use_cls) out.cls_out = ad::slice_rows(seq, 0, 1);
    out.template_out = ad::slice_rows(seq, off, off + nz);
    out.search_out = ad::slice_rows(seq, off + nz, off + nz + nx);
    return out;
}

EncoderOutput encode(const Tensor& template_image, const Tensor& search_image, const EncoderConfig& cfg,
                     const GradientTape& weights) {
    ad::Binding bind(weights);
    EncoderVars v = run_encoder(embed_template(ad::constant(template_image), cfg, bind),
                                embed_search(ad::constant(search_image), cfg, bind), cfg, bind);
    EncoderOutput out;
    if (cfg.use_cls) out.cls_out = v.cls_out.value();
    out.template_out = v.template_out.value();
    out.search_out = v.search_out.value();
    for (const auto& t : v.taps) out.taps.push_back(t.value());
    return out;
}

}  // namespace focustrack
