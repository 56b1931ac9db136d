#include "focustrack/atm.hpp"

#include <algorithm>
#include <cmath>

#include "focustrack/attention.hpp"
#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"
#include "focustrack/layers.hpp"
#include "focustrack/sampling.hpp"

namespace focustrack {

namespace {

std::string block_prefix(std::size_t b) { return "atm.b" + std::to_string(b); }
std::string layer_prefix(std::size_t b, std::size_t j) { return block_prefix(b) + ".l" + std::to_string(j); }

std::size_t square_side(std::size_t n) {
    const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    if (g * g != n) throw DimensionError("atm: token count " + std::to_string(n) + " is not a square grid");
    return g;
}

}  // namespace

void init_atm(const EncoderConfig& enc, const AtmConfig& cfg, GradientTape& tape, Rng& rng, DType dtype) {
    cfg.validate(enc);
    const std::size_t d = cfg.hidden;
    add_embedding(tape, "atm.query", {1, d}, rng, dtype);
    for (std::size_t b = 1; b <= cfg.blocks; ++b) {
        add_linear(tape, block_prefix(b) + ".in", enc.embed_dim, d, rng, dtype);
        for (std::size_t j = 1; j <= cfg.layers_per_block; ++j) {
            const std::string p = layer_prefix(b, j);
            add_layer_norm(tape, p + ".ln1", d, dtype);
            for (const char* part : {".q", ".k", ".v", ".proj"}) add_linear(tape, p + part, d, d, rng, dtype);
            add_layer_norm(tape, p + ".ln2", d, dtype);
            add_linear(tape, p + ".fc1", d, cfg.ffn_ratio * d, rng, dtype);
            add_linear(tape, p + ".fc2", cfg.ffn_ratio * d, d, rng, dtype);
        }
    }
    add_linear(tape, "atm.cls", d, 2, rng, dtype);
}

AtmBlockVars atm_block(const ad::Var& query, const ad::Var& tap, std::size_t block, const AtmConfig& cfg,
                       ad::Binding& bind) {
    if (query.value().rank() != 2 || query.dim(0) != 1 || query.dim(1) != cfg.hidden) {
        throw DimensionError("atm_block: query must be [1 x " + std::to_string(cfg.hidden) + "]");
    }
    const std::size_t g = square_side(tap.dim(0));
    ad::Var kv = apply_linear(bind, block_prefix(block) + ".in", tap);
    ad::Var q = query;
    ad::Var logits;
    for (std::size_t j = 1; j <= cfg.layers_per_block; ++j) {
        const std::string p = layer_prefix(block, j);
        MhaWeights w{bind(p + ".q.w"), bind(p + ".q.b"), bind(p + ".k.w"),    bind(p + ".k.b"),
                     bind(p + ".v.w"), bind(p + ".v.b"), bind(p + ".proj.w"), bind(p + ".proj.b")};
        MhaResult r = mha(apply_layer_norm(bind, p + ".ln1", q), kv, kv, cfg.heads, w);
        q = ad::add(q, r.out);
        ad::Var h = ad::gelu(apply_linear(bind, p + ".fc1", apply_layer_norm(bind, p + ".ln2", q)));
        q = ad::add(q, apply_linear(bind, p + ".fc2", h));
        if (j == cfg.layers_per_block) logits = ad::reshape(r.mean_scores, {g, g});
    }
    return {q, logits};
}

MaskVars atm_forward(const std::vector<ad::Var>& taps, const AtmConfig& cfg, ad::Binding& bind) {
    if (taps.size() != cfg.blocks) {
        throw ConfigError("atm_forward: got " + std::to_string(taps.size()) + " taps for " +
                          std::to_string(cfg.blocks) + " blocks");
    }
    MaskVars out;
    ad::Var q = bind("atm.query");
    for (std::size_t b = 1; b <= cfg.blocks; ++b) {
        AtmBlockVars r = atm_block(q, taps[b - 1], b, cfg, bind);
        q = r.query;
        out.mask_logits.push_back(r.mask_logits);
        out.per_block_masks.push_back(ad::sigmoid(r.mask_logits));
    }
    out.class_probs = ad::softmax_rows(apply_linear(bind, "atm.cls", q));
    out.fused_mask = ad::scale_by(ad::mean_of(out.per_block_masks), ad::gather(out.class_probs, {0}));
    return out;
}

MaskOutput atm_forward(const std::vector<Tensor>& taps, const AtmConfig& cfg, const GradientTape& weights) {
    ad::Binding bind(weights);
    std::vector<ad::Var> vars;
    for (const auto& t : taps) vars.push_back(ad::constant(t));
    MaskVars v = atm_forward(vars, cfg, bind);
    MaskOutput out;
    out.fused_mask = v.fused_mask.value();
    for (const auto& m : v.per_block_masks) out.per_block_masks.push_back(m.value());
    out.class_probs = {v.class_probs.value()[0], v.class_probs.value()[1]};
    return out;
}

Tensor refine_scores(const Tensor& score, const Tensor& fused_mask) {
    if (score.shape() != fused_mask.shape()) throw DimensionError("refine_scores: score and mask shapes differ");
    return mul(score, fused_mask);
}

Tensor upsample_mask(const Tensor& fused_mask, std::size_t out_side) {
    require_rank(fused_mask, 2, "upsample_mask");
    if (out_side < fused_mask.dim(0)) throw PreconditionError("upsample_mask: out_side smaller than the grid");
    Tensor up = resize_bilinear(fused_mask, out_side, out_side);
    for (auto& v : up.values()) v = std::clamp(v, 0.0, 1.0);
    return up;
}

std::vector<std::uint8_t> mask_to_gray8(const Tensor& mask) {
    std::vector<std::uint8_t> px(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(mask[i], 0.0, 1.0)));
    }
    return px;
}

}  // namespace focustrack
