#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "focustrack/autograd.hpp"
#include "focustrack/model_config.hpp"
#include "focustrack/rng.hpp"

namespace focustrack {

// Attention-to-mask head.
//
// A learnable query (atm.query, [1 x D]) threads through M blocks. Block b
// projects its tap C -> D (atm.b{b}.in) and runs `layers_per_block`
// cross-attention layers atm.b{b}.l{j}.{ln1,q,k,v,proj,ln2,fc1,fc2}. The
// head-averaged scaled q.k^T of the block's last layer, reshaped G x G, is
// the block's mask logit map. atm.cls maps the final query to (uav, background).

struct MaskOutput {
    Tensor fused_mask;                   // [G x G] in [0, 1]
    std::vector<Tensor> per_block_masks; // sigmoid(mask logits), [G x G] each
    std::array<double, 2> class_probs{0.5, 0.5};
};

struct AtmBlockVars {
    ad::Var query;        // [1 x D]
    ad::Var mask_logits;  // [G x G]
};

struct MaskVars {
    ad::Var fused_mask;                  // [G x G]
    std::vector<ad::Var> per_block_masks;
    std::vector<ad::Var> mask_logits;
    ad::Var class_probs;                 // [1 x 2]
};

void init_atm(const EncoderConfig& enc, const AtmConfig& cfg, GradientTape& tape, Rng& rng, DType dtype);

// `block` is 1-based.
AtmBlockVars atm_block(const ad::Var& query, const ad::Var& tap, std::size_t block, const AtmConfig& cfg,
                       ad::Binding& bind);

// taps ordered shallow -> deep, one per block. fused = mean_b sigmoid(logits_b) * P(uav).
MaskVars atm_forward(const std::vector<ad::Var>& taps, const AtmConfig& cfg, ad::Binding& bind);
MaskOutput atm_forward(const std::vector<Tensor>& taps, const AtmConfig& cfg, const GradientTape& weights);

// score * fused_mask, elementwise.
Tensor refine_scores(const Tensor& score, const Tensor& fused_mask);

// Bilinear upsample with the crop resize convention; out_side >= G.
Tensor upsample_mask(const Tensor& fused_mask, std::size_t out_side);

// round(255 * mask) per pixel, row-major.
std::vector<std::uint8_t> mask_to_gray8(const Tensor& mask);

}  // namespace focustrack
