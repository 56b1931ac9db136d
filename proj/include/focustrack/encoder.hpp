#pragma once

#include <vector>

#include "focustrack/autograd.hpp"
#include "focustrack/model_config.hpp"
#include "focustrack/rng.hpp"

namespace focustrack {

// Joint [cls; template; search] ViT backbone.
//
// Parameters (canonical names): patch_embed.{w,b}, cls.token, pos.cls, pos.z,
// pos.x, id.z, id.x and per layer l = 1..L blk{l}.{ln1,qkv,proj,ln2,fc1,fc2}.{w,b}.
// Blocks are pre-norm: x += MHA(LN(x)); x += FFN(LN(x)).

struct EncoderOutput {
    Tensor cls_out;                // [1 x C], empty when the config has no CLS token
    Tensor template_out;           // [Nz x C]
    Tensor search_out;             // [Nx x C]
    std::vector<Tensor> taps;      // [Nx x C] per tap layer
};

struct EncoderVars {
    ad::Var cls_out;
    ad::Var template_out;
    ad::Var search_out;
    std::vector<ad::Var> taps;
};

void init_encoder(const EncoderConfig& cfg, GradientTape& tape, Rng& rng, DType dtype);

// Shared patch projection: unfold P x P patches, multiply by patch_embed.w.
ad::Var patch_embed(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind);
Tensor patch_embed(const Tensor& image, const EncoderConfig& cfg, const GradientTape& weights);

// Patch tokens plus positional and frame-identity embeddings.
ad::Var embed_template(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind);
ad::Var embed_search(const ad::Var& image, const EncoderConfig& cfg, ad::Binding& bind);

// Runs the L blocks on already embedded template/search tokens.
EncoderVars run_encoder(const ad::Var& template_tokens, const ad::Var& search_tokens, const EncoderConfig& cfg,
                        ad::Binding& bind);

EncoderOutput encode(const Tensor& template_image, const Tensor& search_image, const EncoderConfig& cfg,
                     const GradientTape& weights);

}  // namespace focustrack
