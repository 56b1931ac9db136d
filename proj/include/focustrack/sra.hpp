#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "focustrack/autograd.hpp"
#include "focustrack/model_config.hpp"
#include "focustrack/rng.hpp"
#include "focustrack/sequence.hpp"

namespace focustrack {

// Live search factor plus its schedule and thresholds.
struct SraState {
    double f = 6.0;
    double f_base = 6.0;
    double f_step = 1.0;
    double f_max = 8.0;
    double t_logits = 0.8;
    double t_score = 0.5;

    void validate() const;
    // Low presence and low peak score grow the factor by one step (capped at
    // f_max); anything else snaps it back to f_base.
    bool expand_condition(double logits, double p_max) const { return logits < t_logits && p_max < t_score; }
};

SraState sra_update(const SraState& state, double logits, double p_max);

// (presence, absence), summing to one. `logits` is the presence probability.
struct PresenceOutput {
    std::array<double, 2> probs{0.5, 0.5};
    double logits() const { return probs[0]; }
};

// Parameters: sra.pool.{q,k,v,proj}.{w,b}, sra.mlp.fc1 (C -> C/2), sra.mlp.fc2 (C/2 -> 2).
void init_presence(const EncoderConfig& enc, const PresenceConfig& cfg, GradientTape& tape, Rng& rng, DType dtype);

struct PoolVars {
    ad::Var pooled;  // [1 x C]
    Tensor attn;     // [heads x 1 x Nx]
};

// One cross-attention layer, query = CLS token, key = value = search tokens,
// with a residual from the CLS token.
PoolVars attention_pool(const ad::Var& cls, const ad::Var& search, const PresenceConfig& cfg, ad::Binding& bind);
// linear(C -> C/2) -> gelu -> linear(C/2 -> 2) -> softmax, returns [1 x 2].
ad::Var presence_head(const ad::Var& pooled, ad::Binding& bind);

Tensor attention_pool(const Tensor& cls, const Tensor& search, const PresenceConfig& cfg, const GradientTape& weights,
                      Tensor* attn = nullptr);
PresenceOutput presence_head(const Tensor& pooled, const GradientTape& weights);

// One template/search pairing for presence supervision.
struct PairDraw {
    std::size_t template_seq = 0;
    std::size_t template_frame = 0;
    std::size_t search_seq = 0;
    std::size_t search_frame = 0;
    int label = 1;  // 1 = same sequence (present), 0 = different sequences (absent)
};

// Positives take both frames from one sequence (visible frames only);
// negatives take the search frame from a different sequence.
std::vector<PairDraw> sample_pairs(const std::vector<Sequence>& sequences, std::size_t count, double positive_ratio,
                                   Rng& rng);

}  // namespace focustrack
