#include "focustrack/sra.hpp"

#include <algorithm>

#include "focustrack/attention.hpp"
#include "focustrack/errors.hpp"
#include "focustrack/layers.hpp"

namespace focustrack {

void SraState::validate() const {
    if (!(f_step > 0.0)) throw ConfigError("sra: f_step must be positive");
    if (!(f_base > 0.0) || f_base > f_max) throw ConfigError("sra: need 0 < f_base <= f_max");
    if (f < f_base || f > f_max) throw ConfigError("sra: factor outside [f_base, f_max]");
    if (!(t_logits > 0.0 && t_logits < 1.0) || !(t_score > 0.0 && t_score < 1.0)) {
        throw ConfigError("sra: thresholds must lie in (0, 1)");
    }
}

SraState sra_update(const SraState& state, double logits, double p_max) {
    if (!(logits >= 0.0 && logits <= 1.0) || !(p_max >= 0.0 && p_max <= 1.0)) {
        throw PreconditionError("sra_update: logits and p_max must lie in [0, 1]");
    }
    SraState next = state;
    next.f = state.expand_condition(logits, p_max) ? std::min(state.f + state.f_step, state.f_max) : state.f_base;
    return next;
}

void init_presence(const EncoderConfig& enc, const PresenceConfig& cfg, GradientTape& tape, Rng& rng, DType dtype) {
    const std::size_t c = enc.embed_dim;
    if (cfg.heads == 0 || c % cfg.heads != 0) throw ConfigError("presence: embed_dim not divisible by heads");
    for (const char* p : {"sra.pool.q", "sra.pool.k", "sra.pool.v", "sra.pool.proj"}) add_linear(tape, p, c, c, rng, dtype);
    add_linear(tape, "sra.mlp.fc1", c, c / 2, rng, dtype);
    add_linear(tape, "sra.mlp.fc2", c / 2, 2, rng, dtype);
}

PoolVars attention_pool(const ad::Var& cls, const ad::Var& search, const PresenceConfig& cfg, ad::Binding& bind) {
    if (cls.value().rank() != 2 || cls.dim(0) != 1 || search.value().rank() != 2 || search.dim(1) != cls.dim(1)) {
        throw DimensionError("attention_pool: cls " + shape_string(cls.shape()) + " vs search " +
                             shape_string(search.shape()));
    }
    MhaWeights w{bind("sra.pool.q.w"), bind("sra.pool.q.b"), bind("sra.pool.k.w"),    bind("sra.pool.k.b"),
                 bind("sra.pool.v.w"), bind("sra.pool.v.b"), bind("sra.pool.proj.w"), bind("sra.pool.proj.b")};
    MhaResult r = mha(cls, search, search, cfg.heads, w);
    return {ad::add(cls, r.out), std::move(r.attn)};
}

ad::Var presence_head(const ad::Var& pooled, ad::Binding& bind) {
    ad::Var h = ad::gelu(apply_linear(bind, "sra.mlp.fc1", pooled));
    return ad::softmax_rows(apply_linear(bind, "sra.mlp.fc2", h));
}

Tensor attention_pool(const Tensor& cls, const Tensor& search, const PresenceConfig& cfg, const GradientTape& weights,
                      Tensor* attn) {
    ad::Binding bind(weights);
    PoolVars v = attention_pool(ad::constant(cls), ad::constant(search), cfg, bind);
    if (attn) *attn = v.attn;
    return v.pooled.value();
}

PresenceOutput presence_head(const Tensor& pooled, const GradientTape& weights) {
    ad::Binding bind(weights);
    const Tensor p = presence_head(ad::constant(pooled), bind).value();
    return {{p[0], p[1]}};
}

std::vector<PairDraw> sample_pairs(const std::vector<Sequence>& sequences, std::size_t count, double positive_ratio,
                                   Rng& rng) {
    if (!(positive_ratio > 0.0 && positive_ratio <= 1.0)) throw SamplingError("sample_pairs: ratio must lie in (0, 1]");
    if (sequences.empty()) throw SamplingError("sample_pairs: no sequences");
    if (positive_ratio < 1.0 && sequences.size() < 2) {
        throw SamplingError("sample_pairs: negative pairs need at least two sequences");
    }
    for (const auto& seq : sequences) {
        if (seq.annotation.size() == 0) throw SamplingError("sample_pairs: sequence '" + seq.name + "' has no frames");
    }
    std::vector<std::vector<std::size_t>> visible(sequences.size());
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& ex = sequences[s].annotation.exist;
        for (std::size_t i = 0; i < ex.size(); ++i)
            if (ex[i]) visible[s].push_back(i);
    }
    std::vector<std::size_t> usable;
    for (std::size_t s = 0; s < sequences.size(); ++s)
        if (!visible[s].empty()) usable.push_back(s);
    if (usable.empty()) throw SamplingError("sample_pairs: no sequence has a visible target");

    std::vector<PairDraw> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        PairDraw d;
        d.label = rng.bernoulli(positive_ratio) ? 1 : 0;
        d.template_seq = usable[rng.index(usable.size())];
        const auto& vt = visible[d.template_seq];
        d.template_frame = vt[rng.index(vt.size())];
        if (d.label == 1) {
            d.search_seq = d.template_seq;
            d.search_frame = vt[rng.index(vt.size())];
        } else {
            std::size_t other = rng.index(sequences.size() - 1);
            if (other >= d.template_seq) ++other;
            d.search_seq = other;
            d.search_frame = rng.index(sequences[other].annotation.size());
        }
        out.push_back(d);
    }
    return out;
}

}  // namespace focustrack
