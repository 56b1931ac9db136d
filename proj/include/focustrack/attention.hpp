#pragma once

#include <cstddef>

#include "focustrack/autograd.hpp"

namespace focustrack {

// Per-call attention products. `attn` and `scores` are [heads x Nq x Nk];
// scores are the scaled dot products before the softmax.
struct AttentionResult {
    ad::Var out;          // [Nq x C], heads concatenated, before the output projection
    ad::Var mean_scores;  // [Nq x Nk], scores averaged over heads
    Tensor attn;
    Tensor scores;
};

// Scaled dot-product attention over already projected q/k/v, scale 1/sqrt(C/heads).
AttentionResult attention_core(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads);

struct MhaWeights {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MhaResult {
    ad::Var out;  // [Nq x C], after the output projection
    ad::Var mean_scores;
    Tensor attn;
    Tensor scores;
};

MhaResult mha(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads, const MhaWeights& w);

// Plain-tensor form of mha; weights are [C x C] with C-element biases.
struct MhaParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    static MhaParams identity(std::size_t channels, DType dtype = DType::f64);
};

struct MhaOutput {
    Tensor out;
    Tensor attn;
    Tensor scores;
};

MhaOutput mha(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const MhaParams& params);

}  // namespace focustrack
