#include "focustrack/attention.hpp"

#include <cmath>
#include <vector>

#include "focustrack/errors.hpp"

namespace focustrack {

AttentionResult attention_core(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads) {
    const std::size_t c = q.dim(1);
    if (heads == 0 || c % heads != 0) {
        throw ConfigError("attention: channels " + std::to_string(c) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (k.dim(1) != c || v.dim(1) != c || k.dim(0) != v.dim(0)) {
        throw DimensionError("attention: q/k/v extents disagree");
    }
    const std::size_t nq = q.dim(0), nk = k.dim(0), hd = c / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    AttentionResult r;
    r.attn = Tensor({heads, nq, nk}, q.value().dtype());
    r.scores = Tensor({heads, nq, nk}, q.value().dtype());
    std::vector<ad::Var> outs, scores;
    outs.reserve(heads);
    scores.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * hd, (h + 1) * hd);
        ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * hd, (h + 1) * hd);
        ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * hd, (h + 1) * hd);
        ad::Var s = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
        ad::Var a = ad::softmax_rows(s);
        std::copy(s.value().data(), s.value().data() + nq * nk, r.scores.data() + h * nq * nk);
        std::copy(a.value().data(), a.value().data() + nq * nk, r.attn.data() + h * nq * nk);
        outs.push_back(ad::matmul(a, vh));
        scores.push_back(s);
    }
    r.out = heads == 1 ? outs[0] : ad::concat_cols(outs);
    r.mean_scores = heads == 1 ? scores[0] : ad::mean_of(scores);
    return r;
}

MhaResult mha(const ad::Var& q, const ad::Var& k, const ad::Var& v, std::size_t heads, const MhaWeights& w) {
    AttentionResult a = attention_core(ad::linear(q, w.wq, w.bq), ad::linear(k, w.wk, w.bk),
                                       ad::linear(v, w.wv, w.bv), heads);
    return {ad::linear(a.out, w.wo, w.bo), a.mean_scores, std::move(a.attn), std::move(a.scores)};
}

MhaParams MhaParams::identity(std::size_t channels, DType dtype) {
    Tensor eye({channels, channels}, dtype);
    for (std::size_t i = 0; i < channels; ++i) eye(i, i) = 1.0;
    Tensor zero({channels}, dtype);
    return {eye, zero, eye, zero, eye, zero, eye, zero};
}

MhaOutput mha(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const MhaParams& p) {
    using ad::constant;
    MhaWeights w{constant(p.wq), constant(p.bq), constant(p.wk), constant(p.bk),
                 constant(p.wv), constant(p.bv), constant(p.wo), constant(p.bo)};
    MhaResult r = mha(constant(q), constant(k), constant(v), heads, w);
    return {r.out.value(), std::move(r.attn), std::move(r.scores)};
}

}  // namespace focustrack
