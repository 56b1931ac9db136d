#include "focustrack/bbox_head.hpp"

#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"
#include "focustrack/layers.hpp"

namespace focustrack {

namespace {

constexpr const char* kBranches[] = {"score", "offset", "size"};
constexpr std::size_t kBranchOut[] = {1, 2, 2};

std::size_t stage_channels(const HeadConfig& cfg, std::size_t stage) { return cfg.channels >> stage; }

// tokens [G^2 x C] -> 3x3 conv -> [G^2 x Cout]
ad::Var conv3x3(const ad::Var& tokens, std::size_t grid, ad::Binding& bind, const std::string& prefix) {
    const std::size_t cin = tokens.dim(1);
    ad::Var map = ad::reshape(ad::transpose(tokens), {cin, grid, grid});
    return apply_linear(bind, prefix, ad::im2col3x3(map));
}

}  // namespace

void init_head(const EncoderConfig& enc, const HeadConfig& cfg, GradientTape& tape, Rng& rng, DType dtype) {
    cfg.validate(enc);
    for (std::size_t b = 0; b < 3; ++b) {
        const std::string p = std::string("head.") + kBranches[b];
        std::size_t cin = enc.embed_dim;
        for (std::size_t s = 0; s < 3; ++s) {
            const std::size_t cout = stage_channels(cfg, s);
            add_linear(tape, p + ".conv" + std::to_string(s + 1), 9 * cin, cout, rng, dtype);
            cin = cout;
        }
        add_linear(tape, p + ".out", cin, kBranchOut[b], rng, dtype);
    }
}

HeadVars head_forward(const ad::Var& search_tokens, const EncoderConfig& enc, const HeadConfig& cfg,
                      ad::Binding& bind) {
    const std::size_t g = enc.grid();
    if (search_tokens.value().shape() != Shape{g * g, enc.embed_dim}) {
        throw DimensionError("head_forward: expected " + shape_string({g * g, enc.embed_dim}) + " tokens, got " +
                             shape_string(search_tokens.shape()));
    }
    ad::Var outs[3];
    for (std::size_t b = 0; b < 3; ++b) {
        const std::string p = std::string("head.") + kBranches[b];
        ad::Var x = search_tokens;
        for (std::size_t s = 0; s < 3; ++s) x = ad::gelu(conv3x3(x, g, bind, p + ".conv" + std::to_string(s + 1)));
        // [G^2 x k] -> [k x G x G]
        ad::Var y = ad::sigmoid(apply_linear(bind, p + ".out", x));
        outs[b] = ad::reshape(ad::transpose(y), kBranchOut[b] == 1 ? Shape{g, g} : Shape{kBranchOut[b], g, g});
    }
    (void)cfg;
    return {outs[0], outs[1], outs[2]};
}

Tensor tokens_to_map(const Tensor& tokens, std::size_t grid) {
    require_rank(tokens, 2, "tokens_to_map");
    if (tokens.dim(0) != grid * grid) throw DimensionError("tokens_to_map: token count is not grid^2");
    return transpose(tokens).reshaped({tokens.dim(1), grid, grid});
}

HeadOutput head_forward(const Tensor& search_map, const EncoderConfig& enc, const HeadConfig& cfg,
                        const GradientTape& weights) {
    require_rank(search_map, 3, "head_forward");
    const std::size_t c = search_map.dim(0), g = search_map.dim(1);
    ad::Binding bind(weights);
    ad::Var tokens = ad::constant(transpose(search_map.reshaped({c, g * g})));
    HeadVars v = head_forward(tokens, enc, cfg, bind);
    return {v.score.value(), v.offset.value(), v.size.value()};
}

Decoded decode(const HeadOutput& head, const Tensor* window, double stride, double out_side) {
    require_rank(head.score, 2, "decode score");
    const std::size_t gh = head.score.dim(0), gw = head.score.dim(1);
    if (window && window->shape() != head.score.shape()) throw DimensionError("decode: window shape mismatch");
    require_shape(head.offset, {2, gh, gw}, "decode offset");
    require_shape(head.size, {2, gh, gw}, "decode size");
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t i = 0; i < gh * gw; ++i) {
        const double v = window ? head.score[i] * (*window)[i] : head.score[i];
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    Decoded d;
    d.row = best / gw;
    d.col = best % gw;
    d.p_max = head.score[best];
    const std::size_t plane = gh * gw;
    d.box.cx = (static_cast<double>(d.col) + head.offset[best]) * stride;
    d.box.cy = (static_cast<double>(d.row) + head.offset[plane + best]) * stride;
    d.box.w = head.size[best] * out_side;
    d.box.h = head.size[plane + best] * out_side;
    return d;
}

}  // namespace focustrack
