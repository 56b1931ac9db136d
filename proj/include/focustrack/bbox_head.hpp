#pragma once

#include <cstddef>

#include "focustrack/autograd.hpp"
#include "focustrack/model_config.hpp"
#include "focustrack/rng.hpp"
#include "focustrack/sampling.hpp"

namespace focustrack {

// Center-head outputs on the G x G search grid.
struct HeadOutput {
    Tensor score;   // [G x G] in (0,1)
    Tensor offset;  // [2 x G x G], channel 0 = x, 1 = y, in (0,1)
    Tensor size;    // [2 x G x G], channel 0 = w, 1 = h, fraction of the search side
};

struct HeadVars {
    ad::Var score;   // [G x G]
    ad::Var offset;  // [2 x G x G]
    ad::Var size;    // [2 x G x G]
};

// Branches head.{score,offset,size}; each conv{1,2,3} (3x3) then out (1x1).
// Conv weights are [9*Cin x Cout] matching im2col column order.
void init_head(const EncoderConfig& enc, const HeadConfig& cfg, GradientTape& tape, Rng& rng, DType dtype);

// search_tokens: [G^2 x C], row-major over the grid.
HeadVars head_forward(const ad::Var& search_tokens, const EncoderConfig& enc, const HeadConfig& cfg,
                      ad::Binding& bind);
// search_map: [C x G x G].
HeadOutput head_forward(const Tensor& search_map, const EncoderConfig& enc, const HeadConfig& cfg,
                        const GradientTape& weights);

struct Decoded {
    BoundingBox box;  // crop pixels
    double p_max = 0.0;  // raw (un-windowed) score at the chosen cell
    std::size_t row = 0;
    std::size_t col = 0;
};

// Picks argmax(score * window) (or argmax(score) without a window; ties go to
// the first row-major cell) and decodes center = (cell + offset) * stride,
// size = size * out_side.
Decoded decode(const HeadOutput& head, const Tensor* window, double stride, double out_side);

// [N x C] token rows back to a [C x G x G] map.
Tensor tokens_to_map(const Tensor& tokens, std::size_t grid);

}  // namespace focustrack
