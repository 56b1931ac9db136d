#pragma once

#include <optional>

#include "focustrack/atm.hpp"
#include "focustrack/bbox_head.hpp"
#include "focustrack/encoder.hpp"
#include "focustrack/losses.hpp"
#include "focustrack/sra.hpp"

namespace focustrack {

// Encoder + box head + presence branch + ATM wired together.

GradientTape init_model(const ModelConfig& cfg);

struct ModelVars {
    EncoderVars enc;
    HeadVars head;
    ad::Var presence;             // [1 x 2]; empty without a CLS token
    std::optional<MaskVars> mask; // set when ATM runs
};

// Images are [ch x S x S].
ModelVars model_forward(const ad::Var& template_img, const ad::Var& search_img, const ModelConfig& cfg,
                        ad::Binding& bind, bool with_atm);

struct ModelOutput {
    HeadOutput head;
    PresenceOutput presence;
    std::optional<MaskOutput> mask;
};

ModelOutput run_model(const Tensor& template_img, const Tensor& search_img, const ModelConfig& cfg,
                      const GradientTape& weights, bool with_atm);

// One supervised template/search pair; `target` is in search-crop pixels and
// absent for negative pairs.
struct TrainSample {
    Tensor template_img;
    Tensor search_img;
    MaybeBox target;
    int label = 1;
};

struct SampleLoss {
    ad::Var total;
    ad::Var focal, l1, giou, logits, mask;  // empty where a term does not apply
    LossParts parts;
};

SampleLoss sample_loss(const TrainSample& sample, const ModelConfig& cfg, const LossConfig& loss_cfg,
                       ad::Binding& bind, bool with_atm);

// Predicted box (cx, cy, w, h), normalized by the search side, read at one grid cell.
ad::Var box_at_cell(const ad::Var& offset, const ad::Var& size, std::size_t row, std::size_t col);

}  // namespace focustrack
