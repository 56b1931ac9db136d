#pragma once

#include "focustrack/autograd.hpp"
#include "focustrack/sampling.hpp"
#include "focustrack/sra.hpp"

#include <json.hpp>

namespace focustrack {

inline constexpr double kLossEps = 1e-7;

struct LossParts {
    double l_focal = 0.0;
    double l_l1 = 0.0;
    double l_giou = 0.0;
    double l_logits = 0.0;
    double l_mask = 0.0;
    double total = 0.0;
};

struct LossConfig {
    double w_giou = 2.0;
    double w_l1 = 5.0;
    double w_focal = 1.0;
    double w_logits = 1.0;
    double w_mask = 1.0;
    double heat_alpha = 2.0;
    double heat_beta = 4.0;
    double mask_alpha = 0.25;
    double mask_gamma = 2.0;

    void validate() const;
    nlohmann::json to_json() const;
    static LossConfig from_json(const nlohmann::json& j);
};

// Generalized IoU; both boxes need positive area.
double giou(const BoundingBox& a, const BoundingBox& b);
// giou plus d giou / d(cx, cy, w, h) of `a`.
double giou_with_grad(const BoundingBox& a, const BoundingBox& b, double grad[4]);

// Penalty-reduced focal loss over a score map. gt holds a single 1 (positive)
// or is all zero, in which case the loss is 0.
double focal_heatmap(const Tensor& score, const Tensor& gt, double alpha = 2.0, double beta = 4.0);
double l1_box(const BoundingBox& pred, const BoundingBox& gt, double norm_side);
// label 1 reads probs[0] (present), label 0 reads probs[1].
double ce_presence(const PresenceOutput& probs, int label);
double focal_mask(const Tensor& pred, const Tensor& gt, double alpha = 0.25, double gamma = 2.0);

double total_loss(const LossParts& parts, const LossConfig& cfg = {});
// Fills parts.total from the other fields.
LossParts with_total(LossParts parts, const LossConfig& cfg = {});

// ---- graph versions -----------------------------------------------------------
// Boxes are 4-element vars holding (cx, cy, w, h).
namespace ad {
Var giou_loss(const Var& pred, const BoundingBox& gt);
Var l1_box(const Var& pred, const BoundingBox& gt, double norm_side);
Var focal_heatmap(const Var& score, const Tensor& gt, double alpha = 2.0, double beta = 4.0);
Var ce_presence(const Var& probs, int label);
Var focal_mask(const Var& pred, const Tensor& gt, double alpha = 0.25, double gamma = 2.0);
}  // namespace ad

// ---- targets ------------------------------------------------------------------

// Largest radius r such that a box displaced by r keeps IoU >= min_overlap.
double gaussian_radius(double h, double w, double min_overlap = 0.7);
// Gaussian bump at the cell containing the box center, exactly 1 there.
// `box` in crop pixels of a crop with side `out_side`; grid is G x G.
Tensor gaussian_heatmap(const MaybeBox& box, double out_side, std::size_t grid);
// Cells whose area is at least half covered by the box, plus the center cell.
Tensor rect_mask(const MaybeBox& box, double out_side, std::size_t grid);
// Grid cell (row, col) holding the box center, clamped to the grid.
std::pair<std::size_t, std::size_t> center_cell(const BoundingBox& box, double out_side, std::size_t grid);

}  // namespace focustrack
