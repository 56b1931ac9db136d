#include "focustrack/losses.hpp"

#include <algorithm>
#include <cmath>

#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"

namespace focustrack {

namespace {

double clamp_p(double p) { return std::clamp(p, kLossEps, 1.0 - kLossEps); }
bool inside_clamp(double p) { return p > kLossEps && p < 1.0 - kLossEps; }

void require_box(const BoundingBox& b, const char* what) {
    if (!b.valid() || !std::isfinite(b.cx) || !std::isfinite(b.cy)) {
        throw PreconditionError(std::string(what) + ": box needs finite center and positive area");
    }
}

BoundingBox box_of(const ad::Var& v, const char* what) {
    if (v.value().size() != 4) throw DimensionError(std::string(what) + ": box var needs 4 elements");
    const Tensor& t = v.value();
    return {t[0], t[1], t[2], t[3]};
}

std::size_t count_positives(const Tensor& gt) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i] >= 0.0 && gt[i] <= 1.0)) throw PreconditionError("focal_heatmap: gt values must lie in [0, 1]");
        if (gt[i] == 1.0) ++n;
    }
    if (n > 1) throw PreconditionError("focal_heatmap: gt must hold at most one positive cell");
    return n;
}

// Per-cell focal heatmap term and its derivative in p.
void heat_term(double p_raw, double g, double alpha, double beta, double& value, double& dp) {
    const double p = clamp_p(p_raw);
    const bool live = inside_clamp(p_raw);
    if (g == 1.0) {
        const double q = 1.0 - p;
        value = -std::pow(q, alpha) * std::log(p);
        dp = live ? alpha * std::pow(q, alpha - 1.0) * std::log(p) - std::pow(q, alpha) / p : 0.0;
    } else {
        const double w = std::pow(1.0 - g, beta);
        const double lq = std::log(1.0 - p);
        value = -w * std::pow(p, alpha) * lq;
        dp = live ? -w * (alpha * std::pow(p, alpha - 1.0) * lq - std::pow(p, alpha) / (1.0 - p)) : 0.0;
    }
}

void mask_term(double p_raw, double g, double alpha, double gamma, double& value, double& dp) {
    const double p = clamp_p(p_raw);
    const bool live = inside_clamp(p_raw);
    if (g > 0.5) {
        const double q = 1.0 - p;
        value = -alpha * std::pow(q, gamma) * std::log(p);
        dp = live ? alpha * (gamma * std::pow(q, gamma - 1.0) * std::log(p) - std::pow(q, gamma) / p) : 0.0;
    } else {
        const double lq = std::log(1.0 - p);
        value = -(1.0 - alpha) * std::pow(p, gamma) * lq;
        dp = live ? -(1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * lq - std::pow(p, gamma) / (1.0 - p)) : 0.0;
    }
}

void require_mask_gt(const Tensor& gt) {
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] != 0.0 && gt[i] != 1.0) throw PreconditionError("focal_mask: gt must be binary");
    }
}

}  // namespace

// ---- config -----------------------------------------------------------------------

void LossConfig::validate() const {
    for (double w : {w_giou, w_l1, w_focal, w_logits, w_mask}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and nonnegative");
    }
    if (!(heat_alpha > 0.0) || !(heat_beta > 0.0) || !(mask_gamma > 0.0)) {
        throw ConfigError("focal exponents must be positive");
    }
    if (!(mask_alpha >= 0.0 && mask_alpha <= 1.0)) throw ConfigError("mask_alpha must lie in [0, 1]");
}

nlohmann::json LossConfig::to_json() const {
    return {{"w_giou", w_giou},         {"w_l1", w_l1},           {"w_focal", w_focal},
            {"w_logits", w_logits},     {"w_mask", w_mask},       {"heat_alpha", heat_alpha},
            {"heat_beta", heat_beta},   {"mask_alpha", mask_alpha}, {"mask_gamma", mask_gamma}};
}

LossConfig LossConfig::from_json(const nlohmann::json& j) {
    LossConfig c;
    try {
        c.w_giou = j.value("w_giou", c.w_giou);
        c.w_l1 = j.value("w_l1", c.w_l1);
        c.w_focal = j.value("w_focal", c.w_focal);
        c.w_logits = j.value("w_logits", c.w_logits);
        c.w_mask = j.value("w_mask", c.w_mask);
        c.heat_alpha = j.value("heat_alpha", c.heat_alpha);
        c.heat_beta = j.value("heat_beta", c.heat_beta);
        c.mask_alpha = j.value("mask_alpha", c.mask_alpha);
        c.mask_gamma = j.value("mask_gamma", c.mask_gamma);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("loss config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- scalar losses ----------------------------------------------------------------

double giou_with_grad(const BoundingBox& a, const BoundingBox& b, double grad[4]) {
    require_box(a, "giou");
    require_box(b, "giou");
    const double ax1 = a.x1(), ax2 = a.x2(), ay1 = a.y1(), ay2 = a.y2();
    const double bx1 = b.x1(), bx2 = b.x2(), by1 = b.y1(), by2 = b.y2();

    const double iw_raw = std::min(ax2, bx2) - std::max(ax1, bx1);
    const double ih_raw = std::min(ay2, by2) - std::max(ay1, by1);
    const bool overlap = iw_raw > 0.0 && ih_raw > 0.0;
    const double iw = overlap ? iw_raw : 0.0;
    const double ih = overlap ? ih_raw : 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    const double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
    const double ch = std::max(ay2, by2) - std::min(ay1, by1);
    const double hull = cw * ch;
    const double value = inter / uni - (hull - uni) / hull;

    if (grad) {
        // value = I/U + U/C - 1 with U = A + B - I.
        const double k_i = 1.0 / uni + inter / (uni * uni) - 1.0 / hull;
        const double k_a = -inter / (uni * uni) + 1.0 / hull;
        const double k_c = -uni / (hull * hull);

        double d_x1 = 0, d_x2 = 0, d_y1 = 0, d_y2 = 0;
        if (overlap) {
            if (ax1 > bx1) d_x1 += k_i * -ih;
            if (ax2 < bx2) d_x2 += k_i * ih;
            if (ay1 > by1) d_y1 += k_i * -iw;
            if (ay2 < by2) d_y2 += k_i * iw;
        }
        d_x1 += k_a * -a.h;
        d_x2 += k_a * a.h;
        d_y1 += k_a * -a.w;
        d_y2 += k_a * a.w;
        if (ax1 <= bx1) d_x1 += k_c * -ch;
        if (ax2 >= bx2) d_x2 += k_c * ch;
        if (ay1 <= by1) d_y1 += k_c * -cw;
        if (ay2 >= by2) d_y2 += k_c * cw;

        grad[0] = d_x1 + d_x2;
        grad[1] = d_y1 + d_y2;
        grad[2] = 0.5 * (d_x2 - d_x1);
        grad[3] = 0.5 * (d_y2 - d_y1);
    }
    return value;
}

double giou(const BoundingBox& a, const BoundingBox& b) { return giou_with_grad(a, b, nullptr); }

double focal_heatmap(const Tensor& score, const Tensor& gt, double alpha, double beta) {
    if (score.shape() != gt.shape()) throw DimensionError("focal_heatmap: score and gt shapes differ");
    if (count_positives(gt) == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < score.size(); ++i) {
        double v, d;
        heat_term(score[i], gt[i], alpha, beta, v, d);
        total += v;
    }
    return total;
}

double l1_box(const BoundingBox& pred, const BoundingBox& gt, double norm_side) {
    if (!(norm_side > 0.0)) throw PreconditionError("l1_box: norm_side must be positive");
    return (std::abs(pred.cx - gt.cx) + std::abs(pred.cy - gt.cy) + std::abs(pred.w - gt.w) +
            std::abs(pred.h - gt.h)) /
           (4.0 * norm_side);
}

double ce_presence(const PresenceOutput& probs, int label) {
    if (label != 0 && label != 1) throw PreconditionError("ce_presence: label must be 0 or 1");
    const double p = probs.probs[label == 1 ? 0 : 1];
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("ce_presence: probabilities must lie in [0, 1]");
    return -std::log(std::max(p, kLossEps));
}

double focal_mask(const Tensor& pred, const Tensor& gt, double alpha, double gamma) {
    if (pred.shape() != gt.shape()) throw DimensionError("focal_mask: pred and gt shapes differ");
    require_mask_gt(gt);
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double v, d;
        mask_term(pred[i], gt[i], alpha, gamma, v, d);
        total += v;
    }
    return total / static_cast<double>(pred.size());
}

double total_loss(const LossParts& p, const LossConfig& cfg) {
    return cfg.w_giou * p.l_giou + cfg.w_l1 * p.l_l1 + cfg.w_focal * p.l_focal + cfg.w_logits * p.l_logits +
           cfg.w_mask * p.l_mask;
}

LossParts with_total(LossParts parts, const LossConfig& cfg) {
    parts.total = total_loss(parts, cfg);
    return parts;
}

// ---- graph versions ---------------------------------------------------------------

namespace ad {

Var giou_loss(const Var& pred, const BoundingBox& gt) {
    const BoundingBox a = box_of(pred, "giou_loss");
    double g[4];
    const double value = 1.0 - giou_with_grad(a, gt, g);
    return custom(Tensor({1}, {value}, pred.value().dtype()), {pred}, [g0 = g[0], g1 = g[1], g2 = g[2], g3 = g[3]](Node& n) {
        const auto& P = n.inputs[0];
        if (!P->requires_grad) return;
        const double s = -n.grad[0];
        P->add_grad(Tensor(P->value.shape(), {s * g0, s * g1, s * g2, s * g3}, n.grad.dtype()));
    });
}

Var l1_box(const Var& pred, const BoundingBox& gt, double norm_side) {
    const BoundingBox a = box_of(pred, "l1_box");
    const double value = focustrack::l1_box(a, gt, norm_side);
    const double d[4] = {a.cx - gt.cx, a.cy - gt.cy, a.w - gt.w, a.h - gt.h};
    const double k = 1.0 / (4.0 * norm_side);
    auto sgn = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
    const std::vector<double> slope{k * sgn(d[0]), k * sgn(d[1]), k * sgn(d[2]), k * sgn(d[3])};
    return custom(Tensor({1}, {value}, pred.value().dtype()), {pred}, [slope](Node& n) {
        const auto& P = n.inputs[0];
        if (!P->requires_grad) return;
        Tensor g(P->value.shape(), n.grad.dtype());
        for (std::size_t i = 0; i < 4; ++i) g[i] = slope[i] * n.grad[0];
        P->add_grad(g);
    });
}

Var focal_heatmap(const Var& score, const Tensor& gt, double alpha, double beta) {
    const Tensor& s = score.value();
    if (s.shape() != gt.shape()) throw DimensionError("focal_heatmap: score and gt shapes differ");
    const bool positive = count_positives(gt) == 1;
    Tensor slope(s.shape(), s.dtype());
    double total = 0.0;
    if (positive) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            double v, d;
            heat_term(s[i], gt[i], alpha, beta, v, d);
            total += v;
            slope[i] = d;
        }
    }
    return custom(Tensor({1}, {total}, s.dtype()), {score}, [slope](Node& n) {
        const auto& S = n.inputs[0];
        if (!S->requires_grad) return;
        Tensor g = focustrack::scale(slope, n.grad[0]);
        S->add_grad(g);
    });
}

Var ce_presence(const Var& probs, int label) {
    if (probs.value().size() != 2) throw DimensionError("ce_presence: probs need 2 elements");
    if (label != 0 && label != 1) throw PreconditionError("ce_presence: label must be 0 or 1");
    const std::size_t k = label == 1 ? 0 : 1;
    const double p = probs.value()[k];
    const double value = -std::log(std::max(p, kLossEps));
    const double slope = p > kLossEps ? -1.0 / p : 0.0;
    return custom(Tensor({1}, {value}, probs.value().dtype()), {probs}, [k, slope](Node& n) {
        const auto& P = n.inputs[0];
        if (!P->requires_grad) return;
        Tensor g(P->value.shape(), n.grad.dtype());
        g[k] = slope * n.grad[0];
        P->add_grad(g);
    });
}

Var focal_mask(const Var& pred, const Tensor& gt, double alpha, double gamma) {
    const Tensor& p = pred.value();
    if (p.shape() != gt.shape()) throw DimensionError("focal_mask: pred and gt shapes differ");
    require_mask_gt(gt);
    const double inv_n = 1.0 / static_cast<double>(p.size());
    Tensor slope(p.shape(), p.dtype());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double v, d;
        mask_term(p[i], gt[i], alpha, gamma, v, d);
        total += v;
        slope[i] = d * inv_n;
    }
    return custom(Tensor({1}, {total * inv_n}, p.dtype()), {pred}, [slope](Node& n) {
        const auto& P = n.inputs[0];
        if (!P->requires_grad) return;
        P->add_grad(focustrack::scale(slope, n.grad[0]));
    });
}

}  // namespace ad

// ---- targets ------------------------------------------------------------------------

double gaussian_radius(double h, double w, double min_overlap) {
    if (!(h > 0.0) || !(w > 0.0)) throw PreconditionError("gaussian_radius: box needs positive size");
    if (!(min_overlap > 0.0 && min_overlap < 1.0)) throw PreconditionError("gaussian_radius: overlap in (0, 1)");
    const double m = min_overlap;
    const double b1 = h + w;
    const double c1 = w * h * (1.0 - m) / (1.0 + m);
    const double r1 = (b1 + std::sqrt(b1 * b1 - 4.0 * c1)) / 2.0;
    const double b2 = 2.0 * (h + w);
    const double c2 = (1.0 - m) * w * h;
    const double r2 = (b2 + std::sqrt(b2 * b2 - 16.0 * c2)) / 2.0;
    const double a3 = 4.0 * m;
    const double b3 = -2.0 * m * (h + w);
    const double c3 = (m - 1.0) * w * h;
    const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / 2.0;
    return std::max(0.0, std::min({r1, r2, r3}));
}

std::pair<std::size_t, std::size_t> center_cell(const BoundingBox& box, double out_side, std::size_t grid) {
    if (grid == 0 || !(out_side > 0.0)) throw PreconditionError("center_cell: empty grid");
    const double stride = out_side / static_cast<double>(grid);
    auto cell = [&](double v) {
        const double c = std::floor(v / stride);
        return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(grid - 1)));
    };
    return {cell(box.cy), cell(box.cx)};
}

Tensor gaussian_heatmap(const MaybeBox& box, double out_side, std::size_t grid) {
    Tensor heat({grid, grid}, DType::f64);
    if (!box) return heat;
    const double stride = out_side / static_cast<double>(grid);
    const auto [r0, c0] = center_cell(*box, out_side, grid);
    const double radius = gaussian_radius(box->h / stride, box->w / stride);
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (std::size_t i = 0; i < grid; ++i) {
        for (std::size_t j = 0; j < grid; ++j) {
            const double di = static_cast<double>(i) - static_cast<double>(r0);
            const double dj = static_cast<double>(j) - static_cast<double>(c0);
            heat(i, j) = (i == r0 && j == c0) ? 1.0 : std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        }
    }
    return heat;
}

Tensor rect_mask(const MaybeBox& box, double out_side, std::size_t grid) {
    Tensor mask({grid, grid}, DType::f64);
    if (!box) return mask;
    const double stride = out_side / static_cast<double>(grid);
    for (std::size_t i = 0; i < grid; ++i) {
        const double y0 = stride * static_cast<double>(i);
        const double oy = std::max(0.0, std::min(y0 + stride, box->y2()) - std::max(y0, box->y1()));
        for (std::size_t j = 0; j < grid; ++j) {
            const double x0 = stride * static_cast<double>(j);
            const double ox = std::max(0.0, std::min(x0 + stride, box->x2()) - std::max(x0, box->x1()));
            if (ox * oy >= 0.5 * stride * stride) mask(i, j) = 1.0;
        }
    }
    const auto [r0, c0] = center_cell(*box, out_side, grid);
    mask(r0, c0) = 1.0;
    return mask;
}

}  // namespace focustrack
