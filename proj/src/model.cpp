#include "focustrack/model.hpp"

#include "focustrack/errors.hpp"

namespace focustrack {

GradientTape init_model(const ModelConfig& cfg) {
    cfg.validate();
    GradientTape tape;
    Rng root(cfg.seed);
    Rng r_enc = root.fork(1), r_head = root.fork(2), r_sra = root.fork(3), r_atm = root.fork(4);
    init_encoder(cfg.encoder, tape, r_enc, cfg.dtype);
    init_head(cfg.encoder, cfg.head, tape, r_head, cfg.dtype);
    if (cfg.encoder.use_cls) init_presence(cfg.encoder, cfg.presence, tape, r_sra, cfg.dtype);
    init_atm(cfg.encoder, cfg.atm, tape, r_atm, cfg.dtype);
    return tape;
}

ModelVars model_forward(const ad::Var& template_img, const ad::Var& search_img, const ModelConfig& cfg,
                        ad::Binding& bind, bool with_atm) {
    ModelVars out;
    out.enc = run_encoder(embed_template(template_img, cfg.encoder, bind), embed_search(search_img, cfg.encoder, bind),
                          cfg.encoder, bind);
    out.head = head_forward(out.enc.search_out, cfg.encoder, cfg.head, bind);
    if (cfg.encoder.use_cls) {
        PoolVars pool = attention_pool(out.enc.cls_out, out.enc.search_out, cfg.presence, bind);
        out.presence = presence_head(pool.pooled, bind);
    }
    if (with_atm) out.mask = atm_forward(out.enc.taps, cfg.atm, bind);
    return out;
}

ModelOutput run_model(const Tensor& template_img, const Tensor& search_img, const ModelConfig& cfg,
                      const GradientTape& weights, bool with_atm) {
    ad::Binding bind(weights);
    ModelVars v = model_forward(ad::constant(template_img.as_dtype(cfg.dtype)),
                                ad::constant(search_img.as_dtype(cfg.dtype)), cfg, bind, with_atm);
    ModelOutput out;
    out.head = {v.head.score.value(), v.head.offset.value(), v.head.size.value()};
    if (v.presence.node()) out.presence.probs = {v.presence.value()[0], v.presence.value()[1]};
    if (v.mask) {
        MaskOutput m;
        m.fused_mask = v.mask->fused_mask.value();
        for (const auto& b : v.mask->per_block_masks) m.per_block_masks.push_back(b.value());
        m.class_probs = {v.mask->class_probs.value()[0], v.mask->class_probs.value()[1]};
        out.mask = std::move(m);
    }
    return out;
}

ad::Var box_at_cell(const ad::Var& offset, const ad::Var& size, std::size_t row, std::size_t col) {
    if (offset.value().rank() != 3 || offset.dim(0) != 2 || size.shape() != offset.shape()) {
        throw DimensionError("box_at_cell: offset and size must be [2 x G x G]");
    }
    const std::size_t g = offset.dim(1);
    if (row >= g || col >= g) throw DimensionError("box_at_cell: cell outside the grid");
    const std::size_t ix = row * g + col, iy = g * g + ix;
    const double inv = 1.0 / static_cast<double>(g);
    const Tensor& o = offset.value();
    const Tensor& s = size.value();
    Tensor box({4}, {(static_cast<double>(col) + o[ix]) * inv, (static_cast<double>(row) + o[iy]) * inv, s[ix], s[iy]},
               common_dtype(o.dtype(), s.dtype()));
    return ad::custom(std::move(box), {offset, size}, [ix, iy, inv](ad::Node& n) {
        const auto& O = n.inputs[0];
        const auto& S = n.inputs[1];
        if (O->requires_grad) {
            Tensor& g = O->grad_buffer();
            g[ix] += inv * n.grad[0];
            g[iy] += inv * n.grad[1];
        }
        if (S->requires_grad) {
            Tensor& g = S->grad_buffer();
            g[ix] += n.grad[2];
            g[iy] += n.grad[3];
        }
    });
}

SampleLoss sample_loss(const TrainSample& sample, const ModelConfig& cfg, const LossConfig& lc, ad::Binding& bind,
                       bool with_atm) {
    if (sample.label != 0 && sample.label != 1) throw PreconditionError("sample_loss: label must be 0 or 1");
    if (sample.label == 1 && !sample.target) throw PreconditionError("sample_loss: positive pair without a target");
    const std::size_t g = cfg.encoder.grid();
    const double side = static_cast<double>(cfg.encoder.search_side);

    ModelVars v = model_forward(ad::constant(sample.template_img.as_dtype(cfg.dtype)),
                                ad::constant(sample.search_img.as_dtype(cfg.dtype)), cfg, bind, with_atm);
    SampleLoss out;
    std::vector<ad::Var> terms;
    std::vector<double> weights;

    const bool localize = sample.label == 1;
    if (localize) {
        const BoundingBox& t = *sample.target;
        out.focal = ad::focal_heatmap(v.head.score, gaussian_heatmap(t, side, g), lc.heat_alpha, lc.heat_beta);
        const auto [r0, c0] = center_cell(t, side, g);
        ad::Var pred = box_at_cell(v.head.offset, v.head.size, r0, c0);
        const BoundingBox gt{t.cx / side, t.cy / side, t.w / side, t.h / side};
        out.l1 = ad::l1_box(pred, gt, 1.0);
        out.giou = ad::giou_loss(pred, gt);
        terms.insert(terms.end(), {out.focal, out.l1, out.giou});
        weights.insert(weights.end(), {lc.w_focal, lc.w_l1, lc.w_giou});
        out.parts.l_focal = out.focal.value()[0];
        out.parts.l_l1 = out.l1.value()[0];
        out.parts.l_giou = out.giou.value()[0];
    }
    if (v.presence.node()) {
        out.logits = ad::ce_presence(v.presence, sample.label);
        terms.push_back(out.logits);
        weights.push_back(lc.w_logits);
        out.parts.l_logits = out.logits.value()[0];
    }
    if (v.mask) {
        const Tensor gt = rect_mask(localize ? sample.target : MaybeBox{}, side, g);
        out.mask = ad::focal_mask(v.mask->fused_mask, gt, lc.mask_alpha, lc.mask_gamma);
        terms.push_back(out.mask);
        weights.push_back(lc.w_mask);
        out.parts.l_mask = out.mask.value()[0];
    }
    if (terms.empty()) throw ConfigError("sample_loss: no loss term applies");
    out.total = ad::weighted_sum(terms, weights);
    out.parts.total = out.total.value()[0];
    return out;
}

}  // namespace focustrack
