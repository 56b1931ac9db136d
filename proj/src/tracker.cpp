#include "focustrack/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"

namespace focustrack {

void TrackerConfig::validate() const {
    sra.validate();
    if (!(template_factor > 0.0)) throw ConfigError("tracker: template_factor must be positive");
}

Tensor to_channels(const Tensor& patch, std::size_t channels) {
    if (patch.rank() == 2) {
        const std::size_t h = patch.dim(0), w = patch.dim(1);
        std::vector<double> v;
        v.reserve(channels * h * w);
        for (std::size_t c = 0; c < channels; ++c) v.insert(v.end(), patch.values().begin(), patch.values().end());
        return Tensor({channels, h, w}, std::move(v), patch.dtype());
    }
    require_rank(patch, 3, "to_channels");
    if (patch.dim(0) == channels) return patch;
    if (patch.dim(0) != 1) throw DimensionError("to_channels: cannot map " + shape_string(patch.shape()));
    return to_channels(patch.reshaped({patch.dim(1), patch.dim(2)}), channels);
}

Tracker::Tracker(ModelConfig model, const GradientTape& weights, TrackerConfig cfg)
    : model_(std::move(model)), weights_(weights), cfg_(std::move(cfg)) {
    model_.validate();
    cfg_.validate();
    window_ = hanning2d(model_.encoder.grid());
}

void Tracker::init(const Tensor& frame, const MaybeBox& gt) {
    if (!gt || !gt->valid()) throw PreconditionError("tracker init: needs a visible target box");
    const auto& enc = model_.encoder;
    const std::size_t side = crop_side(gt, cfg_.template_factor);
    Region r = extract_region(frame, {gt->cx, gt->cy}, side, enc.template_side);
    ad::Binding bind(weights_);
    template_tokens_ = embed_template(ad::constant(to_channels(r.patch, enc.channels).as_dtype(model_.dtype)), enc, bind).value();
    sra_ = cfg_.sra;
    sra_.f = sra_.f_base;
    last_box_ = *gt;
    frame_ = 0;
    initialized_ = true;
}

FrameOutput Tracker::step(const Tensor& frame) {
    if (!initialized_) throw PreconditionError("tracker step before init");
    const auto t0 = std::chrono::steady_clock::now();
    const auto& enc = model_.encoder;
    FrameOutput out;
    out.factor = sra_.f;

    // (1) crop around the last prediction at the live factor
    const std::size_t side = crop_side(last_box_, sra_.f);
    Region r = extract_region(frame, {last_box_.cx, last_box_.cy}, side, enc.search_side);

    // (2)-(5) encoder, head, optional ATM, presence
    ad::Binding bind(weights_);
    ad::Var x = embed_search(ad::constant(to_channels(r.patch, enc.channels).as_dtype(model_.dtype)), enc, bind);
    EncoderVars ev = run_encoder(ad::constant(template_tokens_), x, enc, bind);
    HeadVars hv = head_forward(ev.search_out, enc, model_.head, bind);
    HeadOutput head{hv.score.value(), hv.offset.value(), hv.size.value()};
    const Tensor raw_score = head.score;
    std::optional<Tensor> fused;
    if (cfg_.use_atm) {
        MaskVars mv = atm_forward(ev.taps, model_.atm, bind);
        fused = mv.fused_mask.value();
        head.score = refine_scores(head.score, *fused);
    }
    if (enc.use_cls) {
        PoolVars pool = attention_pool(ev.cls_out, ev.search_out, model_.presence, bind);
        out.logits = presence_head(pool.pooled, bind).value()[0];
    }

    // (6) window only while the region is at its base size
    out.window_used = cfg_.use_window && sra_.f == sra_.f_base;
    const double stride = static_cast<double>(enc.search_side) / static_cast<double>(enc.grid());
    Decoded d = decode(head, out.window_used ? &window_ : nullptr, stride, static_cast<double>(enc.search_side));
    out.p_max = raw_score(d.row, d.col);

    // (7) back to image coordinates
    out.box = *from_crop(d.box, r.transform);
    const bool absent = sra_.expand_condition(out.logits, out.p_max);
    out.exist_pred = !absent;
    if (!absent) {
        last_box_ = out.box;
    } else if (!cfg_.freeze_on_absent) {
        last_box_.cx = out.box.cx;
        last_box_.cy = out.box.cy;
        if (!cfg_.hold_size_on_absent) {
            last_box_.w = out.box.w;
            last_box_.h = out.box.h;
        }
    }
    if (cfg_.clip_to_frame) {
        const double fw = static_cast<double>(frame.dim(frame.rank() - 1));
        const double fh = static_cast<double>(frame.dim(frame.rank() - 2));
        last_box_.cx = std::clamp(last_box_.cx, 0.0, fw - 1.0);
        last_box_.cy = std::clamp(last_box_.cy, 0.0, fh - 1.0);
    }

    // (8) factor for the next frame
    if (cfg_.use_sra) sra_ = sra_update(sra_, out.logits, out.p_max);

    if (cfg_.keep_mask && fused) out.mask = upsample_mask(*fused, enc.search_side);
    ++frame_;
    out.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

TrackResult track_sequence(const Sequence& seq, const ModelConfig& model, const GradientTape& weights,
                           const TrackerConfig& cfg) {
    if (seq.frames.empty()) throw PreconditionError("track_sequence: '" + seq.name + "' has no frames");
    if (seq.annotation.size() != seq.frames.size()) {
        throw FormatError("track_sequence: '" + seq.name + "' frame and annotation counts differ");
    }
    Tracker t(model, weights, cfg);
    t.init(seq.frames[0], seq.annotation.boxes[0]);
    TrackResult r;
    r.name = seq.name;
    r.init_box = *seq.annotation.boxes[0];
    r.frames.reserve(seq.frames.size() - 1);
    for (std::size_t i = 1; i < seq.frames.size(); ++i) r.frames.push_back(t.step(seq.frames[i]));
    return r;
}

std::string trace_csv(const TrackResult& r, const nlohmann::json& config, bool timing) {
    std::string s = "# config: " + config.dump() + "\n";
    s += "frame,x,y,w,h,logits,p_max,factor,window_used,ms\n";
    char line[256];
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        const FrameOutput& f = r.frames[i];
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g,%d,%.3f\n", i + 1, f.box.x1(),
                      f.box.y1(), f.box.w, f.box.h, f.logits, f.p_max, f.factor, f.window_used ? 1 : 0,
                      timing ? f.ms : 0.0);
        s += line;
    }
    return s;
}

nlohmann::json result_json(const TrackResult& r, const nlohmann::json& config) {
    nlohmann::json res = nlohmann::json::array();
    nlohmann::json exist = nlohmann::json::array();
    res.push_back({r.init_box.x1(), r.init_box.y1(), r.init_box.w, r.init_box.h});
    exist.push_back(1);
    for (const auto& f : r.frames) {
        res.push_back({f.box.x1(), f.box.y1(), f.box.w, f.box.h});
        exist.push_back(f.exist_pred ? 1 : 0);
    }
    return {{"res", res}, {"exist_pred", exist}, {"config", config}};
}

nlohmann::json tracker_config_to_json(const TrackerConfig& c) {
    return {{"use_sra", c.use_sra},
            {"use_atm", c.use_atm},
            {"use_window", c.use_window},
            {"f_base", c.sra.f_base},
            {"f_step", c.sra.f_step},
            {"f_max", c.sra.f_max},
            {"t_logits", c.sra.t_logits},
            {"t_score", c.sra.t_score},
            {"template_factor", c.template_factor},
            {"freeze_on_absent", c.freeze_on_absent},
            {"hold_size_on_absent", c.hold_size_on_absent},
            {"clip_to_frame", c.clip_to_frame}};
}

TrackerConfig tracker_config_from_json(const nlohmann::json& j, TrackerConfig c) {
    try {
        c.use_sra = j.value("use_sra", c.use_sra);
        c.use_atm = j.value("use_atm", c.use_atm);
        c.use_window = j.value("use_window", c.use_window);
        c.sra.f_base = j.value("f_base", c.sra.f_base);
        c.sra.f_step = j.value("f_step", c.sra.f_step);
        c.sra.f_max = j.value("f_max", c.sra.f_max);
        c.sra.t_logits = j.value("t_logits", c.sra.t_logits);
        c.sra.t_score = j.value("t_score", c.sra.t_score);
        c.template_factor = j.value("template_factor", c.template_factor);
        c.freeze_on_absent = j.value("freeze_on_absent", c.freeze_on_absent);
        c.hold_size_on_absent = j.value("hold_size_on_absent", c.hold_size_on_absent);
        c.clip_to_frame = j.value("clip_to_frame", c.clip_to_frame);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("tracker config: ") + e.what());
    }
    c.sra.f = c.sra.f_base;
    c.validate();
    return c;
}

}  // namespace focustrack
