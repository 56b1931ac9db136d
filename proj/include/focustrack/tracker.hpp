#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "focustrack/model.hpp"
#include "focustrack/sequence.hpp"

namespace focustrack {

struct TrackerConfig {
    bool use_sra = true;
    bool use_atm = true;
    bool use_window = true;
    SraState sra;
    double template_factor = 2.0;
    // Keep the whole box at the last confident prediction while the target is
    // judged absent, so the region grows around where the target was seen.
    bool freeze_on_absent = true;
    // With freezing off: on frames judged absent, move the crop centre but keep
    // the previous box size.
    bool hold_size_on_absent = true;
    // Clamp the tracked centre to the frame, as the base local tracker does.
    bool clip_to_frame = true;
    // Store the upsampled pixel mask in each FrameOutput.
    bool keep_mask = false;

    void validate() const;
};

struct FrameOutput {
    BoundingBox box;        // image pixels
    double logits = 1.0;    // presence probability, 1 when there is no presence branch
    double p_max = 0.0;
    double factor = 0.0;    // factor used for this frame's crop
    bool window_used = false;
    bool exist_pred = true;
    std::optional<Tensor> mask;  // [search_side x search_side] when keep_mask
    double ms = 0.0;
};

// Converts a crop patch ([S x S] or [k x S x S]) to [channels x S x S].
Tensor to_channels(const Tensor& patch, std::size_t channels);

class Tracker {
public:
    // `weights` must outlive the tracker.
    Tracker(ModelConfig model, const GradientTape& weights, TrackerConfig cfg);

    // Crops the template at template_factor around `gt`; absent boxes throw.
    void init(const Tensor& frame, const MaybeBox& gt);
    FrameOutput step(const Tensor& frame);

    bool initialized() const { return initialized_; }
    const SraState& sra() const { return sra_; }
    const BoundingBox& last_box() const { return last_box_; }
    const Tensor& template_tokens() const { return template_tokens_; }
    const TrackerConfig& config() const { return cfg_; }

private:
    ModelConfig model_;
    const GradientTape& weights_;
    TrackerConfig cfg_;
    SraState sra_;
    Tensor template_tokens_;
    Tensor window_;
    BoundingBox last_box_;
    std::size_t frame_ = 0;
    bool initialized_ = false;
};

struct TrackResult {
    std::string name;
    BoundingBox init_box;
    std::vector<FrameOutput> frames;  // one per frame after the first
};

// Initializes on frame 0 with its ground truth and steps through the rest.
TrackResult track_sequence(const Sequence& seq, const ModelConfig& model, const GradientTape& weights,
                           const TrackerConfig& cfg);

// Per-frame trace: frame,x,y,w,h,logits,p_max,factor,window_used,ms (top-left
// boxes). The first line is "# config: <json>". ms is written as 0 unless
// `timing` is set, which keeps the file byte-reproducible.
std::string trace_csv(const TrackResult& r, const nlohmann::json& config, bool timing);
// {"res": [[x,y,w,h], ...], "exist_pred": [...], "config": {...}}, first entry = init box.
nlohmann::json result_json(const TrackResult& r, const nlohmann::json& config);

nlohmann::json tracker_config_to_json(const TrackerConfig& c);
TrackerConfig tracker_config_from_json(const nlohmann::json& j, TrackerConfig base = {});

}  // namespace focustrack
