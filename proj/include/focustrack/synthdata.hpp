#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "focustrack/sequence.hpp"

namespace focustrack {

// Camera shift applied from `frame` on: the whole scene moves by (dx, dy).
struct JumpEvent {
    std::size_t frame = 0;
    double dx = 0.0;
    double dy = 0.0;
};

// Frames [begin, end) hide the target and carry exist = 0.
struct Occlusion {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct SynthSpec {
    std::string name = "synth";
    std::size_t frame_side = 256;
    std::size_t frames = 48;
    double size_min = 8.0;
    double size_max = 14.0;
    double motion_std = 0.8;       // px/frame, velocity innovation
    std::vector<JumpEvent> jumps;
    std::vector<Occlusion> occlusions;
    double clutter_density = 1.0;  // lattice cells per 64 px
    double clutter_intensity = 0.3;
    std::size_t distractors = 2;
    double distractor_intensity = 0.25;
    double target_min = 0.6;       // blob peak range
    double target_max = 1.0;
    double noise_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json synth_spec_to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

// Renders single-channel [side x side] frames with exact annotations.
Sequence generate(const SynthSpec& spec);

// Half side of the square view a crop at `factor` sees around `box`; a jump
// larger than this moves the target centre outside that view.
double view_half_extent(const BoundingBox& box, double factor);

// Writes 000001.png ... , annotation.json and (when given) spec.json.
void save_sequence(const Sequence& seq, const std::filesystem::path& dir, int bit_depth = 8,
                   const nlohmann::json& spec = nullptr);
// Reads numerically ordered PNG frames and annotation.json; frames are
// [H x W] for one channel and [channels x H x W] otherwise.
Sequence load_sequence(const std::filesystem::path& dir, std::size_t channels = 1);

}  // namespace focustrack
