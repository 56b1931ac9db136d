#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "focustrack/sampling.hpp"
#include "focustrack/tensor.hpp"

namespace focustrack {

// Per-frame ground truth. Boxes are held in center convention; the JSON form
// ({"exist": [...], "gt_rect": [[x, y, w, h] | null, ...]}) uses top-left corners.
struct SequenceAnnotation {
    std::vector<MaybeBox> boxes;
    std::vector<int> exist;

    std::size_t size() const { return exist.size(); }
    // Lengths agree and exist == 0 exactly where the box is absent.
    void validate() const;
};

nlohmann::json annotation_to_json(const SequenceAnnotation& ann);
SequenceAnnotation annotation_from_json(const nlohmann::json& j);

struct Sequence {
    std::string name;
    std::vector<Tensor> frames;  // [H x W] or [ch x H x W], values in [0, 1]
    SequenceAnnotation annotation;
};

}  // namespace focustrack
