#include "focustrack/sequence.hpp"

#include "focustrack/errors.hpp"

namespace focustrack {

void SequenceAnnotation::validate() const {
    if (boxes.size() != exist.size()) throw FormatError("annotation: gt_rect and exist lengths differ");
    for (std::size_t i = 0; i < exist.size(); ++i) {
        if (exist[i] != 0 && exist[i] != 1) throw FormatError("annotation: exist flags must be 0 or 1");
        if ((exist[i] == 1) != boxes[i].has_value()) {
            throw FormatError("annotation: frame " + std::to_string(i) + " exist flag disagrees with its box");
        }
    }
}

nlohmann::json annotation_to_json(const SequenceAnnotation& ann) {
    nlohmann::json rects = nlohmann::json::array();
    for (const auto& b : ann.boxes) {
        if (b) {
            rects.push_back({b->x1(), b->y1(), b->w, b->h});
        } else {
            rects.push_back(nullptr);
        }
    }
    return {{"exist", ann.exist}, {"gt_rect", rects}};
}

SequenceAnnotation annotation_from_json(const nlohmann::json& j) {
    SequenceAnnotation ann;
    try {
        ann.exist = j.at("exist").get<std::vector<int>>();
        for (const auto& r : j.at("gt_rect")) {
            // Both null and [] mark an absent target.
            if (r.is_null() || (r.is_array() && r.empty())) {
                ann.boxes.emplace_back(std::nullopt);
            } else {
                if (!r.is_array() || r.size() != 4) throw FormatError("annotation: gt_rect entries need 4 values");
                ann.boxes.emplace_back(
                    BoundingBox::from_corner(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("annotation: ") + e.what());
    }
    ann.validate();
    return ann;
}

}  // namespace focustrack
