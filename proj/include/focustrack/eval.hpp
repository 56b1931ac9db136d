#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "focustrack/sequence.hpp"

namespace focustrack {

inline constexpr std::size_t kSuccessThresholds = 21;  // 0, 0.05, ..., 1.0

// Intersection over union. A zero-area box scores 0 against a proper box;
// two zero-area boxes throw PreconditionError.
double iou(const BoundingBox& a, const BoundingBox& b);

// Tracker output for one sequence: one box per frame (center convention here)
// plus the predicted visibility flags.
struct TrackerResult {
    std::vector<BoundingBox> boxes;
    std::vector<int> exist_pred;
};

TrackerResult tracker_result_from_json(const nlohmann::json& j);

// Fraction of visible frames with IoU > tau for tau = k / 20, k = 0..20.
std::vector<double> success_curve(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann);
// Mean of success_curve.
double success_auc(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann);
// Fraction of visible frames whose centre error is <= radius pixels.
double precision_at(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann, double radius = 20.0);
std::vector<double> precision_curve(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann);
// Centre error scaled per axis by the gt size, thresholded at `threshold`.
double norm_precision(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann, double threshold = 0.2);
// Mean over thresholds 0, 0.01, ..., 0.5.
double norm_precision_curve_avg(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann);
// mean_t [exist_t * IoU_t + (1 - exist_t) * (exist_pred_t == 0)]
double state_accuracy(const std::vector<BoundingBox>& pred, const std::vector<int>& exist_pred,
                      const SequenceAnnotation& ann);

struct SequenceMetrics {
    double auc = 0.0;
    double p20 = 0.0;
    double pnorm = 0.0;
    double pnorm_avg = 0.0;
    double sa = 0.0;
    std::vector<double> success;
    std::vector<double> precision;
};

SequenceMetrics evaluate_sequence(const TrackerResult& result, const SequenceAnnotation& ann);

struct MetricsReport {
    double auc = 0.0;
    double p20 = 0.0;
    double pnorm = 0.0;
    double pnorm_avg = 0.0;
    double sa = 0.0;
    std::map<std::string, SequenceMetrics> per_sequence;
};

// Means over the sequences accepted by `filter` (all when empty).
MetricsReport aggregate(const std::map<std::string, SequenceMetrics>& per_sequence,
                        const std::function<bool(const std::string&)>& filter = {});

nlohmann::json report_json(const MetricsReport& r);
// Columns: kind,threshold,value (kind = success | precision), averaged over sequences.
std::string curves_csv(const MetricsReport& r);

// Pairs <results>/<name>.json with <ann>/<name>/annotation.json (or <ann>/<name>.json).
MetricsReport evaluate_directory(const std::filesystem::path& results, const std::filesystem::path& ann);

}  // namespace focustrack
