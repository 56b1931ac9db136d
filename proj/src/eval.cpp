#include "focustrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "focustrack/errors.hpp"

namespace focustrack {

namespace {

void require_lengths(std::size_t pred, const SequenceAnnotation& ann, const char* what) {
    ann.validate();
    if (pred != ann.size()) {
        throw MetricError(std::string(what) + ": " + std::to_string(pred) + " predictions for " +
                          std::to_string(ann.size()) + " frames");
    }
}

// Per-visible-frame values of `f`; throws when no frame is visible.
template <typename F>
std::vector<double> visible_values(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann,
                                   const char* what, F f) {
    require_lengths(pred.size(), ann, what);
    std::vector<double> out;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (ann.exist[i]) out.push_back(f(pred[i], *ann.boxes[i]));
    if (out.empty()) throw MetricError(std::string(what) + ": no visible frames");
    return out;
}

double center_error(const BoundingBox& p, const BoundingBox& g) { return std::hypot(p.cx - g.cx, p.cy - g.cy); }

double norm_center_error(const BoundingBox& p, const BoundingBox& g) {
    return std::hypot((p.cx - g.cx) / g.w, (p.cy - g.cy) / g.h);
}

double fraction(const std::vector<double>& v, const std::function<bool(double)>& pass) {
    std::size_t n = 0;
    for (double x : v) n += pass(x) ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(v.size());
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double aa = std::max(0.0, a.w) * std::max(0.0, a.h);
    const double ab = std::max(0.0, b.w) * std::max(0.0, b.h);
    if (aa <= 0.0 && ab <= 0.0) throw PreconditionError("iou: both boxes are degenerate");
    const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
    const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
    const double inter = iw * ih;
    return inter / (aa + ab - inter);
}

TrackerResult tracker_result_from_json(const nlohmann::json& j) {
    TrackerResult r;
    try {
        for (const auto& b : j.at("res")) {
            if (!b.is_array() || b.size() != 4) throw FormatError("result: res entries need 4 values");
            r.boxes.push_back(
                BoundingBox::from_corner(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()));
        }
        if (j.contains("exist_pred")) {
            r.exist_pred = j.at("exist_pred").get<std::vector<int>>();
        } else {
            r.exist_pred.assign(r.boxes.size(), 1);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("result: ") + e.what());
    }
    if (r.exist_pred.size() != r.boxes.size()) throw FormatError("result: res and exist_pred lengths differ");
    return r;
}

std::vector<double> success_curve(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann) {
    const auto ious = visible_values(pred, ann, "success_curve", [](const BoundingBox& p, const BoundingBox& g) {
        return iou(p, g);
    });
    std::vector<double> curve(kSuccessThresholds);
    for (std::size_t k = 0; k < kSuccessThresholds; ++k) {
        const double tau = static_cast<double>(k) / 20.0;
        curve[k] = fraction(ious, [tau](double v) { return v > tau; });
    }
    return curve;
}

double success_auc(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann) {
    return mean(success_curve(pred, ann));
}

double precision_at(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann, double radius) {
    const auto err = visible_values(pred, ann, "precision_at", center_error);
    return fraction(err, [radius](double e) { return e <= radius; });
}

std::vector<double> precision_curve(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann) {
    const auto err = visible_values(pred, ann, "precision_curve", center_error);
    std::vector<double> curve(51);
    for (std::size_t r = 0; r <= 50; ++r) {
        const double radius = static_cast<double>(r);
        curve[r] = fraction(err, [radius](double e) { return e <= radius; });
    }
    return curve;
}

double norm_precision(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann, double threshold) {
    const auto err = visible_values(pred, ann, "norm_precision", norm_center_error);
    return fraction(err, [threshold](double e) { return e <= threshold; });
}

double norm_precision_curve_avg(const std::vector<BoundingBox>& pred, const SequenceAnnotation& ann) {
    const auto err = visible_values(pred, ann, "norm_precision", norm_center_error);
    double s = 0.0;
    for (std::size_t k = 0; k <= 50; ++k) {
        const double t = static_cast<double>(k) / 100.0;
        s += fraction(err, [t](double e) { return e <= t; });
    }
    return s / 51.0;
}

double state_accuracy(const std::vector<BoundingBox>& pred, const std::vector<int>& exist_pred,
                      const SequenceAnnotation& ann) {
    require_lengths(pred.size(), ann, "state_accuracy");
    if (exist_pred.size() != pred.size()) throw MetricError("state_accuracy: exist_pred length differs");
    if (pred.empty()) throw MetricError("state_accuracy: empty sequence");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        s += ann.exist[i] ? iou(pred[i], *ann.boxes[i]) : (exist_pred[i] == 0 ? 1.0 : 0.0);
    }
    return s / static_cast<double>(pred.size());
}

SequenceMetrics evaluate_sequence(const TrackerResult& result, const SequenceAnnotation& ann) {
    SequenceMetrics m;
    m.success = success_curve(result.boxes, ann);
    m.auc = mean(m.success);
    m.precision = precision_curve(result.boxes, ann);
    m.p20 = m.precision[20];
    m.pnorm = norm_precision(result.boxes, ann);
    m.pnorm_avg = norm_precision_curve_avg(result.boxes, ann);
    m.sa = state_accuracy(result.boxes, result.exist_pred, ann);
    return m;
}

MetricsReport aggregate(const std::map<std::string, SequenceMetrics>& per_sequence,
                        const std::function<bool(const std::string&)>& filter) {
    MetricsReport r;
    for (const auto& [name, m] : per_sequence)
        if (!filter || filter(name)) r.per_sequence.emplace(name, m);
    if (r.per_sequence.empty()) throw MetricError("aggregate: no sequences selected");
    const double n = static_cast<double>(r.per_sequence.size());
    for (const auto& [name, m] : r.per_sequence) {
        r.auc += m.auc / n;
        r.p20 += m.p20 / n;
        r.pnorm += m.pnorm / n;
        r.pnorm_avg += m.pnorm_avg / n;
        r.sa += m.sa / n;
    }
    return r;
}

nlohmann::json report_json(const MetricsReport& r) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, m] : r.per_sequence) {
        per[name] = {{"auc", m.auc}, {"p20", m.p20}, {"pnorm", m.pnorm}, {"pnorm_avg", m.pnorm_avg}, {"sa", m.sa}};
    }
    return {{"auc", r.auc}, {"p20", r.p20}, {"pnorm", r.pnorm}, {"pnorm_avg", r.pnorm_avg}, {"sa", r.sa},
            {"per_sequence", per}};
}

std::string curves_csv(const MetricsReport& r) {
    std::vector<double> succ(kSuccessThresholds, 0.0), prec(51, 0.0);
    const double n = static_cast<double>(r.per_sequence.size());
    for (const auto& [name, m] : r.per_sequence) {
        for (std::size_t k = 0; k < succ.size(); ++k) succ[k] += m.success[k] / n;
        for (std::size_t k = 0; k < prec.size(); ++k) prec[k] += m.precision[k] / n;
    }
    std::string s = "kind,threshold,value\n";
    char line[96];
    for (std::size_t k = 0; k < succ.size(); ++k) {
        std::snprintf(line, sizeof line, "success,%.2f,%.6f\n", static_cast<double>(k) / 20.0, succ[k]);
        s += line;
    }
    for (std::size_t k = 0; k < prec.size(); ++k) {
        std::snprintf(line, sizeof line, "precision,%zu,%.6f\n", k, prec[k]);
        s += line;
    }
    return s;
}

MetricsReport evaluate_directory(const std::filesystem::path& results, const std::filesystem::path& ann) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(results)) throw FormatError("eval: results directory '" + results.string() + "' missing");
    auto read_json = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw FormatError("eval: cannot open '" + p.string() + "'");
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("eval: '" + p.string() + "': " + e.what());
        }
    };
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(results))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::map<std::string, SequenceMetrics> per;
    for (const auto& f : files) {
        const std::string name = f.stem().string();
        fs::path a = ann / name / "annotation.json";
        if (!fs::exists(a)) a = ann / (name + ".json");
        if (!fs::exists(a)) throw FormatError("eval: no annotation for '" + name + "'");
        per.emplace(name, evaluate_sequence(tracker_result_from_json(read_json(f)), annotation_from_json(read_json(a))));
    }
    if (per.empty()) throw FormatError("eval: no result files in '" + results.string() + "'");
    return aggregate(per);
}

}  // namespace focustrack
