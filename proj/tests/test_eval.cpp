#include <doctest.h>

#include <cmath>

#include "focustrack/errors.hpp"
#include "focustrack/eval.hpp"
#include "focustrack/rng.hpp"

using namespace focustrack;

namespace {

SequenceAnnotation annotate(const std::vector<BoundingBox>& gt, const std::vector<int>& exist) {
    SequenceAnnotation a;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        a.exist.push_back(exist[i]);
        a.boxes.push_back(exist[i] ? MaybeBox(gt[i]) : std::nullopt);
    }
    return a;
}

// Counts k in 0..20 with iou > k/20 using 20*iou > k, then averages.
double auc_enumeration(const std::vector<double>& ious) {
    double total = 0.0;
    for (double v : ious) {
        int hits = 0;
        for (int k = 0; k <= 20; ++k) hits += (20.0 * v > k) ? 1 : 0;
        total += hits;
    }
    return total / (21.0 * static_cast<double>(ious.size()));
}

BoundingBox shifted(const BoundingBox& b, double dx, double dy) { return BoundingBox{b.cx + dx, b.cy + dy, b.w, b.h}; }

}  // namespace

TEST_CASE("iou") {
    const BoundingBox a{5, 5, 2, 2};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, shifted(a, 3, 0)) == 0.0);
    CHECK(iou(a, shifted(a, 1, 0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(iou(a, BoundingBox{5, 5, 0, 0}) == 0.0);
    CHECK_THROWS_AS(iou(BoundingBox{5, 5, 0, 3}, BoundingBox{1, 1, 2, 0}), PreconditionError);
}

TEST_CASE("success auc") {
    const BoundingBox g{1, 1, 2, 2};
    const auto ann = annotate({g, g, g}, {1, 1, 1});

    CHECK(success_auc({g, g, g}, ann) == doctest::Approx(20.0 / 21.0));
    const BoundingBox far = shifted(g, 10, 0);
    CHECK(success_auc({far, far, far}, ann) == 0.0);

    // IoUs 1, 0.5 (a 2x1 box inside the 2x2 gt), 0.
    const std::vector<BoundingBox> pred{g, BoundingBox{1, 0.5, 2, 1}, far};
    CHECK(iou(pred[1], g) == 0.5);
    CHECK(success_auc(pred, ann) == doctest::Approx(auc_enumeration({1.0, 0.5, 0.0})).epsilon(1e-15));
    CHECK(success_auc(pred, ann) == doctest::Approx(10.0 / 21.0).epsilon(1e-15));

    // Invisible frames are dropped from the curve.
    const auto partial = annotate({g, g, g}, {1, 0, 1});
    CHECK(success_auc(pred, partial) == doctest::Approx(auc_enumeration({1.0, 0.0})));

    CHECK_THROWS_AS(success_auc(pred, annotate({g, g, g}, {0, 0, 0})), MetricError);
    CHECK_THROWS_AS(success_auc({g, g}, ann), MetricError);
}

TEST_CASE("precision") {
    const BoundingBox g{50, 50, 10, 10};
    const auto ann = annotate({g, g, g, g}, {1, 1, 1, 0});
    CHECK(precision_at({g, g, g, g}, ann) == 1.0);
    CHECK(norm_precision({g, g, g, g}, ann) == 1.0);
    const BoundingBox off = shifted(g, 21, 0);
    CHECK(precision_at({off, off, off, off}, ann) == 0.0);

    const std::vector<std::pair<int, int>> d{{0, 0}, {12, 16}, {21, 0}, {90, 90}};
    std::vector<BoundingBox> pred;
    for (auto [dx, dy] : d) pred.push_back(shifted(g, dx, dy));
    int p20 = 0, pn = 0, n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!ann.exist[i]) continue;
        ++n;
        const int sq = d[i].first * d[i].first + d[i].second * d[i].second;
        p20 += sq <= 400 ? 1 : 0;
        pn += 100 * sq <= 4 * 100 ? 1 : 0;  // (dx/10)^2 + (dy/10)^2 <= 0.2^2
    }
    CHECK(precision_at(pred, ann) == doctest::Approx(static_cast<double>(p20) / n));
    CHECK(precision_at(pred, ann) == doctest::Approx(2.0 / 3.0));
    CHECK(norm_precision(pred, ann) == doctest::Approx(static_cast<double>(pn) / n));
    CHECK(norm_precision(pred, ann) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("state accuracy") {
    const BoundingBox g{1, 1, 2, 2};
    CHECK(state_accuracy({g, g}, {1, 1}, annotate({g, g}, {1, 1})) == 1.0);
    CHECK(state_accuracy({g, g}, {0, 0}, annotate({g, g}, {0, 0})) == 1.0);
    CHECK(state_accuracy({BoundingBox{1, 0.5, 2, 1}, g}, {1, 1}, annotate({g, g}, {1, 0})) == 0.25);
    CHECK_THROWS_AS(state_accuracy({}, {}, SequenceAnnotation{}), MetricError);
}

TEST_CASE("metric properties on random sequences") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t t = 3 + rng.index(8);
        std::vector<BoundingBox> gt, pred;
        std::vector<int> exist, exist_pred;
        for (std::size_t i = 0; i < t; ++i) {
            gt.push_back(BoundingBox{rng.uniform(20, 80), rng.uniform(20, 80), rng.uniform(4, 20), rng.uniform(4, 20)});
            pred.push_back(shifted(gt.back(), rng.uniform(-15, 15), rng.uniform(-15, 15)));
            pred.back().w *= rng.uniform(0.7, 1.4);
            exist.push_back(i == 0 || rng.uniform() < 0.8 ? 1 : 0);
            exist_pred.push_back(rng.uniform() < 0.5 ? 1 : 0);
        }
        const auto ann = annotate(gt, exist);
        const SequenceMetrics m = evaluate_sequence(TrackerResult{pred, exist_pred}, ann);
        for (double v : {m.auc, m.p20, m.pnorm, m.pnorm_avg, m.sa}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (std::size_t k = 1; k < m.success.size(); ++k) CHECK(m.success[k] <= m.success[k - 1]);

        const double tx = rng.uniform(-500, 500), ty = rng.uniform(-500, 500);
        std::vector<BoundingBox> gt2, pred2;
        for (std::size_t i = 0; i < t; ++i) {
            gt2.push_back(shifted(gt[i], tx, ty));
            pred2.push_back(shifted(pred[i], tx, ty));
        }
        const SequenceMetrics s = evaluate_sequence(TrackerResult{pred2, exist_pred}, annotate(gt2, exist));
        CHECK(s.auc == doctest::Approx(m.auc));
        CHECK(s.p20 == doctest::Approx(m.p20));
        CHECK(s.pnorm == doctest::Approx(m.pnorm));
        CHECK(s.sa == doctest::Approx(m.sa));

        // Sequence metrics are means of per-frame contributions.
        double auc = 0.0, p20 = 0.0, sa = 0.0;
        std::size_t visible = 0;
        for (std::size_t i = 0; i < t; ++i) {
            const auto one = annotate({gt[i]}, {exist[i]});
            sa += state_accuracy({pred[i]}, {exist_pred[i]}, one);
            if (!exist[i]) continue;
            ++visible;
            auc += success_auc({pred[i]}, one);
            p20 += precision_at({pred[i]}, one);
        }
        CHECK(m.auc == doctest::Approx(auc / visible));
        CHECK(m.p20 == doctest::Approx(p20 / visible));
        CHECK(m.sa == doctest::Approx(sa / t));
    }
}

TEST_CASE("aggregation and result parsing") {
    std::map<std::string, SequenceMetrics> per;
    per["a"].auc = 0.2;
    per["b"].auc = 0.6;
    per["cc"].auc = 1.0;
    CHECK(aggregate(per).auc == doctest::Approx(0.6));
    CHECK(aggregate(per, [](const std::string& n) { return n.size() == 1; }).auc == doctest::Approx(0.4));
    CHECK_THROWS_AS(aggregate(per, [](const std::string&) { return false; }), MetricError);

    const TrackerResult r = tracker_result_from_json(nlohmann::json::parse(R"({"res": [[0, 0, 4, 2]]})"));
    CHECK(r.boxes[0].cx == 2.0);
    CHECK(r.boxes[0].cy == 1.0);
    CHECK(r.exist_pred == std::vector<int>{1});
    CHECK_THROWS_AS(tracker_result_from_json(nlohmann::json::parse(R"({"res": [[0, 0, 4]]})")), FormatError);
}
