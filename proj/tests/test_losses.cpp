#include <doctest.h>

#include <cmath>

#include "focustrack/errors.hpp"
#include "focustrack/gradcheck.hpp"
#include "focustrack/losses.hpp"
#include "test_util.hpp"

using namespace focustrack;

namespace {

double focal_heat_oracle(const Tensor& p, const Tensor& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g[i] == 1.0)
            s += -std::pow(1 - p[i], 2) * std::log(p[i]);
        else
            s += -std::pow(1 - g[i], 4) * std::pow(p[i], 2) * std::log(1 - p[i]);
    }
    return s;
}

double focal_mask_oracle(const Tensor& p, const Tensor& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (g[i] == 1.0)
            s += -0.25 * std::pow(1 - p[i], 2) * std::log(p[i]);
        else
            s += -0.75 * std::pow(p[i], 2) * std::log(1 - p[i]);
    }
    return s / static_cast<double>(p.size());
}

// Dice loss, kept here only as the comparison baseline for the mask loss.
double dice_loss(const Tensor& p, const Tensor& g) {
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * g[i];
        sp += p[i];
        sg += g[i];
    }
    return 1.0 - (2.0 * inter + 1.0) / (sp + sg + 1.0);
}

GradCheckReport check_graph(const std::function<ad::Var(ad::Binding&)>& f, GradientTape& t) {
    GradCheckOptions opt;
    opt.coords_per_tensor = 64;
    opt.eps = 1e-6;
    return grad_check([&](ad::Binding& b) { return std::vector<ad::Var>{f(b)}; }, t, opt);
}

}  // namespace

TEST_CASE("giou") {
    const BoundingBox a{1, 1, 2, 2};
    CHECK(giou(a, a) == 1.0);
    CHECK(giou(a, BoundingBox{2, 1, 2, 2}) == doctest::Approx(1.0 / 3.0));
    double prev = 1.0;
    for (double d : {3.0, 10.0, 100.0, 1e4, 1e6}) {
        const double g = giou(BoundingBox{0, 0, 1, 1}, BoundingBox{d, 0, 1, 1});
        CHECK(g < prev);
        prev = g;
    }
    CHECK(prev == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK_THROWS_AS(giou(BoundingBox{0, 0, 0, 1}, a), PreconditionError);
}

TEST_CASE("giou gradient matches central differences") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const BoundingBox a{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 5), rng.uniform(1, 5)};
        const BoundingBox b{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 5), rng.uniform(1, 5)};
        double g[4];
        giou_with_grad(a, b, g);
        for (int k = 0; k < 4; ++k) {
            BoundingBox up = a, dn = a;
            double* pu[] = {&up.cx, &up.cy, &up.w, &up.h};
            double* pd[] = {&dn.cx, &dn.cy, &dn.w, &dn.h};
            *pu[k] += 1e-6;
            *pd[k] -= 1e-6;
            const double num = (giou(up, b) - giou(dn, b)) / 2e-6;
            CHECK(std::abs(g[k] - num) <= 1e-6 + 1e-5 * std::abs(num));
        }
    }
}

TEST_CASE("heatmap focal loss") {
    const Tensor gt = gaussian_heatmap(BoundingBox{20, 12, 10, 8}, 32.0, 4);
    CHECK(gt(1, 2) == 1.0);

    Tensor perfect = Tensor::zeros({4, 4});
    perfect(1, 2) = 1.0;
    CHECK(focal_heatmap(perfect, gt) <= 1e-5);

    const Tensor half = Tensor::full({4, 4}, 0.5);
    CHECK(std::abs(focal_heatmap(half, gt) - focal_heat_oracle(half, gt)) <= 1e-6);

    Rng rng(8);
    const Tensor p = testutil::random_tensor({4, 4}, rng, 0.01, 0.99);
    CHECK(std::abs(focal_heatmap(p, gt) - focal_heat_oracle(p, gt)) <= 1e-6);

    CHECK(focal_heatmap(p, Tensor::zeros({4, 4})) == 0.0);
    Tensor two = gt;
    two(3, 3) = 1.0;
    CHECK_THROWS(focal_heatmap(p, two));
}

TEST_CASE("l1 box") {
    const BoundingBox g{1, 2, 3, 4};
    CHECK(l1_box(g, g, 1.0) == 0.0);
    CHECK(l1_box(BoundingBox{2, 2, 3, 4}, g, 1.0) == 0.25);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const BoundingBox a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 5), rng.uniform(0, 5)};
        const BoundingBox b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 5), rng.uniform(0, 5)};
        const double s = rng.uniform(1, 100);
        const double want =
            (std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h)) / 4.0 / s;
        CHECK(std::abs(l1_box(a, b, s) - want) <= 1e-7);
    }
}

TEST_CASE("presence cross-entropy") {
    CHECK(ce_presence(PresenceOutput{{0.5, 0.5}}, 1) == doctest::Approx(0.6931471805599453));
    CHECK(ce_presence(PresenceOutput{{1 - 1e-12, 1e-12}}, 1) <= 1e-9);
    CHECK(ce_presence(PresenceOutput{{0.9, 0.1}}, 0) == doctest::Approx(-std::log(0.1)));
    CHECK(ce_presence(PresenceOutput{{0.9, 0.1}}, 0) == doctest::Approx(2.3026).epsilon(1e-4));
    CHECK_THROWS_AS(ce_presence(PresenceOutput{}, 2), PreconditionError);
}

TEST_CASE("mask focal loss") {
    Tensor gt = Tensor::zeros({4, 4});
    gt(1, 1) = gt(1, 2) = gt(2, 1) = 1.0;
    CHECK(focal_mask(gt, gt) <= 1e-5);
    CHECK(focal_mask(Tensor::zeros({4, 4}), Tensor::zeros({4, 4})) <= 1e-5);
    Rng rng(6);
    const Tensor p = testutil::random_tensor({4, 4}, rng, 0.01, 0.99);
    CHECK(std::abs(focal_mask(p, gt) - focal_mask_oracle(p, gt)) <= 1e-6);
    Tensor soft = gt;
    soft(0, 0) = 0.5;
    CHECK_THROWS_AS(focal_mask(p, soft), PreconditionError);

    // Both losses rank a better prediction lower; focal keeps the easy
    // background pixels near zero where dice does not look at them at all.
    const Tensor good = Tensor::matrix({{0.05, 0.05, 0.05, 0.05}, {0.05, 0.9, 0.9, 0.05}, {0.05, 0.9, 0.05, 0.05},
                                        {0.05, 0.05, 0.05, 0.05}});
    const Tensor poor = Tensor::full({4, 4}, 0.5);
    CHECK(focal_mask(good, gt) < focal_mask(poor, gt));
    CHECK(dice_loss(good, gt) < dice_loss(poor, gt));
}

TEST_CASE("weighted total") {
    CHECK(total_loss(LossParts{}) == 0.0);
    const LossConfig c;
    CHECK(c.w_giou == 2.0);
    CHECK(c.w_l1 == 5.0);
    CHECK(c.w_focal == 1.0);
    CHECK(c.w_logits == 1.0);
    CHECK(c.w_mask == 1.0);
    CHECK(total_loss(LossParts{1, 1, 1, 1, 1, 0}) == 10.0);
    const LossParts p = with_total(LossParts{0.5, 0.1, 0.2, 0.3, 0.05, 0});
    CHECK(p.total == doctest::Approx(2 * 0.2 + 5 * 0.1 + 0.5 + 0.3 + 0.05));

    const LossConfig r = LossConfig::from_json(c.to_json());
    CHECK(r.w_giou == 2.0);
    nlohmann::json bad = c.to_json();
    bad["w_l1"] = -1.0;
    CHECK_THROWS_AS(LossConfig::from_json(bad), ConfigError);
}

TEST_CASE("graph losses agree with the scalar forms and their gradients") {
    Rng rng(10);
    GradientTape t;
    t.add("score", testutil::random_tensor({4, 4}, rng, 0.05, 0.95));
    t.add("box", Tensor(Shape{4}, {0.4, 0.55, 0.2, 0.3}));
    t.add("probs", Tensor(Shape{1, 2}, {0.7, 0.3}));
    t.add("mask", testutil::random_tensor({4, 4}, rng, 0.05, 0.95));
    const BoundingBox gt{0.5, 0.5, 0.25, 0.25};
    const Tensor heat = gaussian_heatmap(BoundingBox{20, 12, 10, 8}, 32.0, 4);
    Tensor mgt = Tensor::zeros({4, 4});
    mgt(1, 2) = mgt(1, 1) = 1.0;

    ad::Binding b(t);
    CHECK(ad::focal_heatmap(b("score"), heat).value()[0] == doctest::Approx(focal_heatmap(t.param("score"), heat)));
    CHECK(ad::focal_mask(b("mask"), mgt).value()[0] == doctest::Approx(focal_mask(t.param("mask"), mgt)));
    const BoundingBox pb{0.4, 0.55, 0.2, 0.3};
    CHECK(ad::giou_loss(b("box"), gt).value()[0] == doctest::Approx(1.0 - giou(pb, gt)));
    CHECK(ad::l1_box(b("box"), gt, 1.0).value()[0] == doctest::Approx(l1_box(pb, gt, 1.0)));
    CHECK(ad::ce_presence(b("probs"), 0).value()[0] == doctest::Approx(-std::log(0.3)));

    CHECK(check_graph([&](ad::Binding& x) { return ad::focal_heatmap(x("score"), heat); }, t).max_rel_err[0] <= 1e-5);
    CHECK(check_graph([&](ad::Binding& x) { return ad::focal_mask(x("mask"), mgt); }, t).max_rel_err[0] <= 1e-5);
    CHECK(check_graph([&](ad::Binding& x) { return ad::giou_loss(x("box"), gt); }, t).max_rel_err[0] <= 1e-5);
    CHECK(check_graph([&](ad::Binding& x) { return ad::l1_box(x("box"), gt, 1.0); }, t).max_rel_err[0] <= 1e-5);
    CHECK(check_graph([&](ad::Binding& x) { return ad::ce_presence(x("probs"), 1); }, t).max_rel_err[0] <= 1e-5);
}

TEST_CASE("training targets") {
    SUBCASE("gaussian radius scales with the box") {
        const double r = gaussian_radius(4.0, 6.0, 0.7);
        CHECK(r > 0.0);
        CHECK(gaussian_radius(8.0, 12.0, 0.7) == doctest::Approx(2.0 * r));
        CHECK(gaussian_radius(6.0, 4.0, 0.7) == doctest::Approx(r));
        CHECK(gaussian_radius(4.0, 6.0, 0.9) < r);
        CHECK_THROWS_AS(gaussian_radius(0, 3), PreconditionError);
    }
    SUBCASE("heatmap peak") {
        const Tensor h = gaussian_heatmap(BoundingBox{33, 9, 12, 12}, 64.0, 8);
        std::size_t ones = 0;
        for (double v : h.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            ones += v == 1.0;
        }
        CHECK(ones == 1);
        CHECK(h(1, 4) == 1.0);
        CHECK(h(1, 3) == h(1, 5));
        const Tensor none = gaussian_heatmap(std::nullopt, 64.0, 8);
        for (double v : none.values()) CHECK(v == 0.0);
    }
    SUBCASE("rect mask") {
        const Tensor m = rect_mask(BoundingBox{16, 16, 16, 16}, 64.0, 8);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) CHECK(m(i, j) == ((i == 1 || i == 2) && (j == 1 || j == 2) ? 1.0 : 0.0));
        const Tensor tiny = rect_mask(BoundingBox{37, 5, 1, 1}, 64.0, 8);
        double s = 0.0;
        for (double v : tiny.values()) s += v;
        CHECK(s == 1.0);
        CHECK(tiny(0, 4) == 1.0);
    }
    SUBCASE("centre cell clamps") {
        CHECK(center_cell(BoundingBox{70, -3, 2, 2}, 64.0, 8) == std::pair<std::size_t, std::size_t>{0, 7});
    }
}
