#include <doctest.h>

#include <sstream>

#include "focustrack/errors.hpp"
#include "focustrack/synthdata.hpp"
#include "focustrack/tracker.hpp"

using namespace focustrack;

namespace {

ModelConfig toy64() {
    ModelConfig m = ModelConfig::toy();
    m.dtype = DType::f64;
    return m;
}

// Pins the presence output to (present, absent) = (p, 1 - p) and the peak score near zero or one.
void script(GradientTape& w, double presence, bool low_score) {
    w.param("sra.mlp.fc2.w").fill(0.0);
    const double z = std::log(presence / (1.0 - presence));
    w.param("sra.mlp.fc2.b") = Tensor(Shape{2}, {z / 2.0, -z / 2.0});
    w.param("head.score.out.w").fill(0.0);
    w.param("head.score.out.b").fill(low_score ? -20.0 : 20.0);
}

Sequence small_sequence(std::uint64_t seed, std::size_t frames) {
    SynthSpec s;
    s.frame_side = 128;
    s.frames = frames;
    s.size_min = 8;
    s.size_max = 12;
    s.seed = seed;
    return generate(s);
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n' ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("init is deterministic and needs a target") {
    const ModelConfig m = toy64();
    const GradientTape w = init_model(m);
    const Sequence q = small_sequence(1, 3);
    Tracker a(m, w, {}), b(m, w, {});
    a.init(q.frames[0], q.annotation.boxes[0]);
    b.init(q.frames[0], q.annotation.boxes[0]);
    CHECK(a.template_tokens().shape() == Shape{m.encoder.template_tokens(), m.encoder.embed_dim});
    CHECK(max_abs_diff(a.template_tokens(), b.template_tokens()) == 0.0);
    CHECK(a.sra().f == 6.0);
    CHECK(a.last_box().cx == q.annotation.boxes[0]->cx);

    Tracker c(m, w, {});
    CHECK_THROWS_AS(c.init(q.frames[0], std::nullopt), PreconditionError);
    CHECK_THROWS_AS(c.step(q.frames[1]), PreconditionError);
}

TEST_CASE("a target partly outside the frame is padded") {
    const ModelConfig m = toy64();
    const GradientTape w = init_model(m);
    const Sequence q = small_sequence(2, 2);
    Tracker t(m, w, {});
    CHECK_NOTHROW(t.init(q.frames[0], BoundingBox{2, 3, 12, 10}));
    FrameOutput out;
    CHECK_NOTHROW(out = t.step(q.frames[1]));
    CHECK(out.box.valid());
}

TEST_CASE("scripted low confidence expands the region") {
    const ModelConfig m = toy64();
    GradientTape w = init_model(m);
    script(w, 0.1, true);
    const Sequence q = small_sequence(3, 6);

    TrackerConfig cfg;
    const TrackResult r = track_sequence(q, m, w, cfg);
    std::vector<double> f;
    for (const auto& o : r.frames) {
        f.push_back(o.factor);
        CHECK(o.window_used == (o.factor == 6.0));
        CHECK_FALSE(o.exist_pred);
        CHECK(o.logits == doctest::Approx(0.1));
    }
    CHECK(f == std::vector<double>{6, 7, 8, 8, 8});

    cfg.use_sra = false;
    for (const auto& o : track_sequence(q, m, w, cfg).frames) {
        CHECK(o.factor == 6.0);
        CHECK(o.window_used);
    }

    // Confident presence keeps the base factor.
    script(w, 0.95, true);
    cfg.use_sra = true;
    for (const auto& o : track_sequence(q, m, w, cfg).frames) CHECK(o.factor == 6.0);
    script(w, 0.1, false);
    for (const auto& o : track_sequence(q, m, w, cfg).frames) CHECK(o.factor == 6.0);
}

TEST_CASE("window and mask toggles") {
    const ModelConfig m = toy64();
    GradientTape w = init_model(m);
    const Sequence q = small_sequence(4, 4);
    TrackerConfig cfg;
    cfg.use_window = false;
    cfg.keep_mask = true;
    const TrackResult r = track_sequence(q, m, w, cfg);
    for (const auto& o : r.frames) {
        CHECK_FALSE(o.window_used);
        REQUIRE(o.mask.has_value());
        CHECK(o.mask->shape() == Shape{64, 64});
        CHECK(o.logits >= 0.0);
        CHECK(o.logits <= 1.0);
        CHECK(o.p_max >= 0.0);
        CHECK(o.p_max <= 1.0);
    }
    cfg.use_atm = false;
    for (const auto& o : track_sequence(q, m, w, cfg).frames) CHECK_FALSE(o.mask.has_value());
}

TEST_CASE("repeat runs match and the trace has one row per tracked frame") {
    const ModelConfig m = toy64();
    const GradientTape w = init_model(m);
    const Sequence q = small_sequence(5, 7);
    const TrackResult a = track_sequence(q, m, w, {});
    const TrackResult b = track_sequence(q, m, w, {});
    REQUIRE(a.frames.size() == q.frames.size() - 1);
    const nlohmann::json cfg = tracker_config_to_json({});
    const std::string ta = trace_csv(a, cfg, false);
    CHECK(ta == trace_csv(b, cfg, false));
    CHECK(result_json(a, cfg).dump() == result_json(b, cfg).dump());
    CHECK(count_lines(ta) == 2 + q.frames.size() - 1);
    CHECK(ta.rfind("# config: ", 0) == 0);

    const nlohmann::json res = result_json(a, cfg);
    CHECK(res.at("res").size() == q.frames.size());
    CHECK(res.at("exist_pred").size() == q.frames.size());
    CHECK(res.at("res")[0][0].get<double>() == doctest::Approx(q.annotation.boxes[0]->x1()));

    TrackerConfig bad;
    bad.template_factor = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    TrackerConfig off;
    off.use_sra = false;
    off.sra.f_max = 9.0;
    const TrackerConfig back = tracker_config_from_json(tracker_config_to_json(off));
    CHECK_FALSE(back.use_sra);
    CHECK(back.sra.f_max == 9.0);
}
