#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "focustrack/errors.hpp"
#include "focustrack/png_io.hpp"
#include "focustrack/synthdata.hpp"
#include "test_util.hpp"

using namespace focustrack;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.frame_side = 96;
    s.frames = 12;
    s.size_min = 6;
    s.size_max = 10;
    s.seed = seed;
    return s;
}

SynthSpec clean_spec(std::uint64_t seed) {
    SynthSpec s = small_spec(seed);
    s.clutter_intensity = 0.0;
    s.noise_std = 0.0;
    s.distractors = 0;
    return s;
}

}  // namespace

TEST_CASE("same seed, same sequence") {
    const Sequence a = generate(small_spec(5));
    const Sequence b = generate(small_spec(5));
    REQUIRE(a.frames.size() == 12);
    for (std::size_t i = 0; i < a.frames.size(); ++i) CHECK(max_abs_diff(a.frames[i], b.frames[i]) == 0.0);
    CHECK(annotation_to_json(a.annotation) == annotation_to_json(b.annotation));
    const Sequence c = generate(small_spec(6));
    CHECK(max_abs_diff(a.frames[3], c.frames[3]) > 0.0);
}

TEST_CASE("jump bookkeeping") {
    SynthSpec s = small_spec(2);
    s.motion_std = 0.0;
    s.frame_side = 160;
    s.jumps = {{5, 40.0, 0.0}, {8, -10.0, 12.5}};
    const Sequence q = generate(s);
    for (std::size_t t = 1; t < q.frames.size(); ++t) {
        const double dx = q.annotation.boxes[t]->cx - q.annotation.boxes[t - 1]->cx;
        const double dy = q.annotation.boxes[t]->cy - q.annotation.boxes[t - 1]->cy;
        CHECK(dx == doctest::Approx(t == 5 ? 40.0 : t == 8 ? -10.0 : 0.0));
        CHECK(dy == doctest::Approx(t == 8 ? 12.5 : 0.0));
    }
    // With walk noise the jump still dominates the frame-to-frame motion.
    s.motion_std = 0.5;
    const Sequence n = generate(s);
    CHECK(std::abs(n.annotation.boxes[5]->cx - n.annotation.boxes[4]->cx - 40.0) < 5.0);
}

TEST_CASE("clean frames put the target at the maximum") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Sequence q = generate(clean_spec(seed));
        for (std::size_t t = 0; t < q.frames.size(); ++t) {
            const Tensor& f = q.frames[t];
            const BoundingBox& g = *q.annotation.boxes[t];
            std::size_t best = 0;
            double mass = 0.0, mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (f[i] > f[best]) best = i;
                const double x = static_cast<double>(i % 96), y = static_cast<double>(i / 96);
                mass += f[i];
                mx += f[i] * x;
                my += f[i] * y;
            }
            CHECK(std::abs(static_cast<double>(best % 96) - g.cx) <= 1.0);
            CHECK(std::abs(static_cast<double>(best / 96) - g.cy) <= 1.0);
            CHECK(std::abs(mx / mass - g.cx) <= 0.5);
            CHECK(std::abs(my / mass - g.cy) <= 0.5);
        }
    }
}

TEST_CASE("occlusions and the view bound") {
    SynthSpec s = small_spec(3);
    s.occlusions = {{4, 7}};
    const Sequence q = generate(s);
    for (std::size_t t = 0; t < q.frames.size(); ++t) {
        const bool hidden = t >= 4 && t < 7;
        CHECK(q.annotation.exist[t] == (hidden ? 0 : 1));
        CHECK(q.annotation.boxes[t].has_value() == !hidden);
    }
    CHECK(view_half_extent(BoundingBox{0, 0, 4, 9}, 6.0) == 18.0);
    CHECK(view_half_extent(BoundingBox{0, 0, 4, 9}, 8.0) == 24.0);

    SynthSpec bad = small_spec(0);
    bad.jumps = {{12, 1, 1}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_spec(0);
    bad.size_min = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(synth_spec_from_json(synth_spec_to_json(s)).occlusions.size() == 1);
}

TEST_CASE("save and load") {
    const fs::path dir = testutil::scratch_dir("synth_roundtrip");
    const Sequence q = generate(small_spec(9));

    SUBCASE("8-bit round trip") {
        save_sequence(q, dir / "s", 8, synth_spec_to_json(small_spec(9)));
        const Sequence r = load_sequence(dir / "s");
        CHECK(r.name == "s");
        REQUIRE(r.frames.size() == q.frames.size());
        for (std::size_t i = 0; i < q.frames.size(); ++i) CHECK(max_abs_diff(r.frames[i], q.frames[i]) <= 0.5 / 255.0 + 1e-9);
        for (std::size_t i = 0; i < q.annotation.size(); ++i) {
            CHECK(r.annotation.exist[i] == q.annotation.exist[i]);
            CHECK(r.annotation.boxes[i]->cx == doctest::Approx(q.annotation.boxes[i]->cx).epsilon(1e-12));
            CHECK(r.annotation.boxes[i]->w == doctest::Approx(q.annotation.boxes[i]->w).epsilon(1e-12));
        }
        const Sequence rgb = load_sequence(dir / "s", 3);
        CHECK(rgb.frames[0].shape() == Shape{3, 96, 96});
        CHECK(rgb.frames[0](2, 40, 41) == r.frames[0](40, 41));
    }
    SUBCASE("16-bit frames") {
        save_sequence(q, dir / "d", 16);
        const Sequence r = load_sequence(dir / "d");
        double lo = 1.0, hi = 0.0;
        for (double v : r.frames[0].values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
        CHECK(max_abs_diff(r.frames[0], q.frames[0]) <= 0.5 / 65535.0 + 1e-9);
    }
    SUBCASE("format errors") {
        fs::create_directories(dir / "empty");
        CHECK_THROWS_AS(load_sequence(dir / "empty"), FormatError);
        save_sequence(q, dir / "gap", 8);
        fs::remove(dir / "gap" / "000003.png");
        CHECK_THROWS_WITH_AS(load_sequence(dir / "gap"), doctest::Contains("000003.png"), FormatError);
        save_sequence(q, dir / "noann", 8);
        fs::remove(dir / "noann" / "annotation.json");
        CHECK_THROWS_AS(load_sequence(dir / "noann"), FormatError);
    }
}
