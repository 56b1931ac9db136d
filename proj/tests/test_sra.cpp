#include <doctest.h>

#include "focustrack/errors.hpp"
#include "focustrack/kernels.hpp"
#include "focustrack/sra.hpp"
#include "test_util.hpp"

using namespace focustrack;

namespace {

GradientTape presence_weights(std::uint64_t seed, std::size_t c = 16) {
    EncoderConfig enc;
    enc.embed_dim = c;
    GradientTape t;
    Rng rng(seed);
    init_presence(enc, PresenceConfig{4}, t, rng, DType::f64);
    for (const auto& n : t.names())
        for (double& v : t.param(n).values()) v = rng.uniform(-0.4, 0.4);
    return t;
}

Sequence tiny_sequence(std::string name, std::size_t frames, std::vector<int> exist) {
    Sequence s;
    s.name = std::move(name);
    for (std::size_t i = 0; i < frames; ++i) {
        s.frames.push_back(Tensor::zeros({4, 4}));
        s.annotation.exist.push_back(exist.empty() ? 1 : exist[i]);
        s.annotation.boxes.push_back(s.annotation.exist.back() ? MaybeBox(BoundingBox{2, 2, 1, 1}) : std::nullopt);
    }
    return s;
}

}  // namespace

TEST_CASE("sra update follows the expansion rule") {
    SraState s;
    s.f = 6;
    CHECK(sra_update(s, 0.5, 0.3).f == 7.0);
    s.f = 8;
    CHECK(sra_update(s, 0.1, 0.1).f == 8.0);
    CHECK(sra_update(s, 0.9, 0.3).f == 6.0);
    CHECK(sra_update(s, 0.3, 0.9).f == 6.0);
    // The thresholds are strict.
    CHECK(sra_update(s, 0.8, 0.1).f == 6.0);
    CHECK(sra_update(s, 0.1, 0.5).f == 6.0);
    CHECK_THROWS_AS(sra_update(s, 1.5, 0.1), PreconditionError);
    CHECK_THROWS_AS(sra_update(s, 0.5, -0.1), PreconditionError);

    SraState bad;
    bad.f_max = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sra expands step by step and resets") {
    SraState s;
    std::vector<double> trace{s.f};
    for (int i = 0; i < 3; ++i) {
        s = sra_update(s, 0.2, 0.2);
        trace.push_back(s.f);
    }
    CHECK(trace == std::vector<double>{6, 7, 8, 8});
    s = sra_update(s, 0.95, 0.2);
    CHECK(s.f == 6);
}

TEST_CASE("attention pooling") {
    const GradientTape w = presence_weights(3);
    Rng rng(5);
    const Tensor cls = testutil::random_tensor({1, 16}, rng);

    SUBCASE("a single token gets all the weight") {
        Tensor attn;
        attention_pool(cls, testutil::random_tensor({1, 16}, rng), PresenceConfig{4}, w, &attn);
        for (double v : attn.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("identical tokens give the projected token plus the residual") {
        const Tensor tok = testutil::random_tensor({1, 16}, rng);
        Tensor search({9, 16});
        for (std::size_t i = 0; i < 9; ++i)
            for (std::size_t c = 0; c < 16; ++c) search(i, c) = tok(0, c);
        const Tensor pooled = attention_pool(cls, search, PresenceConfig{4}, w);
        Tensor v = matmul(tok, w.param("sra.pool.v.w"));
        for (std::size_t c = 0; c < 16; ++c) v[c] += w.param("sra.pool.v.b")[c];
        Tensor o = matmul(v, w.param("sra.pool.proj.w"));
        for (std::size_t c = 0; c < 16; ++c)
            CHECK(pooled[c] == doctest::Approx(cls[c] + o[c] + w.param("sra.pool.proj.b")[c]).epsilon(1e-12));
    }
    SUBCASE("attention rows sum to one") {
        Tensor attn;
        attention_pool(cls, testutil::random_tensor({30, 16}, rng, -3, 3), PresenceConfig{4}, w, &attn);
        REQUIRE(attn.shape() == Shape{4, 1, 30});
        for (std::size_t h = 0; h < 4; ++h) {
            double s = 0.0;
            for (std::size_t j = 0; j < 30; ++j) s += attn[h * 30 + j];
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("presence head") {
    GradientTape w = presence_weights(4);
    for (const auto& n : w.names()) w.param(n).fill(0.0);
    const PresenceOutput z = presence_head(Tensor::full({1, 16}, 0.7), w);
    CHECK(z.probs[0] == 0.5);
    CHECK(z.probs[1] == 0.5);

    const GradientTape r = presence_weights(9);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        const PresenceOutput p = presence_head(testutil::random_tensor({1, 16}, rng, -5, 5), r);
        CHECK(std::abs(p.probs[0] + p.probs[1] - 1.0) <= 1e-6);
        CHECK(p.logits() == p.probs[0]);
    }
}

TEST_CASE("pair sampler") {
    std::vector<Sequence> seqs{tiny_sequence("a", 10, {}), tiny_sequence("b", 6, {1, 0, 0, 1, 1, 0}),
                               tiny_sequence("c", 4, {})};
    Rng rng(77);
    SUBCASE("ratio one gives only positives") {
        for (const auto& d : sample_pairs(seqs, 500, 1.0, rng)) CHECK(d.label == 1);
    }
    SUBCASE("ratio 0.7 over 10^4 draws") {
        const auto draws = sample_pairs(seqs, 10000, 0.7, rng);
        std::size_t pos = 0;
        for (const auto& d : draws) {
            pos += d.label;
            if (d.label == 0) CHECK(d.template_seq != d.search_seq);
            if (d.label == 1) {
                CHECK(d.template_seq == d.search_seq);
                CHECK(seqs[d.search_seq].annotation.exist[d.search_frame] == 1);
            }
            CHECK(seqs[d.template_seq].annotation.exist[d.template_frame] == 1);
        }
        CHECK(std::abs(static_cast<double>(pos) / 1e4 - 0.7) <= 0.02);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(sample_pairs(seqs, 10, 0.0, rng), SamplingError);
        CHECK_THROWS_AS(sample_pairs({seqs[0]}, 10, 0.5, rng), SamplingError);
        CHECK_NOTHROW(sample_pairs({seqs[0]}, 10, 1.0, rng));
    }
}
