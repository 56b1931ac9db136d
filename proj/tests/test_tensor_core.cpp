#include <doctest.h>

#include <cmath>
#include <vector>

#include "focustrack/attention.hpp"
#include "focustrack/autograd.hpp"
#include "focustrack/errors.hpp"
#include "focustrack/gradcheck.hpp"
#include "focustrack/kernels.hpp"
#include "focustrack/layers.hpp"
#include "focustrack/model.hpp"
#include "focustrack/synthdata.hpp"
#include "focustrack/training.hpp"
#include "test_util.hpp"

using namespace focustrack;
using testutil::random_tensor;

TEST_CASE("matmul small cases") {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    CHECK(max_abs_diff(matmul(eye, a), a) == 0.0);

    const Tensor r = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r[0] == 11.0);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul matches a triple loop at f32") {
    Rng rng(11);
    const Tensor a = random_tensor({5, 7}, rng, -1, 1, DType::f32);
    const Tensor b = random_tensor({7, 3}, rng, -1, 1, DType::f32);
    const Tensor c = matmul(a, b);
    CHECK(c.dtype() == DType::f32);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
            CHECK(std::abs(c(i, j) - s) <= 1e-6);
        }
    // Transposed variants agree with the plain product.
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), c) <= 1e-6);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), c) <= 1e-6);
}

TEST_CASE("softmax") {
    const Tensor u = softmax(Tensor::matrix({{0, 0, 0}}), 1);
    for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const Tensor big = softmax(Tensor::matrix({{1000, 0}}), 1);
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] >= 0.0);
    CHECK(big[1] < 1e-300);

    const Tensor s = softmax(Tensor::matrix({{1, 2, 3}}), 1);
    long double z = 0;
    for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
    for (int i = 1; i <= 3; ++i) {
        const long double want = std::exp(static_cast<long double>(i)) / z;
        CHECK(std::abs(static_cast<long double>(s[i - 1]) - want) <= 1e-7L);
    }

    Rng rng(3);
    const Tensor x = random_tensor({6, 9}, rng, -30, 30);
    for (std::size_t axis : {0u, 1u}) {
        const Tensor p = softmax(x, axis);
        const std::size_t outer = axis == 1 ? 6 : 9, inner = axis == 1 ? 9 : 6;
        for (std::size_t o = 0; o < outer; ++o) {
            double sum = 0.0;
            for (std::size_t i = 0; i < inner; ++i) sum += axis == 1 ? p(o, i) : p(i, o);
            CHECK(std::abs(sum - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("layer norm") {
    const Tensor ones = Tensor::full({4}, 1.0), zeros = Tensor::zeros({4});
    const Tensor flat = layer_norm(Tensor::matrix({{3, 3, 3, 3}}), ones, zeros, 1e-6);
    for (double v : flat.values()) CHECK(v == 0.0);

    const Tensor beta = Tensor(Shape{4}, {0.5, -1, 2, 7});
    const Tensor b = layer_norm(Tensor::matrix({{1, 5, -2, 0.3}}), zeros, beta, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b[i] == beta[i]);

    Rng rng(5);
    const Tensor x = random_tensor({1, 64}, rng, -4, 9);
    const Tensor y = layer_norm(x, Tensor::full({64}, 1.0), Tensor::zeros({64}), 1e-6);
    double mean = 0.0, var = 0.0;
    for (double v : y.values()) mean += v / 64.0;
    for (double v : y.values()) var += (v - mean) * (v - mean) / 64.0;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-4);
}

TEST_CASE("activations") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(40.0) == doctest::Approx(1.0));
    CHECK(sigmoid(-40.0) >= 0.0);
    CHECK(sigmoid(-40.0) < 1e-17);
    CHECK(std::isfinite(sigmoid(-800.0)));
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(10.0) == doctest::Approx(10.0));
}

TEST_CASE("non-finite values are errors") {
    Tensor t = Tensor::full({2}, 1.0);
    t[1] = std::nan("");
    CHECK_THROWS_AS(t.finalize("test"), NumericError);
    t[1] = INFINITY;
    CHECK_THROWS_AS(t.finalize("test"), NumericError);
}

TEST_CASE("f32 tensors round through float") {
    Tensor t(Shape{1}, {0.1}, DType::f32);
    t.finalize("test");
    CHECK(t[0] == static_cast<double>(0.1f));
    CHECK(add(t, Tensor(Shape{1}, {0.2})).dtype() == DType::f32);
}

TEST_CASE("multi-head attention") {
    Rng rng(9);
    SUBCASE("single key gives all-ones attention") {
        const Tensor q = random_tensor({5, 8}, rng), kv = random_tensor({1, 8}, rng);
        const MhaOutput o = mha(q, kv, kv, 2, MhaParams::identity(8));
        for (double v : o.attn.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("singleton self attention returns v") {
        const Tensor x = random_tensor({1, 6}, rng);
        const MhaOutput o = mha(x, x, x, 1, MhaParams::identity(6));
        CHECK(max_abs_diff(o.out, x) <= 1e-12);
    }
    SUBCASE("rows sum to one") {
        MhaParams p = MhaParams::identity(16);
        for (Tensor* w : {&p.wq, &p.wk, &p.wv, &p.wo}) *w = random_tensor({16, 16}, rng);
        const MhaOutput o = mha(random_tensor({7, 16}, rng, -3, 3), random_tensor({11, 16}, rng, -3, 3),
                                random_tensor({11, 16}, rng), 4, p);
        REQUIRE(o.attn.shape() == Shape{4, 7, 11});
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t i = 0; i < 7; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < 11; ++j) s += o.attn[(h * 7 + i) * 11 + j];
                CHECK(std::abs(s - 1.0) <= 1e-6);
            }
    }
}

TEST_CASE("gradient of a quadratic") {
    GradientTape tape;
    Rng rng(2);
    tape.add("theta", random_tensor({3, 4}, rng));
    auto loss = [](ad::Binding& b) {
        const ad::Var t = b("theta");
        return ad::sum_all(ad::mul(t, t));
    };
    {
        GradientTape g = tape;
        g.zero_grad();
        ad::Binding b(tape, true);
        ad::backward(loss(b));
        b.accumulate_grads(g);
        for (std::size_t i = 0; i < 12; ++i) CHECK(g.grad("theta")[i] == doctest::Approx(2 * tape.param("theta")[i]));
    }
    GradCheckOptions opt;
    opt.coords_per_tensor = 12;
    const auto rep = grad_check([&](ad::Binding& b) { return std::vector<ad::Var>{loss(b)}; }, tape, opt);
    CHECK(rep.max_rel_err[0] <= 1e-8);
}

TEST_CASE("gradient of one attention layer") {
    Rng rng(4);
    GradientTape tape;
    tape.add("x", random_tensor({5, 8}, rng));
    tape.add("y", random_tensor({6, 8}, rng));
    for (const char* p : {"q", "k", "v", "o"}) add_linear(tape, std::string("m.") + p, 8, 8, rng, DType::f64);
    for (const auto& n : tape.names())
        if (n.back() == 'w') tape.param(n) = random_tensor({8, 8}, rng, -0.5, 0.5);
    auto loss = [](ad::Binding& b) {
        MhaWeights w{b("m.q.w"), b("m.q.b"), b("m.k.w"), b("m.k.b"), b("m.v.w"), b("m.v.b"), b("m.o.w"), b("m.o.b")};
        const MhaResult r = mha(b("x"), b("y"), b("y"), 2, w);
        return std::vector<ad::Var>{ad::sum_all(ad::mul(r.out, r.out))};
    };
    GradCheckOptions opt;
    opt.coords_per_tensor = 6;
    const auto rep = grad_check(loss, tape, opt);
    CHECK(rep.max_rel_err[0] <= 1e-6);
}

TEST_CASE("gradient of the toy model on one sample") {
    ModelConfig m = ModelConfig::toy();
    m.dtype = DType::f64;
    std::vector<Sequence> seqs;
    for (std::uint64_t k = 0; k < 2; ++k) {
        SynthSpec s;
        s.frame_side = 128;
        s.frames = 3;
        s.seed = 40 + k;
        seqs.push_back(generate(s));
    }
    TrainConfig tc;
    tc.augment = false;
    Rng rng(1);
    const TrainSample sample = materialize(seqs, PairDraw{0, 0, 0, 2, 1}, m, tc, rng);
    GradientTape params = init_model(m);
    GradCheckOptions opt;
    opt.eps = 1e-5;
    opt.coords_per_tensor = 1;
    opt.probe = Probe::largest;
    const auto rep = grad_check(
        [&](ad::Binding& b) { return std::vector<ad::Var>{sample_loss(sample, m, LossConfig{}, b, true).total}; },
        params, opt);
    INFO("worst " << rep.worst_param[0]);
    CHECK(rep.max_rel_err[0] <= 1e-4);
}
