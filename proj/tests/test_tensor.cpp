#include <doctest.h>

#include <cmath>

#include "menet/gradcheck.hpp"
#include "menet/ops.hpp"
#include "oracles.hpp"

using namespace menet;

namespace {
constexpr double kTol = 1e-4;
constexpr double kOracleTol = 1e-12;
}  // namespace

TEST_CASE("tensor basics") {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.dim(1) == 3);
    CHECK(t.at(4) == 5.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), DimensionError);

    Tensor alias = t;
    alias.at(0) = 9.0;
    CHECK(t.at(0) == 9.0);
    Tensor deep = t.clone();
    deep.at(0) = 1.0;
    CHECK(t.at(0) == 9.0);
}

TEST_CASE("elementwise forward values") {
    Tape tape;
    Tensor a = Tensor::from({3}, {1, -2, 3});
    Tensor b = Tensor::from({3}, {4, 5, -6});
    CHECK(add(tape, a, b).values() == std::vector<double>{5, 3, -3});
    CHECK(sub(tape, a, b).values() == std::vector<double>{-3, -7, 9});
    CHECK(mul(tape, a, b).values() == std::vector<double>{4, -10, -18});
    CHECK(scale(tape, a, -2.0).values() == std::vector<double>{-2, 4, -6});
    CHECK(relu(tape, a).values() == std::vector<double>{1, 0, 3});
    CHECK(sum(tape, a).scalar() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(add(tape, a, Tensor::from({2}, {1, 2})), DimensionError);
}

TEST_CASE("gradient accumulation and zero_grad") {
    Tensor a = Tensor::from({2}, {1, 2}, true);
    {
        Tape tape;
        Tensor l = sum(tape, scale(tape, a, 3.0));
        tape.backward(l);
    }
    CHECK((*a.grad())[0] == doctest::Approx(3.0));
    {
        Tape tape;
        Tensor l = sum(tape, a);
        tape.backward(l);
    }
    CHECK((*a.grad())[0] == doctest::Approx(4.0));  // accumulates
    a.zero_grad();
    CHECK((*a.grad())[0] == 0.0);
}

TEST_CASE("tape is single use and loss must be scalar") {
    Tensor a = Tensor::from({2}, {1, 2}, true);
    Tape tape;
    Tensor l = sum(tape, a);
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), std::logic_error);

    Tape t2;
    Tensor v = scale(t2, a, 2.0);
    CHECK_THROWS_AS(t2.backward(v), DimensionError);
}

TEST_CASE("backward into an external sink leaves .grad untouched") {
    Tensor a = Tensor::from({2}, {1, 2}, true);
    Tape tape;
    Tensor l = sum(tape, a);
    GradMap sink;
    tape.backward(l, &sink);
    CHECK(a.grad() == nullptr);
    CHECK(sink.at(a.node())[1] == doctest::Approx(1.0));
}

TEST_CASE("finite checks toggle") {
    Tensor a = Tensor::from({1}, {1e308});
    Tape tape;
    CHECK_THROWS_AS(scale(tape, a, 10.0), std::overflow_error);
    set_finite_checks(false);
    CHECK_NOTHROW(scale(tape, a, 10.0));
    set_finite_checks(true);
    CHECK_THROWS_AS(scale(tape, a, 10.0), std::overflow_error);
}

TEST_CASE("elementwise gradients") {
    Rng rng(17);
    auto two = [&] {
        return std::vector<Tensor>{random_uniform({3, 4}, rng, -1, 1, true),
                                   random_uniform({3, 4}, rng, -1, 1, true)};
    };
    CHECK(grad_check([](Tape& t, std::vector<Tensor>& in) { return sum(t, add(t, in[0], in[1])); },
                     two()).passed(kTol));
    CHECK(grad_check([](Tape& t, std::vector<Tensor>& in) { return sum(t, sub(t, in[0], in[1])); },
                     two()).passed(kTol));
    CHECK(grad_check([](Tape& t, std::vector<Tensor>& in) { return sum(t, mul(t, in[0], in[1])); },
                     two()).passed(kTol));
    CHECK(grad_check([](Tape& t, std::vector<Tensor>& in) {
              return sum(t, mul(t, scale(t, in[0], 0.7), in[0]));
          }, {random_uniform({5}, rng, -1, 1, true)}).passed(kTol));
    CHECK(grad_check_resampled(
              [](Tape& t, std::vector<Tensor>& in) { return sum(t, relu(t, in[0])); },
              [](Rng& r) { return std::vector<Tensor>{random_uniform({4, 4}, r, -1, 1, true)}; },
              rng, kTol).passed(kTol));
}

TEST_CASE("concat, reshape, stack_time") {
    Tape tape;
    Tensor a = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
    Tensor c = concat(tape, {a, b}, 0);
    CHECK(c.shape() == Shape{3, 2, 2});
    CHECK(c.at(0) == 1.0);
    CHECK(c.at(4) == 5.0);

    Tensor r = reshape(tape, c, {12});
    CHECK(r.shape() == Shape{12});
    CHECK_THROWS_AS(reshape(tape, c, {5}), DimensionError);

    Tensor s = stack_time(tape, {a, a});
    CHECK(s.shape() == Shape{1, 2, 2, 2});

    Rng rng(3);
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor cc = concat(t, {in[0], in[1]}, 0);
                  return sum(t, mul(t, cc, cc));
              },
              {random_uniform({2, 2, 2}, rng, -1, 1, true),
               random_uniform({3, 2, 2}, rng, -1, 1, true)}).passed(kTol));
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor st = stack_time(t, {in[0], in[1]});
                  return sum(t, mul(t, st, st));
              },
              {random_uniform({2, 3, 3}, rng, -1, 1, true),
               random_uniform({2, 3, 3}, rng, -1, 1, true)}).passed(kTol));
}

TEST_CASE("fully_connected matches a naive loop and grad-checks") {
    Rng rng(5);
    Tensor x = random_uniform({4}, rng, -1, 1, true);
    Tensor w = random_uniform({3, 4}, rng, -1, 1, true);
    Tensor b = random_uniform({3}, rng, -1, 1, true);
    Tape tape;
    Tensor y = fully_connected(tape, x, w, b);
    for (int i = 0; i < 3; ++i) {
        double acc = b.at(static_cast<std::size_t>(i));
        for (int j = 0; j < 4; ++j)
            acc += w.at(static_cast<std::size_t>(i) * 4 + j) * x.at(static_cast<std::size_t>(j));
        CHECK(y.at(static_cast<std::size_t>(i)) == doctest::Approx(acc).epsilon(1e-14));
    }
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor o = fully_connected(t, in[0], in[1], in[2]);
                  return sum(t, mul(t, o, o));
              },
              {x, w, b}).passed(kTol));
}

TEST_CASE("matmul_nt matches a naive loop and grad-checks") {
    Rng rng(6);
    Tensor x = random_uniform({3, 5}, rng, -1, 1, true);
    Tensor y = random_uniform({4, 5}, rng, -1, 1, true);
    Tape tape;
    Tensor z = matmul_nt(tape, x, y);
    CHECK(z.shape() == Shape{3, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 5; ++k)
                acc += x.at(static_cast<std::size_t>(i) * 5 + k) *
                       y.at(static_cast<std::size_t>(j) * 5 + k);
            CHECK(z.at(static_cast<std::size_t>(i) * 4 + j) == doctest::Approx(acc).epsilon(1e-14));
        }
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor o = matmul_nt(t, in[0], in[1]);
                  return sum(t, mul(t, o, o));
              },
              {x, y}).passed(kTol));
}

TEST_CASE("conv2d matches the naive oracle over random geometries") {
    Rng rng(7);
    std::uniform_int_distribution<int> chan(1, 4), size(3, 7), ker(1, 3), strd(1, 2), padd(0, 1);
    for (int trial = 0; trial < 40; ++trial) {
        const int ci = chan(rng), co = chan(rng), h = size(rng), w = size(rng);
        const int kh = std::min(ker(rng), h), kw = std::min(ker(rng), w);
        const std::array<int, 2> stride{strd(rng), strd(rng)}, pad{padd(rng), padd(rng)};
        Tensor x = random_uniform({ci, h, w}, rng);
        Tensor wt = random_uniform({co, ci, kh, kw}, rng);
        Tensor b = random_uniform({co}, rng);
        Tape tape;
        Tensor got = conv2d(tape, x, wt, b, stride, pad);
        Tensor want = oracle::conv2d(x, wt, b, stride, pad);
        REQUIRE(got.shape() == want.shape());
        CHECK(oracle::max_abs_diff(got, want) <= kOracleTol);
    }
}

TEST_CASE("conv2d gradients") {
    Rng rng(8);
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor o = conv2d(t, in[0], in[1], in[2], {2, 2}, {1, 1});
                  return sum(t, mul(t, o, o));
              },
              {random_uniform({3, 5, 6}, rng, -1, 1, true),
               random_uniform({2, 3, 3, 3}, rng, -1, 1, true),
               random_uniform({2}, rng, -1, 1, true)}).passed(kTol));
}

TEST_CASE("conv3d matches the naive oracle and grad-checks") {
    Rng rng(9);
    std::uniform_int_distribution<int> chan(1, 3), size(2, 5), ker(1, 2);
    for (int trial = 0; trial < 15; ++trial) {
        const int ci = chan(rng), co = chan(rng), d = size(rng), h = size(rng), w = size(rng);
        const int kd = std::min(ker(rng), d), kh = std::min(ker(rng), h), kw = std::min(ker(rng), w);
        Tensor x = random_uniform({ci, d, h, w}, rng);
        Tensor wt = random_uniform({co, ci, kd, kh, kw}, rng);
        Tensor b = random_uniform({co}, rng);
        Tape tape;
        Tensor got = conv3d(tape, x, wt, b, {1, 1, 1}, {1, 1, 1});
        Tensor want = oracle::conv3d(x, wt, b, {1, 1, 1}, {1, 1, 1});
        REQUIRE(got.shape() == want.shape());
        CHECK(oracle::max_abs_diff(got, want) <= kOracleTol);
    }
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor o = conv3d(t, in[0], in[1], in[2], {1, 1, 1}, {1, 1, 1});
                  return sum(t, mul(t, o, o));
              },
              {random_uniform({2, 3, 4, 4}, rng, -1, 1, true),
               random_uniform({2, 2, 2, 3, 3}, rng, -1, 1, true),
               random_uniform({2}, rng, -1, 1, true)}).passed(kTol));
}

TEST_CASE("conv_transpose2d matches the naive oracle and grad-checks") {
    Rng rng(10);
    std::uniform_int_distribution<int> chan(1, 3), size(2, 5), ker(2, 4), strd(1, 2), padd(0, 1);
    for (int trial = 0; trial < 25; ++trial) {
        const int ci = chan(rng), co = chan(rng), h = size(rng), w = size(rng);
        const int kh = ker(rng), kw = ker(rng);
        const std::array<int, 2> stride{strd(rng), strd(rng)};
        const std::array<int, 2> pad{std::min(padd(rng), (kh - 1) / 2), std::min(padd(rng), (kw - 1) / 2)};
        Tensor x = random_uniform({ci, h, w}, rng);
        Tensor wt = random_uniform({ci, co, kh, kw}, rng);
        Tensor b = random_uniform({co}, rng);
        Tape tape;
        Tensor got = conv_transpose2d(tape, x, wt, b, stride, pad);
        Tensor want = oracle::conv_transpose2d(x, wt, b, stride, pad);
        REQUIRE(got.shape() == want.shape());
        CHECK(oracle::max_abs_diff(got, want) <= kOracleTol);
    }
    CHECK(grad_check(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor o = conv_transpose2d(t, in[0], in[1], in[2], {2, 2}, {1, 1});
                  return sum(t, mul(t, o, o));
              },
              {random_uniform({2, 3, 3}, rng, -1, 1, true),
               random_uniform({2, 2, 4, 4}, rng, -1, 1, true),
               random_uniform({2}, rng, -1, 1, true)}).passed(kTol));
}

TEST_CASE("shape inference rejects impossible geometry") {
    CHECK_THROWS_AS(conv2d_out_shape({1, 2, 2}, {1, 1, 5, 5}, {1, 1}, {0, 0}), ConfigError);
    CHECK_THROWS_AS(conv2d_out_shape({2, 4, 4}, {1, 3, 3, 3}, {1, 1}, {0, 0}), DimensionError);
}

TEST_CASE("maxpool3d forward, tie handling and gradients") {
    Tape tape;
    Tensor x = Tensor::from({1, 1, 2, 4}, {1, 5, 2, 2, 3, 3, 8, -1});
    Tensor y = maxpool3d(tape, x, {1, 2, 2}, {1, 2, 2});
    CHECK(y.shape() == Shape{1, 1, 1, 2});
    CHECK(y.at(0) == 5.0);
    CHECK(y.at(1) == 8.0);

    // Ties route the gradient to the first (lowest linear index) maximum.
    Tensor t = Tensor::from({1, 1, 1, 2}, {4, 4}, true);
    Tape t2;
    Tensor p = maxpool3d(t2, t, {1, 1, 2}, {1, 1, 2});
    t2.backward(sum(t2, p));
    CHECK((*t.grad())[0] == 1.0);
    CHECK((*t.grad())[1] == 0.0);

    Rng rng(11);
    CHECK(grad_check_resampled(
              [](Tape& tp, std::vector<Tensor>& in) {
                  return sum(tp, maxpool3d(tp, in[0], {2, 2, 2}, {2, 2, 2}));
              },
              [](Rng& r) { return std::vector<Tensor>{random_uniform({2, 2, 4, 4}, r, -1, 1, true)}; },
              rng, kTol).passed(kTol));
}

TEST_CASE("softmax_ce values and gradients") {
    Tape tape;
    Tensor uniform = Tensor::zeros({5});
    CHECK(softmax_ce(tape, uniform, 2).scalar() == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    // Invariant under adding a constant to every logit.
    Rng rng(12);
    Tensor l = random_uniform({4}, rng, -2, 2);
    Tensor shifted = l.clone();
    for (auto& v : shifted.values()) v += 1234.5;
    CHECK(softmax_ce(tape, l, 1).scalar() ==
          doctest::Approx(softmax_ce(tape, shifted, 1).scalar()).epsilon(1e-12));

    CHECK_THROWS_AS(softmax_ce(tape, l, 7), ConfigError);

    CHECK(grad_check([](Tape& t, std::vector<Tensor>& in) { return softmax_ce(t, in[0], 0); },
                     {random_uniform({6}, rng, -2, 2, true)}).passed(kTol));
}

TEST_CASE("mse and normalized l1 values and gradients") {
    Tape tape;
    Tensor p = Tensor::from({4}, {1, 2, 3, 4});
    CHECK(mse_loss(tape, p, p.clone()).scalar() == 0.0);
    Tensor q = Tensor::from({4}, {2, 3, 4, 5});
    CHECK(mse_loss(tape, p, q).scalar() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(normalized_l1(tape, p, q, 2.0).scalar() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(normalized_l1(tape, p, q, 0.0), ConfigError);

    Rng rng(13);
    Tensor target = random_uniform({6}, rng, -1, 1);
    CHECK(grad_check(
              [target](Tape& t, std::vector<Tensor>& in) { return mse_loss(t, in[0], target); },
              {random_uniform({6}, rng, -1, 1, true)}).passed(kTol));
    CHECK(grad_check_resampled(
              [](Tape& t, std::vector<Tensor>& in) {
                  Tensor tgt = Tensor::zeros({6});
                  return normalized_l1(t, in[0], tgt, 3.0);
              },
              [](Rng& r) { return std::vector<Tensor>{random_uniform({6}, r, -1, 1, true)}; },
              rng, kTol).passed(kTol));
}

TEST_CASE("unused branches receive no gradient") {
    Tensor a = Tensor::from({2}, {1, 2}, true);
    Tensor b = Tensor::from({2}, {3, 4}, true);
    Tape tape;
    Tensor used = sum(tape, a);
    scale(tape, b, 2.0);  // recorded but not part of the loss
    tape.backward(used);
    CHECK(a.grad() != nullptr);
    CHECK(b.grad() == nullptr);
}
