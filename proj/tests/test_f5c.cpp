#include <doctest.h>

#include "menet/f5c.hpp"
#include "oracles.hpp"

using namespace menet;

TEST_CASE("f5c output keeps the input shape") {
    Rng rng(5);
    ParamStore store;
    F5cParams p = F5cParams::init(4, 3, 3, rng, store, "f5c");
    Tensor x = random_uniform({4, 3, 3}, rng);
    Tape tape;
    Tensor y = f5c_forward(tape, x, p, 2);
    CHECK(y.shape() == Shape{4, 3, 3});
}

TEST_CASE("residual structure: zeroed branches give the identity") {
    Rng rng(6);
    ParamStore store;
    F5cParams p = F5cParams::init(3, 2, 2, rng, store, "f5c");
    // Zero the FCC post-mix and the CCC post-mix: both residual branches
    // contribute nothing and the block reduces to x.
    for (auto& v : p.fcc.post_mix_w.values()) v = 0.0;
    for (auto& v : p.fcc.post_mix_b.values()) v = 0.0;
    for (auto& v : p.ccc.post_mix_w.values()) v = 0.0;
    for (auto& v : p.ccc.post_mix_b.values()) v = 0.0;
    Tensor x = random_uniform({3, 2, 2}, rng);
    Tape tape;
    Tensor y = f5c_forward(tape, x, p, 1);
    CHECK(oracle::max_abs_diff(y, x) == 0.0);
}

TEST_CASE("disabling fcc removes exactly the fcc residual") {
    Rng rng(7);
    ParamStore store;
    F5cParams p = F5cParams::init(3, 2, 3, rng, store, "f5c");
    Tensor x = random_uniform({3, 2, 3}, rng);

    Tape t1;
    Tensor without = f5c_forward(t1, x, p, 1, /*use_fcc=*/false, /*use_ccc=*/true);
    Tape t2;
    Tensor manual = ccc_forward(t2, x, p.ccc, 1);
    Tensor expect = add(t2, x, manual);
    CHECK(oracle::max_abs_diff(without, expect) < 1e-15);
}

TEST_CASE("disabling ccc removes exactly the ccc residual") {
    Rng rng(8);
    ParamStore store;
    F5cParams p = F5cParams::init(3, 3, 2, rng, store, "f5c");
    Tensor x = random_uniform({3, 3, 2}, rng);

    Tape t1;
    Tensor without = f5c_forward(t1, x, p, 2, /*use_fcc=*/true, /*use_ccc=*/false);
    Tape t2;
    Tensor manual = fcc_block(t2, x, p.fcc);
    Tensor expect = add(t2, x, manual);
    CHECK(oracle::max_abs_diff(without, expect) < 1e-15);
}

TEST_CASE("disabling both passes the input through") {
    Rng rng(9);
    ParamStore store;
    F5cParams p = F5cParams::init(2, 2, 2, rng, store, "f5c");
    Tensor x = random_uniform({2, 2, 2}, rng);
    Tape tape;
    Tensor y = f5c_forward(tape, x, p, 1, false, false);
    CHECK(y.values() == x.values());
}

TEST_CASE("f5c composition matches manual residual chaining") {
    Rng rng(10);
    ParamStore store;
    F5cParams p = F5cParams::init(3, 2, 2, rng, store, "f5c");
    Tensor x = random_uniform({3, 2, 2}, rng);

    Tape t1;
    Tensor y = f5c_forward(t1, x, p, 1);

    Tape t2;
    Tensor y1 = add(t2, x, fcc_block(t2, x, p.fcc));
    Tensor y2 = add(t2, y1, ccc_forward(t2, y1, p.ccc, 1));
    CHECK(oracle::max_abs_diff(y, y2) < 1e-15);
}

TEST_CASE("full f5c block passes a gradient check") {
    Rng rng(11);
    ParamStore store;
    F5cParams p = F5cParams::init(3, 2, 2, rng, store, "f5c");

    auto make_inputs = [&](Rng& r) {
        std::vector<Tensor> inputs;
        inputs.push_back(random_uniform({3, 2, 2}, r, -1.0, 1.0, true));
        for (const auto& [name, t] : store.items()) inputs.push_back(t);
        return inputs;
    };
    auto fn = [&](Tape& tape, std::vector<Tensor>& in) {
        Tensor y = f5c_forward(tape, in[0], p, 1);
        return sum(tape, mul(tape, y, y));
    };
    GradCheckReport rep = grad_check_resampled(fn, make_inputs, rng, 1e-4);
    CHECK_MESSAGE(rep.passed(1e-4), rep.worst, " rel err ", rep.max_rel_error);
}
