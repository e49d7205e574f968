#include <doctest.h>

#include "menet/ccc.hpp"
#include "oracles.hpp"

using namespace menet;

namespace {

// Identity post-mix so ccc_forward exposes the raw aggregation.
CccParams identity_mix(CccParams p) {
    for (auto& v : p.post_mix_w.values()) v = 0.0;
    for (auto& v : p.post_mix_b.values()) v = 0.0;
    const int c = p.c;
    for (int i = 0; i < c; ++i)
        p.post_mix_w.at(static_cast<std::size_t>(i) * c + i) = 1.0;
    return p;
}

}  // namespace

TEST_CASE("k-NN graph on hand-built channels") {
    // f0 = f1 = (1,0..), f2 = (0,1,0,0): cos(f0,f1)=1, cos(f0,f2)=0.
    Tensor x = Tensor::from({3, 2, 2}, {1, 0, 0, 0,
                                        1, 0, 0, 0,
                                        0, 1, 0, 0});
    ChannelGraph g = build_knn_graph(x, 1);
    CHECK(g.neighbors[0] == std::vector<int>{1});
    CHECK(g.neighbors[1] == std::vector<int>{0});
    CHECK(g.neighbors[2] == std::vector<int>{0});  // tie between 0 and 1 → lower index
}

TEST_CASE("identical channels tie toward lower indices") {
    Tensor x = Tensor::from({3, 1, 2}, {2, 1, 2, 1, 2, 1});
    ChannelGraph g = build_knn_graph(x, 2);
    CHECK(g.neighbors[0] == std::vector<int>{1, 2});
    CHECK(g.neighbors[1] == std::vector<int>{0, 2});
    CHECK(g.neighbors[2] == std::vector<int>{0, 1});
}

TEST_CASE("zero-norm channels have similarity zero") {
    Tensor x = Tensor::from({3, 1, 2}, {0, 0, 1, 0, -1, 0});
    ChannelGraph g = build_knn_graph(x, 1);
    CHECK(g.neighbors[1] == std::vector<int>{0});  // sim(1,0)=0 beats sim(1,2)=−1
    CHECK(g.neighbors[0] == std::vector<int>{1});  // both 0; tie → channel 1
}

TEST_CASE("k = C−1 gives the complete graph") {
    Rng rng(31);
    Tensor x = random_uniform({5, 2, 3}, rng);
    ChannelGraph g = build_knn_graph(x, 4);
    for (int i = 0; i < 5; ++i) {
        CHECK(g.neighbors[static_cast<std::size_t>(i)].size() == 4);
        for (int j : g.neighbors[static_cast<std::size_t>(i)]) CHECK(j != i);
    }
    CHECK_THROWS_AS(build_knn_graph(x, 5), ConfigError);
    CHECK_THROWS_AS(build_knn_graph(x, 0), ConfigError);
}

TEST_CASE("cosine similarity ignores channel scale") {
    Rng rng(32);
    Tensor x = random_uniform({4, 3, 3}, rng);
    ChannelGraph g1 = build_knn_graph(x, 2);
    Tensor xs = x.clone();
    for (int j = 0; j < 9; ++j) xs.at(static_cast<std::size_t>(2) * 9 + j) *= 7.0;
    ChannelGraph g2 = build_knn_graph(xs, 2);
    for (int i = 0; i < 4; ++i)
        CHECK(g1.neighbors[static_cast<std::size_t>(i)] == g2.neighbors[static_cast<std::size_t>(i)]);
}

TEST_CASE("edge feature of a channel with itself reduces to ReLU(V1 f)") {
    Rng rng(33);
    ParamStore store;
    CccParams p = CccParams::init(3, 2, 2, rng, store, "ccc");
    Tensor f = random_uniform({4}, rng);
    Tape tape;
    Tensor e = edge_feature(tape, f, f, p);
    for (int s = 0; s < 4; ++s) {
        double acc = 0;
        for (int j = 0; j < 4; ++j)
            acc += p.v1.at(static_cast<std::size_t>(s) * 4 + j) * f.at(static_cast<std::size_t>(j));
        CHECK(e.at(static_cast<std::size_t>(s)) ==
              doctest::Approx(std::max(acc, 0.0)).epsilon(1e-12));
    }
}

TEST_CASE("with V2 = 0 the output is independent of the graph") {
    Rng rng(34);
    ParamStore store;
    CccParams p = CccParams::init(4, 2, 2, rng, store, "ccc");
    for (auto& v : p.v2.values()) v = 0.0;
    Tensor x = random_uniform({4, 2, 2}, rng);
    Tape tape;
    Tensor y1 = ccc_forward(tape, x, p, 1);
    Tensor y3 = ccc_forward(tape, x, p, 3);
    CHECK(oracle::max_abs_diff(y1, y3) <= 1e-14);
}

TEST_CASE("aggregation matches the brute-force oracle over random instances") {
    Rng rng(35);
    std::uniform_int_distribution<int> chan(2, 6), size(1, 6);
    for (int trial = 0; trial < 120; ++trial) {
        const int c = chan(rng), h = size(rng), w = size(rng);
        std::uniform_int_distribution<int> kk(1, c - 1);
        const int k = kk(rng);
        ParamStore store;
        CccParams p = identity_mix(CccParams::init(c, h, w, rng, store,
                                                   "ccc" + std::to_string(trial)));
        Tensor x = random_uniform({c, h, w}, rng);
        Tape tape;
        Tensor got = ccc_forward(tape, x, p, k);
        Tensor want = oracle::ccc_aggregate(x, p.v1, p.v2, k);
        REQUIRE(got.size() == want.size());
        CHECK(oracle::max_abs_diff(got, want) <= 1e-12);
    }
}

TEST_CASE("graph selection carries no gradient but the max routes it") {
    Rng rng(36);
    ParamStore store;
    CccParams p = CccParams::init(3, 2, 2, rng, store, "ccc");
    auto rep = grad_check_resampled(
        [&p](Tape& t, std::vector<Tensor>& in) {
            Tensor y = ccc_forward(t, in[0], p, 2);
            return sum(t, mul(t, y, y));
        },
        [](Rng& r) { return std::vector<Tensor>{random_uniform({3, 2, 2}, r, -1, 1, true)}; },
        rng, 1e-4);
    CHECK(rep.passed(1e-4));
}

TEST_CASE("parameter gradients through the full module") {
    Rng rng(37);
    ParamStore store;
    CccParams p = CccParams::init(3, 2, 2, rng, store, "ccc");
    Tensor x = random_uniform({3, 2, 2}, rng);
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : store.items()) inputs.push_back(t);
    auto rep = grad_check(
        [&p, &x](Tape& t, std::vector<Tensor>& in) {
            Tensor y = ccc_forward(t, x, p, 2);
            return sum(t, mul(t, y, y));
        },
        inputs);
    CHECK(rep.passed(1e-4));
}
