#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "rtlppa/errors.hpp"
#include "rtlppa/moe.hpp"
#include "rtlppa/rng.hpp"

using namespace rtlppa;

namespace {

PooledEmbedding emb(Vector v) {
    PooledEmbedding p;
    p.token_count = 1;
    p.vector = std::move(v);
    return p;
}

// Overwrites an expert so it outputs `value` for every input.
void make_constant_expert(Expert& expert, double value) {
    for (DenseLayer& layer : expert.layers) {
        layer.weight.data().assign(layer.weight.data().size(), 0.0);
        layer.bias.assign(layer.bias.size(), 0.0);
    }
    expert.layers.back().bias[0] = value;
}

std::uint64_t total_evals(const MoEHead& head) {
    std::uint64_t n = 0;
    for (const Expert& e : head.experts) n += e.eval_count.load();
    return n;
}

}  // namespace

TEST_CASE("gate computes a stable softmax over expert logits") {
    Rng rng(3);
    MoEHead head = make_head(Metric::area, 1, 2, 4, 1, 0.0, false, rng);
    head.gate.weight.at(0, 0) = std::log(2.0);
    head.gate.weight.at(1, 0) = 0.0;

    const Vector alpha = gate(head, emb({1.0}));
    CHECK(alpha[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(alpha[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(alpha[0] + alpha[1] == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("huge logits stay finite via max subtraction") {
        head.gate.weight.at(0, 0) = 1000.0;
        head.gate.weight.at(1, 0) = 999.0;
        const Vector big = gate(head, emb({1.0}));
        CHECK(std::isfinite(big[0]));
        CHECK(big[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    }

    SUBCASE("constant logit shift leaves the distribution unchanged") {
        Rng r2(3);
        MoEHead biased = make_head(Metric::area, 1, 2, 4, 1, 0.0, true, r2);
        biased.gate.weight.at(0, 0) = std::log(2.0);
        biased.gate.weight.at(1, 0) = 0.0;
        biased.gate.bias = {57.0, 57.0};
        const Vector shifted = gate(biased, emb({1.0}));
        CHECK(std::abs(shifted[0] - alpha[0]) < 1e-12);
        CHECK(std::abs(shifted[1] - alpha[1]) < 1e-12);
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(gate(head, emb({1.0, 2.0})), ShapeError);
        CHECK_THROWS_AS(gate(head, emb({std::nan("")})), NumericError);
    }
}

TEST_CASE("topk_renormalize") {
    SUBCASE("renormalizes the selected mass to one") {
        const GatingWeights gw = topk_renormalize({0.5, 0.3, 0.2}, 2);
        CHECK(gw.selected == std::vector<std::size_t>{0, 1});
        CHECK(gw.alpha_tilde[0] == doctest::Approx(0.625).epsilon(1e-12));
        CHECK(gw.alpha_tilde[1] == doctest::Approx(0.375).epsilon(1e-12));
        CHECK(gw.alpha_tilde[0] + gw.alpha_tilde[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(gw.alpha == Vector{0.5, 0.3, 0.2});
    }

    SUBCASE("ties break toward the lowest index") {
        const GatingWeights gw = topk_renormalize({0.4, 0.4, 0.2}, 1);
        CHECK(gw.selected == std::vector<std::size_t>{0});
        CHECK(gw.alpha_tilde == Vector{1.0});
    }

    SUBCASE("selected indices come back ascending even when ranks differ") {
        const GatingWeights gw = topk_renormalize({0.1, 0.6, 0.3}, 2);
        CHECK(gw.selected == std::vector<std::size_t>{1, 2});
    }

    SUBCASE("k equal to n keeps alpha unchanged") {
        const Vector alpha = {0.25, 0.35, 0.4};
        const GatingWeights gw = topk_renormalize(alpha, 3);
        CHECK(gw.selected == std::vector<std::size_t>{0, 1, 2});
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(gw.alpha_tilde[i] == doctest::Approx(alpha[i]).epsilon(1e-12));
    }

    SUBCASE("k out of range") {
        CHECK_THROWS_AS(topk_renormalize({0.5, 0.5}, 0), ConfigError);
        CHECK_THROWS_AS(topk_renormalize({0.5, 0.5}, 3), ConfigError);
    }
}

TEST_CASE("mixture output is the renormalized convex combination") {
    Rng rng(11);
    MoEHead head = make_head(Metric::delay, 1, 2, 4, 2, 0.0, false, rng);
    make_constant_expert(head.experts[0], 1.0);
    make_constant_expert(head.experts[1], 3.0);
    head.gate.weight.at(0, 0) = 0.0;
    head.gate.weight.at(1, 0) = std::log(3.0);  // alpha = [0.25, 0.75]

    const MoEOutput out = moe_forward(head, emb({1.0}), false);
    CHECK(out.yhat == doctest::Approx(0.25 * 1.0 + 0.75 * 3.0).epsilon(1e-12));
    CHECK(out.selected_outputs == std::vector<double>{1.0, 3.0});
}

TEST_CASE("top-k equals the dense mixture when k is N") {
    Rng rng(29);
    MoEHead head = make_head(Metric::area, 8, 6, 16, 6, 0.0, false, rng);
    Rng ing(5);
    Vector x(8);
    for (double& v : x) v = ing.uniform(-1.0, 1.0);

    const Vector alpha = gate(head, emb(x));
    double dense = 0.0;
    for (std::size_t e = 0; e < head.num_experts(); ++e)
        dense += alpha[e] * expert_forward(head.experts[e], x, false);

    const MoEOutput out = moe_forward(head, emb(x), false);
    CHECK(std::abs(out.yhat - dense) < 1e-12);
}

TEST_CASE("unselected experts are never evaluated") {
    Rng rng(17);
    MoEHead head = make_head(Metric::total_power, 4, 6, 8, 3, 0.0, false, rng);
    Rng ing(8);
    Vector x(4);
    for (double& v : x) v = ing.uniform(-1.0, 1.0);

    const MoEOutput out = moe_forward(head, emb(x), false);
    REQUIRE(out.gating.selected.size() == 3);
    CHECK(total_evals(head) == 3);
    for (std::size_t e = 0; e < head.num_experts(); ++e) {
        const bool selected = std::find(out.gating.selected.begin(), out.gating.selected.end(),
                                        e) != out.gating.selected.end();
        CHECK(head.experts[e].eval_count.load() == (selected ? 1u : 0u));
    }
}

TEST_CASE("increasing k refines the selection monotonically") {
    Rng rng(41);
    MoEHead head = make_head(Metric::area, 6, 6, 8, 1, 0.0, false, rng);
    Rng ing(2);
    Vector x(6);
    for (double& v : x) v = ing.uniform(-1.0, 1.0);
    const Vector alpha = gate(head, emb(x));

    std::vector<std::size_t> prev;
    for (std::size_t k = 1; k <= 6; ++k) {
        const GatingWeights gw = topk_renormalize(alpha, k);
        for (std::size_t idx : prev)
            CHECK(std::find(gw.selected.begin(), gw.selected.end(), idx) != gw.selected.end());
        prev = gw.selected;
    }
}

TEST_CASE("expert dropout") {
    Rng rng(53);
    MoEHead head = make_head(Metric::area, 4, 1, 32, 1, 0.5, false, rng);
    const Expert& expert = head.experts[0];
    const Vector x = {0.3, -0.2, 0.9, 0.1};

    SUBCASE("train mode needs an rng") {
        CHECK_THROWS_AS(expert_forward(expert, x, true), ConfigError);
    }

    SUBCASE("eval mode ignores dropout and stays deterministic") {
        const double a = expert_forward(expert, x, false);
        const double b = expert_forward(expert, x, false);
        CHECK(a == b);
    }

    SUBCASE("inverted masks scale kept units by 1/keep") {
        Rng drop(99);
        ExpertCache cache;
        expert_forward(expert, x, true, &drop, &cache);
        REQUIRE(cache.masks.size() == 3);
        CHECK(cache.masks[2].empty());  // no dropout after the linear output
        bool dropped = false;
        for (std::size_t l = 0; l < 2; ++l) {
            REQUIRE(cache.masks[l].size() == 32);
            for (double m : cache.masks[l]) {
                CHECK((m == 0.0 || m == doctest::Approx(2.0)));
                dropped |= m == 0.0;
            }
        }
        CHECK(dropped);  // p = 0.5 over 64 units
    }

    SUBCASE("rate bounds") {
        Rng r2(1);
        CHECK_THROWS_AS(make_head(Metric::area, 4, 2, 8, 1, 1.0, false, r2), ConfigError);
        CHECK_THROWS_AS(make_head(Metric::area, 4, 2, 8, 1, -0.1, false, r2), ConfigError);
    }
}

TEST_CASE("make_head validates the routing configuration") {
    Rng rng(1);
    CHECK_THROWS_AS(make_head(Metric::area, 4, 0, 8, 1, 0.0, false, rng), ConfigError);
    CHECK_THROWS_AS(make_head(Metric::area, 4, 2, 8, 0, 0.0, false, rng), ConfigError);
    CHECK_THROWS_AS(make_head(Metric::area, 4, 2, 8, 3, 0.0, false, rng), ConfigError);
}

TEST_CASE("moe_backward") {
    Rng rng(61);
    MoEHead head = make_head(Metric::area, 5, 4, 8, 2, 0.0, false, rng);
    Rng ing(13);
    Vector x(5);
    for (double& v : x) v = ing.uniform(-1.0, 1.0);

    MoECache cache;
    moe_forward(head, emb(x), false, nullptr, &cache);
    MoEGrads grads;
    grads.init_like(head);
    Vector input_grad(5, 0.0);

    SUBCASE("backward before forward is rejected") {
        MoECache stale;
        CHECK_THROWS_AS(moe_backward(head, stale, 1.0, grads, input_grad), BackwardBeforeForward);
        Vector wrong(4, 0.0);
        CHECK_THROWS_AS(moe_backward(head, cache, 1.0, grads, wrong), ShapeError);
    }

    SUBCASE("zero upstream gradient leaves every buffer at zero") {
        moe_backward(head, cache, 0.0, grads, input_grad);
        for (double v : grads.gate_dW.data()) CHECK(v == 0.0);
        for (double v : input_grad) CHECK(v == 0.0);
        for (const ExpertGrads& g : grads.experts)
            for (const Matrix& m : g.dW)
                for (double v : m.data()) CHECK(v == 0.0);
    }

    SUBCASE("unselected experts receive zero gradient") {
        moe_backward(head, cache, 1.0, grads, input_grad);
        for (std::size_t e = 0; e < head.num_experts(); ++e) {
            const bool selected =
                std::find(cache.gating.selected.begin(), cache.gating.selected.end(), e) !=
                cache.gating.selected.end();
            double mass = 0.0;
            for (const Matrix& m : grads.experts[e].dW)
                for (double v : m.data()) mass += std::abs(v);
            if (selected)
                CHECK(mass > 0.0);
            else
                CHECK(mass == 0.0);
        }
    }

    SUBCASE("gate and input gradients match central differences") {
        moe_backward(head, cache, 1.0, grads, input_grad);
        const double step = 1e-6;
        auto yhat = [&]() { return moe_forward(head, emb(x), false).yhat; };

        for (std::size_t r = 0; r < head.num_experts(); ++r) {
            double& w = head.gate.weight.at(r, 2);
            const double keep = w;
            w = keep + step;
            const double up = yhat();
            w = keep - step;
            const double dn = yhat();
            w = keep;
            const double fd = (up - dn) / (2 * step);
            CHECK(std::abs(grads.gate_dW.at(r, 2) - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + step;
            const double up = yhat();
            x[i] = keep - step;
            const double dn = yhat();
            x[i] = keep;
            const double fd = (up - dn) / (2 * step);
            CHECK(std::abs(input_grad[i] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("single-expert head routes everything and has a flat gate") {
    Rng rng(67);
    MoEHead head = make_head(Metric::delay, 3, 1, 4, 1, 0.0, false, rng);
    const Vector x = {0.4, -0.1, 0.2};

    MoECache cache;
    const MoEOutput out = moe_forward(head, emb(x), false, nullptr, &cache);
    CHECK(out.gating.alpha == Vector{1.0});
    CHECK(out.gating.alpha_tilde == Vector{1.0});
    CHECK(out.yhat == out.selected_outputs[0]);

    // softmax over one logit is constant, so the gate cannot receive gradient
    MoEGrads grads;
    grads.init_like(head);
    Vector input_grad(3, 0.0);
    moe_backward(head, cache, 1.0, grads, input_grad);
    for (double v : grads.gate_dW.data()) CHECK(std::abs(v) < 1e-15);
}
