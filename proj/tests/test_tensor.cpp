#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "xmodal/grad_check.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/optim.hpp"
#include "xmodal/rng.hpp"

using namespace xmodal;

TEST_CASE("tensor construction validates shape against value count") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(Tensor({0, 3}, {}), Error);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.numel() == 4);
    CHECK_THROWS_AS(t.item(), Error);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
}

TEST_CASE("backward matches hand-derived gradients on a small graph") {
    // f = sum((a*b + a)^2); df/da = 2(ab+a)(b+1), df/db = 2(ab+a)a
    Tensor a({3}, {1.0, -2.0, 0.5});
    Tensor b({3}, {3.0, 0.25, -1.5});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tensor y = add(mul(a, b), a);
    Tensor f = sum_all(mul(y, y));
    backward(f);
    for (int i = 0; i < 3; ++i) {
        const double av = a.values()[i], bv = b.values()[i];
        const double yv = av * bv + av;
        CHECK(a.grad()[i] == doctest::Approx(2 * yv * (bv + 1)).epsilon(1e-12));
        CHECK(b.grad()[i] == doctest::Approx(2 * yv * av).epsilon(1e-12));
    }
}

TEST_CASE("a second backward sweep doubles every accumulated gradient") {
    Tensor a({2}, {0.7, -1.1});
    a.set_requires_grad(true);
    Tensor mid = mul(a, a);
    mid.set_requires_grad(true);  // non-leaf accumulation point
    Tensor f = sum_all(mul(mid, a));
    backward(f);
    const std::vector<double> ga = a.grad();
    const std::vector<double> gm = mid.grad();
    backward(f);
    for (int i = 0; i < 2; ++i) {
        CHECK(a.grad()[i] == 2.0 * ga[i]);
        CHECK(mid.grad()[i] == 2.0 * gm[i]);
    }
}

TEST_CASE("shared subexpressions accumulate through both consumers") {
    // f = sum(x*x) + 3*sum(x*x) = 4*sum(x^2); df/dx = 8x
    Tensor x({2}, {1.5, -0.5});
    x.set_requires_grad(true);
    Tensor sq = mul(x, x);
    Tensor f = add(sum_all(sq), scalar_mul(sum_all(sq), 3.0));
    backward(f);
    CHECK(x.grad()[0] == doctest::Approx(8 * 1.5).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(8 * -0.5).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    CHECK_THROWS_AS(backward(mul(x, x)), Error);
}

TEST_CASE("grad_check flags a deliberately corrupted backward") {
    // forward computes sum(2x) but the closure reports d/dx = 3
    auto builder = [](const std::vector<Tensor>& in) {
        Tensor x = in[0];
        Tensor bad;
        bad.node = std::make_shared<TensorNode>();
        bad.node->shape = x.shape();
        bad.node->values.resize(x.values().size());
        for (size_t i = 0; i < x.values().size(); ++i)
            bad.node->values[i] = 2.0 * x.values()[i];
        bad.node->requires_grad = true;
        bad.node->parents = {x.node};
        bad.node->backprop = [](const std::vector<double>& g, const GradSinks& gin) {
            if (gin[0])
                for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 3.0 * g[i];
        };
        return sum_all(bad);
    };
    GradCheckResult r = grad_check("corrupted", builder, {Tensor({3}, {0.1, 0.2, 0.3})},
                                   1e-5, 1e-6);
    CHECK_FALSE(r.passed());
    CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("rng streams are deterministic and well-ranged") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const int64_t v = r.uniform_int(17);
        CHECK(v >= 0);
        CHECK(v < 17);
    }
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

TEST_CASE("sample_without_replacement yields k distinct in-range indices") {
    Rng r(99);
    for (int trial = 0; trial < 20; ++trial) {
        auto s = sample_without_replacement(r, 50, 20);
        REQUIRE(s.size() == 20);
        std::vector<bool> seen(50, false);
        for (int64_t i : s) {
            REQUIRE(i >= 0);
            REQUIRE(i < 50);
            CHECK_FALSE(seen[i]);
            seen[i] = true;
        }
    }
}

namespace {

// independent AdamW reference, one scalar parameter
struct RefAdamW {
    double m = 0, v = 0;
    int64_t t = 0;
    double step(double p, double g, const AdamWConfig& c) {
        ++t;
        m = c.beta1 * m + (1 - c.beta1) * g;
        v = c.beta2 * v + (1 - c.beta2) * g * g;
        const double mhat = m / (1 - std::pow(c.beta1, (double)t));
        const double vhat = v / (1 - std::pow(c.beta2, (double)t));
        return p - c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p);
    }
};

}  // namespace

TEST_CASE("AdamW matches an independent single-parameter oracle") {
    AdamWConfig cfg;
    cfg.lr = 0.05;
    AdamW opt(cfg);
    ParamStore params;
    params.create("w", Tensor::scalar(1.7));
    RefAdamW ref;
    double refp = 1.7;
    for (int s = 0; s < 25; ++s) {
        Tensor& w = params.at("w");
        Tensor loss = sum_all(mul(w, w));  // grad 2w
        backward(loss);
        const double g = 2.0 * refp;
        opt.step(params);
        refp = ref.step(refp, g, cfg);
        CHECK(w.values()[0] == doctest::Approx(refp).epsilon(1e-14));
        // grads are consumed
        CHECK(w.grad()[0] == 0.0);
    }
}

TEST_CASE("AdamW names the parameter missing a gradient") {
    AdamW opt(AdamWConfig{});
    ParamStore params;
    params.create("block.weight", Tensor::scalar(1.0));
    CHECK_THROWS_WITH_AS(opt.step(params),
                         "AdamW::step: parameter 'block.weight' has no gradient", Error);
}

TEST_CASE("decayed_lr follows lr0 * decay^epoch") {
    CHECK(decayed_lr(0.01, 0.985, 0) == 0.01);
    CHECK(decayed_lr(0.01, 0.985, 3) == doctest::Approx(0.01 * 0.985 * 0.985 * 0.985));
}

TEST_CASE("checkpoint roundtrip restores exact bits and rejects mismatches") {
    const std::string dir = std::filesystem::temp_directory_path() / "xm_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/a.ckpt";

    ParamStore params;
    Rng rng(5);
    init_linear_weight(params, "enc.w", 4, 3, rng);
    init_zeros(params, "enc.b", {3});
    params.at("enc.b").values_mut() = {0.1, -0.2, 0.3};
    save_checkpoint(params, path);

    ParamStore restored;
    init_linear_weight(restored, "enc.w", 4, 3, rng);  // different values
    init_zeros(restored, "enc.b", {3});
    load_checkpoint(restored, path);
    CHECK(restored.at("enc.w").values() == params.at("enc.w").values());
    CHECK(restored.at("enc.b").values() == params.at("enc.b").values());

    ParamStore wrong_shape;
    init_linear_weight(wrong_shape, "enc.w", 3, 4, rng);
    init_zeros(wrong_shape, "enc.b", {3});
    CHECK_THROWS_AS(load_checkpoint(wrong_shape, path), Error);

    ParamStore wrong_name;
    init_linear_weight(wrong_name, "enc.w2", 4, 3, rng);
    init_zeros(wrong_name, "enc.b", {3});
    CHECK_THROWS_AS(load_checkpoint(wrong_name, path), Error);

    CHECK_THROWS_AS(load_checkpoint(params, dir + "/missing.ckpt"), Error);

    // corrupt the magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("ZZZZ", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(params, path), Error);
}

TEST_CASE("ParamStore rejects duplicates and iterates lexicographically") {
    ParamStore params;
    params.create("b", Tensor::scalar(1.0));
    params.create("a", Tensor::scalar(2.0));
    params.create("a.x", Tensor::scalar(3.0));
    CHECK_THROWS_AS(params.create("a", Tensor::scalar(9.0)), Error);
    std::vector<std::string> names;
    for (const auto& [n, t] : params) names.push_back(n);
    CHECK(names == std::vector<std::string>{"a", "a.x", "b"});
    CHECK_THROWS_AS(params.at("missing"), Error);
}
