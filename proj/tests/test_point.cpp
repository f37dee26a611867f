#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "xmodal/ops.hpp"
#include "xmodal/point_encoder.hpp"
#include "xmodal/rng.hpp"

using namespace xmodal;

namespace {

Tensor rand_xyz(Rng& rng, int64_t p, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(static_cast<size_t>(p) * 3);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor({p, 3}, std::move(v));
}

double dist2(const std::vector<double>& v, int64_t a, int64_t b) {
    double s = 0;
    for (int64_t d = 0; d < 3; ++d) {
        const double diff = v[a * 3 + d] - v[b * 3 + d];
        s += diff * diff;
    }
    return s;
}

// exhaustive greedy max-min oracle: recompute every candidate's distance to the
// whole selected set at each step
std::vector<int64_t> fps_oracle(const Tensor& xyz, int64_t k, int64_t seed) {
    const int64_t p = xyz.shape()[0];
    const auto& v = xyz.values();
    std::vector<int64_t> sel{seed};
    while (static_cast<int64_t>(sel.size()) < k) {
        double best = -1.0;
        int64_t best_i = -1;
        for (int64_t i = 0; i < p; ++i) {
            double dmin = 1e308;
            for (int64_t s : sel) dmin = std::min(dmin, dist2(v, i, s));
            if (dmin > best) {
                best = dmin;
                best_i = i;
            }
        }
        sel.push_back(best_i);
    }
    return sel;
}

std::vector<int64_t> ball_query_oracle(const Tensor& centers, const Tensor& xyz, double radius,
                                       int64_t k_max) {
    const int64_t m = centers.shape()[0], p = xyz.shape()[0];
    std::vector<int64_t> out;
    for (int64_t c = 0; c < m; ++c) {
        std::vector<std::pair<double, int64_t>> all;
        for (int64_t i = 0; i < p; ++i) {
            double s = 0;
            for (int64_t d = 0; d < 3; ++d) {
                const double diff = xyz.values()[i * 3 + d] - centers.values()[c * 3 + d];
                s += diff * diff;
            }
            all.emplace_back(s, i);
        }
        std::vector<int64_t> in_ball;
        for (const auto& [d2, i] : all)
            if (d2 <= radius * radius) in_ball.push_back(i);
        std::sort(in_ball.begin(), in_ball.end());
        if (in_ball.empty()) {
            const int64_t nearest = std::min_element(all.begin(), all.end())->second;
            out.insert(out.end(), static_cast<size_t>(k_max), nearest);
        } else {
            for (int64_t s = 0; s < k_max; ++s)
                out.push_back(s < static_cast<int64_t>(in_ball.size()) ? in_ball[s]
                                                                       : in_ball[0]);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("farthest point sampling on hand-checked instances") {
    Tensor pts({3, 3}, {0, 0, 0, 1, 0, 0, 0.1, 0, 0});
    CHECK(farthest_point_sample(pts, 2, 0) == std::vector<int64_t>{0, 1});
    CHECK(farthest_point_sample(pts, 3, 0) == std::vector<int64_t>{0, 1, 2});
    CHECK(farthest_point_sample(pts, 1, 2) == std::vector<int64_t>{2});
    CHECK_THROWS_AS(farthest_point_sample(pts, 4, 0), Error);
    CHECK_THROWS_AS(farthest_point_sample(pts, 0, 0), Error);
    CHECK_THROWS_AS(farthest_point_sample(pts, 2, 3), Error);
}

TEST_CASE("farthest point sampling breaks distance ties toward the lowest index") {
    // two symmetric candidates equally far from the seed
    Tensor pts({3, 3}, {0, 0, 0, 1, 0, 0, -1, 0, 0});
    CHECK(farthest_point_sample(pts, 2, 0) == std::vector<int64_t>{0, 1});
}

TEST_CASE("farthest point sampling matches an exhaustive greedy oracle") {
    Rng rng(311);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t p = 2 + rng.uniform_int(63);
        Tensor xyz = rand_xyz(rng, p);
        const int64_t k = 1 + rng.uniform_int(p);
        const int64_t seed = rng.uniform_int(p);
        CHECK(farthest_point_sample(xyz, k, seed) == fps_oracle(xyz, k, seed));
    }
}

TEST_CASE("fps selections spread at least as well as random subsets") {
    Rng rng(312);
    auto min_pairwise = [](const Tensor& xyz, const std::vector<int64_t>& sel) {
        double m = 1e308;
        for (size_t a = 0; a < sel.size(); ++a)
            for (size_t b = a + 1; b < sel.size(); ++b)
                m = std::min(m, dist2(xyz.values(), sel[a], sel[b]));
        return m;
    };
    for (int trial = 0; trial < 20; ++trial) {
        Tensor xyz = rand_xyz(rng, 40);
        const auto fps = farthest_point_sample(xyz, 8, 0);
        double rnd_sum = 0;
        for (int r = 0; r < 10; ++r)
            rnd_sum += min_pairwise(xyz, sample_without_replacement(rng, 40, 8));
        CHECK(min_pairwise(xyz, fps) >= rnd_sum / 10 - 1e-12);
    }
}

TEST_CASE("ball query handles tiny, empty, and short neighborhoods") {
    Tensor xyz({3, 3}, {0, 0, 0, 5, 0, 0, 6, 0, 0});
    Tensor center({1, 3}, {5, 0, 0});
    // tiny radius: only the coincident point, repeated
    CHECK(ball_query(center, xyz, 1e-6, 3) == std::vector<int64_t>{1, 1, 1});
    // radius 1.5 catches points 1 and 2, slot 3 repeats the first found
    CHECK(ball_query(center, xyz, 1.5, 3) == std::vector<int64_t>{1, 2, 1});
    // empty neighborhood: nearest point fills all slots
    Tensor far({1, 3}, {100, 0, 0});
    CHECK(ball_query(far, xyz, 0.5, 2) == std::vector<int64_t>{2, 2});
    CHECK_THROWS_AS(ball_query(center, xyz, 0.0, 3), Error);
    CHECK_THROWS_AS(ball_query(center, xyz, 1.0, 0), Error);
}

TEST_CASE("ball query matches a brute-force range-search oracle") {
    Rng rng(313);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t p = 1 + rng.uniform_int(40);
        const int64_t m = 1 + rng.uniform_int(10);
        Tensor xyz = rand_xyz(rng, p);
        Tensor centers = rand_xyz(rng, m);
        const double radius = rng.uniform(0.2, 2.5);
        const int64_t k_max = 1 + rng.uniform_int(8);
        CHECK(ball_query(centers, xyz, radius, k_max) ==
              ball_query_oracle(centers, xyz, radius, k_max));
    }
}

TEST_CASE("interpolation weights are a nonnegative partition of unity") {
    Rng rng(314);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t u = 1 + rng.uniform_int(12);
        const int64_t m = 1 + rng.uniform_int(12);
        std::vector<int64_t> idx;
        std::vector<double> w;
        int64_t k = 0;
        interpolation_weights(rand_xyz(rng, u), rand_xyz(rng, m), idx, w, k);
        CHECK(k == std::min<int64_t>(3, m));
        for (int64_t q = 0; q < u; ++q) {
            double s = 0;
            for (int64_t j = 0; j < k; ++j) {
                CHECK(w[q * k + j] >= 0.0);
                CHECK(idx[q * k + j] >= 0);
                CHECK(idx[q * k + j] < m);
                s += w[q * k + j];
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("interpolation weight special cases") {
    std::vector<int64_t> idx;
    std::vector<double> w;
    int64_t k = 0;

    // query equidistant from three sources -> 1/3 each
    Tensor q({1, 3}, {0, 0, 0});
    Tensor tri({3, 3}, {1, 0, 0, -0.5, std::sqrt(3.0) / 2, 0, -0.5, -std::sqrt(3.0) / 2, 0});
    interpolation_weights(q, tri, idx, w, k);
    REQUIRE(k == 3);
    for (int j = 0; j < 3; ++j) CHECK(w[j] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // coincident source -> weight 1 on it
    Tensor coincide({3, 3}, {0, 0, 0, 1, 0, 0, 2, 0, 0});
    interpolation_weights(q, coincide, idx, w, k);
    CHECK(idx[0] == 0);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 0.0);
    CHECK(w[2] == 0.0);

    // single source -> copied everywhere
    Tensor up({2, 3}, {0, 0, 0, 5, 5, 5});
    Tensor one({1, 3}, {1, 1, 1});
    interpolation_weights(up, one, idx, w, k);
    REQUIRE(k == 1);
    CHECK(idx == std::vector<int64_t>{0, 0});
    CHECK(w == std::vector<double>{1.0, 1.0});
}

TEST_CASE("set abstraction singleton pooling equals a hand-computed row") {
    // one point, one center at the same spot: group is that point repeated,
    // rel coords zero, so the row is relu(W^T [0,0,0,f] + b)
    Tensor xyz({1, 3}, {0.3, -0.2, 0.5});
    Tensor feats({1, 2}, {0.7, -1.1});
    SAConfig cfg;
    cfg.n_out = 1;
    cfg.radii = {0.5};
    cfg.k_max = 3;
    cfg.mlp_widths = {{2}};
    ParamStore params;
    params.create("sa.r0.l0.w", Tensor({5, 2}, {0.1, -0.4, 0.2, 0.3, -0.5, 0.6, 1.0, 0.2,
                                                -0.3, 0.8}));
    params.create("sa.r0.l0.b", Tensor({2}, {0.05, -0.1}));
    Tensor out = set_abstraction_features(xyz, feats, xyz, cfg, params, "sa");
    REQUIRE(out.shape() == Shape{1, 2});
    const double pre0 = 1.0 * 0.7 + -0.3 * -1.1 + 0.05;
    const double pre1 = 0.2 * 0.7 + 0.8 * -1.1 + -0.1;
    CHECK(out.values()[0] == doctest::Approx(std::max(0.0, pre0)).epsilon(1e-14));
    CHECK(out.values()[1] == doctest::Approx(std::max(0.0, pre1)).epsilon(1e-14));
}

TEST_CASE("set abstraction is unchanged by duplicated neighbors") {
    Rng rng(315);
    Tensor xyz = rand_xyz(rng, 10, -0.5, 0.5);
    Tensor feats = rand_xyz(rng, 10);  // any [10,3] features
    Tensor centers = rand_xyz(rng, 3, -0.5, 0.5);
    SAConfig cfg;
    cfg.n_out = 3;
    cfg.radii = {1.0};
    cfg.k_max = 16;
    cfg.mlp_widths = {{4}};
    ParamStore params;
    Rng prng(316);
    init_linear_weight(params, "sa.r0.l0.w", 6, 4, prng);
    init_zeros(params, "sa.r0.l0.b", {4});
    for (auto& [n, t] : params)
        for (auto& v : t.values_mut()) v += prng.uniform(-0.3, 0.3);
    Tensor base = set_abstraction_features(xyz, feats, centers, cfg, params, "sa");

    // append an exact duplicate of point 4
    std::vector<double> xv = xyz.values(), fv = feats.values();
    for (int d = 0; d < 3; ++d) {
        xv.push_back(xv[4 * 3 + d]);
        fv.push_back(fv[4 * 3 + d]);
    }
    Tensor dup = set_abstraction_features(Tensor({11, 3}, xv), Tensor({11, 3}, fv), centers,
                                          cfg, params, "sa");
    CHECK(base.values() == dup.values());
}

TEST_CASE("set abstraction rejects misconfigured levels") {
    SAConfig cfg;
    cfg.n_out = 2;
    cfg.radii = {0.5, 0.4};  // not increasing
    cfg.k_max = 4;
    cfg.mlp_widths = {{4}, {4}};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.radii = {0.4, 0.5};
    cfg.mlp_widths = {{4}};  // misaligned with radii
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.mlp_widths = {{4}, {}};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.mlp_widths = {{4}, {4}};
    cfg.n_out = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("asfp with a zeroed grouped branch reduces to plain feature propagation") {
    Rng rng(317);
    Tensor up_xyz = rand_xyz(rng, 8, -1, 1);
    Tensor down_xyz = rand_xyz(rng, 4, -1, 1);
    Tensor down_feats = rand_xyz(rng, 4);  // F = 3
    Tensor skip = rand_xyz(rng, 8);        // S = 3
    const int64_t G = 5, H = 6;

    ParamStore ap;
    init_zeros(ap, "a.group.l0.w", {3 + 3, G});
    init_zeros(ap, "a.group.l0.b", {G});
    Rng prng(318);
    init_linear_weight(ap, "a.l0.w", G + 3 + 3, H, prng);
    init_zeros(ap, "a.l0.b", {H});
    Tensor with_asfp =
        asfp_layer(up_xyz, down_xyz, down_feats, skip, 0.8, 3, {G}, {H}, ap, "a");

    // plain FP whose first-layer weight drops the rows fed by the zero branch
    ParamStore fp;
    const auto& aw = ap.at("a.l0.w").values();
    std::vector<double> sub(aw.begin() + G * H, aw.end());
    fp.create("f.l0.w", Tensor({3 + 3, H}, std::move(sub)));
    init_zeros(fp, "f.l0.b", {H});
    Tensor plain = feature_propagation(up_xyz, down_xyz, down_feats, skip, {H}, fp, "f");
    CHECK(with_asfp.values() == plain.values());
    CHECK(with_asfp.shape() == Shape{8, H});
}

TEST_CASE("point encoder produces the contracted dense shape") {
    PointArchConfig cfg;
    SAConfig sa0;
    sa0.n_out = 64;
    sa0.radii = {0.3, 0.6};
    sa0.k_max = 8;
    sa0.mlp_widths = {{16}, {16}};
    SAConfig sa1;
    sa1.n_out = 16;
    sa1.radii = {0.6, 1.2};
    sa1.k_max = 8;
    sa1.mlp_widths = {{32}, {32}};
    cfg.sa_levels = {sa0, sa1};
    cfg.use_asfp = true;
    cfg.asfp_radii = {1.2, 0.6};
    cfg.asfp_k_max = 4;
    cfg.asfp_mlp = {{16}, {16}};
    cfg.fp_mlp = {{32}, {32}};
    cfg.head_width = 32;
    PointEncoder enc(cfg, 1);
    ParamStore params;
    Rng prng(319);
    enc.init_params(params, prng);
    Rng rng(320);
    PointCloud pc;
    pc.xyz = rand_xyz(rng, 256);
    std::vector<double> attrs(256);
    for (auto& a : attrs) a = rng.uniform(0.0, 1.0);
    pc.attrs = Tensor({256, 1}, std::move(attrs));
    Tensor out = enc.forward(pc, params);
    CHECK(out.shape() == Shape{256, 32});

    // cloud smaller than the deepest SA level is rejected
    PointCloud tiny;
    tiny.xyz = rand_xyz(rng, 8);
    tiny.attrs = Tensor({8, 1}, std::vector<double>(8, 0.5));
    CHECK_THROWS_AS(enc.forward(tiny, params), Error);

    // attribute width mismatch is rejected
    PointCloud bare;
    bare.xyz = rand_xyz(rng, 256);
    CHECK_THROWS_AS(enc.forward(bare, params), Error);
}

TEST_CASE("point encoder is equivariant to point permutations") {
    PointArchConfig cfg;
    SAConfig sa;
    sa.n_out = 6;
    sa.radii = {0.8};
    sa.k_max = 4;
    sa.mlp_widths = {{5}};
    cfg.sa_levels = {sa};
    cfg.use_asfp = true;
    cfg.asfp_radii = {0.8};
    cfg.asfp_k_max = 3;
    cfg.asfp_mlp = {{4}};
    cfg.fp_mlp = {{5}};
    cfg.head_width = 4;

    Rng rng(321);
    const int64_t p = 16;
    Tensor xyz = rand_xyz(rng, p, -1, 1);
    std::vector<double> attrs(static_cast<size_t>(p));
    for (auto& a : attrs) a = rng.uniform(0.0, 1.0);

    std::vector<int64_t> perm(static_cast<size_t>(p));
    for (int64_t i = 0; i < p; ++i) perm[i] = i;
    std::reverse(perm.begin() + 1, perm.end());
    std::swap(perm[2], perm[9]);
    std::vector<double> pxyz(static_cast<size_t>(p) * 3), pattr(static_cast<size_t>(p));
    for (int64_t i = 0; i < p; ++i) {
        for (int64_t d = 0; d < 3; ++d) pxyz[i * 3 + d] = xyz.values()[perm[i] * 3 + d];
        pattr[i] = attrs[perm[i]];
    }

    ParamStore params;
    Rng prng(322);
    PointEncoder enc(cfg, 1);
    enc.init_params(params, prng);
    for (auto& [n, t] : params)
        for (auto& v : t.values_mut()) v += prng.uniform(-0.2, 0.2);

    PointCloud a{xyz, Tensor({p, 1}, attrs)};
    Tensor ya = enc.forward(a, params);

    // seed index mapped through the permutation so FPS starts at the same point
    PointArchConfig cfg2 = cfg;
    for (int64_t i = 0; i < p; ++i)
        if (perm[i] == cfg.fps_seed_index) cfg2.fps_seed_index = i;
    PointEncoder enc2(cfg2, 1);
    PointCloud b{Tensor({p, 3}, pxyz), Tensor({p, 1}, pattr)};
    Tensor yb = enc2.forward(b, params);

    const int64_t d = cfg.head_width;
    for (int64_t i = 0; i < p; ++i)
        for (int64_t c = 0; c < d; ++c)
            CHECK(yb.values()[i * d + c] ==
                  doctest::Approx(ya.values()[perm[i] * d + c]).epsilon(1e-10));
}

TEST_CASE("point arch config validation catches structural mistakes") {
    PointArchConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), Error);  // no SA levels
    SAConfig sa;
    sa.n_out = 4;
    sa.radii = {0.5};
    sa.k_max = 4;
    sa.mlp_widths = {{4}};
    SAConfig grow = sa;
    grow.n_out = 8;
    cfg.sa_levels = {sa, grow};  // n_out increases with depth
    cfg.fp_mlp = {{4}, {4}};
    cfg.asfp_radii = {0.5, 0.5};
    cfg.asfp_mlp = {{4}, {4}};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.sa_levels = {sa};
    cfg.fp_mlp = {{4}, {4}};  // too many decoder levels
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.fp_mlp = {{4}};
    cfg.asfp_radii = {};  // missing asfp config while use_asfp
    cfg.asfp_mlp = {};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.use_asfp = false;
    cfg.head_width = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.head_width = 4;
    cfg.validate();
}
