#include "xmodal/gradcheck_suite.hpp"

#include <cmath>

#include "xmodal/image_encoder.hpp"
#include "xmodal/loss.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/point_encoder.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

constexpr double kStep = 1e-5;
constexpr double kTolPrimitive = 1e-6;
constexpr double kTolComposite = 1e-4;

Tensor rand_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(shape, std::move(v));
}

// Deterministic per-element weighting so a flat sum cannot hide sign or
// permutation errors in a backward pass.
Tensor weigh_sum(const Tensor& y) {
    std::vector<double> w(static_cast<size_t>(y.numel()));
    for (size_t i = 0; i < w.size(); ++i)
        w[i] = 0.3 + 0.217 * std::sin(1.7 * static_cast<double>(i) + 0.4);
    return sum_all(mul(y, Tensor(y.shape(), std::move(w))));
}

using Builder = std::function<Tensor(const std::vector<Tensor>&)>;

void check(std::vector<GradCheckResult>& out, const std::string& name, const Builder& b,
           std::vector<Tensor> inputs, double tol = kTolPrimitive) {
    out.push_back(grad_check(name, b, std::move(inputs), kStep, tol));
}

void primitive_checks(std::vector<GradCheckResult>& out, Rng& rng) {
    Tensor a = rand_tensor({3, 4}, rng, -1.0, 1.0);
    Tensor b = rand_tensor({3, 4}, rng, 0.5, 1.5);  // safe divisor
    Tensor s = Tensor::scalar(0.7);

    check(out, "add", [](const std::vector<Tensor>& in) { return weigh_sum(add(in[0], in[1])); },
          {a, b});
    check(out, "sub", [](const std::vector<Tensor>& in) { return weigh_sum(sub(in[0], in[1])); },
          {a, b});
    check(out, "mul", [](const std::vector<Tensor>& in) { return weigh_sum(mul(in[0], in[1])); },
          {a, b});
    check(out, "div", [](const std::vector<Tensor>& in) { return weigh_sum(div(in[0], in[1])); },
          {a, b});
    check(out, "div_scalar",
          [](const std::vector<Tensor>& in) { return weigh_sum(div(in[0], in[1])); }, {a, s});
    check(out, "affine",
          [](const std::vector<Tensor>& in) { return weigh_sum(affine(in[0], 1.3, -0.2)); }, {a});
    check(out, "scalar_mul",
          [](const std::vector<Tensor>& in) { return weigh_sum(scalar_mul(in[0], -2.1)); }, {a});
    check(out, "add_scalar",
          [](const std::vector<Tensor>& in) { return weigh_sum(add_scalar(in[0], 0.4)); }, {a});

    // keep values away from the kink at 0 so the FD stencil stays one-sided
    Tensor pos_neg = Tensor({6}, {-0.9, -0.4, -0.1, 0.2, 0.6, 1.1});
    check(out, "relu",
          [](const std::vector<Tensor>& in) { return weigh_sum(relu(in[0])); }, {pos_neg});
    check(out, "clamp_min0",
          [](const std::vector<Tensor>& in) { return weigh_sum(clamp_min0(in[0])); }, {pos_neg});
    check(out, "softplus",
          [](const std::vector<Tensor>& in) { return weigh_sum(softplus(in[0])); }, {pos_neg});
    check(out, "exp", [](const std::vector<Tensor>& in) { return weigh_sum(exp(in[0])); },
          {rand_tensor({5}, rng, -1.0, 1.0)});
    check(out, "log", [](const std::vector<Tensor>& in) { return weigh_sum(log(in[0])); },
          {rand_tensor({5}, rng, 0.5, 2.0)});
    check(out, "sqrt", [](const std::vector<Tensor>& in) { return weigh_sum(sqrt(in[0])); },
          {rand_tensor({5}, rng, 0.5, 2.0)});

    Tensor m1 = rand_tensor({3, 4}, rng, -1.0, 1.0);
    Tensor m2 = rand_tensor({4, 2}, rng, -1.0, 1.0);
    check(out, "matmul",
          [](const std::vector<Tensor>& in) { return weigh_sum(matmul(in[0], in[1])); },
          {m1, m2});
    check(out, "transpose",
          [](const std::vector<Tensor>& in) { return weigh_sum(transpose(in[0])); }, {m1});
    check(out, "add_rowvec",
          [](const std::vector<Tensor>& in) { return weigh_sum(add_rowvec(in[0], in[1])); },
          {m1, rand_tensor({4}, rng, -1.0, 1.0)});

    Tensor chw = rand_tensor({2, 3, 3}, rng, -1.0, 1.0);
    check(out, "add_chanvec",
          [](const std::vector<Tensor>& in) { return weigh_sum(add_chanvec(in[0], in[1])); },
          {chw, rand_tensor({2}, rng, -1.0, 1.0)});

    check(out, "sum_axis0",
          [](const std::vector<Tensor>& in) { return weigh_sum(sum_axis(in[0], 0)); }, {m1});
    check(out, "sum_axis1",
          [](const std::vector<Tensor>& in) { return weigh_sum(sum_axis(in[0], 1)); }, {m1});
    check(out, "max_axis",
          [](const std::vector<Tensor>& in) { return weigh_sum(max_axis(in[0], 1)); }, {m1});
    check(out, "sum_all", [](const std::vector<Tensor>& in) { return sum_all(in[0]); }, {m1});

    check(out, "concat_last",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(concat_last({in[0], in[1]}));
          },
          {m1, rand_tensor({3, 2}, rng, -1.0, 1.0)});
    check(out, "concat_axis0",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(concat_axis0({in[0], in[1]}));
          },
          {chw, rand_tensor({1, 3, 3}, rng, -1.0, 1.0)});
    check(out, "slice_last",
          [](const std::vector<Tensor>& in) { return weigh_sum(slice_last(in[0], 1, 2)); }, {m1});
    check(out, "l2_normalize_rows",
          [](const std::vector<Tensor>& in) { return weigh_sum(l2_normalize_rows(in[0])); },
          {rand_tensor({3, 4}, rng, 0.3, 1.0)});

    check(out, "gather_rows",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(gather_rows(in[0], {2, 0, 2}));
          },
          {m1});
    check(out, "gather_elems",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(gather_elems(in[0], {5, 1, 1, 10}));
          },
          {m1});
    check(out, "weighted_gather_rows",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(
                  weighted_gather_rows(in[0], {0, 2, 1, 1}, {0.7, 0.3, 0.5, 0.5}, 2));
          },
          {m1});
    check(out, "rowgroup_max",
          [](const std::vector<Tensor>& in) { return weigh_sum(rowgroup_max(in[0], 2)); },
          {rand_tensor({6, 3}, rng, -1.0, 1.0)});

    Tensor img = rand_tensor({2, 4, 4}, rng, -1.0, 1.0);
    Tensor cw = rand_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor cb = rand_tensor({3}, rng, -0.5, 0.5);
    check(out, "conv2d",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(conv2d(in[0], in[1], in[2], 1, 1));
          },
          {img, cw, cb});
    check(out, "conv2d_stride2",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(conv2d(in[0], in[1], in[2], 2, 1));
          },
          {img, cw, cb});
    Tensor dw = rand_tensor({2, 3, 2, 2}, rng, -0.5, 0.5);
    check(out, "deconv2d",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(deconv2d(in[0], in[1], in[2]));
          },
          {img, dw, cb});
    check(out, "channel_norm",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(channel_norm(in[0], in[1], in[2], 1e-5));
          },
          {img, rand_tensor({2}, rng, 0.5, 1.5), rand_tensor({2}, rng, -0.5, 0.5)});
    check(out, "gather_pixels",
          [](const std::vector<Tensor>& in) {
              return weigh_sum(gather_pixels(in[0], {{0, 1}, {3, 2}, {0, 1}}));
          },
          {img});
}

CorrespondenceBatch loss_batch_from(const std::vector<Tensor>& in) {
    CorrespondenceBatch b;
    b.img = in[0];
    b.img_aug = in[1];
    b.pc = in[2];
    b.pc_aug = in[3];
    return b;
}

void loss_checks(std::vector<GradCheckResult>& out, Rng& rng) {
    CircleParams p;
    // similarity values away from both clamp kinks (s = -m and s = 1+m)
    Tensor s_pos = Tensor({3}, {0.2, 0.6, 0.9});
    Tensor s_neg = Tensor({4}, {-0.6, -0.1, 0.3, 0.7});
    check(out, "circle_loss",
          [p](const std::vector<Tensor>& in) { return circle_loss(in[0], in[1], p); },
          {s_pos, s_neg}, kTolComposite);

    const int64_t n = 4, d = 6;
    std::vector<Tensor> feats;
    for (int i = 0; i < 4; ++i) feats.push_back(rand_tensor({n, d}, rng, -0.8, 0.8));
    TupleLayout layout{3, 3};
    check(out, "tuple_circle_loss",
          [p, layout](const std::vector<Tensor>& in) {
              return tuple_circle_loss(loss_batch_from(in), layout, p);
          },
          feats, kTolComposite);
    check(out, "circle_loss_batch",
          [p](const std::vector<Tensor>& in) {
              return circle_loss_batch(loss_batch_from(in), p);
          },
          feats, kTolComposite);
}

// Zero-initialized biases put relu pre-activations exactly on their kink
// (FPS centers coincide with input points, so rel-coords vanish too); nudge
// every parameter off the degenerate point before differencing.
std::vector<Tensor> store_tensors(ParamStore& params, Rng& rng) {
    std::vector<Tensor> ts;
    for (auto& [name, t] : params) {
        for (double& v : t.values_mut()) v += rng.uniform(-0.05, 0.05);
        ts.push_back(t);
    }
    return ts;
}

void encoder_checks(std::vector<GradCheckResult>& out, Rng& rng) {
    {
        ImageArchConfig cfg;
        cfg.stage_channels = {3, 5};
        cfg.blocks_per_stage = 1;
        cfg.head_width = 4;
        ImageEncoder enc(cfg, 1);
        ParamStore params;
        Rng prng(41);
        enc.init_params(params, prng);
        ImageGrid img{rand_tensor({1, 4, 4}, rng, 0.1, 0.9)};
        check(out, "image_encoder",
              [&enc, &params, img](const std::vector<Tensor>&) {
                  return weigh_sum(enc.forward(img, params));
              },
              store_tensors(params, prng), kTolComposite);
    }
    {
        PointArchConfig cfg;
        SAConfig sa;
        sa.n_out = 4;
        sa.radii = {0.6};
        sa.k_max = 4;
        sa.mlp_widths = {{6}};
        cfg.sa_levels = {sa};
        cfg.use_asfp = true;
        cfg.asfp_radii = {0.6};
        cfg.asfp_k_max = 3;
        cfg.asfp_mlp = {{5}};
        cfg.fp_mlp = {{6}};
        cfg.head_width = 4;
        PointEncoder enc(cfg, 1);
        ParamStore params;
        Rng prng(43);
        enc.init_params(params, prng);
        PointCloud pc{rand_tensor({8, 3}, rng, -1.0, 1.0), rand_tensor({8, 1}, rng, 0.1, 0.9)};
        check(out, "point_encoder_asfp",
              [&enc, &params, pc](const std::vector<Tensor>&) {
                  return weigh_sum(enc.forward(pc, params));
              },
              store_tensors(params, prng), kTolComposite);

        cfg.use_asfp = false;
        PointEncoder enc2(cfg, 1);
        ParamStore params2;
        Rng prng2(47);
        enc2.init_params(params2, prng2);
        check(out, "point_encoder_fp",
              [&enc2, &params2, pc](const std::vector<Tensor>&) {
                  return weigh_sum(enc2.forward(pc, params2));
              },
              store_tensors(params2, prng2), kTolComposite);
    }
}

}  // namespace

std::vector<GradCheckResult> gradcheck_suite() {
    std::vector<GradCheckResult> out;
    Rng rng(20240117);
    primitive_checks(out, rng);
    loss_checks(out, rng);
    encoder_checks(out, rng);
    return out;
}

}  // namespace xmodal
