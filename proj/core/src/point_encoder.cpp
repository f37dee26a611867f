#include "xmodal/point_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "xmodal/ops.hpp"

namespace xmodal {

void PointCloud::validate() const {
    if (!xyz.defined() || xyz.shape().size() != 2 || xyz.shape()[1] != 3)
        throw Error("PointCloud: xyz must be [P,3]");
    for (double v : xyz.values())
        if (!std::isfinite(v)) throw Error("PointCloud: non-finite coordinate");
    if (attrs.defined() &&
        (attrs.shape().size() != 2 || attrs.shape()[0] != xyz.shape()[0]))
        throw Error("PointCloud: attrs must be [P,A] aligned with xyz");
}

void SAConfig::validate() const {
    if (n_out < 1) throw Error("SAConfig: n_out must be positive");
    if (radii.empty() || radii.size() != mlp_widths.size())
        throw Error("SAConfig: radii and mlp_widths must be non-empty and aligned");
    for (size_t i = 1; i < radii.size(); ++i)
        if (radii[i] <= radii[i - 1]) throw Error("SAConfig: radii must be strictly increasing");
    if (k_max < 1) throw Error("SAConfig: k_max must be positive");
    for (const auto& ws : mlp_widths) {
        if (ws.empty()) throw Error("SAConfig: empty MLP width list");
        for (int64_t w : ws)
            if (w < 1) throw Error("SAConfig: MLP widths must be >= 1");
    }
}

void PointArchConfig::validate() const {
    if (sa_levels.empty()) throw Error("PointArchConfig: at least one SA level required");
    for (const auto& sa : sa_levels) sa.validate();
    for (size_t i = 1; i < sa_levels.size(); ++i)
        if (sa_levels[i].n_out > sa_levels[i - 1].n_out)
            throw Error("PointArchConfig: SA n_out must be non-increasing");
    const size_t n = sa_levels.size();
    if (fp_mlp.size() != n)
        throw Error("PointArchConfig: need one fp_mlp width list per decoder level");
    if (use_asfp && (asfp_radii.size() != n || asfp_mlp.size() != n))
        throw Error("PointArchConfig: need asfp_radii and asfp_mlp per decoder level");
    if (head_width < 2) throw Error("PointArchConfig: head_width must be >= 2");
}

std::vector<int64_t> farthest_point_sample(const Tensor& xyz, int64_t k, int64_t seed_index) {
    const int64_t p = xyz.shape()[0];
    if (k < 1 || k > p)
        throw Error("farthest_point_sample: k=" + std::to_string(k) + " out of range for P=" +
                    std::to_string(p));
    if (seed_index < 0 || seed_index >= p)
        throw Error("farthest_point_sample: seed index out of range");
    const auto& v = xyz.values();
    std::vector<double> min_d2(static_cast<size_t>(p), 1e308);
    std::vector<int64_t> picked;
    picked.reserve(static_cast<size_t>(k));
    int64_t cur = seed_index;
    for (int64_t step = 0; step < k; ++step) {
        picked.push_back(cur);
        const double cx = v[cur * 3], cy = v[cur * 3 + 1], cz = v[cur * 3 + 2];
        double best = -1.0;
        int64_t best_i = 0;
        for (int64_t i = 0; i < p; ++i) {
            const double dx = v[i * 3] - cx, dy = v[i * 3 + 1] - cy, dz = v[i * 3 + 2] - cz;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (min_d2[i] > best) {  // strict: ties keep lowest index
                best = min_d2[i];
                best_i = i;
            }
        }
        cur = best_i;
    }
    return picked;
}

std::vector<int64_t> ball_query(const Tensor& centers, const Tensor& xyz, double radius,
                                int64_t k_max) {
    if (radius <= 0.0) throw Error("ball_query: radius must be positive");
    if (k_max < 1) throw Error("ball_query: k_max must be positive");
    const int64_t m = centers.shape()[0], p = xyz.shape()[0];
    const auto& cv = centers.values();
    const auto& pv = xyz.values();
    const double r2 = radius * radius;
    std::vector<int64_t> out(static_cast<size_t>(m * k_max));
    for (int64_t c = 0; c < m; ++c) {
        const double cx = cv[c * 3], cy = cv[c * 3 + 1], cz = cv[c * 3 + 2];
        int64_t found = 0;
        double nearest_d2 = 1e308;
        int64_t nearest_i = 0;
        for (int64_t i = 0; i < p && found < k_max; ++i) {
            const double dx = pv[i * 3] - cx, dy = pv[i * 3 + 1] - cy, dz = pv[i * 3 + 2] - cz;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 <= r2) out[c * k_max + found++] = i;
        }
        if (found == 0) {
            for (int64_t i = 0; i < p; ++i) {
                const double dx = pv[i * 3] - cx, dy = pv[i * 3 + 1] - cy,
                             dz = pv[i * 3 + 2] - cz;
                const double d2 = dx * dx + dy * dy + dz * dz;
                if (d2 < nearest_d2) {
                    nearest_d2 = d2;
                    nearest_i = i;
                }
            }
            for (int64_t s = 0; s < k_max; ++s) out[c * k_max + s] = nearest_i;
        } else {
            for (int64_t s = found; s < k_max; ++s) out[c * k_max + s] = out[c * k_max];
        }
    }
    return out;
}

void interpolation_weights(const Tensor& up_xyz, const Tensor& down_xyz,
                           std::vector<int64_t>& idx, std::vector<double>& w,
                           int64_t& k_per_row) {
    const int64_t u = up_xyz.shape()[0], m = down_xyz.shape()[0];
    if (m < 1) throw Error("interpolation_weights: empty source cloud");
    const int64_t k = std::min<int64_t>(3, m);
    k_per_row = k;
    idx.assign(static_cast<size_t>(u * k), 0);
    w.assign(static_cast<size_t>(u * k), 0.0);
    const auto& uv = up_xyz.values();
    const auto& dv = down_xyz.values();
    std::vector<std::pair<double, int64_t>> cand(static_cast<size_t>(m));
    for (int64_t q = 0; q < u; ++q) {
        const double qx = uv[q * 3], qy = uv[q * 3 + 1], qz = uv[q * 3 + 2];
        for (int64_t i = 0; i < m; ++i) {
            const double dx = dv[i * 3] - qx, dy = dv[i * 3 + 1] - qy, dz = dv[i * 3 + 2] - qz;
            cand[i] = {dx * dx + dy * dy + dz * dz, i};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        // coincident point: copy its feature outright
        if (cand[0].first <= 1e-20) {
            idx[q * k] = cand[0].second;
            w[q * k] = 1.0;
            for (int64_t j = 1; j < k; ++j) {
                idx[q * k + j] = cand[0].second;
                w[q * k + j] = 0.0;
            }
            continue;
        }
        double wsum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            idx[q * k + j] = cand[j].second;
            w[q * k + j] = 1.0 / (cand[j].first + 1e-10);
            wsum += w[q * k + j];
        }
        for (int64_t j = 0; j < k; ++j) w[q * k + j] /= wsum;
    }
}

namespace {

Tensor mlp_forward(Tensor x, size_t n_layers, ParamStore& params, const std::string& prefix) {
    for (size_t l = 0; l < n_layers; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        x = relu(add_rowvec(matmul(x, params.at(base + ".w")), params.at(base + ".b")));
    }
    return x;
}

void mlp_init(int64_t in_width, const std::vector<int64_t>& widths, ParamStore& params,
              const std::string& prefix, Rng& rng) {
    int64_t w = in_width;
    for (size_t l = 0; l < widths.size(); ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        init_linear_weight(params, base + ".w", w, widths[l], rng);
        init_zeros(params, base + ".b", {widths[l]});
        w = widths[l];
    }
}

// rel-coords constant [M*K, 3] for grouped neighborhoods
Tensor relative_coords(const Tensor& xyz, const Tensor& centers,
                       const std::vector<int64_t>& idx, int64_t k) {
    const int64_t m = centers.shape()[0];
    const auto& pv = xyz.values();
    const auto& cv = centers.values();
    std::vector<double> rel(static_cast<size_t>(m * k * 3));
    for (int64_t c = 0; c < m; ++c)
        for (int64_t j = 0; j < k; ++j) {
            const int64_t i = idx[c * k + j];
            for (int64_t d = 0; d < 3; ++d)
                rel[(c * k + j) * 3 + d] = pv[i * 3 + d] - cv[c * 3 + d];
        }
    return Tensor({m * k, 3}, std::move(rel));
}

// Grouped MLP + max-pool around the given centers.
Tensor grouped_branch(const Tensor& xyz, const Tensor& feats, const Tensor& centers,
                      double radius, int64_t k_max, size_t n_layers, ParamStore& params,
                      const std::string& prefix) {
    const std::vector<int64_t> idx = ball_query(centers, xyz, radius, k_max);
    Tensor rel = relative_coords(xyz, centers, idx, k_max);
    Tensor gathered = gather_rows(feats, idx);
    Tensor x = mlp_forward(concat_last({rel, gathered}), n_layers, params, prefix);
    return rowgroup_max(x, k_max);
}

}  // namespace

Tensor set_abstraction_features(const Tensor& xyz, const Tensor& feats, const Tensor& center_xyz,
                                const SAConfig& cfg, ParamStore& params,
                                const std::string& prefix) {
    cfg.validate();
    std::vector<Tensor> outs;
    for (size_t r = 0; r < cfg.radii.size(); ++r)
        outs.push_back(grouped_branch(xyz, feats, center_xyz, cfg.radii[r], cfg.k_max,
                                      cfg.mlp_widths[r].size(), params,
                                      prefix + ".r" + std::to_string(r)));
    return outs.size() == 1 ? outs[0] : concat_last(outs);
}

Tensor feature_propagation(const Tensor& up_xyz, const Tensor& down_xyz, const Tensor& down_feats,
                           const Tensor& skip_feats, const std::vector<int64_t>& mlp_widths,
                           ParamStore& params, const std::string& prefix) {
    std::vector<int64_t> idx;
    std::vector<double> w;
    int64_t k = 0;
    interpolation_weights(up_xyz, down_xyz, idx, w, k);
    Tensor interp = weighted_gather_rows(down_feats, idx, w, k);
    Tensor x = skip_feats.defined() ? concat_last({interp, skip_feats}) : interp;
    return mlp_forward(x, mlp_widths.size(), params, prefix);
}

Tensor asfp_layer(const Tensor& up_xyz, const Tensor& down_xyz, const Tensor& down_feats,
                  const Tensor& skip_feats, double radius, int64_t k_max,
                  const std::vector<int64_t>& group_mlp_widths,
                  const std::vector<int64_t>& mlp_widths, ParamStore& params,
                  const std::string& prefix) {
    Tensor fresh = grouped_branch(down_xyz, down_feats, up_xyz, radius, k_max,
                                  group_mlp_widths.size(), params, prefix + ".group");
    std::vector<int64_t> idx;
    std::vector<double> w;
    int64_t k = 0;
    interpolation_weights(up_xyz, down_xyz, idx, w, k);
    Tensor interp = weighted_gather_rows(down_feats, idx, w, k);
    std::vector<Tensor> parts{fresh, interp};
    if (skip_feats.defined()) parts.push_back(skip_feats);
    return mlp_forward(concat_last(parts), mlp_widths.size(), params, prefix);
}

PointEncoder::PointEncoder(PointArchConfig cfg, int64_t attr_width)
    : cfg_(std::move(cfg)), attr_width_(attr_width) {
    cfg_.validate();
    if (attr_width_ < 0) throw Error("PointEncoder: negative attribute width");
}

void PointEncoder::init_params(ParamStore& params, Rng& rng, const std::string& prefix) const {
    // Walk the width chain exactly as forward() will.
    std::vector<int64_t> enc_width;  // feature width at each level, level 0 = input
    enc_width.push_back(input_width());
    for (size_t l = 0; l < cfg_.sa_levels.size(); ++l) {
        const SAConfig& sa = cfg_.sa_levels[l];
        int64_t out_w = 0;
        for (size_t r = 0; r < sa.radii.size(); ++r) {
            mlp_init(3 + enc_width.back(), sa.mlp_widths[r], params,
                     prefix + ".sa" + std::to_string(l) + ".r" + std::to_string(r), rng);
            out_w += sa.mlp_widths[r].back();
        }
        enc_width.push_back(out_w);
    }
    const size_t n = cfg_.sa_levels.size();
    int64_t down_w = enc_width[n];
    for (size_t j = 0; j < n; ++j) {
        const size_t up_level = n - 1 - j;
        const int64_t skip_w = enc_width[up_level];
        const std::string base = prefix + ".dec" + std::to_string(j);
        int64_t fp_in = down_w + skip_w;
        if (cfg_.use_asfp) {
            mlp_init(3 + down_w, cfg_.asfp_mlp[j], params, base + ".group", rng);
            fp_in += cfg_.asfp_mlp[j].back();
        }
        mlp_init(fp_in, cfg_.fp_mlp[j], params, base, rng);
        down_w = cfg_.fp_mlp[j].back();
    }
    init_linear_weight(params, prefix + ".head.w", down_w, cfg_.head_width, rng);
    // small nonzero bias: a relu-dead point still yields a nonzero feature
    // row, keeping cosine matching well-defined at initialization
    init_uniform(params, prefix + ".head.b", {cfg_.head_width}, -0.1, 0.1, rng);
}

Tensor PointEncoder::forward(const PointCloud& pc, ParamStore& params,
                             const std::string& prefix) const {
    pc.validate();
    if (pc.attr_width() != attr_width_)
        throw Error("PointEncoder: attribute width mismatch: cloud has " +
                    std::to_string(pc.attr_width()) + ", model expects " +
                    std::to_string(attr_width_));
    if (pc.size() < cfg_.sa_levels.back().n_out)
        throw Error("PointEncoder: cloud with " + std::to_string(pc.size()) +
                    " points is smaller than the deepest SA level (" +
                    std::to_string(cfg_.sa_levels.back().n_out) + ")");

    std::vector<Tensor> level_xyz{pc.xyz};
    std::vector<Tensor> level_feats{
        pc.attrs.defined() ? concat_last({pc.xyz, pc.attrs}) : pc.xyz};

    for (size_t l = 0; l < cfg_.sa_levels.size(); ++l) {
        const SAConfig& sa = cfg_.sa_levels[l];
        const int64_t seed =
            cfg_.fps_seed_index < level_xyz.back().shape()[0] ? cfg_.fps_seed_index : 0;
        const auto centers_idx = farthest_point_sample(level_xyz.back(), sa.n_out, seed);
        Tensor centers = gather_rows(level_xyz.back(), centers_idx);
        Tensor feats =
            set_abstraction_features(level_xyz.back(), level_feats.back(), centers, sa, params,
                                     prefix + ".sa" + std::to_string(l));
        level_xyz.push_back(centers);
        level_feats.push_back(feats);
    }

    const size_t n = cfg_.sa_levels.size();
    Tensor down_feats = level_feats[n];
    for (size_t j = 0; j < n; ++j) {
        const size_t up_level = n - 1 - j;
        const std::string base = prefix + ".dec" + std::to_string(j);
        if (cfg_.use_asfp) {
            down_feats = asfp_layer(level_xyz[up_level], level_xyz[up_level + 1], down_feats,
                                    level_feats[up_level], cfg_.asfp_radii[j], cfg_.asfp_k_max,
                                    cfg_.asfp_mlp[j], cfg_.fp_mlp[j], params, base);
        } else {
            down_feats = feature_propagation(level_xyz[up_level], level_xyz[up_level + 1],
                                             down_feats, level_feats[up_level], cfg_.fp_mlp[j],
                                             params, base);
        }
    }
    return add_rowvec(matmul(down_feats, params.at(prefix + ".head.w")),
                      params.at(prefix + ".head.b"));
}

}  // namespace xmodal
