#pragma once

#include <string>
#include <vector>

#include "xmodal/optim.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

struct PointCloud {
    Tensor xyz;    // [P,3], meters
    Tensor attrs;  // [P,A], A >= 0 (undefined tensor means A == 0)

    int64_t size() const { return xyz.shape()[0]; }
    int64_t attr_width() const { return attrs.defined() ? attrs.shape()[1] : 0; }
    void validate() const;
};

struct SAConfig {
    int64_t n_out = 0;                           // points kept by FPS
    std::vector<double> radii;                   // strictly increasing, meters
    int64_t k_max = 16;                          // max neighbors per radius
    std::vector<std::vector<int64_t>> mlp_widths;  // per-radius MLP layer widths

    void validate() const;
};

struct PointArchConfig {
    std::vector<SAConfig> sa_levels;
    bool use_asfp = true;
    std::vector<double> asfp_radii;                  // one per decoder level
    int64_t asfp_k_max = 8;
    std::vector<std::vector<int64_t>> asfp_mlp;      // per decoder level
    std::vector<std::vector<int64_t>> fp_mlp;        // per decoder level
    int64_t head_width = 32;                         // D
    int64_t fps_seed_index = 0;

    void validate() const;
};

// Greedy max-min farthest point sampling; first pick is seed_index, ties
// broken by lowest index. Deterministic.
std::vector<int64_t> farthest_point_sample(const Tensor& xyz, int64_t k, int64_t seed_index);

// Up to k_max neighbor indices within radius per center, ascending index
// order. Short neighborhoods repeat the first found index; empty ones hold
// the nearest point's index in every slot.
std::vector<int64_t> ball_query(const Tensor& centers, const Tensor& xyz, double radius,
                                int64_t k_max);

// 3-NN inverse-square-distance interpolation indices/weights (the weight
// vectors are constants w.r.t. features). Coincident points (d <= 1e-10)
// copy; M < 3 uses all M neighbors.
void interpolation_weights(const Tensor& up_xyz, const Tensor& down_xyz,
                           std::vector<int64_t>& idx, std::vector<double>& w, int64_t& k_per_row);

// Shared MLP over grouped [rel_xyz || features] followed by max-pool per
// group; one branch per radius, concatenated.
Tensor set_abstraction_features(const Tensor& xyz, const Tensor& feats, const Tensor& center_xyz,
                                const SAConfig& cfg, ParamStore& params,
                                const std::string& prefix);

Tensor feature_propagation(const Tensor& up_xyz, const Tensor& down_xyz, const Tensor& down_feats,
                           const Tensor& skip_feats, const std::vector<int64_t>& mlp_widths,
                           ParamStore& params, const std::string& prefix);

Tensor asfp_layer(const Tensor& up_xyz, const Tensor& down_xyz, const Tensor& down_feats,
                  const Tensor& skip_feats, double radius, int64_t k_max,
                  const std::vector<int64_t>& group_mlp_widths,
                  const std::vector<int64_t>& mlp_widths, ParamStore& params,
                  const std::string& prefix);

// PointNet++-style encoder/decoder emitting one feature row per input point.
class PointEncoder {
public:
    PointEncoder(PointArchConfig cfg, int64_t attr_width);

    // Registers all parameters under `prefix` (default "point").
    void init_params(ParamStore& params, Rng& rng, const std::string& prefix = "point") const;

    // [P, head_width] feature rows; P must cover the deepest SA level.
    Tensor forward(const PointCloud& pc, ParamStore& params,
                   const std::string& prefix = "point") const;

    const PointArchConfig& config() const { return cfg_; }

private:
    PointArchConfig cfg_;
    int64_t attr_width_;
    int64_t input_width() const { return 3 + attr_width_; }
};

}  // namespace xmodal
