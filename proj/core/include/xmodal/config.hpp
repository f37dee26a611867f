#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/augment.hpp"
#include "xmodal/image_encoder.hpp"
#include "xmodal/loss.hpp"
#include "xmodal/point_encoder.hpp"
#include "xmodal/scene.hpp"

namespace xmodal {

struct DataConfig {
    int64_t n_train_scenes = 16;
    int64_t n_val_scenes = 2;
    uint64_t train_seed_base = 1000;
    uint64_t val_seed_base = 900000;
    SceneConfig scene;
    ImageAugPolicy image_aug;
    CloudAugPolicy cloud_aug;
};

struct LossConfig {
    std::string variant = "tuple_circle";  // or "circle"
    CircleParams circle;
    int64_t d_shared = 16;
};

struct OptimConfig {
    double lr = 0.01;
    double decay = 0.985;   // per-epoch multiplier
    int64_t epochs = 4;
    int64_t batch_n = 64;   // correspondences per step
    double weight_decay = 0.01;
    int64_t max_steps = 0;  // 0 = unlimited
};

struct EvalConfig {
    int64_t n_sample = 64;
    int64_t k_clusters = 16;
    int64_t max_kmeans_iters = 100;
    std::vector<double> bin_edges = {1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    int64_t eval_every = 25;  // steps between held-out accuracy rows
};

// One fully-resolved run description. Every field has a default; JSON files
// only override what they mention. Unknown keys are rejected.
struct RunConfig {
    RunConfig();  // fills in the toy point architecture

    uint64_t seed = 1;
    std::string output_dir = "out";
    DataConfig data;
    PointArchConfig point;
    ImageArchConfig image;
    LossConfig loss;
    OptimConfig optim;
    EvalConfig eval;

    TupleLayout layout() const;
    void validate() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
// Resolved-config echo, parseable by load_run_config.
std::string run_config_json(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace xmodal
