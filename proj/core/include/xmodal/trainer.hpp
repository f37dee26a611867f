#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/augment.hpp"
#include "xmodal/config.hpp"
#include "xmodal/eval.hpp"
#include "xmodal/optim.hpp"

namespace xmodal {

// Raised when training hits a non-finite loss; callers map it to a distinct
// exit code.
struct NumericalError : Error {
    using Error::Error;
};

struct CurveRow {
    int64_t step = 0;
    double acc_i = 0.0, acc_p = 0.0, acc_c = 0.0, acc_s = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    int64_t steps = 0;
    std::vector<CurveRow> curve;
    CurveRow final_row;
    double best_acc_s = 0.0;
    std::string final_checkpoint;
    std::string best_checkpoint;
};

// Scene generation may reject a seed (too few correspondences); advances the
// cursor until one succeeds.
SceneSample generate_scene_retry(uint64_t& seed_cursor, const SceneConfig& cfg,
                                 int64_t max_attempts = 100);
std::vector<SceneSample> generate_scene_set(uint64_t seed_base, int64_t count,
                                            const SceneConfig& cfg);

// Builds both encoders and a freshly initialized parameter store.
struct Models {
    PointEncoder point;
    ImageEncoder image;
};
Models build_models(const RunConfig& cfg);
void init_model_params(const RunConfig& cfg, const Models& models, ParamStore& params);

// An augmented batch; retries augmentation seeds until enough
// correspondences survive.
CorrespondenceBatch training_batch(const SceneSample& scene, const RunConfig& cfg,
                                   uint64_t seed, const Models& models, ParamStore& params,
                                   BatchGeometry* geometry = nullptr);

// One loss evaluation with the configured variant.
Tensor run_loss(const CorrespondenceBatch& batch, const RunConfig& cfg);

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path);

// Full training run: scene generation, per-epoch lr decay, periodic held-out
// accuracy rows, best/final checkpoints and acc_curve.csv under
// cfg.output_dir.
TrainResult train_run(const RunConfig& cfg);

}  // namespace xmodal
