#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "xmodal/loss.hpp"
#include "xmodal/scene.hpp"

namespace xmodal {

struct ImageAugPolicy {
    bool identity = false;
    int64_t max_shift = 3;      // translate-crop offset range, pixels
    double flip_prob = 0.5;
    double scale_min = 0.9, scale_max = 1.1;   // intensity scale
    double shift_min = -0.05, shift_max = 0.05;  // intensity shift
    double blur_prob = 0.3;
    double blur_sigma = 0.6;
};

// Invertible pixel coordinate transform for pixels surviving the
// translate-crop and flip.
struct PixelMap {
    int64_t dy = 0, dx = 0;
    bool flip = false;
    int64_t height = 0, width = 0;

    std::optional<std::pair<int64_t, int64_t>> apply(int64_t row, int64_t col) const;
};

struct ImageAugResult {
    ImageGrid image;
    PixelMap map;
};

ImageAugResult augment_image(const ImageGrid& img, uint64_t seed, const ImageAugPolicy& policy);

struct CloudAugPolicy {
    bool identity = false;
    double max_rotation = 0.5;   // radians, about the vertical axis
    double jitter_sigma = 0.005;
    double keep_fraction = 0.9;  // random downsample without replacement
};

struct CloudAugResult {
    PointCloud cloud;
    std::vector<int64_t> index_map;  // old index -> new index, -1 if dropped
};

CloudAugResult augment_cloud(const PointCloud& pc, uint64_t seed, const CloudAugPolicy& policy);

// One scene plus both augmented views and the correspondence indices that
// survive both augmentations.
struct AugmentedPair {
    SceneSample base;
    ImageAugResult image_aug;
    CloudAugResult cloud_aug;
    std::vector<int64_t> surviving;  // indices into base.correspondences
};

AugmentedPair make_augmented_pair(const SceneSample& scene, uint64_t seed,
                                  const ImageAugPolicy& img_policy,
                                  const CloudAugPolicy& cloud_policy);

// The n selected correspondences behind a batch, for projection-based eval.
struct BatchGeometry {
    std::vector<Correspondence> corr;
};

// Samples n surviving correspondences, runs both encoders on both views and
// gathers the four aligned [n, D] feature matrices.
CorrespondenceBatch make_batch(const AugmentedPair& pair, int64_t n, uint64_t seed,
                               const ImageEncoder& image_encoder,
                               const PointEncoder& point_encoder, ParamStore& params,
                               BatchGeometry* geometry = nullptr);

}  // namespace xmodal
