#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/camera.hpp"
#include "xmodal/image_encoder.hpp"
#include "xmodal/point_encoder.hpp"

namespace xmodal {

struct Correspondence {
    int64_t row = 0;
    int64_t col = 0;
    int64_t point_index = 0;
};

struct SceneSample {
    ImageGrid image;
    PointCloud cloud;
    std::vector<Correspondence> correspondences;
    CameraModel camera;
    uint64_t scene_id = 0;
    uint64_t rng_seed = 0;
};

struct SceneConfig {
    int64_t image_height = 32;
    int64_t image_width = 64;
    int64_t n_points = 1024;
    int64_t min_correspondences = 96;
    int64_t boxes_min = 2, boxes_max = 4;
    int64_t spheres_min = 1, spheres_max = 3;
    double horizontal_fov_deg = 80.0;

    void validate() const;
};

// Textured primitive scene (ground plane + boxes + spheres) sampled into a
// point cloud and ray-cast into an intensity image; deterministic per seed.
// Errors if fewer than min_correspondences survive (callers may retry with
// the next seed).
SceneSample generate_scene(uint64_t seed, const SceneConfig& cfg);

// z-buffer step: for each candidate point index, the nearest point among
// those rounding to the same pixel wins (ties by lowest index). Points
// projecting out of bounds or behind the camera are dropped.
std::vector<Correspondence> visible_correspondences(const PointCloud& cloud,
                                                    const CameraModel& cam,
                                                    const std::vector<int64_t>& candidates);

// Pair directory: image.pgm (16-bit binary PGM), points.bin ("XPC1", u32 P,
// u32 A, P*(3+A) little-endian f64), corr.txt ("row col point_index" lines),
// camera.json.
void save_pair_dir(const SceneSample& sample, const std::string& dir);
SceneSample load_pair_dir(const std::string& dir);

}  // namespace xmodal
