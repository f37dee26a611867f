#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/tensor.hpp"

namespace xmodal {

struct ClusterResult {
    std::vector<int64_t> assignments;   // label per sample
    std::vector<double> centroids;      // [k, d] row-major; unit rows for spherical
    int64_t k = 0, dim = 0;
    double objective = 0.0;
    int64_t iterations = 0;
};

// Cosine k-means: assignment by max cosine (ties to lowest centroid index),
// centroid update by renormalized member mean, empty clusters reseeded from
// the worst-fit sample. Stops at an assignment fixpoint or max_iters.
ClusterResult spherical_kmeans(const Tensor& data, int64_t k, int64_t max_iters, uint64_t seed);

// Lloyd's algorithm on 2-D (row, col) positions of an h x w pixel grid.
ClusterResult positional_kmeans(int64_t height, int64_t width, int64_t k, int64_t max_iters,
                                uint64_t seed);

// image labels -> binary PPM with a deterministic seeded palette (distinct
// colors for k <= 256); point labels -> "x y z label" lines.
void export_label_map_image(const std::vector<int64_t>& assignments, int64_t height,
                            int64_t width, int64_t k, uint64_t palette_seed,
                            const std::string& path);
void export_label_map_points(const std::vector<int64_t>& assignments, const Tensor& xyz,
                             const std::string& path);

// The palette used by export_label_map_image, exposed for tests.
std::vector<std::array<unsigned char, 3>> label_palette(int64_t k, uint64_t seed);

}  // namespace xmodal
