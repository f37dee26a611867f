#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace xmodal {

// Pinhole camera with a world->camera rigid pose. Pixel convention: `col`
// grows along +x_cam, `row` along +y_cam; integer coordinates are pixel
// centers.
struct CameraModel {
    double focal = 1.0;                       // pixels
    double cx = 0.0, cy = 0.0;                // principal point (col, row)
    int64_t width = 0, height = 0;            // pixels
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    std::array<double, 3> translation{0, 0, 0};

    void validate() const;  // orthonormality and det=1 to 1e-9
};

struct Projection {
    double row = 0.0;
    double col = 0.0;
    double depth = 0.0;

    bool in_bounds(const CameraModel& cam) const;
    int64_t pixel_row() const;  // nearest integer
    int64_t pixel_col() const;
};

// Pinhole projection; empty when the point is at or behind the camera
// plane (depth <= 0).
std::optional<Projection> project_point(const std::array<double, 3>& world,
                                        const CameraModel& cam);

std::array<double, 3> camera_position(const CameraModel& cam);
// Unit world-space ray direction through a (possibly fractional) pixel.
std::array<double, 3> pixel_ray_direction(const CameraModel& cam, double row, double col);

}  // namespace xmodal
