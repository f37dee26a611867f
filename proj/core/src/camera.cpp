#include "xmodal/camera.hpp"

#include <cmath>

#include "xmodal/tensor.hpp"

namespace xmodal {

void CameraModel::validate() const {
    if (focal <= 0.0) throw Error("CameraModel: focal must be positive");
    if (width < 1 || height < 1) throw Error("CameraModel: empty image size");
    const auto& r = rotation;
    // R R^T = I
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += r[i * 3 + k] * r[j * 3 + k];
            const double expect = i == j ? 1.0 : 0.0;
            if (std::abs(dot - expect) > 1e-9)
                throw Error("CameraModel: rotation is not orthonormal");
        }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    if (std::abs(det - 1.0) > 1e-9) throw Error("CameraModel: rotation determinant is not 1");
}

bool Projection::in_bounds(const CameraModel& cam) const {
    const int64_t r = pixel_row(), c = pixel_col();
    return r >= 0 && r < cam.height && c >= 0 && c < cam.width;
}

int64_t Projection::pixel_row() const { return static_cast<int64_t>(std::llround(row)); }
int64_t Projection::pixel_col() const { return static_cast<int64_t>(std::llround(col)); }

std::optional<Projection> project_point(const std::array<double, 3>& world,
                                        const CameraModel& cam) {
    const auto& r = cam.rotation;
    const auto& t = cam.translation;
    double c[3];
    for (int i = 0; i < 3; ++i)
        c[i] = r[i * 3] * world[0] + r[i * 3 + 1] * world[1] + r[i * 3 + 2] * world[2] + t[i];
    if (c[2] <= 0.0) return std::nullopt;
    Projection p;
    p.depth = c[2];
    p.col = cam.focal * c[0] / c[2] + cam.cx;
    p.row = cam.focal * c[1] / c[2] + cam.cy;
    return p;
}

std::array<double, 3> camera_position(const CameraModel& cam) {
    // origin = -R^T t
    const auto& r = cam.rotation;
    const auto& t = cam.translation;
    std::array<double, 3> pos;
    for (int i = 0; i < 3; ++i)
        pos[i] = -(r[i] * t[0] + r[3 + i] * t[1] + r[6 + i] * t[2]);
    return pos;
}

std::array<double, 3> pixel_ray_direction(const CameraModel& cam, double row, double col) {
    const double xc = (col - cam.cx) / cam.focal;
    const double yc = (row - cam.cy) / cam.focal;
    const double n = std::sqrt(xc * xc + yc * yc + 1.0);
    const double dc[3] = {xc / n, yc / n, 1.0 / n};
    const auto& r = cam.rotation;
    std::array<double, 3> d;
    for (int i = 0; i < 3; ++i) d[i] = r[i] * dc[0] + r[3 + i] * dc[1] + r[6 + i] * dc[2];
    return d;
}

}  // namespace xmodal
