#include "xmodal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "xmodal/rng.hpp"

namespace fs = std::filesystem;

namespace xmodal {

void SceneConfig::validate() const {
    if (image_height < 8 || image_width < 8) throw Error("SceneConfig: image too small");
    if (n_points < 8) throw Error("SceneConfig: n_points too small");
    if (min_correspondences < 1) throw Error("SceneConfig: min_correspondences must be >= 1");
    if (boxes_min < 0 || boxes_max < boxes_min || spheres_min < 0 || spheres_max < spheres_min)
        throw Error("SceneConfig: bad primitive counts");
    if (horizontal_fov_deg <= 10.0 || horizontal_fov_deg >= 170.0)
        throw Error("SceneConfig: horizontal fov out of range");
}

namespace {

using Vec3 = std::array<double, 3>;

struct Box {
    Vec3 lo, hi;
};

struct Sphere {
    Vec3 c;
    double r;
};

struct SceneGeom {
    // ground plane z = 0 over [x0,x1] x [y0,y1]
    double gx0, gx1, gy0, gy1;
    std::vector<Box> boxes;
    std::vector<Sphere> spheres;
    // procedural texture: three sinusoidal components
    Vec3 freq[3];
    double phase[3];
    double amp[3];
};

double texture_at(const SceneGeom& g, const Vec3& p) {
    double v = 0.40;
    for (int i = 0; i < 3; ++i)
        v += g.amp[i] * std::sin(g.freq[i][0] * p[0] + g.freq[i][1] * p[1] +
                                 g.freq[i][2] * p[2] + g.phase[i]);
    return std::clamp(v, 0.02, 0.98);
}

// Nearest positive ray parameter, or +inf when nothing is hit.
double nearest_hit(const SceneGeom& g, const Vec3& o, const Vec3& d) {
    double best = 1e308;
    if (d[2] < 0.0) {
        const double t = -o[2] / d[2];
        if (t > 1e-9) {
            const double x = o[0] + t * d[0], y = o[1] + t * d[1];
            if (x >= g.gx0 && x <= g.gx1 && y >= g.gy0 && y <= g.gy1) best = std::min(best, t);
        }
    }
    for (const Box& b : g.boxes) {
        double t0 = 1e-9, t1 = best;
        bool ok = true;
        for (int a = 0; a < 3 && ok; ++a) {
            if (std::abs(d[a]) < 1e-15) {
                if (o[a] < b.lo[a] || o[a] > b.hi[a]) ok = false;
                continue;
            }
            double ta = (b.lo[a] - o[a]) / d[a];
            double tb = (b.hi[a] - o[a]) / d[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) ok = false;
        }
        if (ok && t0 < best) best = t0;
    }
    for (const Sphere& s : g.spheres) {
        const Vec3 oc = {o[0] - s.c[0], o[1] - s.c[1], o[2] - s.c[2]};
        const double bq = oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2];
        const double cq = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - s.r * s.r;
        const double disc = bq * bq - cq;
        if (disc < 0.0) continue;
        const double sq = std::sqrt(disc);
        double t = -bq - sq;
        if (t <= 1e-9) t = -bq + sq;
        if (t > 1e-9 && t < best) best = t;
    }
    return best;
}

Vec3 sample_surface_point(const SceneGeom& g, Rng& rng) {
    // area-weighted choice between ground, box faces and spheres
    std::vector<double> areas;
    areas.push_back((g.gx1 - g.gx0) * (g.gy1 - g.gy0) * 0.35);  // ground damped: mostly flat
    for (const Box& b : g.boxes) {
        const double dx = b.hi[0] - b.lo[0], dy = b.hi[1] - b.lo[1], dz = b.hi[2] - b.lo[2];
        areas.push_back(2.0 * (dx * dy + dx * dz + dy * dz));
    }
    for (const Sphere& s : g.spheres) areas.push_back(4.0 * 3.14159265358979323846 * s.r * s.r);
    double total = 0.0;
    for (double a : areas) total += a;
    double pick = rng.uniform(0.0, total);
    size_t which = 0;
    while (which + 1 < areas.size() && pick > areas[which]) {
        pick -= areas[which];
        ++which;
    }
    if (which == 0)
        return {rng.uniform(g.gx0, g.gx1), rng.uniform(g.gy0, g.gy1), 0.0};
    which -= 1;
    if (which < g.boxes.size()) {
        const Box& b = g.boxes[which];
        const double dx = b.hi[0] - b.lo[0], dy = b.hi[1] - b.lo[1], dz = b.hi[2] - b.lo[2];
        const double fa[6] = {dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy};
        double ft = 0.0;
        for (double f : fa) ft += f;
        double fp = rng.uniform(0.0, ft);
        int face = 0;
        while (face < 5 && fp > fa[face]) {
            fp -= fa[face];
            ++face;
        }
        Vec3 p = {rng.uniform(b.lo[0], b.hi[0]), rng.uniform(b.lo[1], b.hi[1]),
                  rng.uniform(b.lo[2], b.hi[2])};
        p[face / 2] = (face % 2 == 0) ? b.lo[face / 2] : b.hi[face / 2];
        return p;
    }
    const Sphere& s = g.spheres[which - g.boxes.size()];
    // uniform direction via normals
    Vec3 d = {rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 1e-300;
    return {s.c[0] + s.r * d[0] / n, s.c[1] + s.r * d[1] / n, s.c[2] + s.r * d[2] / n};
}

SceneGeom build_geometry(Rng& rng) {
    SceneGeom g;
    g.gx0 = 1.0;
    g.gx1 = 10.0;
    g.gy0 = -5.0;
    g.gy1 = 5.0;
    // texture first so geometry counts don't shift the texture stream
    for (int i = 0; i < 3; ++i) {
        const double base = 1.5 + 1.5 * i;
        g.freq[i] = {rng.uniform(-base, base), rng.uniform(-base, base),
                     rng.uniform(-base, base)};
        g.phase[i] = rng.uniform(0.0, 6.283185307179586);
        g.amp[i] = rng.uniform(0.10, 0.20);
    }
    return g;
}

void add_primitives(SceneGeom& g, Rng& rng, const SceneConfig& cfg) {
    const int64_t nb = cfg.boxes_min + rng.uniform_int(cfg.boxes_max - cfg.boxes_min + 1);
    for (int64_t i = 0; i < nb; ++i) {
        const double sx = rng.uniform(0.4, 1.3), sy = rng.uniform(0.4, 1.3),
                     sz = rng.uniform(0.5, 1.6);
        const double x = rng.uniform(2.5, 7.5), y = rng.uniform(-2.6, 2.6);
        g.boxes.push_back(Box{{x - sx / 2, y - sy / 2, 0.0}, {x + sx / 2, y + sy / 2, sz}});
    }
    const int64_t ns = cfg.spheres_min + rng.uniform_int(cfg.spheres_max - cfg.spheres_min + 1);
    for (int64_t i = 0; i < ns; ++i) {
        const double r = rng.uniform(0.25, 0.65);
        g.spheres.push_back(Sphere{
            {rng.uniform(2.5, 7.5), rng.uniform(-2.6, 2.6), rng.uniform(r, r + 1.2)}, r});
    }
}

CameraModel make_camera(const SceneConfig& cfg) {
    CameraModel cam;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    cam.focal = (static_cast<double>(cfg.image_width) / 2.0) /
                std::tan(cfg.horizontal_fov_deg * 3.14159265358979323846 / 360.0);
    cam.cx = (static_cast<double>(cfg.image_width) - 1.0) / 2.0;
    cam.cy = (static_cast<double>(cfg.image_height) - 1.0) / 2.0;
    // camera at (0,0,1.3), forward +x, up +z, tilted down slightly
    const double tilt = 0.20;  // radians
    const double ct = std::cos(tilt), st = std::sin(tilt);
    // base world->cam: x_c=-y_w, y_c=-z_w, z_c=x_w; then pitch about x_c
    const double base[9] = {0, -1, 0, 0, 0, -1, 1, 0, 0};
    const double pitch[9] = {1, 0, 0, 0, ct, -st, 0, st, ct};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += pitch[i * 3 + k] * base[k * 3 + j];
            cam.rotation[i * 3 + j] = acc;
        }
    const Vec3 pos = {0.0, 0.0, 1.3};
    for (int i = 0; i < 3; ++i)
        cam.translation[i] = -(cam.rotation[i * 3] * pos[0] + cam.rotation[i * 3 + 1] * pos[1] +
                               cam.rotation[i * 3 + 2] * pos[2]);
    cam.validate();
    return cam;
}

}  // namespace

std::vector<Correspondence> visible_correspondences(const PointCloud& cloud,
                                                    const CameraModel& cam,
                                                    const std::vector<int64_t>& candidates) {
    const auto& xyz = cloud.xyz.values();
    // pixel -> (depth, point index); lowest index wins depth ties
    std::map<std::pair<int64_t, int64_t>, std::pair<double, int64_t>> zbuf;
    for (int64_t i : candidates) {
        const Vec3 p = {xyz[i * 3], xyz[i * 3 + 1], xyz[i * 3 + 2]};
        const auto proj = project_point(p, cam);
        if (!proj || !proj->in_bounds(cam)) continue;
        const auto key = std::make_pair(proj->pixel_row(), proj->pixel_col());
        auto it = zbuf.find(key);
        if (it == zbuf.end() || proj->depth < it->second.first)
            zbuf[key] = {proj->depth, i};
    }
    std::vector<Correspondence> out;
    out.reserve(zbuf.size());
    for (const auto& [pix, entry] : zbuf)
        out.push_back(Correspondence{pix.first, pix.second, entry.second});
    return out;
}

SceneSample generate_scene(uint64_t seed, const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0xd47a5ce9e0000001ULL));
    SceneGeom geom = build_geometry(rng);
    add_primitives(geom, rng, cfg);
    const CameraModel cam = make_camera(cfg);
    const Vec3 cam_pos = camera_position(cam);

    // point cloud with per-point texture intensity attribute
    std::vector<double> xyz(static_cast<size_t>(cfg.n_points) * 3);
    std::vector<double> attrs(static_cast<size_t>(cfg.n_points));
    for (int64_t i = 0; i < cfg.n_points; ++i) {
        const Vec3 p = sample_surface_point(geom, rng);
        xyz[i * 3] = p[0];
        xyz[i * 3 + 1] = p[1];
        xyz[i * 3 + 2] = p[2];
        attrs[i] = texture_at(geom, p);
    }
    PointCloud cloud{Tensor({cfg.n_points, 3}, std::move(xyz)),
                     Tensor({cfg.n_points, 1}, std::move(attrs))};

    // candidates = points geometrically visible from the camera
    std::vector<int64_t> candidates;
    const auto& xv = cloud.xyz.values();
    for (int64_t i = 0; i < cfg.n_points; ++i) {
        const Vec3 p = {xv[i * 3], xv[i * 3 + 1], xv[i * 3 + 2]};
        Vec3 d = {p[0] - cam_pos[0], p[1] - cam_pos[1], p[2] - cam_pos[2]};
        const double dist = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (dist < 1e-9) continue;
        for (auto& v : d) v /= dist;
        const double t = nearest_hit(geom, cam_pos, d);
        if (std::abs(t - dist) <= 1e-6 * std::max(1.0, dist)) candidates.push_back(i);
    }
    std::vector<Correspondence> corr = visible_correspondences(cloud, cam, candidates);
    if (static_cast<int64_t>(corr.size()) < cfg.min_correspondences)
        throw Error("generate_scene: only " + std::to_string(corr.size()) +
                    " correspondences for seed " + std::to_string(seed) + ", need " +
                    std::to_string(cfg.min_correspondences) + " (try the next seed)");

    // ray-cast intensity image
    std::vector<double> img(static_cast<size_t>(cfg.image_height * cfg.image_width), 0.0);
    for (int64_t r = 0; r < cfg.image_height; ++r)
        for (int64_t c = 0; c < cfg.image_width; ++c) {
            const Vec3 d = pixel_ray_direction(cam, static_cast<double>(r),
                                               static_cast<double>(c));
            const double t = nearest_hit(geom, cam_pos, d);
            if (t < 1e307) {
                const Vec3 p = {cam_pos[0] + t * d[0], cam_pos[1] + t * d[1],
                                cam_pos[2] + t * d[2]};
                img[r * cfg.image_width + c] = texture_at(geom, p);
            }
        }

    SceneSample sample;
    sample.image.values = Tensor({1, cfg.image_height, cfg.image_width}, std::move(img));
    sample.cloud = std::move(cloud);
    sample.correspondences = std::move(corr);
    sample.camera = cam;
    sample.scene_id = seed;
    sample.rng_seed = seed;
    return sample;
}

namespace {

void write_pgm16(const std::string& path, const Tensor& values) {
    const int64_t h = values.shape()[1], w = values.shape()[2];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_pair_dir: cannot write '" + path + "'");
    os << "P5\n" << w << " " << h << "\n65535\n";
    const auto& v = values.values();
    std::vector<unsigned char> buf(static_cast<size_t>(h * w) * 2);
    for (int64_t i = 0; i < h * w; ++i) {
        const double clamped = std::clamp(v[i], 0.0, 1.0);
        const uint16_t q = static_cast<uint16_t>(std::llround(clamped * 65535.0));
        buf[i * 2] = static_cast<unsigned char>(q >> 8);  // PGM samples are big-endian
        buf[i * 2 + 1] = static_cast<unsigned char>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Tensor read_pgm16(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_pair_dir: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    if (magic != "P5") throw Error("load_pair_dir: '" + path + "' is not a binary PGM");
    int64_t w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (!is || w < 1 || h < 1 || maxval != 65535)
        throw Error("load_pair_dir: '" + path + "' has a bad PGM header (need 16-bit)");
    is.get();  // single whitespace after header
    std::vector<unsigned char> buf(static_cast<size_t>(h * w) * 2);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw Error("load_pair_dir: truncated pixel data in '" + path + "'");
    std::vector<double> v(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i) {
        const uint16_t q = static_cast<uint16_t>(buf[i * 2] << 8 | buf[i * 2 + 1]);
        v[i] = static_cast<double>(q) / 65535.0;
    }
    return Tensor({1, h, w}, std::move(v));
}

}  // namespace

void save_pair_dir(const SceneSample& sample, const std::string& dir) {
    fs::create_directories(dir);
    write_pgm16(dir + "/image.pgm", sample.image.values);

    {
        std::ofstream os(dir + "/points.bin", std::ios::binary);
        if (!os) throw Error("save_pair_dir: cannot write '" + dir + "/points.bin'");
        os.write("XPC1", 4);
        const uint32_t p = static_cast<uint32_t>(sample.cloud.size());
        const uint32_t a = static_cast<uint32_t>(sample.cloud.attr_width());
        os.write(reinterpret_cast<const char*>(&p), 4);
        os.write(reinterpret_cast<const char*>(&a), 4);
        const auto& xyz = sample.cloud.xyz.values();
        const auto* attrs = a > 0 ? &sample.cloud.attrs.values() : nullptr;
        for (uint32_t i = 0; i < p; ++i) {
            os.write(reinterpret_cast<const char*>(xyz.data() + i * 3), 3 * sizeof(double));
            if (attrs)
                os.write(reinterpret_cast<const char*>(attrs->data() + i * a),
                         a * sizeof(double));
        }
    }

    {
        std::ofstream os(dir + "/corr.txt");
        if (!os) throw Error("save_pair_dir: cannot write '" + dir + "/corr.txt'");
        for (const auto& c : sample.correspondences)
            os << c.row << " " << c.col << " " << c.point_index << "\n";
    }

    {
        nlohmann::json j;
        j["focal"] = sample.camera.focal;
        j["principal"] = {sample.camera.cx, sample.camera.cy};
        j["rotation"] = sample.camera.rotation;
        j["translation"] = sample.camera.translation;
        j["scene_id"] = sample.scene_id;
        j["seed"] = sample.rng_seed;
        std::ofstream os(dir + "/camera.json");
        if (!os) throw Error("save_pair_dir: cannot write '" + dir + "/camera.json'");
        os << j.dump(2) << "\n";
    }
}

SceneSample load_pair_dir(const std::string& dir) {
    SceneSample sample;
    sample.image.values = read_pgm16(dir + "/image.pgm");

    {
        const std::string path = dir + "/points.bin";
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error("load_pair_dir: cannot open '" + path + "'");
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "XPC1", 4) != 0)
            throw Error("load_pair_dir: '" + path + "' has a bad magic (want XPC1)");
        uint32_t p = 0, a = 0;
        is.read(reinterpret_cast<char*>(&p), 4);
        is.read(reinterpret_cast<char*>(&a), 4);
        if (!is || p == 0) throw Error("load_pair_dir: '" + path + "' has a bad point count");
        std::vector<double> xyz(static_cast<size_t>(p) * 3);
        std::vector<double> attrs(static_cast<size_t>(p) * a);
        for (uint32_t i = 0; i < p; ++i) {
            is.read(reinterpret_cast<char*>(xyz.data() + i * 3), 3 * sizeof(double));
            if (a > 0)
                is.read(reinterpret_cast<char*>(attrs.data() + i * a), a * sizeof(double));
        }
        if (!is)
            throw Error("load_pair_dir: truncated point data in '" + path + "' at offset " +
                        std::to_string(is.tellg() == -1 ? -1 : int64_t(is.tellg())));
        sample.cloud.xyz = Tensor({static_cast<int64_t>(p), 3}, std::move(xyz));
        if (a > 0)
            sample.cloud.attrs =
                Tensor({static_cast<int64_t>(p), static_cast<int64_t>(a)}, std::move(attrs));
    }

    {
        const std::string path = dir + "/corr.txt";
        std::ifstream is(path);
        if (!is) throw Error("load_pair_dir: cannot open '" + path + "'");
        std::string line;
        int64_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            Correspondence c;
            if (!(ls >> c.row >> c.col >> c.point_index))
                throw Error("load_pair_dir: malformed correspondence at " + path + ":" +
                            std::to_string(lineno));
            if (c.row < 0 || c.row >= sample.image.height() || c.col < 0 ||
                c.col >= sample.image.width())
                throw Error("load_pair_dir: out-of-bounds pixel at " + path + ":" +
                            std::to_string(lineno));
            if (c.point_index < 0 || c.point_index >= sample.cloud.size())
                throw Error("load_pair_dir: correspondence references missing point index " +
                            std::to_string(c.point_index) + " at " + path + ":" +
                            std::to_string(lineno));
            sample.correspondences.push_back(c);
        }
    }

    {
        const std::string path = dir + "/camera.json";
        std::ifstream is(path);
        if (!is) throw Error("load_pair_dir: cannot open '" + path + "'");
        nlohmann::json j;
        try {
            is >> j;
        } catch (const std::exception& e) {
            throw Error("load_pair_dir: bad JSON in '" + path + "': " + e.what());
        }
        sample.camera.focal = j.at("focal").get<double>();
        const auto pr = j.at("principal").get<std::vector<double>>();
        if (pr.size() != 2) throw Error("load_pair_dir: principal point must have 2 entries");
        sample.camera.cx = pr[0];
        sample.camera.cy = pr[1];
        sample.camera.rotation = j.at("rotation").get<std::array<double, 9>>();
        sample.camera.translation = j.at("translation").get<std::array<double, 3>>();
        sample.camera.width = sample.image.width();
        sample.camera.height = sample.image.height();
        sample.scene_id = j.value("scene_id", uint64_t(0));
        sample.rng_seed = j.value("seed", uint64_t(0));
        sample.camera.validate();
    }
    return sample;
}

}  // namespace xmodal
