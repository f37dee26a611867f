#include "xmodal/cluster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

std::vector<double> unit_rows(const Tensor& data) {
    const int64_t n = data.shape()[0], d = data.shape()[1];
    const auto& v = data.values();
    std::vector<double> out(v.size());
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += v[i * d + j] * v[i * d + j];
        const double nn = std::sqrt(s);
        if (nn <= 1e-12)
            throw Error("spherical_kmeans: zero-norm sample row " + std::to_string(i));
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / nn;
    }
    return out;
}

bool rows_equal(const std::vector<double>& a, int64_t ra, int64_t rb, int64_t d) {
    for (int64_t j = 0; j < d; ++j)
        if (a[ra * d + j] != a[rb * d + j]) return false;
    return true;
}

}  // namespace

ClusterResult spherical_kmeans(const Tensor& data, int64_t k, int64_t max_iters, uint64_t seed) {
    if (!data.defined() || data.shape().size() != 2)
        throw Error("spherical_kmeans: data must be [S,D]");
    const int64_t n = data.shape()[0], d = data.shape()[1];
    if (k < 1) throw Error("spherical_kmeans: k must be >= 1");
    const std::vector<double> x = unit_rows(data);

    // init: k distinct random rows
    Rng rng(mix_seed(seed, 0x5fae0005));
    std::vector<int64_t> perm = sample_without_replacement(rng, n, n);
    std::vector<int64_t> seeds;
    for (int64_t cand : perm) {
        bool dup = false;
        for (int64_t s : seeds)
            if (rows_equal(x, cand, s, d)) {
                dup = true;
                break;
            }
        if (!dup) seeds.push_back(cand);
        if (static_cast<int64_t>(seeds.size()) == k) break;
    }
    if (static_cast<int64_t>(seeds.size()) < k)
        throw Error("spherical_kmeans: k=" + std::to_string(k) +
                    " exceeds the number of distinct rows");

    ClusterResult res;
    res.k = k;
    res.dim = d;
    res.centroids.assign(static_cast<size_t>(k * d), 0.0);
    for (int64_t c = 0; c < k; ++c)
        for (int64_t j = 0; j < d; ++j) res.centroids[c * d + j] = x[seeds[c] * d + j];
    res.assignments.assign(static_cast<size_t>(n), -1);

    for (int64_t iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        // assign
        bool changed = false;
        std::vector<double> best_sim(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            double best = -2.0;
            int64_t bc = 0;
            for (int64_t c = 0; c < k; ++c) {
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) s += x[i * d + j] * res.centroids[c * d + j];
                if (s > best) {
                    best = s;
                    bc = c;
                }
            }
            best_sim[i] = best;
            if (res.assignments[i] != bc) {
                res.assignments[i] = bc;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        // update
        std::vector<double> sums(static_cast<size_t>(k * d), 0.0);
        std::vector<int64_t> counts(static_cast<size_t>(k), 0);
        for (int64_t i = 0; i < n; ++i) {
            const int64_t c = res.assignments[i];
            ++counts[c];
            for (int64_t j = 0; j < d; ++j) sums[c * d + j] += x[i * d + j];
        }
        for (int64_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed from the sample fitting its centroid worst
                int64_t worst = 0;
                for (int64_t i = 1; i < n; ++i)
                    if (best_sim[i] < best_sim[worst]) worst = i;
                for (int64_t j = 0; j < d; ++j) res.centroids[c * d + j] = x[worst * d + j];
                best_sim[worst] = 2.0;  // don't reuse for another empty cluster
                continue;
            }
            double nn = 0.0;
            for (int64_t j = 0; j < d; ++j) nn += sums[c * d + j] * sums[c * d + j];
            nn = std::sqrt(nn);
            if (nn <= 1e-12) {
                for (int64_t j = 0; j < d; ++j) res.centroids[c * d + j] = x[c % n * d + j];
                continue;
            }
            for (int64_t j = 0; j < d; ++j) res.centroids[c * d + j] = sums[c * d + j] / nn;
        }
    }
    res.objective = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t c = res.assignments[i];
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) s += x[i * d + j] * res.centroids[c * d + j];
        res.objective += s;
    }
    return res;
}

ClusterResult positional_kmeans(int64_t height, int64_t width, int64_t k, int64_t max_iters,
                                uint64_t seed) {
    const int64_t n = height * width;
    if (k < 1 || k > n)
        throw Error("positional_kmeans: k=" + std::to_string(k) + " out of range for " +
                    std::to_string(n) + " pixels");
    std::vector<double> x(static_cast<size_t>(n) * 2);
    for (int64_t r = 0; r < height; ++r)
        for (int64_t c = 0; c < width; ++c) {
            x[(r * width + c) * 2] = static_cast<double>(r);
            x[(r * width + c) * 2 + 1] = static_cast<double>(c);
        }
    Rng rng(mix_seed(seed, 0x905e0006));
    std::vector<int64_t> seeds = sample_without_replacement(rng, n, k);

    ClusterResult res;
    res.k = k;
    res.dim = 2;
    res.centroids.assign(static_cast<size_t>(k) * 2, 0.0);
    for (int64_t c = 0; c < k; ++c) {
        res.centroids[c * 2] = x[seeds[c] * 2];
        res.centroids[c * 2 + 1] = x[seeds[c] * 2 + 1];
    }
    res.assignments.assign(static_cast<size_t>(n), -1);
    for (int64_t iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        bool changed = false;
        std::vector<double> worst_d(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            double best = 1e308;
            int64_t bc = 0;
            for (int64_t c = 0; c < k; ++c) {
                const double dr = x[i * 2] - res.centroids[c * 2];
                const double dc = x[i * 2 + 1] - res.centroids[c * 2 + 1];
                const double d2 = dr * dr + dc * dc;
                if (d2 < best) {
                    best = d2;
                    bc = c;
                }
            }
            worst_d[i] = best;
            if (res.assignments[i] != bc) {
                res.assignments[i] = bc;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        std::vector<double> sums(static_cast<size_t>(k) * 2, 0.0);
        std::vector<int64_t> counts(static_cast<size_t>(k), 0);
        for (int64_t i = 0; i < n; ++i) {
            const int64_t c = res.assignments[i];
            ++counts[c];
            sums[c * 2] += x[i * 2];
            sums[c * 2 + 1] += x[i * 2 + 1];
        }
        for (int64_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                int64_t far = 0;
                for (int64_t i = 1; i < n; ++i)
                    if (worst_d[i] > worst_d[far]) far = i;
                res.centroids[c * 2] = x[far * 2];
                res.centroids[c * 2 + 1] = x[far * 2 + 1];
                worst_d[far] = -1.0;
                continue;
            }
            res.centroids[c * 2] = sums[c * 2] / static_cast<double>(counts[c]);
            res.centroids[c * 2 + 1] = sums[c * 2 + 1] / static_cast<double>(counts[c]);
        }
    }
    res.objective = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t c = res.assignments[i];
        const double dr = x[i * 2] - res.centroids[c * 2];
        const double dc = x[i * 2 + 1] - res.centroids[c * 2 + 1];
        res.objective += dr * dr + dc * dc;
    }
    return res;
}

std::vector<std::array<unsigned char, 3>> label_palette(int64_t k, uint64_t seed) {
    std::vector<std::array<unsigned char, 3>> palette;
    Rng rng(mix_seed(seed, 0x9a1e0007));
    const double hue0 = rng.uniform();
    for (int64_t i = 0; i < k; ++i) {
        const double hue = std::fmod(hue0 + 0.61803398874989485 * static_cast<double>(i), 1.0);
        const double sat = 0.55 + 0.40 * rng.uniform();
        const double val = 0.65 + 0.30 * rng.uniform();
        const double h6 = hue * 6.0;
        const int sector = static_cast<int>(h6) % 6;
        const double f = h6 - std::floor(h6);
        const double p = val * (1.0 - sat);
        const double q = val * (1.0 - sat * f);
        const double t = val * (1.0 - sat * (1.0 - f));
        double rgb[3];
        switch (sector) {
            case 0: rgb[0] = val; rgb[1] = t; rgb[2] = p; break;
            case 1: rgb[0] = q; rgb[1] = val; rgb[2] = p; break;
            case 2: rgb[0] = p; rgb[1] = val; rgb[2] = t; break;
            case 3: rgb[0] = p; rgb[1] = q; rgb[2] = val; break;
            case 4: rgb[0] = t; rgb[1] = p; rgb[2] = val; break;
            default: rgb[0] = val; rgb[1] = p; rgb[2] = q; break;
        }
        std::array<unsigned char, 3> color = {
            static_cast<unsigned char>(std::llround(rgb[0] * 255.0)),
            static_cast<unsigned char>(std::llround(rgb[1] * 255.0)),
            static_cast<unsigned char>(std::llround(rgb[2] * 255.0))};
        // nudge until distinct; deterministic
        bool dup = true;
        while (dup) {
            dup = false;
            for (const auto& c : palette)
                if (c == color) {
                    color[2] = static_cast<unsigned char>(color[2] + 1);
                    if (color[2] == 0) color[1] = static_cast<unsigned char>(color[1] + 1);
                    dup = true;
                    break;
                }
        }
        palette.push_back(color);
    }
    return palette;
}

void export_label_map_image(const std::vector<int64_t>& assignments, int64_t height,
                            int64_t width, int64_t k, uint64_t palette_seed,
                            const std::string& path) {
    if (static_cast<int64_t>(assignments.size()) != height * width)
        throw Error("export_label_map_image: assignment count does not match the grid");
    const auto palette = label_palette(k, palette_seed);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("export_label_map_image: cannot write '" + path + "'");
    os << "P6\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> buf;
    buf.reserve(assignments.size() * 3);
    for (int64_t label : assignments) {
        if (label < 0 || label >= k)
            throw Error("export_label_map_image: label " + std::to_string(label) +
                        " out of range");
        const auto& c = palette[label];
        buf.push_back(c[0]);
        buf.push_back(c[1]);
        buf.push_back(c[2]);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw Error("export_label_map_image: write failure on '" + path + "'");
}

void export_label_map_points(const std::vector<int64_t>& assignments, const Tensor& xyz,
                             const std::string& path) {
    if (static_cast<int64_t>(assignments.size()) != xyz.shape()[0])
        throw Error("export_label_map_points: assignment count does not match the cloud");
    std::ofstream os(path);
    if (!os) throw Error("export_label_map_points: cannot write '" + path + "'");
    const auto& v = xyz.values();
    for (size_t i = 0; i < assignments.size(); ++i)
        os << v[i * 3] << " " << v[i * 3 + 1] << " " << v[i * 3 + 2] << " " << assignments[i]
           << "\n";
    if (!os) throw Error("export_label_map_points: write failure on '" + path + "'");
}

}  // namespace xmodal
