#include "xmodal/augment.hpp"

#include <algorithm>
#include <cmath>

#include "xmodal/ops.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

std::optional<std::pair<int64_t, int64_t>> PixelMap::apply(int64_t row, int64_t col) const {
    const int64_t r = row - dy;
    int64_t c = col - dx;
    if (r < 0 || r >= height || c < 0 || c >= width) return std::nullopt;
    if (flip) c = width - 1 - c;
    return std::make_pair(r, c);
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(2.5 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int64_t i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (static_cast<double>(i * i)) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// separable blur, border-renormalized
std::vector<double> blur_plane(const std::vector<double>& src, int64_t h, int64_t w,
                               double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int64_t radius = static_cast<int64_t>(k.size()) / 2;
    std::vector<double> tmp(src.size()), out(src.size());
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int64_t i = -radius; i <= radius; ++i) {
                const int64_t cc = c + i;
                if (cc < 0 || cc >= w) continue;
                acc += k[i + radius] * src[r * w + cc];
                wsum += k[i + radius];
            }
            tmp[r * w + c] = acc / wsum;
        }
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            double acc = 0.0, wsum = 0.0;
            for (int64_t i = -radius; i <= radius; ++i) {
                const int64_t rr = r + i;
                if (rr < 0 || rr >= h) continue;
                acc += k[i + radius] * tmp[rr * w + c];
                wsum += k[i + radius];
            }
            out[r * w + c] = acc / wsum;
        }
    return out;
}

}  // namespace

ImageAugResult augment_image(const ImageGrid& img, uint64_t seed, const ImageAugPolicy& policy) {
    const int64_t ch = img.channels(), h = img.height(), w = img.width();
    if (policy.max_shift >= h || policy.max_shift >= w)
        throw Error("augment_image: translate-crop larger than the image");
    ImageAugResult res;
    res.map.height = h;
    res.map.width = w;
    if (policy.identity) {
        res.image.values = Tensor(img.values.shape(), img.values.values());
        return res;
    }
    Rng rng(mix_seed(seed, 0x1a6e0001));
    res.map.dy = rng.uniform_int(2 * policy.max_shift + 1) - policy.max_shift;
    res.map.dx = rng.uniform_int(2 * policy.max_shift + 1) - policy.max_shift;
    res.map.flip = rng.uniform() < policy.flip_prob;
    const double scale = rng.uniform(policy.scale_min, policy.scale_max);
    const double shift = rng.uniform(policy.shift_min, policy.shift_max);
    const bool do_blur = rng.uniform() < policy.blur_prob;

    const auto& src = img.values.values();
    std::vector<double> dst(src.size(), 0.0);
    for (int64_t k = 0; k < ch; ++k)
        for (int64_t r = 0; r < h; ++r)
            for (int64_t c = 0; c < w; ++c) {
                // aug[r,c] pulls from orig[r+dy, c+dx] (flip reverses columns)
                const int64_t sc = res.map.flip ? w - 1 - c : c;
                const int64_t orow = r + res.map.dy, ocol = sc + res.map.dx;
                if (orow < 0 || orow >= h || ocol < 0 || ocol >= w) continue;
                dst[(k * h + r) * w + c] = src[(k * h + orow) * w + ocol];
            }
    for (auto& v : dst) v = std::clamp(scale * v + shift, 0.0, 1.0);
    if (do_blur)
        for (int64_t k = 0; k < ch; ++k) {
            std::vector<double> plane(dst.begin() + k * h * w, dst.begin() + (k + 1) * h * w);
            plane = blur_plane(plane, h, w, policy.blur_sigma);
            std::copy(plane.begin(), plane.end(), dst.begin() + k * h * w);
        }
    res.image.values = Tensor(img.values.shape(), std::move(dst));
    return res;
}

CloudAugResult augment_cloud(const PointCloud& pc, uint64_t seed, const CloudAugPolicy& policy) {
    pc.validate();
    const int64_t p = pc.size();
    CloudAugResult res;
    if (policy.identity) {
        res.cloud.xyz = Tensor(pc.xyz.shape(), pc.xyz.values());
        if (pc.attrs.defined()) res.cloud.attrs = Tensor(pc.attrs.shape(), pc.attrs.values());
        res.index_map.resize(static_cast<size_t>(p));
        for (int64_t i = 0; i < p; ++i) res.index_map[i] = i;
        return res;
    }
    if (policy.keep_fraction <= 0.0 || policy.keep_fraction > 1.0)
        throw Error("augment_cloud: keep_fraction out of (0,1]");
    const int64_t keep = std::max<int64_t>(1, static_cast<int64_t>(
                                                  std::llround(policy.keep_fraction *
                                                               static_cast<double>(p))));
    if (keep > p) throw Error("augment_cloud: downsample target exceeds point count");

    Rng rng(mix_seed(seed, 0xc10d0002));
    const double angle = rng.uniform(-policy.max_rotation, policy.max_rotation);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const auto& src = pc.xyz.values();
    double cx = 0.0, cy = 0.0;
    for (int64_t i = 0; i < p; ++i) {
        cx += src[i * 3];
        cy += src[i * 3 + 1];
    }
    cx /= static_cast<double>(p);
    cy /= static_cast<double>(p);

    std::vector<int64_t> kept = sample_without_replacement(rng, p, keep);
    std::sort(kept.begin(), kept.end());
    res.index_map.assign(static_cast<size_t>(p), -1);
    std::vector<double> xyz(static_cast<size_t>(keep) * 3);
    const int64_t a = pc.attr_width();
    std::vector<double> attrs(static_cast<size_t>(keep * a));
    const auto* av = a > 0 ? &pc.attrs.values() : nullptr;
    for (int64_t j = 0; j < keep; ++j) {
        const int64_t i = kept[j];
        res.index_map[i] = j;
        // rotate about the vertical axis through the cloud centroid
        const double x = src[i * 3] - cx, y = src[i * 3 + 1] - cy;
        xyz[j * 3] = ca * x - sa * y + cx + policy.jitter_sigma * rng.normal();
        xyz[j * 3 + 1] = sa * x + ca * y + cy + policy.jitter_sigma * rng.normal();
        xyz[j * 3 + 2] = src[i * 3 + 2] + policy.jitter_sigma * rng.normal();
        for (int64_t q = 0; q < a; ++q) attrs[j * a + q] = (*av)[i * a + q];
    }
    res.cloud.xyz = Tensor({keep, 3}, std::move(xyz));
    if (a > 0) res.cloud.attrs = Tensor({keep, a}, std::move(attrs));
    return res;
}

AugmentedPair make_augmented_pair(const SceneSample& scene, uint64_t seed,
                                  const ImageAugPolicy& img_policy,
                                  const CloudAugPolicy& cloud_policy) {
    AugmentedPair pair;
    pair.base = scene;
    pair.image_aug = augment_image(scene.image, mix_seed(seed, 11), img_policy);
    pair.cloud_aug = augment_cloud(scene.cloud, mix_seed(seed, 13), cloud_policy);
    for (size_t ci = 0; ci < scene.correspondences.size(); ++ci) {
        const Correspondence& c = scene.correspondences[ci];
        if (!pair.image_aug.map.apply(c.row, c.col)) continue;
        if (pair.cloud_aug.index_map[c.point_index] < 0) continue;
        pair.surviving.push_back(static_cast<int64_t>(ci));
    }
    return pair;
}

CorrespondenceBatch make_batch(const AugmentedPair& pair, int64_t n, uint64_t seed,
                               const ImageEncoder& image_encoder,
                               const PointEncoder& point_encoder, ParamStore& params,
                               BatchGeometry* geometry) {
    if (n < 2) throw Error("make_batch: need n >= 2");
    if (static_cast<int64_t>(pair.surviving.size()) < n)
        throw Error("make_batch: only " + std::to_string(pair.surviving.size()) +
                    " correspondences survive augmentation, need " + std::to_string(n));
    Rng rng(mix_seed(seed, 0xba7c0003));
    std::vector<int64_t> picks =
        sample_without_replacement(rng, static_cast<int64_t>(pair.surviving.size()), n);

    std::vector<std::pair<int64_t, int64_t>> pix_plain, pix_aug;
    std::vector<int64_t> pt_plain, pt_aug;
    pix_plain.reserve(static_cast<size_t>(n));
    if (geometry) geometry->corr.clear();
    for (int64_t k : picks) {
        const Correspondence& c = pair.base.correspondences[pair.surviving[k]];
        pix_plain.emplace_back(c.row, c.col);
        pix_aug.push_back(*pair.image_aug.map.apply(c.row, c.col));
        pt_plain.push_back(c.point_index);
        pt_aug.push_back(pair.cloud_aug.index_map[c.point_index]);
        if (geometry) geometry->corr.push_back(c);
    }

    Tensor img_map = image_encoder.forward(pair.base.image, params);
    Tensor img_aug_map = image_encoder.forward(pair.image_aug.image, params);
    Tensor pc_feats = point_encoder.forward(pair.base.cloud, params);
    Tensor pc_aug_feats = point_encoder.forward(pair.cloud_aug.cloud, params);

    CorrespondenceBatch batch;
    batch.img = sample_pixel_features(img_map, pix_plain);
    batch.img_aug = sample_pixel_features(img_aug_map, pix_aug);
    batch.pc = gather_rows(pc_feats, pt_plain);
    batch.pc_aug = gather_rows(pc_aug_feats, pt_aug);
    batch.validate();
    return batch;
}

}  // namespace xmodal
