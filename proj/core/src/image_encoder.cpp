#include "xmodal/image_encoder.hpp"

#include "xmodal/ops.hpp"

namespace xmodal {

void ImageGrid::validate(int64_t n_downsamples) const {
    if (!values.defined() || values.shape().size() != 3)
        throw Error("ImageGrid: values must be [C,H,W]");
    const int64_t div = int64_t(1) << n_downsamples;
    if (height() % div != 0 || width() % div != 0)
        throw Error("ImageGrid: spatial size " + std::to_string(height()) + "x" +
                    std::to_string(width()) + " not divisible by " + std::to_string(div));
}

void ImageArchConfig::validate() const {
    if (stage_channels.size() < 2)
        throw Error("ImageArchConfig: need at least two stages");
    for (int64_t c : stage_channels)
        if (c < 1) throw Error("ImageArchConfig: stage channels must be >= 1");
    if (blocks_per_stage < 1) throw Error("ImageArchConfig: blocks_per_stage must be >= 1");
    if (head_width < 2) throw Error("ImageArchConfig: head_width must be >= 2");
}

namespace {

Tensor conv_norm(const Tensor& x, ParamStore& params, const std::string& base, int64_t stride,
                 int64_t padding, double eps) {
    Tensor y = conv2d(x, params.at(base + ".w"), params.at(base + ".b"), stride, padding);
    return channel_norm(y, params.at(base + ".g"), params.at(base + ".s"), eps);
}

void conv_norm_init(int64_t in_c, int64_t out_c, int64_t k, ParamStore& params,
                    const std::string& base, Rng& rng) {
    init_conv_weight(params, base + ".w", {out_c, in_c, k, k}, in_c * k * k, out_c * k * k, rng);
    init_zeros(params, base + ".b", {out_c});
    init_ones(params, base + ".g", {out_c});
    init_zeros(params, base + ".s", {out_c});
}

}  // namespace

Tensor res_block(const Tensor& x, ParamStore& params, const std::string& prefix, double eps) {
    Tensor y = relu(conv_norm(x, params, prefix + ".c1", 1, 1, eps));
    y = conv_norm(y, params, prefix + ".c2", 1, 1, eps);
    Tensor skip = params.contains(prefix + ".proj.w")
                      ? conv2d(x, params.at(prefix + ".proj.w"), params.at(prefix + ".proj.b"),
                               1, 0)
                      : x;
    return relu(add(y, skip));
}

void res_block_init(int64_t in_c, int64_t out_c, ParamStore& params, const std::string& prefix,
                    Rng& rng) {
    conv_norm_init(in_c, out_c, 3, params, prefix + ".c1", rng);
    conv_norm_init(out_c, out_c, 3, params, prefix + ".c2", rng);
    if (in_c != out_c) {
        init_conv_weight(params, prefix + ".proj.w", {out_c, in_c, 1, 1}, in_c, out_c, rng);
        init_zeros(params, prefix + ".proj.b", {out_c});
    }
}

ImageEncoder::ImageEncoder(ImageArchConfig cfg, int64_t in_channels)
    : cfg_(std::move(cfg)), in_channels_(in_channels) {
    cfg_.validate();
    if (in_channels_ < 1) throw Error("ImageEncoder: in_channels must be >= 1");
}

void ImageEncoder::init_params(ParamStore& params, Rng& rng, const std::string& prefix) const {
    const auto& ch = cfg_.stage_channels;
    const size_t n = ch.size();
    conv_norm_init(in_channels_, ch[0], 3, params, prefix + ".stem", rng);
    for (size_t s = 0; s < n; ++s) {
        if (s > 0) conv_norm_init(ch[s - 1], ch[s], 3, params,
                                  prefix + ".down" + std::to_string(s), rng);
        for (int64_t b = 0; b < cfg_.blocks_per_stage; ++b)
            res_block_init(ch[s], ch[s], params,
                           prefix + ".enc" + std::to_string(s) + ".b" + std::to_string(b), rng);
    }
    for (size_t s = n - 1; s >= 1; --s) {
        const std::string base = prefix + ".up" + std::to_string(s);
        // deconv [Cin, Cout, 2, 2]
        init_conv_weight(params, base + ".w", {ch[s], ch[s - 1], 2, 2}, ch[s] * 4, ch[s - 1] * 4,
                         rng);
        init_zeros(params, base + ".b", {ch[s - 1]});
        init_ones(params, base + ".g", {ch[s - 1]});
        init_zeros(params, base + ".s", {ch[s - 1]});
        for (int64_t b = 0; b < cfg_.blocks_per_stage; ++b)
            res_block_init(b == 0 ? 2 * ch[s - 1] : ch[s - 1], ch[s - 1], params,
                           prefix + ".dec" + std::to_string(s) + ".b" + std::to_string(b), rng);
    }
    init_conv_weight(params, prefix + ".head.w", {cfg_.head_width, ch[0], 1, 1}, ch[0],
                     cfg_.head_width, rng);
    // matches the point head: nonzero bias keeps feature rows off exact zero
    init_uniform(params, prefix + ".head.b", {cfg_.head_width}, -0.1, 0.1, rng);
}

Tensor ImageEncoder::forward(const ImageGrid& img, ParamStore& params,
                             const std::string& prefix) const {
    img.validate(cfg_.n_downsamples());
    if (img.channels() != in_channels_)
        throw Error("ImageEncoder: channel mismatch: image has " +
                    std::to_string(img.channels()) + ", model expects " +
                    std::to_string(in_channels_));
    const auto& ch = cfg_.stage_channels;
    const size_t n = ch.size();

    Tensor x = relu(conv_norm(img.values, params, prefix + ".stem", 1, 1, cfg_.norm_eps));
    std::vector<Tensor> skips;
    for (size_t s = 0; s < n; ++s) {
        if (s > 0)
            x = relu(conv_norm(x, params, prefix + ".down" + std::to_string(s), 2, 1,
                               cfg_.norm_eps));
        for (int64_t b = 0; b < cfg_.blocks_per_stage; ++b)
            x = res_block(x, params,
                          prefix + ".enc" + std::to_string(s) + ".b" + std::to_string(b),
                          cfg_.norm_eps);
        skips.push_back(x);
    }
    for (size_t s = n - 1; s >= 1; --s) {
        const std::string base = prefix + ".up" + std::to_string(s);
        x = deconv2d(x, params.at(base + ".w"), params.at(base + ".b"));
        x = relu(channel_norm(x, params.at(base + ".g"), params.at(base + ".s"), cfg_.norm_eps));
        x = concat_axis0({x, skips[s - 1]});
        for (int64_t b = 0; b < cfg_.blocks_per_stage; ++b)
            x = res_block(x, params,
                          prefix + ".dec" + std::to_string(s) + ".b" + std::to_string(b),
                          cfg_.norm_eps);
    }
    return conv2d(x, params.at(prefix + ".head.w"), params.at(prefix + ".head.b"), 1, 0);
}

Tensor sample_pixel_features(const Tensor& map,
                             const std::vector<std::pair<int64_t, int64_t>>& pixels) {
    return gather_pixels(map, pixels);
}

}  // namespace xmodal
