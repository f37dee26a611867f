#pragma once

#include <string>
#include <vector>

#include "xmodal/loss.hpp"
#include "xmodal/optim.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

struct ImageGrid {
    Tensor values;  // [C,H,W], intensities in [0,1]

    int64_t channels() const { return values.shape()[0]; }
    int64_t height() const { return values.shape()[1]; }
    int64_t width() const { return values.shape()[2]; }
    void validate(int64_t n_downsamples) const;
};

// Dense per-pixel feature map, same spatial size as the input image.
struct FeatureMap {
    Tensor values;  // [D,H,W]
    TupleLayout layout;
};

struct ImageArchConfig {
    std::vector<int64_t> stage_channels = {16, 32, 64, 128};  // four encoder stages
    int64_t blocks_per_stage = 1;
    int64_t head_width = 32;  // D
    double norm_eps = 1e-5;

    int64_t n_downsamples() const { return static_cast<int64_t>(stage_channels.size()) - 1; }
    void validate() const;
};

// conv -> norm -> relu -> conv -> norm, identity (or 1x1-projected) skip,
// relu. Registers under `prefix`.
Tensor res_block(const Tensor& x, ParamStore& params, const std::string& prefix, double eps);
void res_block_init(int64_t in_c, int64_t out_c, ParamStore& params, const std::string& prefix,
                    Rng& rng);

class ImageEncoder {
public:
    ImageEncoder(ImageArchConfig cfg, int64_t in_channels);

    void init_params(ParamStore& params, Rng& rng, const std::string& prefix = "image") const;

    // Dense [head_width, H, W] feature map.
    Tensor forward(const ImageGrid& img, ParamStore& params,
                   const std::string& prefix = "image") const;

    const ImageArchConfig& config() const { return cfg_; }

private:
    ImageArchConfig cfg_;
    int64_t in_channels_;
};

// Rows gathered at (row, col) pixels in input order; gradient scatters back.
Tensor sample_pixel_features(const Tensor& map,
                             const std::vector<std::pair<int64_t, int64_t>>& pixels);

}  // namespace xmodal
