#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/augment.hpp"
#include "xmodal/loss.hpp"
#include "xmodal/scene.hpp"

namespace xmodal {

struct MatchRecord {
    int64_t anchor = 0;     // batch row of the anchor
    int64_t predicted = 0;  // batch row of the argmax candidate
    int64_t truth = 0;      // == anchor
    double similarity = 0.0;
};

struct MatchReport {
    double acc_i = 0.0, acc_p = 0.0, acc_c = 0.0, acc_s = 0.0;
    std::vector<MatchRecord> cross_records;  // from the shared-span matching
    int64_t n_sampled = 0;
};

// argmax-cosine matching of row i of anchors against every candidate row
// (ties to the lowest index); correct iff the argmax is row i.
double match_accuracy(const Tensor& anchors, const Tensor& candidates,
                      std::vector<MatchRecord>* records = nullptr);

// ACC_I: img vs img_aug, full features. ACC_P: pc vs pc_aug, full.
// ACC_C: img vs pc, full. ACC_S: img vs pc, shared span.
MatchReport acc_suite(const CorrespondenceBatch& batch, const TupleLayout& layout,
                      int64_t n_sample, uint64_t seed);

struct Histogram {
    std::vector<double> bin_low, bin_high;
    std::vector<int64_t> count;

    int64_t total() const;
    void write_csv(const std::string& path) const;
};

// Pixel distance between each mismatched anchor's true pixel and the
// projection of its predicted point. Bins: [0,e0), [e0,e1), ..., [elast,inf).
Histogram mismatch_pixel_histogram(const std::vector<MatchRecord>& records,
                                   const std::vector<Correspondence>& correspondences,
                                   const PointCloud& cloud, const CameraModel& cam,
                                   const std::vector<double>& bin_edges);

}  // namespace xmodal
