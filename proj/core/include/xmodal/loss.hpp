#pragma once

#include <vector>

#include "xmodal/ops.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

// Partition of a D-wide feature row into a shared span [0, d_shared) and a
// private span [d_shared, d_shared + d_private).
struct TupleLayout {
    int64_t d_shared = 16;
    int64_t d_private = 16;

    int64_t total() const { return d_shared + d_private; }
    void validate(int64_t feature_width) const;
};

struct CircleParams {
    double gamma = 32.0;
    double margin = 0.25;  // in (0, 1)

    double delta_pos() const { return 1.0 - margin; }
    double delta_neg() const { return margin; }
    void validate() const;
};

// Four aligned [N,D] feature matrices; row i across all four is the same
// physical location.
struct CorrespondenceBatch {
    Tensor img;
    Tensor img_aug;
    Tensor pc;
    Tensor pc_aug;

    int64_t rows() const { return img.shape()[0]; }
    int64_t width() const { return img.shape()[1]; }
    void validate() const;
};

enum class Modality { image, point };
enum class PairKind { inter, cross };

struct PairSimilarities {
    Tensor pos;  // 1-D
    Tensor neg;  // 1-D
    std::vector<PairKind> pos_tags;
    std::vector<PairKind> neg_tags;
};

// a.b / (|a||b|) for 1-D vectors; errors if either norm <= 1e-12.
Tensor cosine_sim(const Tensor& a, const Tensor& b);

// Self-paced weights, exposed for property tests.
inline double alpha_neg(double s, const CircleParams& p) {
    return p.gamma * std::max(s + p.margin, 0.0);
}
inline double alpha_pos(double s, const CircleParams& p) {
    return p.gamma * std::max(1.0 + p.margin - s, 0.0);
}

// L = log(1 + [sum_j exp(a_j^-(s_j^- - m))] [sum_i exp(-a_i^+(s_i^+ - (1-m)))]).
Tensor circle_loss(const Tensor& s_pos, const Tensor& s_neg, const CircleParams& p);

// One positive (anchor vs same row of the same modality's augmented view,
// full vectors) and N-1 negatives against the other rows.
PairSimilarities build_inter_pairs(const CorrespondenceBatch& batch, int64_t anchor_row,
                                   Modality modality);

// Four positives ({img, img_aug} x {pc, pc_aug} at the anchor row) and
// 2(N-1) negatives (plain anchor view vs both views of the other modality),
// all on the shared span.
PairSimilarities build_cross_pairs(const CorrespondenceBatch& batch, int64_t anchor_row,
                                   Modality modality, const TupleLayout& layout);

// Mean over all 2N anchors of log(1 + (E_inter^- + E_cross^-)(E_inter^+ + E_cross^+)).
Tensor tuple_circle_loss(const CorrespondenceBatch& batch, const TupleLayout& layout,
                         const CircleParams& p);

// Baseline: same anchors and pair structure, full feature vectors everywhere.
Tensor circle_loss_batch(const CorrespondenceBatch& batch, const CircleParams& p);

}  // namespace xmodal
