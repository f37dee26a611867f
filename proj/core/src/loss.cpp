#include "xmodal/loss.hpp"

#include <cmath>

namespace xmodal {

void TupleLayout::validate(int64_t feature_width) const {
    if (d_shared < 1 || d_private < 1)
        throw Error("TupleLayout: both spans must be at least 1 wide");
    if (total() != feature_width)
        throw Error("TupleLayout: d_shared + d_private = " + std::to_string(total()) +
                    " does not match feature width " + std::to_string(feature_width));
}

void CircleParams::validate() const {
    if (gamma <= 0.0) throw Error("CircleParams: gamma must be positive");
    if (margin <= 0.0 || margin >= 1.0) throw Error("CircleParams: margin must be in (0,1)");
}

void CorrespondenceBatch::validate() const {
    for (const Tensor* t : {&img, &img_aug, &pc, &pc_aug})
        if (!t->defined() || t->shape().size() != 2)
            throw Error("CorrespondenceBatch: all four feature matrices must be 2-D");
    const Shape& s = img.shape();
    for (const Tensor* t : {&img_aug, &pc, &pc_aug})
        if (t->shape() != s)
            throw Error("CorrespondenceBatch: shape mismatch " + shape_str(s) + " vs " +
                        shape_str(t->shape()));
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined() || a.shape().size() != 1 || b.shape().size() != 1 ||
        a.shape() != b.shape())
        throw Error("cosine_sim: expected two 1-D tensors of equal length");
    const auto norm_of = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.values()) s += v * v;
        return std::sqrt(s);
    };
    if (norm_of(a) <= 1e-12 || norm_of(b) <= 1e-12)
        throw Error("cosine_sim: near-zero norm input (dead feature)");
    Tensor dot = sum_all(mul(a, b));
    Tensor na = sqrt(sum_all(mul(a, a)));
    Tensor nb = sqrt(sum_all(mul(b, b)));
    return div(dot, mul(na, nb));
}

namespace {

// exp sums of the circle-loss form over 1-D similarity tensors
Tensor circle_exp_neg(const Tensor& s_neg, const CircleParams& p) {
    // alpha^- = gamma * max(s + m, 0); exponent alpha^- * (s - m)
    Tensor a = scalar_mul(clamp_min0(add_scalar(s_neg, p.margin)), p.gamma);
    return sum_all(exp(mul(a, add_scalar(s_neg, -p.delta_neg()))));
}

Tensor circle_exp_pos(const Tensor& s_pos, const CircleParams& p) {
    // alpha^+ = gamma * max(1 + m - s, 0); exponent -alpha^+ * (s - (1-m))
    Tensor a = scalar_mul(clamp_min0(affine(s_pos, -1.0, 1.0 + p.margin)), p.gamma);
    return sum_all(exp(mul(a, affine(s_pos, -1.0, p.delta_pos()))));
}

// All six similarity matrices needed by the anchor loop, built once per
// batch. Shared-span matrices fall back to full vectors when the layout is
// absent (plain Circle baseline).
struct SimContext {
    int64_t n = 0;
    Tensor s_ii;    // img . img_aug, full vectors
    Tensor s_pp;    // pc . pc_aug, full vectors
    Tensor c_ip;    // img . pc       (cross span)
    Tensor c_ipa;   // img . pc_aug
    Tensor c_iap;   // img_aug . pc
    Tensor c_iapa;  // img_aug . pc_aug
};

SimContext make_sim_context(const CorrespondenceBatch& batch, const TupleLayout* layout) {
    batch.validate();
    SimContext ctx;
    ctx.n = batch.rows();
    if (ctx.n < 2) throw Error("pair construction requires a batch with N >= 2 rows");
    if (layout) layout->validate(batch.width());

    Tensor nf_img = l2_normalize_rows(batch.img);
    Tensor nf_imga = l2_normalize_rows(batch.img_aug);
    Tensor nf_pc = l2_normalize_rows(batch.pc);
    Tensor nf_pca = l2_normalize_rows(batch.pc_aug);

    const auto span = [&](const Tensor& t) {
        return layout ? l2_normalize_rows(slice_last(t, 0, layout->d_shared)) : Tensor();
    };
    Tensor ns_img = layout ? span(batch.img) : nf_img;
    Tensor ns_imga = layout ? span(batch.img_aug) : nf_imga;
    Tensor ns_pc = layout ? span(batch.pc) : nf_pc;
    Tensor ns_pca = layout ? span(batch.pc_aug) : nf_pca;

    ctx.s_ii = matmul(nf_img, transpose(nf_imga));
    ctx.s_pp = matmul(nf_pc, transpose(nf_pca));
    ctx.c_ip = matmul(ns_img, transpose(ns_pc));
    ctx.c_ipa = matmul(ns_img, transpose(ns_pca));
    ctx.c_iap = matmul(ns_imga, transpose(ns_pc));
    ctx.c_iapa = matmul(ns_imga, transpose(ns_pca));
    return ctx;
}

std::vector<int64_t> off_diag_row(int64_t i, int64_t n) {
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(n - 1));
    for (int64_t j = 0; j < n; ++j)
        if (j != i) idx.push_back(i * n + j);
    return idx;
}

std::vector<int64_t> off_diag_col(int64_t i, int64_t n) {
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(n - 1));
    for (int64_t j = 0; j < n; ++j)
        if (j != i) idx.push_back(j * n + i);
    return idx;
}

PairSimilarities extract_inter(const SimContext& ctx, int64_t row, Modality modality) {
    const Tensor& s = modality == Modality::image ? ctx.s_ii : ctx.s_pp;
    PairSimilarities out;
    out.pos = gather_elems(s, {row * ctx.n + row});
    out.neg = gather_elems(s, off_diag_row(row, ctx.n));
    out.pos_tags.assign(1, PairKind::inter);
    out.neg_tags.assign(static_cast<size_t>(ctx.n - 1), PairKind::inter);
    return out;
}

PairSimilarities extract_cross(const SimContext& ctx, int64_t row, Modality modality) {
    const int64_t d = row * ctx.n + row;
    PairSimilarities out;
    out.pos = concat_last({gather_elems(ctx.c_ip, {d}), gather_elems(ctx.c_ipa, {d}),
                           gather_elems(ctx.c_iap, {d}), gather_elems(ctx.c_iapa, {d})});
    if (modality == Modality::image) {
        // img_i against pc_j and pc_aug_j, j != i
        out.neg = concat_last({gather_elems(ctx.c_ip, off_diag_row(row, ctx.n)),
                               gather_elems(ctx.c_ipa, off_diag_row(row, ctx.n))});
    } else {
        // pc_i against img_j and img_aug_j, j != i
        out.neg = concat_last({gather_elems(ctx.c_ip, off_diag_col(row, ctx.n)),
                               gather_elems(ctx.c_iap, off_diag_col(row, ctx.n))});
    }
    out.pos_tags.assign(4, PairKind::cross);
    out.neg_tags.assign(static_cast<size_t>(2 * (ctx.n - 1)), PairKind::cross);
    return out;
}

Tensor anchor_loss(const SimContext& ctx, int64_t row, Modality modality,
                   const CircleParams& p) {
    PairSimilarities inter = extract_inter(ctx, row, modality);
    PairSimilarities cross = extract_cross(ctx, row, modality);
    Tensor e_neg = add(circle_exp_neg(inter.neg, p), circle_exp_neg(cross.neg, p));
    Tensor e_pos = add(circle_exp_pos(inter.pos, p), circle_exp_pos(cross.pos, p));
    return log(add_scalar(mul(e_neg, e_pos), 1.0));
}

Tensor batch_loss(const CorrespondenceBatch& batch, const TupleLayout* layout,
                  const CircleParams& p) {
    p.validate();
    SimContext ctx = make_sim_context(batch, layout);
    Tensor total = Tensor::scalar(0.0);
    for (int64_t i = 0; i < ctx.n; ++i) {
        total = add(total, anchor_loss(ctx, i, Modality::image, p));
        total = add(total, anchor_loss(ctx, i, Modality::point, p));
    }
    return scalar_mul(total, 1.0 / static_cast<double>(2 * ctx.n));
}

}  // namespace

Tensor circle_loss(const Tensor& s_pos, const Tensor& s_neg, const CircleParams& p) {
    p.validate();
    if (!s_pos.defined() || s_pos.numel() == 0)
        throw Error("circle_loss: empty positive similarity list (degenerate batch)");
    if (!s_neg.defined() || s_neg.numel() == 0)
        throw Error("circle_loss: empty negative similarity list (degenerate batch)");
    Tensor prod = mul(circle_exp_neg(s_neg, p), circle_exp_pos(s_pos, p));
    return log(add_scalar(prod, 1.0));
}

PairSimilarities build_inter_pairs(const CorrespondenceBatch& batch, int64_t anchor_row,
                                   Modality modality) {
    SimContext ctx = make_sim_context(batch, nullptr);
    if (anchor_row < 0 || anchor_row >= ctx.n)
        throw Error("build_inter_pairs: anchor row out of range");
    return extract_inter(ctx, anchor_row, modality);
}

PairSimilarities build_cross_pairs(const CorrespondenceBatch& batch, int64_t anchor_row,
                                   Modality modality, const TupleLayout& layout) {
    SimContext ctx = make_sim_context(batch, &layout);
    if (anchor_row < 0 || anchor_row >= ctx.n)
        throw Error("build_cross_pairs: anchor row out of range");
    return extract_cross(ctx, anchor_row, modality);
}

Tensor tuple_circle_loss(const CorrespondenceBatch& batch, const TupleLayout& layout,
                         const CircleParams& p) {
    return batch_loss(batch, &layout, p);
}

Tensor circle_loss_batch(const CorrespondenceBatch& batch, const CircleParams& p) {
    return batch_loss(batch, nullptr, p);
}

}  // namespace xmodal
