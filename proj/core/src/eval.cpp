#include "xmodal/eval.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "xmodal/ops.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

namespace {

// plain-value row normalization; independent of the autodiff path
std::vector<double> normalized_rows(const Tensor& t) {
    const int64_t r = t.shape()[0], c = t.shape()[1];
    const auto& v = t.values();
    std::vector<double> out(v.size());
    for (int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += v[i * c + j] * v[i * c + j];
        const double n = std::sqrt(s);
        if (n <= 1e-12)
            throw Error("match_accuracy: zero-norm feature row " + std::to_string(i));
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = v[i * c + j] / n;
    }
    return out;
}

}  // namespace

double match_accuracy(const Tensor& anchors, const Tensor& candidates,
                      std::vector<MatchRecord>* records) {
    if (anchors.shape() != candidates.shape() || anchors.shape().size() != 2)
        throw Error("match_accuracy: anchors and candidates must be equal-shape [N,D]");
    const int64_t n = anchors.shape()[0], d = anchors.shape()[1];
    if (n < 2) throw Error("match_accuracy: need N >= 2");
    const std::vector<double> na = normalized_rows(anchors);
    const std::vector<double> nc = normalized_rows(candidates);
    int64_t correct = 0;
    if (records) records->clear();
    for (int64_t i = 0; i < n; ++i) {
        double best = -2.0;
        int64_t bi = 0;
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < d; ++k) s += na[i * d + k] * nc[j * d + k];
            if (s > best) {  // strict: ties keep the lowest index
                best = s;
                bi = j;
            }
        }
        if (bi == i) ++correct;
        if (records) records->push_back(MatchRecord{i, bi, i, best});
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

MatchReport acc_suite(const CorrespondenceBatch& batch, const TupleLayout& layout,
                      int64_t n_sample, uint64_t seed) {
    batch.validate();
    layout.validate(batch.width());
    const int64_t n = batch.rows();
    if (n_sample < 2 || n_sample > n)
        throw Error("acc_suite: n_sample=" + std::to_string(n_sample) +
                    " out of range for batch of " + std::to_string(n));
    Rng rng(mix_seed(seed, 0xacc50004));
    std::vector<int64_t> rows = sample_without_replacement(rng, n, n_sample);

    const auto pick = [&](const Tensor& t) { return gather_rows(t, rows); };
    const auto shared = [&](const Tensor& t) { return slice_last(t, 0, layout.d_shared); };

    Tensor img = pick(batch.img), img_aug = pick(batch.img_aug);
    Tensor pc = pick(batch.pc), pc_aug = pick(batch.pc_aug);

    MatchReport report;
    report.n_sampled = n_sample;
    report.acc_i = match_accuracy(img, img_aug);
    report.acc_p = match_accuracy(pc, pc_aug);
    report.acc_c = match_accuracy(img, pc);
    report.acc_s = match_accuracy(shared(img), shared(pc), &report.cross_records);
    // map record rows back to original batch rows
    for (auto& r : report.cross_records) {
        r.anchor = rows[r.anchor];
        r.predicted = rows[r.predicted];
        r.truth = rows[r.truth];
    }
    return report;
}

int64_t Histogram::total() const {
    int64_t t = 0;
    for (int64_t c : count) t += c;
    return t;
}

void Histogram::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("Histogram::write_csv: cannot write '" + path + "'");
    os << "bin_low,bin_high,count\n";
    for (size_t i = 0; i < count.size(); ++i) {
        os << bin_low[i] << ",";
        if (std::isinf(bin_high[i]))
            os << "inf";
        else
            os << bin_high[i];
        os << "," << count[i] << "\n";
    }
}

Histogram mismatch_pixel_histogram(const std::vector<MatchRecord>& records,
                                   const std::vector<Correspondence>& correspondences,
                                   const PointCloud& cloud, const CameraModel& cam,
                                   const std::vector<double>& bin_edges) {
    if (bin_edges.empty()) throw Error("mismatch_pixel_histogram: need at least one bin edge");
    for (size_t i = 1; i < bin_edges.size(); ++i)
        if (bin_edges[i] <= bin_edges[i - 1])
            throw Error("mismatch_pixel_histogram: bin edges must be strictly increasing");
    Histogram h;
    h.bin_low.push_back(0.0);
    for (double e : bin_edges) {
        h.bin_high.push_back(e);
        h.bin_low.push_back(e);
    }
    h.bin_high.push_back(std::numeric_limits<double>::infinity());
    h.count.assign(h.bin_low.size(), 0);

    const auto& xyz = cloud.xyz.values();
    for (const MatchRecord& r : records) {
        if (r.predicted == r.truth) continue;
        if (r.truth >= static_cast<int64_t>(correspondences.size()) ||
            r.predicted >= static_cast<int64_t>(correspondences.size()))
            throw Error("mismatch_pixel_histogram: record row outside correspondence list");
        const Correspondence& truth = correspondences[r.truth];
        const int64_t pi = correspondences[r.predicted].point_index;
        if (pi < 0 || pi >= cloud.size())
            throw Error("mismatch_pixel_histogram: missing projection data for point " +
                        std::to_string(pi));
        const auto proj =
            project_point({xyz[pi * 3], xyz[pi * 3 + 1], xyz[pi * 3 + 2]}, cam);
        if (!proj)
            throw Error("mismatch_pixel_histogram: predicted point projects behind the camera");
        const double dr = proj->row - static_cast<double>(truth.row);
        const double dc = proj->col - static_cast<double>(truth.col);
        const double dist = std::sqrt(dr * dr + dc * dc);
        size_t bin = 0;
        while (bin + 1 < h.count.size() && dist >= h.bin_high[bin]) ++bin;
        ++h.count[bin];
    }
    return h;
}

}  // namespace xmodal
