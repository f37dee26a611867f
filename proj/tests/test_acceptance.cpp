// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria can be filtered by name on the command line, e.g.
// `acceptance AC-1 AC-5`. The training matrix behind AC-2/3/4 runs once and
// is shared between those criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xmodal/cluster.hpp"
#include "xmodal/config.hpp"
#include "xmodal/eval.hpp"
#include "xmodal/gradcheck_suite.hpp"
#include "xmodal/trainer.hpp"

namespace fs = std::filesystem;
using namespace xmodal;

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path temp_root() {
    const fs::path root = fs::temp_directory_path() / "xm_acceptance";
    fs::create_directories(root);
    return root;
}

// ---- AC-2/3/4 training matrix -------------------------------------------

struct EvalPoint {
    int64_t step = 0;
    double acc_i = 0.0, acc_p = 0.0, acc_s = 0.0;
};

struct ArmResult {
    std::vector<EvalPoint> curve;
    EvalPoint final;
    double seconds = 0.0;
};

RunConfig arm_config(uint64_t seed, const std::string& variant, bool use_asfp) {
    RunConfig cfg = load_run_config(std::string(XMODAL_CONFIG_DIR) + "/toy.json");
    cfg.seed = seed;
    cfg.loss.variant = variant;
    cfg.point.use_asfp = use_asfp;
    return cfg;
}

EvalPoint eval_point(int64_t step, const std::vector<SceneSample>& val, const RunConfig& cfg,
                     const Models& models, ParamStore& params) {
    EvalPoint e;
    e.step = step;
    for (size_t v = 0; v < val.size(); ++v) {
        CorrespondenceBatch batch =
            training_batch(val[v], cfg, mix_seed(cfg.seed, 0xe7a1u + v), models, params);
        MatchReport rep = acc_suite(batch, cfg.layout(), cfg.eval.n_sample,
                                    mix_seed(cfg.seed, 0xacc0u + v));
        e.acc_i += rep.acc_i;
        e.acc_p += rep.acc_p;
        e.acc_s += rep.acc_s;
    }
    const double n = static_cast<double>(val.size());
    e.acc_i /= n;
    e.acc_p /= n;
    e.acc_s /= n;
    return e;
}

// Same schedule as train_run, but held-out accuracy is averaged over every
// validation scene to damp the per-scene matching noise.
ArmResult run_arm(const RunConfig& cfg) {
    const double t0 = now_seconds();
    Models models = build_models(cfg);
    ParamStore params;
    init_model_params(cfg, models, params);

    std::vector<SceneSample> train =
        generate_scene_set(cfg.data.train_seed_base, cfg.data.n_train_scenes, cfg.data.scene);
    std::vector<SceneSample> val =
        generate_scene_set(cfg.data.val_seed_base, cfg.data.n_val_scenes, cfg.data.scene);

    AdamWConfig ocfg;
    ocfg.lr = cfg.optim.lr;
    ocfg.weight_decay = cfg.optim.weight_decay;
    AdamW opt(ocfg);

    ArmResult res;
    res.curve.push_back(eval_point(0, val, cfg, models, params));
    int64_t step = 0;
    bool capped = false;
    for (int64_t epoch = 0; epoch < cfg.optim.epochs && !capped; ++epoch) {
        opt.set_lr(decayed_lr(cfg.optim.lr, cfg.optim.decay, epoch));
        for (size_t si = 0; si < train.size(); ++si) {
            if (cfg.optim.max_steps > 0 && step >= cfg.optim.max_steps) {
                capped = true;
                break;
            }
            const uint64_t step_seed = mix_seed(cfg.seed, 0x57e0u + static_cast<uint64_t>(step));
            CorrespondenceBatch batch = training_batch(train[si], cfg, step_seed, models, params);
            Tensor loss = run_loss(batch, cfg);
            backward(loss);
            opt.step(params);
            ++step;
            if (step % cfg.eval.eval_every == 0)
                res.curve.push_back(eval_point(step, val, cfg, models, params));
        }
    }
    if (res.curve.back().step != step) res.curve.push_back(eval_point(step, val, cfg, models, params));
    res.final = res.curve.back();
    res.seconds = now_seconds() - t0;
    return res;
}

struct Matrix {
    std::vector<uint64_t> seeds{1, 2, 3};
    std::vector<ArmResult> tuple, circle, vanilla_fp;  // one per seed
};

const Matrix& training_matrix() {
    static std::optional<Matrix> cached;
    if (!cached) {
        Matrix m;
        for (uint64_t seed : m.seeds) {
            for (const auto& [variant, asfp, dst] :
                 {std::tuple{"tuple_circle", true, &m.tuple},
                  std::tuple{"circle", true, &m.circle},
                  std::tuple{"tuple_circle", false, &m.vanilla_fp}}) {
                std::cerr << "  [matrix] seed " << seed << " variant " << variant
                          << (asfp ? "" : " (vanilla fp)") << "..." << std::flush;
                dst->push_back(run_arm(arm_config(seed, variant, asfp)));
                std::cerr << " final acc_s " << dst->back().final.acc_s << ", acc_p "
                          << dst->back().final.acc_p << " (" << dst->back().seconds << "s)\n";
                std::cerr << "    acc_s curve:";
                for (const EvalPoint& e : dst->back().curve) std::cerr << ' ' << e.acc_s;
                std::cerr << '\n';
            }
        }
        cached = std::move(m);
    }
    return *cached;
}

int64_t steps_to_reach(const ArmResult& arm, double target) {
    for (const EvalPoint& e : arm.curve)
        if (e.acc_s >= target) return e.step;
    return std::numeric_limits<int64_t>::max();
}

// ---- criteria ------------------------------------------------------------

bool ac1(std::string& detail) {
    const double t0 = now_seconds();
    std::vector<GradCheckResult> results = gradcheck_suite();
    const double dt = now_seconds() - t0;
    double worst = 0.0;
    std::string worst_name;
    bool ok = !results.empty();
    for (const GradCheckResult& r : results) {
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = r.name;
        }
        if (!r.passed()) {
            detail = r.name + " rel error " + std::to_string(r.max_rel_error) + " >= tol " +
                     std::to_string(r.tol);
            ok = false;
        }
    }
    if (dt >= 60.0) {
        detail = "suite took " + std::to_string(dt) + "s";
        ok = false;
    }
    if (ok) {
        std::ostringstream os;
        os << results.size() << " checks, worst " << worst_name << " rel error " << worst
           << ", " << dt << "s";
        detail = os.str();
    }
    return ok;
}

bool ac2(std::string& detail) {
    const Matrix& m = training_matrix();
    std::vector<double> tf, cf, ts, cs;
    bool budget_ok = true;
    for (size_t i = 0; i < m.seeds.size(); ++i) {
        tf.push_back(m.tuple[i].final.acc_s);
        cf.push_back(m.circle[i].final.acc_s);
        const double target = m.circle[i].final.acc_s;
        ts.push_back(static_cast<double>(steps_to_reach(m.tuple[i], target)));
        cs.push_back(static_cast<double>(steps_to_reach(m.circle[i], target)));
        if (m.tuple[i].seconds >= 600.0 || m.circle[i].seconds >= 600.0) budget_ok = false;
    }
    const double med_tf = median3(tf), med_cf = median3(cf);
    const double med_ts = median3(ts), med_cs = median3(cs);
    std::ostringstream os;
    os << "final acc_s median tuple " << med_tf << " vs circle " << med_cf
       << "; steps to circle-final median tuple " << med_ts << " vs circle " << med_cs;
    if (!budget_ok) os << "; a run exceeded 600s";
    detail = os.str();
    return budget_ok && med_tf > med_cf && med_ts < med_cs;
}

bool ac3(std::string& detail) {
    const Matrix& m = training_matrix();
    std::ostringstream os;
    bool ok = true;
    for (size_t i = 0; i < m.seeds.size(); ++i) {
        const EvalPoint& f = m.tuple[i].final;
        os << (i ? "; " : "") << "seed " << m.seeds[i] << " acc_i " << f.acc_i << " acc_p "
           << f.acc_p << " acc_s " << f.acc_s;
        if (f.acc_i < f.acc_s || f.acc_p < f.acc_s) ok = false;
    }
    detail = os.str();
    return ok;
}

bool ac4(std::string& detail) {
    const Matrix& m = training_matrix();
    std::vector<double> ap, as, vp, vs;
    for (size_t i = 0; i < m.seeds.size(); ++i) {
        ap.push_back(m.tuple[i].final.acc_p);
        as.push_back(m.tuple[i].final.acc_s);
        vp.push_back(m.vanilla_fp[i].final.acc_p);
        vs.push_back(m.vanilla_fp[i].final.acc_s);
    }
    std::ostringstream os;
    os << "median acc_p asfp " << median3(ap) << " vs fp " << median3(vp) << "; median acc_s asfp "
       << median3(as) << " vs fp " << median3(vs);
    detail = os.str();
    return median3(ap) >= median3(vp) && median3(as) >= median3(vs);
}

CorrespondenceBatch random_batch(int64_t n, int64_t d, Rng& rng) {
    auto mat = [&] {
        std::vector<double> v(static_cast<size_t>(n * d));
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        return Tensor({n, d}, std::move(v));
    };
    return CorrespondenceBatch{mat(), mat(), mat(), mat()};
}

bool ac5(std::string& detail) {
    CircleParams p;
    // self-paced weight clamps and monotonicity
    double prev_neg = -1.0;
    for (double s = -2.0; s <= 3.0; s += 0.01) {
        if (alpha_pos(s, p) < 0.0 || alpha_neg(s, p) < 0.0) {
            detail = "negative weight at s=" + std::to_string(s);
            return false;
        }
        if (s >= 1.0 + p.margin && alpha_pos(s, p) != 0.0) {
            detail = "alpha_pos not clamped at s=" + std::to_string(s);
            return false;
        }
        if (alpha_neg(s, p) < prev_neg) {
            detail = "alpha_neg decreased at s=" + std::to_string(s);
            return false;
        }
        prev_neg = alpha_neg(s, p);
    }
    // per-row positive rescaling leaves every cosine, hence the loss, unchanged
    Rng rng(501);
    TupleLayout layout{8, 8};
    CorrespondenceBatch batch = random_batch(12, 16, rng);
    const double base = tuple_circle_loss(batch, layout, p).item();
    CorrespondenceBatch scaled = batch;
    for (Tensor* t : {&scaled.img, &scaled.img_aug, &scaled.pc, &scaled.pc_aug}) {
        std::vector<double> v = t->values();
        for (int64_t r = 0; r < 12; ++r) {
            const double c = rng.uniform(0.05, 20.0);
            for (int64_t j = 0; j < 16; ++j) v[static_cast<size_t>(r * 16 + j)] *= c;
        }
        *t = Tensor({12, 16}, std::move(v));
    }
    const double rescaled = tuple_circle_loss(scaled, layout, p).item();
    if (std::abs(base - rescaled) > 1e-12 * std::max(1.0, std::abs(base))) {
        detail = "loss moved under row rescaling: " + std::to_string(base) + " vs " +
                 std::to_string(rescaled);
        return false;
    }
    // pair counts across batch sizes
    for (int64_t n = 2; n <= 64; ++n) {
        CorrespondenceBatch b = random_batch(n, 8, rng);
        for (Modality mod : {Modality::image, Modality::point}) {
            PairSimilarities inter = build_inter_pairs(b, n / 2, mod);
            PairSimilarities cross = build_cross_pairs(b, n / 2, mod, TupleLayout{4, 4});
            if (inter.pos.shape()[0] != 1 || inter.neg.shape()[0] != n - 1 ||
                cross.pos.shape()[0] != 4 || cross.neg.shape()[0] != 2 * (n - 1)) {
                detail = "pair counts wrong at N=" + std::to_string(n);
                return false;
            }
        }
    }
    detail = "weight clamps, row-rescaling invariance, pair counts for N in [2,64]";
    return true;
}

std::vector<int64_t> fps_oracle(const Tensor& xyz, int64_t k, int64_t seed_index) {
    const int64_t p = xyz.shape()[0];
    const auto& v = xyz.values();
    auto d2 = [&](int64_t a, int64_t b) {
        double s = 0.0;
        for (int64_t j = 0; j < 3; ++j) {
            const double d = v[static_cast<size_t>(a * 3 + j)] - v[static_cast<size_t>(b * 3 + j)];
            s += d * d;
        }
        return s;
    };
    std::vector<int64_t> picked{seed_index};
    while (static_cast<int64_t>(picked.size()) < k) {
        int64_t best = -1;
        double best_d = -1.0;
        for (int64_t i = 0; i < p; ++i) {
            double mind = std::numeric_limits<double>::infinity();
            for (int64_t s : picked) mind = std::min(mind, d2(i, s));
            if (mind > best_d) {
                best_d = mind;
                best = i;
            }
        }
        picked.push_back(best);
    }
    return picked;
}

bool ac6(std::string& detail) {
    Rng rng(601);
    auto rand_xyz = [&](int64_t p) {
        std::vector<double> v(static_cast<size_t>(p * 3));
        for (auto& x : v) x = rng.uniform(-4.0, 4.0);
        return Tensor({p, 3}, std::move(v));
    };
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t p = 2 + rng.uniform_int(63);
        const int64_t k = 1 + rng.uniform_int(p);
        const int64_t seed_index = rng.uniform_int(p);
        Tensor xyz = rand_xyz(p);
        if (farthest_point_sample(xyz, k, seed_index) != fps_oracle(xyz, k, seed_index)) {
            detail = "fps diverged from greedy oracle at trial " + std::to_string(trial);
            return false;
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t n = 2 + rng.uniform_int(19);
        const int64_t d = 2 + rng.uniform_int(7);
        auto mat = [&] {
            std::vector<double> v(static_cast<size_t>(n * d));
            for (auto& x : v) x = rng.uniform(-1.0, 1.0);
            v[0] += 2.0;  // no chance of a degenerate zero row
            return Tensor({n, d}, std::move(v));
        };
        Tensor a = mat(), b = mat();
        const auto& av = a.values();
        const auto& bv = b.values();
        int64_t correct = 0;
        for (int64_t i = 0; i < n; ++i) {
            int64_t best = 0;
            double best_cos = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j < n; ++j) {
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (int64_t c = 0; c < d; ++c) {
                    const double x = av[static_cast<size_t>(i * d + c)];
                    const double y = bv[static_cast<size_t>(j * d + c)];
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
                if (cos > best_cos) {
                    best_cos = cos;
                    best = j;
                }
            }
            if (best == i) ++correct;
        }
        const double oracle = static_cast<double>(correct) / static_cast<double>(n);
        if (std::abs(match_accuracy(a, b) - oracle) > 1e-15) {
            detail = "match_accuracy diverged from brute force at trial " + std::to_string(trial);
            return false;
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t k = 2 + rng.uniform_int(4);
        const int64_t n = k + 4 + rng.uniform_int(20);
        const int64_t d = 3 + rng.uniform_int(4);
        std::vector<double> v(static_cast<size_t>(n * d));
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        Tensor data({n, d}, std::move(v));
        double prev = -std::numeric_limits<double>::infinity();
        for (int64_t budget = 1; budget <= 4; ++budget) {
            const double obj = spherical_kmeans(data, k, budget, 77).objective;
            if (obj + 1e-9 < prev) {
                detail = "k-means objective decreased at trial " + std::to_string(trial);
                return false;
            }
            prev = obj;
        }
        ClusterResult done = spherical_kmeans(data, k, 100, 77);
        if (done.iterations >= 100) {
            detail = "k-means failed to converge at trial " + std::to_string(trial);
            return false;
        }
        ClusterResult again = spherical_kmeans(data, k, done.iterations + 5, 77);
        if (again.assignments != done.assignments || again.objective != done.objective) {
            detail = "k-means fixpoint unstable at trial " + std::to_string(trial);
            return false;
        }
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t u = 1 + rng.uniform_int(16);
        const int64_t m = 1 + rng.uniform_int(8);
        Tensor up = rand_xyz(u), down = rand_xyz(m);
        std::vector<int64_t> idx;
        std::vector<double> w;
        int64_t k_per_row = 0;
        interpolation_weights(up, down, idx, w, k_per_row);
        if (k_per_row != std::min<int64_t>(3, m)) {
            detail = "interpolation neighbor count wrong at trial " + std::to_string(trial);
            return false;
        }
        for (int64_t r = 0; r < u; ++r) {
            double s = 0.0;
            for (int64_t j = 0; j < k_per_row; ++j) s += w[static_cast<size_t>(r * k_per_row + j)];
            if (std::abs(s - 1.0) > 1e-12) {
                detail = "interpolation weights sum to " + std::to_string(s);
                return false;
            }
        }
    }
    detail = "fps, matching, k-means and interpolation agree with their oracles (100 trials each)";
    return true;
}

bool ac7(std::string& detail) {
    RunConfig cfg = arm_config(0, "tuple_circle", true);
    double correct = 0.0, trials = 0.0;
    for (uint64_t init_seed : {101u, 102u, 103u}) {
        cfg.seed = init_seed;
        Models models = build_models(cfg);
        ParamStore params;
        init_model_params(cfg, models, params);
        std::vector<SceneSample> scenes = generate_scene_set(500 + 37 * init_seed, 4,
                                                             cfg.data.scene);
        for (size_t v = 0; v < scenes.size(); ++v) {
            CorrespondenceBatch batch = training_batch(scenes[v], cfg,
                                                       mix_seed(init_seed, 0xb00 + v), models,
                                                       params);
            MatchReport rep = acc_suite(batch, cfg.layout(), cfg.eval.n_sample,
                                        mix_seed(init_seed, 0xacc0u + v));
            correct += rep.acc_s * static_cast<double>(rep.n_sampled);
            trials += static_cast<double>(rep.n_sampled);
        }
    }
    const double chance = 1.0 / static_cast<double>(cfg.optim.batch_n);
    const double sigma = std::sqrt(chance * (1.0 - chance) / trials);
    const double observed = correct / trials;
    std::ostringstream os;
    os << "untrained acc_s " << observed << " over " << trials << " anchors, chance " << chance
       << " +- 3 sigma " << 3.0 * sigma;
    detail = os.str();
    return std::abs(observed - chance) <= 3.0 * sigma;
}

RunConfig tiny_config(const std::string& output_dir) {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.output_dir = output_dir;
    cfg.data.n_train_scenes = 2;
    cfg.data.n_val_scenes = 1;
    cfg.data.scene.image_height = 16;
    cfg.data.scene.image_width = 32;
    cfg.data.scene.n_points = 192;
    cfg.data.scene.min_correspondences = 16;
    cfg.point.sa_levels = {SAConfig{24, {0.6}, 8, {{8}}}};
    cfg.point.asfp_radii = {0.8};
    cfg.point.asfp_k_max = 4;
    cfg.point.asfp_mlp = {{8}};
    cfg.point.fp_mlp = {{8}};
    cfg.point.head_width = 8;
    cfg.image.stage_channels = {4, 8};
    cfg.image.head_width = 8;
    cfg.loss.d_shared = 4;
    cfg.optim.batch_n = 8;
    cfg.optim.epochs = 2;
    cfg.optim.max_steps = 4;
    cfg.eval.n_sample = 8;
    cfg.eval.eval_every = 2;
    return cfg;
}

bool ac8(std::string& detail) {
    const fs::path root = temp_root();
    fs::remove_all(root / "det1");
    fs::remove_all(root / "det2");
    train_run(tiny_config((root / "det1").string()));
    train_run(tiny_config((root / "det2").string()));
    for (const char* f : {"final.ckpt", "best.ckpt", "acc_curve.csv"}) {
        if (read_file(root / "det1" / f) != read_file(root / "det2" / f)) {
            detail = std::string(f) + " differs between identical runs";
            return false;
        }
    }
    // save/load must reproduce forward passes bit for bit
    RunConfig cfg = tiny_config((root / "det1").string());
    Models models = build_models(cfg);
    ParamStore params;
    init_model_params(cfg, models, params);
    uint64_t cursor = 7000;
    SceneSample scene = generate_scene_retry(cursor, cfg.data.scene);
    AdamW opt(AdamWConfig{});
    for (int step = 0; step < 2; ++step) {
        CorrespondenceBatch batch =
            training_batch(scene, cfg, mix_seed(cfg.seed, 0x77 + step), models, params);
        backward(run_loss(batch, cfg));
        opt.step(params);
    }
    CorrespondenceBatch before =
        training_batch(scene, cfg, mix_seed(cfg.seed, 0x99), models, params);
    const fs::path ckpt = root / "roundtrip.ckpt";
    save_checkpoint(params, ckpt.string());
    RunConfig other = cfg;
    other.seed = cfg.seed + 11;  // loading must erase any trace of this init
    ParamStore reloaded;
    init_model_params(other, models, reloaded);
    load_checkpoint(reloaded, ckpt.string());
    CorrespondenceBatch after =
        training_batch(scene, cfg, mix_seed(cfg.seed, 0x99), models, reloaded);
    const std::vector<std::pair<const Tensor*, const Tensor*>> views = {
        {&before.img, &after.img},
        {&before.img_aug, &after.img_aug},
        {&before.pc, &after.pc},
        {&before.pc_aug, &after.pc_aug}};
    for (auto [a, b] : views) {
        if (a->values() != b->values()) {
            detail = "forward pass changed across checkpoint save/load";
            return false;
        }
    }
    detail = "repeated runs byte-identical; checkpoint roundtrip reproduces forwards bitwise";
    return true;
}

bool expect_error(const std::function<void()>& f, const std::string& needle, std::string& detail) {
    try {
        f();
    } catch (const Error& e) {
        if (std::string(e.what()).find(needle) != std::string::npos) return true;
        detail = "error lacked '" + needle + "': " + e.what();
        return false;
    }
    detail = "no error raised (expected '" + needle + "')";
    return false;
}

bool ac9(std::string& detail) {
    const fs::path root = temp_root();
    RunConfig cfg = tiny_config((root / "fmt").string());
    uint64_t cursor = 4200;
    SceneSample scene = generate_scene_retry(cursor, cfg.data.scene);

    const fs::path d1 = root / "pair1", d2 = root / "pair2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    save_pair_dir(scene, d1.string());
    SceneSample loaded = load_pair_dir(d1.string());
    save_pair_dir(loaded, d2.string());
    for (const char* f : {"image.pgm", "points.bin", "corr.txt", "camera.json"}) {
        if (read_file(d1 / f) != read_file(d2 / f)) {
            detail = std::string(f) + " not byte-stable across save/load/save";
            return false;
        }
    }
    if (loaded.cloud.xyz.values() != scene.cloud.xyz.values()) {
        detail = "point coordinates not bitwise preserved";
        return false;
    }

    // independent PGM reader: header tokens, then big-endian 16-bit samples
    {
        std::istringstream is(read_file(d1 / "image.pgm"));
        std::string magic;
        int64_t w = 0, h = 0, maxval = 0;
        is >> magic >> w >> h >> maxval;
        is.get();  // single whitespace before the raster
        if (magic != "P5" || w != cfg.data.scene.image_width ||
            h != cfg.data.scene.image_height || maxval != 65535) {
            detail = "unexpected PGM header: " + magic + " " + std::to_string(w) + "x" +
                     std::to_string(h) + " max " + std::to_string(maxval);
            return false;
        }
        std::string raster(static_cast<size_t>(2 * w * h), '\0');
        is.read(raster.data(), static_cast<std::streamsize>(raster.size()));
        if (!is || is.peek() != EOF) {
            detail = "PGM raster size mismatch";
            return false;
        }
        const auto hi = static_cast<unsigned char>(raster[0]);
        const auto lo = static_cast<unsigned char>(raster[1]);
        const int64_t sample = (static_cast<int64_t>(hi) << 8) | lo;
        if (sample != std::llround(scene.image.values.values()[0] * 65535.0)) {
            detail = "first PGM sample disagrees with quantized intensity";
            return false;
        }
    }

    // malformed inputs must be rejected with structured errors
    auto corrupt_copy = [&](const char* file, const std::string& bytes, bool truncate) {
        const fs::path dir = root / "bad";
        fs::remove_all(dir);
        fs::copy(d1, dir);
        std::string content = truncate ? read_file(dir / file).substr(0, 40) : bytes;
        std::ofstream(dir / file, std::ios::binary) << content;
        return dir.string();
    };
    if (!expect_error([&] { load_pair_dir(corrupt_copy("points.bin", "XXXXgarbage", false)); },
                      "magic", detail))
        return false;
    if (!expect_error([&] { load_pair_dir(corrupt_copy("points.bin", "", true)); }, "truncated",
                      detail))
        return false;
    if (!expect_error([&] { load_pair_dir(corrupt_copy("corr.txt", "3 4\n", false)); },
                      "malformed correspondence", detail))
        return false;
    if (!expect_error([&] { load_pair_dir(corrupt_copy("camera.json", "{not json", false)); },
                      "JSON", detail))
        return false;

    // CSV through an independent reader
    {
        const fs::path csv = root / "curve.csv";
        std::vector<CurveRow> rows(3);
        for (size_t i = 0; i < rows.size(); ++i) {
            rows[i].step = static_cast<int64_t>(i) * 10;
            rows[i].acc_s = 0.25 * static_cast<double>(i);
            rows[i].loss = 3.5 - static_cast<double>(i);
        }
        write_curve_csv(rows, csv.string());
        std::ifstream is(csv);
        std::string line;
        std::getline(is, line);
        if (line != "step,acc_i,acc_p,acc_c,acc_s,loss") {
            detail = "unexpected CSV header: " + line;
            return false;
        }
        size_t n_rows = 0;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string field;
            size_t n_fields = 0;
            while (std::getline(ls, field, ',')) {
                size_t used = 0;
                std::stod(field, &used);
                if (used != field.size()) {
                    detail = "non-numeric CSV field: " + field;
                    return false;
                }
                ++n_fields;
            }
            if (n_fields != 6) {
                detail = "CSV row with " + std::to_string(n_fields) + " fields";
                return false;
            }
            ++n_rows;
        }
        if (n_rows != rows.size()) {
            detail = "CSV row count mismatch";
            return false;
        }
    }

    // label-map PPM through an independent reader
    {
        const fs::path ppm = root / "labels.ppm";
        std::vector<int64_t> labels(4 * 6);
        for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int64_t>(i % 3);
        export_label_map_image(labels, 4, 6, 3, 9, ppm.string());
        std::istringstream is(read_file(ppm));
        std::string magic;
        int64_t w = 0, h = 0, maxval = 0;
        is >> magic >> w >> h >> maxval;
        is.get();
        std::string raster(static_cast<size_t>(3 * w * h), '\0');
        is.read(raster.data(), static_cast<std::streamsize>(raster.size()));
        if (magic != "P6" || w != 6 || h != 4 || maxval != 255 || !is || is.peek() != EOF) {
            detail = "unexpected PPM layout";
            return false;
        }
    }
    detail = "pair-dir roundtrip, malformed rejection, PGM/PPM/CSV verified with independent readers";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<std::string> only(argv + 1, argv + argc);
    const std::vector<std::pair<std::string, std::function<bool(std::string&)>>> criteria = {
        {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4}, {"AC-5", ac5},
        {"AC-6", ac6}, {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && !only.count(name)) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::cout << name << (ok ? " PASS" : " FAIL") << (detail.empty() ? "" : " - " + detail)
                  << std::endl;
        if (!ok) ++failures;
    }
    return failures;
}
