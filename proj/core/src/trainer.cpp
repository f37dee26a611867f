#include "xmodal/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace xmodal {

SceneSample generate_scene_retry(uint64_t& seed_cursor, const SceneConfig& cfg,
                                 int64_t max_attempts) {
    for (int64_t a = 0; a < max_attempts; ++a) {
        const uint64_t seed = seed_cursor++;
        try {
            return generate_scene(seed, cfg);
        } catch (const Error&) {
            // sparse draw; try the next seed
        }
    }
    throw Error("generate_scene_retry: no viable scene in " + std::to_string(max_attempts) +
                " attempts");
}

std::vector<SceneSample> generate_scene_set(uint64_t seed_base, int64_t count,
                                            const SceneConfig& cfg) {
    std::vector<SceneSample> scenes;
    scenes.reserve(static_cast<size_t>(count));
    uint64_t cursor = seed_base;
    for (int64_t i = 0; i < count; ++i) scenes.push_back(generate_scene_retry(cursor, cfg));
    return scenes;
}

Models build_models(const RunConfig& cfg) {
    return Models{PointEncoder(cfg.point, 1), ImageEncoder(cfg.image, 1)};
}

void init_model_params(const RunConfig& cfg, const Models& models, ParamStore& params) {
    Rng rng(mix_seed(cfg.seed, 0x1417u));
    models.image.init_params(params, rng);
    models.point.init_params(params, rng);
}

CorrespondenceBatch training_batch(const SceneSample& scene, const RunConfig& cfg,
                                   uint64_t seed, const Models& models, ParamStore& params,
                                   BatchGeometry* geometry) {
    for (uint64_t salt = 0; salt < 32; ++salt) {
        AugmentedPair pair = make_augmented_pair(scene, mix_seed(seed, salt),
                                                 cfg.data.image_aug, cfg.data.cloud_aug);
        if (static_cast<int64_t>(pair.surviving.size()) < cfg.optim.batch_n) continue;
        return make_batch(pair, cfg.optim.batch_n, mix_seed(seed, 0x6a7c + salt), models.image,
                          models.point, params, geometry);
    }
    throw Error("training_batch: augmentation kept too few correspondences for batch_n=" +
                std::to_string(cfg.optim.batch_n));
}

Tensor run_loss(const CorrespondenceBatch& batch, const RunConfig& cfg) {
    if (cfg.loss.variant == "circle") return circle_loss_batch(batch, cfg.loss.circle);
    return tuple_circle_loss(batch, cfg.layout(), cfg.loss.circle);
}

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("write_curve_csv: cannot write '" + path + "'");
    os << "step,acc_i,acc_p,acc_c,acc_s,loss\n";
    os << std::setprecision(17);
    for (const CurveRow& r : curve)
        os << r.step << "," << r.acc_i << "," << r.acc_p << "," << r.acc_c << "," << r.acc_s
           << "," << r.loss << "\n";
}

namespace {

double grad_norm(const ParamStore& params) {
    double s = 0.0;
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        for (double g : t.grad()) s += g * g;
    }
    return std::sqrt(s);
}

CurveRow eval_row(int64_t step, const SceneSample& held_out, const RunConfig& cfg,
                  const Models& models, ParamStore& params) {
    CorrespondenceBatch batch =
        training_batch(held_out, cfg, mix_seed(cfg.seed, 0xe7a1u), models, params);
    MatchReport rep = acc_suite(batch, cfg.layout(), cfg.eval.n_sample,
                                mix_seed(cfg.seed, 0xacc0u));
    Tensor loss = run_loss(batch, cfg);
    CurveRow row;
    row.step = step;
    row.acc_i = rep.acc_i;
    row.acc_p = rep.acc_p;
    row.acc_c = rep.acc_c;
    row.acc_s = rep.acc_s;
    row.loss = loss.item();
    return row;
}

}  // namespace

TrainResult train_run(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);
    save_run_config(cfg, cfg.output_dir + "/resolved_config.json");

    Models models = build_models(cfg);
    ParamStore params;
    init_model_params(cfg, models, params);

    std::vector<SceneSample> train =
        generate_scene_set(cfg.data.train_seed_base, cfg.data.n_train_scenes, cfg.data.scene);
    std::vector<SceneSample> val =
        generate_scene_set(cfg.data.val_seed_base, cfg.data.n_val_scenes, cfg.data.scene);
    const SceneSample& held_out = val.front();

    AdamWConfig ocfg;
    ocfg.lr = cfg.optim.lr;
    ocfg.weight_decay = cfg.optim.weight_decay;
    AdamW opt(ocfg);

    TrainResult res;
    res.final_checkpoint = cfg.output_dir + "/final.ckpt";
    res.best_checkpoint = cfg.output_dir + "/best.ckpt";

    res.curve.push_back(eval_row(0, held_out, cfg, models, params));
    res.best_acc_s = res.curve.back().acc_s;
    save_checkpoint(params, res.best_checkpoint);

    int64_t step = 0;
    bool capped = false;
    for (int64_t epoch = 0; epoch < cfg.optim.epochs && !capped; ++epoch) {
        opt.set_lr(decayed_lr(cfg.optim.lr, cfg.optim.decay, epoch));
        for (size_t si = 0; si < train.size(); ++si) {
            if (cfg.optim.max_steps > 0 && step >= cfg.optim.max_steps) {
                capped = true;
                break;
            }
            const uint64_t step_seed =
                mix_seed(cfg.seed, 0x57e0u + static_cast<uint64_t>(step));
            CorrespondenceBatch batch =
                training_batch(train[si], cfg, step_seed, models, params);
            Tensor loss = run_loss(batch, cfg);
            const double lval = loss.item();
            if (!std::isfinite(lval)) {
                std::ostringstream diag;
                diag << "non-finite loss at step " << step << " (epoch " << epoch
                     << ", lr " << opt.lr() << ", grad norm " << grad_norm(params) << ")";
                throw NumericalError(diag.str());
            }
            backward(loss);
            opt.step(params);
            ++step;
            if (step % cfg.eval.eval_every == 0) {
                res.curve.push_back(eval_row(step, held_out, cfg, models, params));
                if (res.curve.back().acc_s > res.best_acc_s) {
                    res.best_acc_s = res.curve.back().acc_s;
                    save_checkpoint(params, res.best_checkpoint);
                }
            }
        }
    }
    if (res.curve.back().step != step) {
        res.curve.push_back(eval_row(step, held_out, cfg, models, params));
        if (res.curve.back().acc_s > res.best_acc_s) {
            res.best_acc_s = res.curve.back().acc_s;
            save_checkpoint(params, res.best_checkpoint);
        }
    }
    res.steps = step;
    res.final_row = res.curve.back();
    save_checkpoint(params, res.final_checkpoint);
    write_curve_csv(res.curve, cfg.output_dir + "/acc_curve.csv");
    return res;
}

}  // namespace xmodal
