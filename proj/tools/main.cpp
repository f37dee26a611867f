#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "xmodal/cluster.hpp"
#include "xmodal/config.hpp"
#include "xmodal/eval.hpp"
#include "xmodal/gradcheck_suite.hpp"
#include "xmodal/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xmodal;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string loss_override;
    uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_run_config(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (!opts.loss_override.empty()) cfg.loss.variant = opts.loss_override;
    cfg.validate();
    return cfg;
}

int cmd_gen_data(const CommonOpts& opts) {
    RunConfig cfg = resolve_config(opts);
    fs::create_directories(cfg.output_dir);
    json manifest;
    manifest["scenes"] = json::array();
    const auto emit = [&](const char* role, uint64_t base, int64_t count) {
        uint64_t cursor = base;
        for (int64_t i = 0; i < count; ++i) {
            SceneSample s = generate_scene_retry(cursor, cfg.data.scene);
            std::ostringstream name;
            name << role << "_" << std::setw(4) << std::setfill('0') << i;
            const std::string dir = cfg.output_dir + "/" + name.str();
            save_pair_dir(s, dir);
            manifest["scenes"].push_back({{"dir", name.str()},
                                          {"role", role},
                                          {"scene_id", s.scene_id},
                                          {"seed", s.rng_seed}});
        }
    };
    emit("train", cfg.data.train_seed_base, cfg.data.n_train_scenes);
    emit("val", cfg.data.val_seed_base, cfg.data.n_val_scenes);
    std::ofstream os(cfg.output_dir + "/manifest.json");
    if (!os) throw Error("gen-data: cannot write manifest");
    os << manifest.dump(2) << "\n";
    save_run_config(cfg, cfg.output_dir + "/resolved_config.json");
    std::cout << "wrote " << manifest["scenes"].size() << " scenes to " << cfg.output_dir
              << "\n";
    return 0;
}

std::vector<SceneSample> load_manifest_scenes(const std::string& data_dir,
                                              const std::string& role) {
    std::ifstream is(data_dir + "/manifest.json");
    if (!is) throw Error("manifest: cannot read '" + data_dir + "/manifest.json'");
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw Error(std::string("manifest: not valid JSON: ") + e.what());
    }
    if (!manifest.contains("scenes") || !manifest.at("scenes").is_array())
        throw Error("manifest: missing 'scenes' array");
    std::vector<SceneSample> scenes;
    for (const json& entry : manifest.at("scenes")) {
        if (!entry.contains("dir") || !entry.contains("role") || !entry.contains("scene_id"))
            throw Error("manifest: malformed scene entry");
        if (entry.at("role").get<std::string>() != role) continue;
        SceneSample s = load_pair_dir(data_dir + "/" + entry.at("dir").get<std::string>());
        if (s.scene_id != entry.at("scene_id").get<uint64_t>())
            throw Error("manifest: scene id mismatch in '" +
                        entry.at("dir").get<std::string>() + "'");
        scenes.push_back(std::move(s));
    }
    if (scenes.empty()) throw Error("manifest: no '" + role + "' scenes listed");
    return scenes;
}

int cmd_train(const CommonOpts& opts) {
    RunConfig cfg = resolve_config(opts);
    TrainResult res = train_run(cfg);
    std::cout << "trained " << res.steps << " steps; final acc_s " << res.final_row.acc_s
              << "; best acc_s " << res.best_acc_s << "\n";
    std::cout << "checkpoints: " << res.final_checkpoint << " (final), " << res.best_checkpoint
              << " (best)\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& data_dir) {
    RunConfig cfg = resolve_config(opts);
    if (opts.checkpoint.empty()) throw Error("eval: --checkpoint is required");
    Models models = build_models(cfg);
    ParamStore params;
    init_model_params(cfg, models, params);
    load_checkpoint(params, opts.checkpoint);

    std::vector<SceneSample> scenes =
        data_dir.empty()
            ? generate_scene_set(cfg.data.val_seed_base, cfg.data.n_val_scenes, cfg.data.scene)
            : load_manifest_scenes(data_dir, "val");

    fs::create_directories(cfg.output_dir);
    std::ofstream acc(cfg.output_dir + "/acc_report.csv");
    if (!acc) throw Error("eval: cannot write acc_report.csv");
    acc << "scene,acc_i,acc_p,acc_c,acc_s\n" << std::setprecision(17);
    double mi = 0, mp = 0, mc = 0, ms = 0;
    Histogram agg;
    for (size_t si = 0; si < scenes.size(); ++si) {
        BatchGeometry geom;
        CorrespondenceBatch batch = training_batch(
            scenes[si], cfg, mix_seed(cfg.seed, 0xeba1 + si), models, params, &geom);
        MatchReport rep =
            acc_suite(batch, cfg.layout(), cfg.eval.n_sample, mix_seed(cfg.seed, si));
        acc << scenes[si].scene_id << "," << rep.acc_i << "," << rep.acc_p << "," << rep.acc_c
            << "," << rep.acc_s << "\n";
        mi += rep.acc_i;
        mp += rep.acc_p;
        mc += rep.acc_c;
        ms += rep.acc_s;
        // record rows index the sampled batch; geometry rows index the batch
        Histogram h = mismatch_pixel_histogram(rep.cross_records, geom.corr, scenes[si].cloud,
                                               scenes[si].camera, cfg.eval.bin_edges);
        if (agg.count.empty())
            agg = h;
        else
            for (size_t b = 0; b < h.count.size(); ++b) agg.count[b] += h.count[b];
    }
    const double n = static_cast<double>(scenes.size());
    acc << "mean," << mi / n << "," << mp / n << "," << mc / n << "," << ms / n << "\n";
    agg.write_csv(cfg.output_dir + "/mismatch_hist.csv");
    std::cout << "eval over " << scenes.size() << " scenes: acc_i " << mi / n << " acc_p "
              << mp / n << " acc_c " << mc / n << " acc_s " << ms / n << "\n";
    return 0;
}

// [D,H,W] map -> [H*W, D] row-major pixel rows (plain values)
Tensor pixel_rows(const Tensor& map) {
    const int64_t d = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
    const auto& v = map.values();
    std::vector<double> rows(static_cast<size_t>(h * w * d));
    for (int64_t c = 0; c < d; ++c)
        for (int64_t p = 0; p < h * w; ++p) rows[p * d + c] = v[c * h * w + p];
    return Tensor({h * w, d}, std::move(rows));
}

Tensor first_cols(const Tensor& m, int64_t k) {
    const int64_t r = m.shape()[0], c = m.shape()[1];
    const auto& v = m.values();
    std::vector<double> out(static_cast<size_t>(r * k));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < k; ++j) out[i * k + j] = v[i * c + j];
    return Tensor({r, k}, std::move(out));
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
    std::vector<double> v = a.values();
    v.insert(v.end(), b.values().begin(), b.values().end());
    return Tensor({a.shape()[0] + b.shape()[0], a.shape()[1]}, std::move(v));
}

int cmd_visualize(const CommonOpts& opts, const std::string& scene_dir) {
    RunConfig cfg = resolve_config(opts);
    if (opts.checkpoint.empty()) throw Error("visualize: --checkpoint is required");
    Models models = build_models(cfg);
    ParamStore params;
    init_model_params(cfg, models, params);
    load_checkpoint(params, opts.checkpoint);

    SceneSample scene;
    if (scene_dir.empty()) {
        uint64_t cursor = cfg.data.val_seed_base;
        scene = generate_scene_retry(cursor, cfg.data.scene);
    } else {
        scene = load_pair_dir(scene_dir);
    }
    const int64_t h = scene.image.height(), w = scene.image.width();

    Tensor img_map = models.image.forward(scene.image, params);
    Tensor pc_feats = models.point.forward(scene.cloud, params);
    Tensor img_rows = pixel_rows(img_map);

    fs::create_directories(cfg.output_dir);
    const int64_t k = cfg.eval.k_clusters;
    const int64_t iters = cfg.eval.max_kmeans_iters;

    ClusterResult img_full = spherical_kmeans(img_rows, k, iters, mix_seed(cfg.seed, 1));
    export_label_map_image(img_full.assignments, h, w, k, cfg.seed,
                           cfg.output_dir + "/image_clusters.ppm");

    ClusterResult pc_full = spherical_kmeans(pc_feats, k, iters, mix_seed(cfg.seed, 2));
    export_label_map_points(pc_full.assignments, scene.cloud.xyz,
                            cfg.output_dir + "/point_clusters.txt");

    // joint shared-span clustering: one centroid set, one label space
    const int64_t d_sh = cfg.loss.d_shared;
    Tensor joint = stack_rows(first_cols(img_rows, d_sh), first_cols(pc_feats, d_sh));
    ClusterResult shared = spherical_kmeans(joint, k, iters, mix_seed(cfg.seed, 3));
    std::vector<int64_t> img_labels(shared.assignments.begin(),
                                    shared.assignments.begin() + h * w);
    std::vector<int64_t> pc_labels(shared.assignments.begin() + h * w,
                                   shared.assignments.end());
    export_label_map_image(img_labels, h, w, k, cfg.seed,
                           cfg.output_dir + "/shared_image_clusters.ppm");
    export_label_map_points(pc_labels, scene.cloud.xyz,
                            cfg.output_dir + "/shared_point_clusters.txt");

    ClusterResult pos = positional_kmeans(h, w, k, iters, mix_seed(cfg.seed, 4));
    export_label_map_image(pos.assignments, h, w, k, cfg.seed,
                           cfg.output_dir + "/positional_clusters.ppm");

    std::cout << "wrote 5 cluster artifacts to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts&) {
    const std::vector<GradCheckResult> results = gradcheck_suite();
    bool ok = true;
    for (const GradCheckResult& r : results) {
        std::cout << (r.passed() ? "PASS" : "FAIL") << " " << r.name << " max_rel_error "
                  << r.max_rel_error << " tol " << r.tol << "\n";
        ok = ok && r.passed();
    }
    std::cout << (ok ? "gradcheck: all " : "gradcheck: FAILURES among ") << results.size()
              << " checks\n";
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dense cross-modal feature learning between images and point clouds"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string data_dir, scene_dir;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "JSON run config");
        sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
        sub->add_option("--seed", opts.seed, "seed override")
            ->each([&](const std::string&) { opts.seed_set = true; });
        sub->add_option("--checkpoint", opts.checkpoint, "checkpoint path");
        sub->add_option("--loss", opts.loss_override, "loss override")
            ->check(CLI::IsMember({"tuple_circle", "circle"}));
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate paired scenes on disk");
    add_common(gen);
    CLI::App* train = app.add_subcommand("train", "train both encoders");
    add_common(train);
    CLI::App* eval_cmd = app.add_subcommand("eval", "accuracy suite + mismatch histogram");
    add_common(eval_cmd);
    eval_cmd->add_option("data", data_dir, "pair-directory dataset (default: generate)");
    CLI::App* vis = app.add_subcommand("visualize", "cluster label maps");
    add_common(vis);
    vis->add_option("scene", scene_dir, "pair directory (default: first validation scene)");
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    add_common(gc);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(opts);
        if (train->parsed()) return cmd_train(opts);
        if (eval_cmd->parsed()) return cmd_eval(opts, data_dir);
        if (vis->parsed()) return cmd_visualize(opts, scene_dir);
        if (gc->parsed()) return cmd_gradcheck(opts);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
