#include "xmodal/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace xmodal {

using nlohmann::json;

RunConfig::RunConfig() {
    // toy point architecture: two MSG SA levels plus ASFP decoder
    SAConfig sa0;
    sa0.n_out = 128;
    sa0.radii = {0.4, 0.8};
    sa0.k_max = 16;
    sa0.mlp_widths = {{32}, {32}};
    SAConfig sa1;
    sa1.n_out = 32;
    sa1.radii = {0.8, 1.6};
    sa1.k_max = 16;
    sa1.mlp_widths = {{64}, {64}};
    point.sa_levels = {sa0, sa1};
    point.use_asfp = true;
    point.asfp_radii = {1.6, 0.8};
    point.asfp_k_max = 8;
    point.asfp_mlp = {{32}, {32}};
    point.fp_mlp = {{64}, {64}};
    point.head_width = 32;
}

TupleLayout RunConfig::layout() const {
    TupleLayout l;
    l.d_shared = loss.d_shared;
    l.d_private = image.head_width - loss.d_shared;
    return l;
}

void RunConfig::validate() const {
    data.scene.validate();
    point.validate();
    image.validate();
    loss.circle.validate();
    if (loss.variant != "tuple_circle" && loss.variant != "circle")
        throw Error("RunConfig: loss.variant must be 'tuple_circle' or 'circle', got '" +
                    loss.variant + "'");
    if (point.head_width != image.head_width)
        throw Error("RunConfig: encoder widths differ (point " +
                    std::to_string(point.head_width) + " vs image " +
                    std::to_string(image.head_width) + ")");
    layout().validate(image.head_width);
    const int64_t div = int64_t{1} << image.n_downsamples();
    if (data.scene.image_height % div != 0 || data.scene.image_width % div != 0)
        throw Error("RunConfig: scene image size must be divisible by 2^" +
                    std::to_string(image.n_downsamples()));
    if (data.n_train_scenes < 1 || data.n_val_scenes < 1)
        throw Error("RunConfig: need at least one training and one validation scene");
    if (optim.lr <= 0.0 || optim.decay <= 0.0 || optim.decay > 1.0)
        throw Error("RunConfig: optim.lr must be positive and decay in (0,1]");
    if (optim.epochs < 0 || optim.batch_n < 2 || optim.max_steps < 0)
        throw Error("RunConfig: bad optim block (epochs >= 0, batch_n >= 2)");
    if (optim.batch_n > data.scene.min_correspondences)
        throw Error("RunConfig: batch_n exceeds the guaranteed correspondence minimum");
    if (eval.n_sample < 2 || eval.n_sample > optim.batch_n)
        throw Error("RunConfig: eval.n_sample out of [2, batch_n]");
    if (eval.k_clusters < 1 || eval.max_kmeans_iters < 1 || eval.eval_every < 1)
        throw Error("RunConfig: bad eval block");
    for (size_t i = 0; i < eval.bin_edges.size(); ++i)
        if (eval.bin_edges[i] <= (i ? eval.bin_edges[i - 1] : 0.0))
            throw Error("RunConfig: eval.bin_edges must be positive and strictly increasing");
    if (eval.bin_edges.empty()) throw Error("RunConfig: eval.bin_edges must be non-empty");
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw Error("config: " + where + ": " + what);
}

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& allowed) {
    if (!j.is_object()) fail(where, "expected an object");
    for (const auto& it : j.items())
        if (!allowed.count(it.key())) fail(where, "unknown key '" + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(key, e.what());
    }
}

void parse_scene(const json& j, SceneConfig& s) {
    reject_unknown(j, "data.scene",
                   {"image_height", "image_width", "n_points", "min_correspondences",
                    "boxes_min", "boxes_max", "spheres_min", "spheres_max",
                    "horizontal_fov_deg"});
    read(j, "image_height", s.image_height);
    read(j, "image_width", s.image_width);
    read(j, "n_points", s.n_points);
    read(j, "min_correspondences", s.min_correspondences);
    read(j, "boxes_min", s.boxes_min);
    read(j, "boxes_max", s.boxes_max);
    read(j, "spheres_min", s.spheres_min);
    read(j, "spheres_max", s.spheres_max);
    read(j, "horizontal_fov_deg", s.horizontal_fov_deg);
}

void parse_image_aug(const json& j, ImageAugPolicy& p) {
    reject_unknown(j, "data.image_aug",
                   {"identity", "max_shift", "flip_prob", "scale_min", "scale_max", "shift_min",
                    "shift_max", "blur_prob", "blur_sigma"});
    read(j, "identity", p.identity);
    read(j, "max_shift", p.max_shift);
    read(j, "flip_prob", p.flip_prob);
    read(j, "scale_min", p.scale_min);
    read(j, "scale_max", p.scale_max);
    read(j, "shift_min", p.shift_min);
    read(j, "shift_max", p.shift_max);
    read(j, "blur_prob", p.blur_prob);
    read(j, "blur_sigma", p.blur_sigma);
}

void parse_cloud_aug(const json& j, CloudAugPolicy& p) {
    reject_unknown(j, "data.cloud_aug",
                   {"identity", "max_rotation", "jitter_sigma", "keep_fraction"});
    read(j, "identity", p.identity);
    read(j, "max_rotation", p.max_rotation);
    read(j, "jitter_sigma", p.jitter_sigma);
    read(j, "keep_fraction", p.keep_fraction);
}

void parse_point(const json& j, PointArchConfig& p) {
    reject_unknown(j, "point",
                   {"sa_levels", "use_asfp", "asfp_radii", "asfp_k_max", "asfp_mlp", "fp_mlp",
                    "head_width", "fps_seed_index"});
    if (j.contains("sa_levels")) {
        if (!j.at("sa_levels").is_array()) fail("point.sa_levels", "expected an array");
        p.sa_levels.clear();
        for (const auto& sj : j.at("sa_levels")) {
            reject_unknown(sj, "point.sa_levels[]", {"n_out", "radii", "k_max", "mlp"});
            SAConfig sa;
            read(sj, "n_out", sa.n_out);
            read(sj, "radii", sa.radii);
            read(sj, "k_max", sa.k_max);
            if (sj.contains("mlp")) sa.mlp_widths = sj.at("mlp").get<std::vector<std::vector<int64_t>>>();
            p.sa_levels.push_back(std::move(sa));
        }
    }
    read(j, "use_asfp", p.use_asfp);
    read(j, "asfp_radii", p.asfp_radii);
    read(j, "asfp_k_max", p.asfp_k_max);
    read(j, "asfp_mlp", p.asfp_mlp);
    read(j, "fp_mlp", p.fp_mlp);
    read(j, "head_width", p.head_width);
    read(j, "fps_seed_index", p.fps_seed_index);
}

void parse_image(const json& j, ImageArchConfig& c) {
    reject_unknown(j, "image", {"stage_channels", "blocks_per_stage", "head_width", "norm_eps"});
    read(j, "stage_channels", c.stage_channels);
    read(j, "blocks_per_stage", c.blocks_per_stage);
    read(j, "head_width", c.head_width);
    read(j, "norm_eps", c.norm_eps);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(std::string("config: not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    reject_unknown(j, "top level",
                   {"seed", "output_dir", "data", "point", "image", "loss", "optim", "eval"});
    read(j, "seed", cfg.seed);
    read(j, "output_dir", cfg.output_dir);
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, "data",
                       {"n_train_scenes", "n_val_scenes", "train_seed_base", "val_seed_base",
                        "scene", "image_aug", "cloud_aug"});
        read(d, "n_train_scenes", cfg.data.n_train_scenes);
        read(d, "n_val_scenes", cfg.data.n_val_scenes);
        read(d, "train_seed_base", cfg.data.train_seed_base);
        read(d, "val_seed_base", cfg.data.val_seed_base);
        if (d.contains("scene")) parse_scene(d.at("scene"), cfg.data.scene);
        if (d.contains("image_aug")) parse_image_aug(d.at("image_aug"), cfg.data.image_aug);
        if (d.contains("cloud_aug")) parse_cloud_aug(d.at("cloud_aug"), cfg.data.cloud_aug);
    }
    if (j.contains("point")) parse_point(j.at("point"), cfg.point);
    if (j.contains("image")) parse_image(j.at("image"), cfg.image);
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        reject_unknown(l, "loss", {"variant", "gamma", "margin", "d_shared"});
        read(l, "variant", cfg.loss.variant);
        read(l, "gamma", cfg.loss.circle.gamma);
        read(l, "margin", cfg.loss.circle.margin);
        read(l, "d_shared", cfg.loss.d_shared);
    }
    if (j.contains("optim")) {
        const json& o = j.at("optim");
        reject_unknown(o, "optim",
                       {"lr", "decay", "epochs", "batch_n", "weight_decay", "max_steps"});
        read(o, "lr", cfg.optim.lr);
        read(o, "decay", cfg.optim.decay);
        read(o, "epochs", cfg.optim.epochs);
        read(o, "batch_n", cfg.optim.batch_n);
        read(o, "weight_decay", cfg.optim.weight_decay);
        read(o, "max_steps", cfg.optim.max_steps);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown(e, "eval",
                       {"n_sample", "k_clusters", "max_kmeans_iters", "bin_edges", "eval_every"});
        read(e, "n_sample", cfg.eval.n_sample);
        read(e, "k_clusters", cfg.eval.k_clusters);
        read(e, "max_kmeans_iters", cfg.eval.max_kmeans_iters);
        read(e, "bin_edges", cfg.eval.bin_edges);
        read(e, "eval_every", cfg.eval.eval_every);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    json& d = j["data"];
    d["n_train_scenes"] = cfg.data.n_train_scenes;
    d["n_val_scenes"] = cfg.data.n_val_scenes;
    d["train_seed_base"] = cfg.data.train_seed_base;
    d["val_seed_base"] = cfg.data.val_seed_base;
    d["scene"] = {{"image_height", cfg.data.scene.image_height},
                  {"image_width", cfg.data.scene.image_width},
                  {"n_points", cfg.data.scene.n_points},
                  {"min_correspondences", cfg.data.scene.min_correspondences},
                  {"boxes_min", cfg.data.scene.boxes_min},
                  {"boxes_max", cfg.data.scene.boxes_max},
                  {"spheres_min", cfg.data.scene.spheres_min},
                  {"spheres_max", cfg.data.scene.spheres_max},
                  {"horizontal_fov_deg", cfg.data.scene.horizontal_fov_deg}};
    d["image_aug"] = {{"identity", cfg.data.image_aug.identity},
                      {"max_shift", cfg.data.image_aug.max_shift},
                      {"flip_prob", cfg.data.image_aug.flip_prob},
                      {"scale_min", cfg.data.image_aug.scale_min},
                      {"scale_max", cfg.data.image_aug.scale_max},
                      {"shift_min", cfg.data.image_aug.shift_min},
                      {"shift_max", cfg.data.image_aug.shift_max},
                      {"blur_prob", cfg.data.image_aug.blur_prob},
                      {"blur_sigma", cfg.data.image_aug.blur_sigma}};
    d["cloud_aug"] = {{"identity", cfg.data.cloud_aug.identity},
                      {"max_rotation", cfg.data.cloud_aug.max_rotation},
                      {"jitter_sigma", cfg.data.cloud_aug.jitter_sigma},
                      {"keep_fraction", cfg.data.cloud_aug.keep_fraction}};
    json& p = j["point"];
    p["sa_levels"] = json::array();
    for (const SAConfig& sa : cfg.point.sa_levels)
        p["sa_levels"].push_back({{"n_out", sa.n_out},
                                  {"radii", sa.radii},
                                  {"k_max", sa.k_max},
                                  {"mlp", sa.mlp_widths}});
    p["use_asfp"] = cfg.point.use_asfp;
    p["asfp_radii"] = cfg.point.asfp_radii;
    p["asfp_k_max"] = cfg.point.asfp_k_max;
    p["asfp_mlp"] = cfg.point.asfp_mlp;
    p["fp_mlp"] = cfg.point.fp_mlp;
    p["head_width"] = cfg.point.head_width;
    p["fps_seed_index"] = cfg.point.fps_seed_index;
    j["image"] = {{"stage_channels", cfg.image.stage_channels},
                  {"blocks_per_stage", cfg.image.blocks_per_stage},
                  {"head_width", cfg.image.head_width},
                  {"norm_eps", cfg.image.norm_eps}};
    j["loss"] = {{"variant", cfg.loss.variant},
                 {"gamma", cfg.loss.circle.gamma},
                 {"margin", cfg.loss.circle.margin},
                 {"d_shared", cfg.loss.d_shared}};
    j["optim"] = {{"lr", cfg.optim.lr},
                  {"decay", cfg.optim.decay},
                  {"epochs", cfg.optim.epochs},
                  {"batch_n", cfg.optim.batch_n},
                  {"weight_decay", cfg.optim.weight_decay},
                  {"max_steps", cfg.optim.max_steps}};
    j["eval"] = {{"n_sample", cfg.eval.n_sample},
                 {"k_clusters", cfg.eval.k_clusters},
                 {"max_kmeans_iters", cfg.eval.max_kmeans_iters},
                 {"bin_edges", cfg.eval.bin_edges},
                 {"eval_every", cfg.eval.eval_every}};
    return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error("config: cannot write '" + path + "'");
    os << run_config_json(cfg);
}

}  // namespace xmodal
