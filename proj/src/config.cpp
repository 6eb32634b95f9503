#include "forestmatch/config.hpp"

#include "forestmatch/common.hpp"

#include "json.hpp"

#include <fstream>

namespace forestmatch {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
}

Pose pose_from_json(const json& j) {
    require(j.is_array() && j.size() == 4, "pose must be [yaw, pitch, roll, scale]");
    Pose p;
    p.yaw = j.at(0).get<float>();
    p.pitch = j.at(1).get<float>();
    p.roll = j.at(2).get<float>();
    p.scale = j.at(3).get<float>();
    return p;
}

SceneSpec scene_from_json(const json& j) {
    SceneSpec s;
    if (j.contains("size")) {
        require(j.at("size").is_array() && j.at("size").size() == 2, "scene size must be [w, h]");
        s.width = j.at("size").at(0).get<int>();
        s.height = j.at("size").at(1).get<int>();
    }
    if (j.contains("placed")) {
        for (const json& p : j.at("placed")) {
            PlacedObject o;
            o.object_id = p.at("object").get<std::uint32_t>();
            o.pose = pose_from_json(p.at("pose"));
            require(p.at("at").is_array() && p.at("at").size() == 2, "placement 'at' must be [x, y]");
            o.x = p.at("at").at(0).get<int>();
            o.y = p.at("at").at(1).get<int>();
            s.placed.push_back(o);
        }
    }
    s.random_placements = get_or(j, "random_placements", 0);
    s.clutter_density = get_or(j, "clutter_density", 0.0);
    s.noise_rate = get_or(j, "noise_rate", 0.0);
    s.occlusion_fraction = get_or(j, "occlusion_fraction", 0.0);
    require(s.clutter_density >= 0.0 && s.clutter_density <= 1.0, "clutter_density must lie in [0, 1]");
    require(s.noise_rate >= 0.0 && s.noise_rate <= 1.0, "noise_rate must lie in [0, 1]");
    require(s.occlusion_fraction >= 0.0 && s.occlusion_fraction <= 1.0, "occlusion_fraction must lie in [0, 1]");
    return s;
}

json scene_to_json(const SceneSpec& s) {
    json j;
    j["size"] = {s.width, s.height};
    json placed = json::array();
    for (const auto& p : s.placed)
        placed.push_back({{"object", p.object_id},
                          {"pose", {p.pose.yaw, p.pose.pitch, p.pose.roll, p.pose.scale}},
                          {"at", {p.x, p.y}}});
    j["placed"] = std::move(placed);
    j["random_placements"] = s.random_placements;
    j["clutter_density"] = s.clutter_density;
    j["noise_rate"] = s.noise_rate;
    j["occlusion_fraction"] = s.occlusion_fraction;
    return j;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    cfg.master_seed = get_or<std::uint64_t>(root, "master_seed", 1);

    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        cfg.objects = get_or(d, "objects", 1);
        cfg.holdout_objects = get_or(d, "holdout_objects", 0);
        cfg.synth.patch_size = get_or(d, "patch_size", cfg.synth.patch_size);
        cfg.synth.location_stride = get_or(d, "location_stride", cfg.synth.location_stride);
        cfg.synth.object_depth_mm = get_or(d, "object_depth_mm", cfg.synth.object_depth_mm);
        cfg.synth.background_depth_mm = get_or(d, "background_depth_mm", cfg.synth.background_depth_mm);
        require(cfg.objects >= 1, "dataset.objects must be >= 1");
        require(cfg.holdout_objects >= 0, "dataset.holdout_objects must be >= 0");
        require(cfg.synth.patch_size >= 8, "dataset.patch_size must be >= 8");
        require(cfg.synth.location_stride >= 1, "dataset.location_stride must be >= 1");
        if (d.contains("pose_grid")) {
            const json& g = d.at("pose_grid");
            cfg.pose_grid.yaw_steps = get_or(g, "yaw_steps", cfg.pose_grid.yaw_steps);
            cfg.pose_grid.pitch_steps = get_or(g, "pitch_steps", cfg.pose_grid.pitch_steps);
            cfg.pose_grid.roll_steps = get_or(g, "roll_steps", cfg.pose_grid.roll_steps);
            cfg.pose_grid.pitch_max = get_or(g, "pitch_max", cfg.pose_grid.pitch_max);
            if (g.contains("scales")) cfg.pose_grid.scales = g.at("scales").get<std::vector<double>>();
            require(cfg.pose_grid.yaw_steps >= 1 && cfg.pose_grid.pitch_steps >= 1 &&
                        cfg.pose_grid.roll_steps >= 1 && !cfg.pose_grid.scales.empty(),
                    "pose_grid steps must be >= 1 and scales non-empty");
        }
        if (d.contains("scenes")) {
            int index = 0;
            for (const json& s : d.at("scenes")) {
                try {
                    cfg.scenes.push_back(scene_from_json(s));
                } catch (const ConfigError& e) {
                    throw ConfigError("scene " + std::to_string(index) + ": " + e.what());
                }
                ++index;
            }
        }
    }

    if (root.contains("features")) {
        const json& f = root.at("features");
        cfg.synth.features.magnitude_threshold = get_or(f, "magnitude_threshold", 12.0);
        cfg.synth.features.saturation_floor = get_or(f, "saturation_floor", 0.15);
        cfg.synth.features.normal_threshold = get_or(f, "normal_threshold", 2.0);
    }

    if (root.contains("forest")) {
        const json& f = root.at("forest");
        cfg.forest.trees = get_or(f, "trees", cfg.forest.trees);
        cfg.forest.subspace_dim = get_or(f, "subspace_dim", cfg.forest.subspace_dim);
        cfg.forest.rejector_dim = get_or(f, "rejector_dim", cfg.forest.rejector_dim);
        cfg.forest.candidates = get_or(f, "candidates", cfg.forest.candidates);
        cfg.forest.fuzzy_margin = get_or(f, "fuzzy_margin", cfg.forest.fuzzy_margin);
        cfg.forest.accept_floor = get_or(f, "accept_floor", cfg.forest.accept_floor);
        cfg.forest.density_floor = get_or(f, "density_floor", cfg.forest.density_floor);
        cfg.forest.min_leaf = get_or(f, "min_leaf", cfg.forest.min_leaf);
        cfg.forest.max_depth = get_or(f, "max_depth", cfg.forest.max_depth);
        const std::string objective = get_or<std::string>(f, "rejector_objective", "entropy");
        if (objective == "entropy")
            cfg.forest.rejector_objective = RejectorObjective::MinEntropy;
        else if (objective == "info_gain")
            cfg.forest.rejector_objective = RejectorObjective::MinInfoGain;
        else
            throw ConfigError("forest.rejector_objective must be 'entropy' or 'info_gain'");
        require(cfg.forest.trees >= 1, "forest.trees must be >= 1");
        require(cfg.forest.subspace_dim >= 1, "forest.subspace_dim must be >= 1");
        require(cfg.forest.rejector_dim >= 1, "forest.rejector_dim must be >= 1");
        require(cfg.forest.candidates >= 1, "forest.candidates must be >= 1");
        require(cfg.forest.fuzzy_margin >= 0.0, "forest.fuzzy_margin must be >= 0");
        require(cfg.forest.accept_floor >= 0.0 && cfg.forest.accept_floor <= 1.0,
                "forest.accept_floor must lie in [0, 1]");
        require(cfg.forest.density_floor > 0.0 && cfg.forest.density_floor < 1.0,
                "forest.density_floor must lie in (0, 1)");
        require(cfg.forest.min_leaf >= 1, "forest.min_leaf must be >= 1");
        require(cfg.forest.max_depth >= 0, "forest.max_depth must be >= 0");
    }

    if (root.contains("validation")) {
        const json& v = root.at("validation");
        cfg.validation.chunk_size = get_or(v, "chunk_size", cfg.validation.chunk_size);
        cfg.validation.alpha = get_or(v, "alpha", cfg.validation.alpha);
        cfg.validation.use_depth = get_or(v, "use_depth", cfg.validation.use_depth);
        cfg.validation.depth_tolerance_mm = get_or(v, "depth_tolerance_mm", cfg.validation.depth_tolerance_mm);
        require(cfg.validation.chunk_size >= 1, "validation.chunk_size must be >= 1");
        require(cfg.validation.depth_tolerance_mm > 0.0, "validation.depth_tolerance_mm must be > 0");
    }

    if (root.contains("pipeline")) {
        const json& p = root.at("pipeline");
        cfg.criterion.k_m = get_or(p, "k_m", cfg.criterion.k_m);
        cfg.criterion.pose_tolerance_deg = get_or(p, "pose_tolerance_deg", cfg.criterion.pose_tolerance_deg);
        cfg.pipeline.nms_overlap = get_or(p, "nms_overlap", cfg.pipeline.nms_overlap);
        cfg.pipeline.coarse_floor_scale = get_or(p, "coarse_floor_scale", cfg.pipeline.coarse_floor_scale);
        if (p.contains("depth_band_mm")) {
            require(p.at("depth_band_mm").is_array() && p.at("depth_band_mm").size() == 2,
                    "pipeline.depth_band_mm must be [lo, hi]");
            cfg.pipeline.depth_band_lo_mm = p.at("depth_band_mm").at(0).get<double>();
            cfg.pipeline.depth_band_hi_mm = p.at("depth_band_mm").at(1).get<double>();
        }
        require(cfg.criterion.k_m > 0.0, "pipeline.k_m must be > 0");
        require(cfg.pipeline.nms_overlap >= 0.0 && cfg.pipeline.nms_overlap <= 1.0,
                "pipeline.nms_overlap must lie in [0, 1]");
        require(cfg.pipeline.coarse_floor_scale >= 0.0 && cfg.pipeline.coarse_floor_scale <= 1.0,
                "pipeline.coarse_floor_scale must lie in [0, 1]");
        require(cfg.pipeline.depth_band_lo_mm <= cfg.pipeline.depth_band_hi_mm,
                "pipeline.depth_band_mm must satisfy lo <= hi");
    }

    if (root.contains("bench")) {
        const json& b = root.at("bench");
        if (b.contains("template_sweep")) cfg.bench.template_sweep = b.at("template_sweep").get<std::vector<int>>();
        cfg.bench.sweep_objects = get_or(b, "sweep_objects", cfg.bench.sweep_objects);
        cfg.bench.sweep_max_depth = get_or(b, "sweep_max_depth", cfg.bench.sweep_max_depth);
        cfg.bench.sweep_fuzzy_margin = get_or(b, "sweep_fuzzy_margin", cfg.bench.sweep_fuzzy_margin);
        cfg.bench.sweep_min_leaf = get_or(b, "sweep_min_leaf", cfg.bench.sweep_min_leaf);
        cfg.bench.sweep_repetitions = get_or(b, "sweep_repetitions", cfg.bench.sweep_repetitions);
        require(cfg.bench.sweep_repetitions >= 1, "bench.sweep_repetitions must be >= 1");
        if (b.contains("tree_counts")) cfg.bench.tree_counts = b.at("tree_counts").get<std::vector<int>>();
        cfg.bench.probe_windows = get_or(b, "probe_windows", cfg.bench.probe_windows);
        cfg.bench.exhaustive_probe_windows = get_or(b, "exhaustive_probe_windows",
                                                    cfg.bench.exhaustive_probe_windows);
        cfg.bench.exhaustive_baseline = get_or(b, "exhaustive_baseline", cfg.bench.exhaustive_baseline);
        require(!cfg.bench.template_sweep.empty(), "bench.template_sweep must be non-empty");
        require(cfg.bench.sweep_objects >= 1, "bench.sweep_objects must be >= 1");
        require(cfg.bench.probe_windows >= 1, "bench.probe_windows must be >= 1");
    }

    cfg.pipeline.chunk_seed = cfg.master_seed;
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::string config_to_json(const RunConfig& cfg) {
    json root;
    root["tool_version"] = kToolVersion;
    root["master_seed"] = cfg.master_seed;

    json dataset;
    dataset["objects"] = cfg.objects;
    dataset["holdout_objects"] = cfg.holdout_objects;
    dataset["patch_size"] = cfg.synth.patch_size;
    dataset["location_stride"] = cfg.synth.location_stride;
    dataset["object_depth_mm"] = cfg.synth.object_depth_mm;
    dataset["background_depth_mm"] = cfg.synth.background_depth_mm;
    dataset["pose_grid"] = {{"yaw_steps", cfg.pose_grid.yaw_steps},
                            {"pitch_steps", cfg.pose_grid.pitch_steps},
                            {"roll_steps", cfg.pose_grid.roll_steps},
                            {"scales", cfg.pose_grid.scales},
                            {"pitch_max", cfg.pose_grid.pitch_max}};
    json scenes = json::array();
    for (const auto& s : cfg.scenes) scenes.push_back(scene_to_json(s));
    dataset["scenes"] = std::move(scenes);
    root["dataset"] = std::move(dataset);

    root["features"] = {{"magnitude_threshold", cfg.synth.features.magnitude_threshold},
                        {"saturation_floor", cfg.synth.features.saturation_floor},
                        {"normal_threshold", cfg.synth.features.normal_threshold}};

    root["forest"] = {{"trees", cfg.forest.trees},
                      {"subspace_dim", cfg.forest.subspace_dim},
                      {"rejector_dim", cfg.forest.rejector_dim},
                      {"candidates", cfg.forest.candidates},
                      {"fuzzy_margin", cfg.forest.fuzzy_margin},
                      {"accept_floor", cfg.forest.accept_floor},
                      {"density_floor", cfg.forest.density_floor},
                      {"min_leaf", cfg.forest.min_leaf},
                      {"max_depth", cfg.forest.max_depth},
                      {"rejector_objective",
                       cfg.forest.rejector_objective == RejectorObjective::MinEntropy ? "entropy" : "info_gain"}};

    root["validation"] = {{"chunk_size", cfg.validation.chunk_size},
                          {"alpha", cfg.validation.alpha},
                          {"use_depth", cfg.validation.use_depth},
                          {"depth_tolerance_mm", cfg.validation.depth_tolerance_mm}};

    root["pipeline"] = {{"k_m", cfg.criterion.k_m},
                        {"pose_tolerance_deg", cfg.criterion.pose_tolerance_deg},
                        {"nms_overlap", cfg.pipeline.nms_overlap},
                        {"coarse_floor_scale", cfg.pipeline.coarse_floor_scale},
                        {"depth_band_mm", {cfg.pipeline.depth_band_lo_mm, cfg.pipeline.depth_band_hi_mm}}};

    root["bench"] = {{"template_sweep", cfg.bench.template_sweep},
                     {"sweep_objects", cfg.bench.sweep_objects},
                     {"sweep_max_depth", cfg.bench.sweep_max_depth},
                     {"sweep_fuzzy_margin", cfg.bench.sweep_fuzzy_margin},
                     {"sweep_min_leaf", cfg.bench.sweep_min_leaf},
                     {"sweep_repetitions", cfg.bench.sweep_repetitions},
                     {"tree_counts", cfg.bench.tree_counts},
                     {"probe_windows", cfg.bench.probe_windows},
                     {"exhaustive_probe_windows", cfg.bench.exhaustive_probe_windows},
                     {"exhaustive_baseline", cfg.bench.exhaustive_baseline}};

    return root.dump(1);
}

std::uint64_t object_seed(const RunConfig& cfg, int object_index) {
    return Rng::mix(cfg.master_seed, 0x0b1ec7ull + static_cast<std::uint64_t>(object_index));
}

std::uint64_t scene_seed(const RunConfig& cfg, int scene_index) {
    return Rng::mix(cfg.master_seed, 0x5ce4e5ull * (static_cast<std::uint64_t>(scene_index) + 1));
}

std::uint64_t template_set_seed(const RunConfig& cfg) { return Rng::mix(cfg.master_seed, 0x7e3a7e5ull); }

std::uint64_t forest_seed(const RunConfig& cfg) { return Rng::mix(cfg.master_seed, 0xf05e57ull); }

}  // namespace forestmatch
