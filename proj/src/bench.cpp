#include "forestmatch/bench.hpp"

#include "forestmatch/synth.hpp"
#include "forestmatch/validate.hpp"

#include <algorithm>
#include <cmath>

namespace forestmatch {

namespace {

struct ProbeWindow {
    const FeatureMap* scene;
    int x;
    int y;
};

}  // namespace

std::vector<SweepRow> run_sweep(const RunConfig& cfg, int threads) {
    (void)threads;  // the sweep is a per-window measurement loop; cheap enough single-threaded
    const int max_size = *std::max_element(cfg.bench.template_sweep.begin(), cfg.bench.template_sweep.end());
    const int per_object = cfg.pose_grid.yaw_steps * cfg.pose_grid.pitch_steps * cfg.pose_grid.roll_steps *
                           static_cast<int>(cfg.pose_grid.scales.size());
    const int needed_objects =
        std::min(cfg.bench.sweep_objects, (max_size + per_object - 1) / per_object + 1);

    std::vector<SyntheticObject> objects;
    for (int i = 0; i < needed_objects; ++i)
        objects.push_back(make_object(static_cast<std::uint32_t>(i), object_seed(cfg, i), cfg.synth));

    const std::vector<Pose> grid = make_pose_grid(cfg.pose_grid);
    std::vector<Template> full = build_template_set(objects, grid, cfg.synth, template_set_seed(cfg));
    if (static_cast<int>(full.size()) < max_size)
        throw ConfigError("sweep needs " + std::to_string(max_size) + " templates but the pool has " +
                          std::to_string(full.size()));

    // Fixed probe corpus: planted views from the smallest prefix (present in
    // every sweep size) plus a stride grid of background windows. Scene
    // clutter comes from held-out objects so the workload does not get
    // easier or harder as the template pool grows.
    const int smallest = *std::min_element(cfg.bench.template_sweep.begin(), cfg.bench.template_sweep.end());
    const std::vector<Template> seed_prefix(full.begin(), full.begin() + smallest);

    std::vector<SyntheticObject> scene_catalogue;
    for (const Template& t : seed_prefix) {
        bool seen = false;
        for (const auto& o : scene_catalogue) seen = seen || o.object_id == t.object_id;
        if (!seen)
            for (const auto& o : objects)
                if (o.object_id == t.object_id) scene_catalogue.push_back(o);
    }
    for (int i = 0; i < 4; ++i) {
        const std::uint32_t id = static_cast<std::uint32_t>(1000 + i);
        scene_catalogue.push_back(make_object(id, object_seed(cfg, static_cast<int>(id)), cfg.synth));
    }

    // The query corpus is the planted windows themselves: search cost per
    // query against a growing database, the quantity the sweep compares to
    // the exhaustive baseline. Scene-level rejection rates are measured
    // separately by the detection pipeline.
    const int n_scenes = std::clamp(cfg.bench.probe_windows / 4, 4, 24);
    std::vector<ComposedScene> scenes;
    for (int i = 0; i < n_scenes; ++i) {
        SceneSpec spec;
        spec.width = 160;
        spec.height = 120;
        spec.random_placements = 4;
        spec.clutter_density = 0.35;
        spec.noise_rate = 0.1;
        spec.seed = scene_seed(cfg, 1000 + i);
        scenes.push_back(compose_scene(spec, scene_catalogue, cfg.synth, &seed_prefix));
    }

    const DescriptorLayout layout =
        DescriptorLayout::from_template(full.front(), scenes.front().features.modalities);
    std::vector<ProbeWindow> probes;
    for (const auto& scene : scenes)
        for (const auto& gt : scene.truth) probes.push_back({&scene.features, gt.x, gt.y});

    std::vector<SweepRow> rows;
    for (int size : cfg.bench.template_sweep) {
        std::vector<Template> prefix(full.begin(), full.begin() + size);
        ForestConfig fc = cfg.forest;
        fc.max_depth = cfg.bench.sweep_max_depth;
        fc.fuzzy_margin = cfg.bench.sweep_fuzzy_margin;
        fc.min_leaf = cfg.bench.sweep_min_leaf;
        const auto plan = chunk_plan(layout.size(), cfg.validation.chunk_size, cfg.master_seed);

        // several independent forests per size: the per-window mean of a
        // single tree draw is noisy, the expectation is the quantity of
        // interest
        SweepRow row;
        row.size = size;
        CostCounters counters;
        for (int rep = 0; rep < cfg.bench.sweep_repetitions; ++rep) {
            const Forest forest =
                train_forest(prefix, fc, Rng::mix(forest_seed(cfg), 1000003ull * (rep + 1) + size));
            for (const ProbeWindow& p : probes) {
                const auto descriptor = extract_window_descriptor(*p.scene, layout, p.x, p.y);
                const QueryResult q = forest_query(forest, descriptor, &counters);
                if (!q.rejected)
                    preemptive_validate(*p.scene, p.x, p.y, q.candidates, prefix, plan, cfg.validation,
                                        &counters);
            }
        }
        const std::uint64_t measured =
            static_cast<std::uint64_t>(probes.size()) * static_cast<std::uint64_t>(cfg.bench.sweep_repetitions);
        row.windows = probes.size();
        row.mean_tree = static_cast<double>(counters.tree_dim_distance) / static_cast<double>(measured);
        row.mean_validation =
            static_cast<double>(counters.validation_dim_distance) / static_cast<double>(measured);
        row.mean_total = row.mean_tree + row.mean_validation;

        for (const Template& t : prefix) row.exhaustive_expected += t.foreground_count();
        if (cfg.bench.exhaustive_baseline) {
            std::vector<std::uint32_t> all_ids(prefix.size());
            for (std::size_t i = 0; i < prefix.size(); ++i) all_ids[i] = prefix[i].id;
            CostCounters exhaustive;
            const int n_probe = std::min<int>(cfg.bench.exhaustive_probe_windows,
                                              static_cast<int>(probes.size()));
            for (int i = 0; i < n_probe; ++i)
                full_validate(*probes[i].scene, probes[i].x, probes[i].y, all_ids, prefix, cfg.validation,
                              &exhaustive);
            row.mean_exhaustive = static_cast<double>(exhaustive.validation_dim_distance) / n_probe;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<TreeSuiteRow> run_tree_suite(const RunConfig& cfg, int threads) {
    std::vector<SyntheticObject> objects;
    for (int i = 0; i < cfg.objects + cfg.holdout_objects; ++i)
        objects.push_back(make_object(static_cast<std::uint32_t>(i), object_seed(cfg, i), cfg.synth));
    std::vector<SyntheticObject> templated(objects.begin(), objects.begin() + cfg.objects);

    const std::vector<Pose> grid = make_pose_grid(cfg.pose_grid);
    const std::vector<Template> store = build_template_set(templated, grid, cfg.synth, template_set_seed(cfg));

    std::vector<ComposedScene> scenes;
    for (std::size_t i = 0; i < cfg.scenes.size(); ++i) {
        SceneSpec spec = cfg.scenes[i];
        spec.seed = scene_seed(cfg, static_cast<int>(i));
        scenes.push_back(compose_scene(spec, objects, cfg.synth, &store));
    }
    if (scenes.empty()) throw ConfigError("tree suite needs at least one scene in dataset.scenes");

    std::vector<TreeSuiteRow> rows;
    for (int trees : cfg.bench.tree_counts) {
        ForestConfig fc = cfg.forest;
        fc.trees = trees;
        const Forest forest = train_forest(store, fc, forest_seed(cfg));

        TreeSuiteRow row;
        row.trees = trees;
        int tp = 0, fp = 0, fn = 0;
        for (const auto& scene : scenes) {
            DetectConfig dc;
            dc.validation = cfg.validation;
            dc.pipeline = cfg.pipeline;
            dc.pipeline.threads = threads;
            const DetectResult r = detect(scene.features, forest, store, dc);
            const EvalMetrics m = evaluate(r.detections, scene.truth, cfg.criterion,
                                           store.front().patch_w, store.front().patch_h);
            tp += m.true_positives;
            fp += m.false_positives;
            fn += m.false_negatives;
            row.counters += r.counters;
            FrameCost frame;
            frame.tree_dim_distance = r.counters.tree_dim_distance;
            frame.validation_dim_distance = r.counters.validation_dim_distance;
            frame.validation_depth_compares = r.counters.validation_depth_compares;
            frame.rejection_fraction =
                r.stats.windows_in_range > 0
                    ? static_cast<double>(r.stats.windows_rejected) / r.stats.windows_in_range
                    : 0.0;
            row.frames.push_back(frame);
        }
        row.metrics.true_positives = tp;
        row.metrics.false_positives = fp;
        row.metrics.false_negatives = fn;
        row.metrics.precision_defined = tp + fp > 0;
        row.metrics.precision = row.metrics.precision_defined ? static_cast<double>(tp) / (tp + fp) : 1.0;
        row.metrics.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 1.0;
        row.metrics.accuracy = tp + fp + fn > 0 ? static_cast<double>(tp) / (tp + fp + fn) : 1.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(xs[i]);
        const double ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace forestmatch
