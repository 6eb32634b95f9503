// forestmatch CLI: dataset generation, forest training, detection,
// benchmarking and container inspection.

#include "forestmatch/bench.hpp"
#include "forestmatch/config.hpp"
#include "forestmatch/io.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace fm = forestmatch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCompat = 4;

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

fm::RunConfig load_run_config(const std::string& path, const CommonFlags& flags) {
    fm::RunConfig cfg = fm::load_config(path);
    if (flags.seed) {
        cfg.master_seed = *flags.seed;
        cfg.pipeline.chunk_seed = *flags.seed;
    }
    if (flags.threads > 0) cfg.pipeline.threads = flags.threads;
    return cfg;
}

std::vector<fm::SyntheticObject> make_catalogue(const fm::RunConfig& cfg) {
    std::vector<fm::SyntheticObject> objects;
    for (int i = 0; i < cfg.objects + cfg.holdout_objects; ++i)
        objects.push_back(fm::make_object(static_cast<std::uint32_t>(i), fm::object_seed(cfg, i), cfg.synth));
    return objects;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json detection_json(const fm::Detection& d) {
    return json{{"x", d.x},
                {"y", d.y},
                {"template_id", d.template_id},
                {"object_id", d.object_id},
                {"yaw", d.pose.yaw},
                {"pitch", d.pose.pitch},
                {"roll", d.pose.roll},
                {"scale", d.pose.scale},
                {"score", d.score}};
}

// --- gen --------------------------------------------------------------------

int cmd_gen(const std::string& config_path, const std::string& out_dir, bool emit_json, const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    const fm::RunConfig cfg = load_run_config(config_path, flags);
    const std::string meta = fm::config_to_json(cfg);
    fs::create_directories(out_dir);

    const auto catalogue = make_catalogue(cfg);
    const std::vector<fm::SyntheticObject> templated(catalogue.begin(), catalogue.begin() + cfg.objects);
    const auto grid = fm::make_pose_grid(cfg.pose_grid);
    const auto store = fm::build_template_set(templated, grid, cfg.synth, fm::template_set_seed(cfg));
    fm::save_template_set(out_dir + "/templates.bin", store, meta);
    if (emit_json) fm::write_file(out_dir + "/templates.json", fm::template_set_to_json(store, meta));

    for (std::size_t i = 0; i < cfg.scenes.size(); ++i) {
        fm::SceneSpec spec = cfg.scenes[i];
        spec.seed = fm::scene_seed(cfg, static_cast<int>(i));
        fm::ComposedScene scene;
        try {
            scene = fm::compose_scene(spec, catalogue, cfg.synth, &store);
        } catch (const fm::ConfigError& e) {
            throw fm::ConfigError("scene " + std::to_string(i) + ": " + e.what());
        }
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%03zu", i);
        fm::save_scene(out_dir + "/" + name + ".bin", scene.features, meta);
        fm::write_file(out_dir + "/" + name + ".truth.json", fm::ground_truth_to_json(scene.truth, meta));
    }

    std::cout << "templates: " << store.size() << ", scenes: " << cfg.scenes.size() << ", out: " << out_dir
              << "\n";
    std::cerr << "gen took " << seconds_since(start) << " s\n";
    return 0;
}

// --- train --------------------------------------------------------------------

int cmd_train(const std::string& templates_path, const std::string& out_path, const std::string& config_path,
              const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    fm::MetaJson meta;
    const auto store = fm::load_template_set(templates_path, &meta);
    if (store.empty()) throw fm::DataError("template set is empty");

    fm::RunConfig cfg;
    if (!config_path.empty()) {
        cfg = load_run_config(config_path, flags);
    } else {
        cfg = fm::config_from_json(meta);  // reuse the dataset's embedded config
        if (flags.seed) cfg.master_seed = *flags.seed;
    }
    const std::string out_meta = fm::config_to_json(cfg);

    const fm::Forest forest = fm::train_forest(store, cfg.forest, fm::forest_seed(cfg));
    fm::save_forest(out_path, forest, out_meta);

    std::map<int, int> depth_histogram;
    double mean_leaf = 0.0;
    int max_leaf = 0;
    for (const auto& tree : forest.trees) {
        const fm::TreeStats s = fm::tree_stats(tree);
        ++depth_histogram[s.depth];
        mean_leaf += s.mean_leaf_size;
        max_leaf = std::max(max_leaf, s.max_leaf_size);
    }
    std::cout << "trees: " << forest.trees.size() << ", descriptor_len: " << forest.descriptor_len << "\n";
    std::cout << "depth histogram:";
    for (const auto& [depth, count] : depth_histogram) std::cout << " " << depth << "x" << count;
    std::cout << "\nmean leaf size: " << mean_leaf / forest.trees.size() << ", max leaf size: " << max_leaf
              << "\n";
    std::cerr << "train took " << seconds_since(start) << " s\n";
    return 0;
}

// --- detect --------------------------------------------------------------------

int cmd_detect(const std::string& scene_path, const std::string& forest_path, const std::string& templates_path,
               const std::string& out_path, const std::string& truth_path, const std::string& trace_path,
               const std::string& reject_map_path, const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    fm::MetaJson forest_meta;
    const fm::Forest forest = fm::load_forest(forest_path, &forest_meta);
    const auto store = fm::load_template_set(templates_path);
    const fm::FeatureMap scene = fm::load_scene(scene_path);

    fm::RunConfig cfg = fm::config_from_json(forest_meta);
    if (flags.seed) {
        cfg.master_seed = *flags.seed;
        cfg.pipeline.chunk_seed = *flags.seed;
    }

    fm::DetectConfig dc;
    dc.validation = cfg.validation;
    dc.pipeline = cfg.pipeline;
    dc.pipeline.threads = flags.threads;
    dc.keep_traces = !trace_path.empty();

    const fm::DetectResult result = fm::detect(scene, forest, store, dc);

    std::ostringstream lines;
    for (const auto& d : result.detections) lines << detection_json(d).dump() << "\n";
    if (out_path.empty())
        std::cout << lines.str();
    else
        fm::write_file(out_path, lines.str());

    if (!reject_map_path.empty()) fm::write_rejection_pgm(reject_map_path, result.outcome);

    if (!trace_path.empty()) {
        std::ostringstream t;
        for (const auto& trace : result.traces) {
            json j{{"x", trace.x},
                   {"y", trace.y},
                   {"stages_run", trace.validation.stages_run},
                   {"survivors_per_stage", trace.validation.survivors_per_stage},
                   {"chunk_evaluations", trace.validation.chunk_evaluations},
                   {"alpha_floor_hit", trace.validation.alpha_floor_hit}};
            if (trace.validation.winner)
                j["winner"] = {{"template_id", trace.validation.winner->first},
                               {"score", trace.validation.winner->second}};
            t << j.dump() << "\n";
        }
        fm::write_file(trace_path, t.str());
    }

    if (!truth_path.empty()) {
        const auto truth = fm::ground_truth_from_json(fm::read_file(truth_path));
        const fm::EvalMetrics m =
            fm::evaluate(result.detections, truth, cfg.criterion, store.front().patch_w, store.front().patch_h);
        json metrics{{"true_positives", m.true_positives},
                     {"false_positives", m.false_positives},
                     {"false_negatives", m.false_negatives},
                     {"precision", m.precision},
                     {"precision_defined", m.precision_defined},
                     {"recall", m.recall},
                     {"accuracy", m.accuracy},
                     {"windows_in_range", result.stats.windows_in_range},
                     {"windows_rejected", result.stats.windows_rejected},
                     {"windows_validated", result.stats.windows_validated},
                     {"tree_dim_distance", result.counters.tree_dim_distance},
                     {"validation_dim_distance", result.counters.validation_dim_distance}};
        std::cout << metrics.dump(1) << "\n";
    }

    std::cerr << "detect took " << seconds_since(start) << " s, " << result.detections.size() << " detections\n";
    return 0;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const std::string& config_path, const std::string& out_dir, const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    const fm::RunConfig cfg = load_run_config(config_path, flags);
    fs::create_directories(out_dir);

    const auto sweep = fm::run_sweep(cfg, flags.threads);
    std::ostringstream sweep_csv;
    sweep_csv << "size,windows,mean_tree,mean_validation,mean_total,mean_exhaustive,exhaustive_expected\n";
    for (const auto& row : sweep)
        sweep_csv << row.size << "," << row.windows << "," << row.mean_tree << "," << row.mean_validation << ","
                  << row.mean_total << "," << row.mean_exhaustive << "," << row.exhaustive_expected << "\n";
    fm::write_file(out_dir + "/sweep.csv", sweep_csv.str());

    const auto suite = fm::run_tree_suite(cfg, flags.threads);
    std::ostringstream trees_csv;
    trees_csv << "trees,tp,fp,fn,precision,recall,accuracy,tree_dim_distance,validation_dim_distance,"
                 "validation_depth_compares,mean_rejection_fraction\n";
    for (const auto& row : suite) {
        double rejection = 0.0;
        for (const auto& f : row.frames) rejection += f.rejection_fraction;
        if (!row.frames.empty()) rejection /= static_cast<double>(row.frames.size());
        trees_csv << row.trees << "," << row.metrics.true_positives << "," << row.metrics.false_positives << ","
                  << row.metrics.false_negatives << "," << row.metrics.precision << "," << row.metrics.recall
                  << "," << row.metrics.accuracy << "," << row.counters.tree_dim_distance << ","
                  << row.counters.validation_dim_distance << "," << row.counters.validation_depth_compares
                  << "," << rejection << "\n";
    }
    fm::write_file(out_dir + "/trees.csv", trees_csv.str());

    json aggregate;
    aggregate["config"] = fm::config_to_json(cfg);
    std::vector<double> sizes, totals, exhaustives;
    for (const auto& row : sweep) {
        sizes.push_back(row.size);
        totals.push_back(std::max(row.mean_total, 1e-9));
        if (cfg.bench.exhaustive_baseline) exhaustives.push_back(std::max(row.mean_exhaustive, 1e-9));
    }
    aggregate["sweep_slope"] = fm::loglog_slope(sizes, totals);
    if (cfg.bench.exhaustive_baseline) aggregate["exhaustive_slope"] = fm::loglog_slope(sizes, exhaustives);
    json per_trees = json::array();
    for (const auto& row : suite)
        per_trees.push_back({{"trees", row.trees}, {"recall", row.metrics.recall},
                             {"precision", row.metrics.precision}, {"accuracy", row.metrics.accuracy}});
    aggregate["trees"] = std::move(per_trees);
    fm::write_file(out_dir + "/bench.json", aggregate.dump(1) + "\n");

    std::cout << "sweep rows: " << sweep.size() << ", tree rows: " << suite.size() << ", out: " << out_dir << "\n";
    std::cerr << "bench took " << seconds_since(start) << " s\n";
    return 0;
}

// --- inspect --------------------------------------------------------------------

int cmd_inspect(const std::string& path) {
    const std::string kind = fm::container_kind(path);
    json info{{"path", path}, {"kind", kind}};
    if (kind == "templates") {
        fm::MetaJson meta;
        const auto store = fm::load_template_set(path, &meta);
        info["count"] = store.size();
        if (!store.empty()) {
            info["patch"] = {store.front().patch_w, store.front().patch_h};
            info["descriptor_len"] = store.front().descriptor.size();
            info["locations"] = store.front().locations.size();
        }
        info["meta"] = meta;
    } else if (kind == "forest") {
        fm::MetaJson meta;
        const fm::Forest forest = fm::load_forest(path, &meta);
        info["trees"] = forest.trees.size();
        info["descriptor_len"] = forest.descriptor_len;
        json depths = json::array();
        for (const auto& tree : forest.trees) depths.push_back(fm::tree_stats(tree).depth);
        info["depths"] = std::move(depths);
        info["meta"] = meta;
    } else if (kind == "scene") {
        fm::MetaJson meta;
        const fm::FeatureMap scene = fm::load_scene(path, &meta);
        info["size"] = {scene.width, scene.height};
        info["modalities"] = scene.modalities.size();
        info["has_depth"] = scene.has_depth();
        info["meta"] = meta;
    } else if (kind == "unknown") {
        throw fm::DataError("unrecognized container: " + path);
    }
    std::cout << info.dump(1) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forestmatch: template matching with a background-rejecting fuzzy decision forest"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags flags;
    app.add_option("--seed", flags.seed, "override the config master seed")->group("global");
    app.add_option("--threads", flags.threads, "worker threads (0 = all cores)")->group("global");

    std::string config_path, out_dir = "out", templates_path, forest_path, scene_path;
    std::string out_path, truth_path, trace_path, reject_map_path, inspect_path;
    bool emit_json = false;

    auto* gen = app.add_subcommand("gen", "generate templates, scenes and ground truth");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory");
    gen->add_flag("--json", emit_json, "also write the template interchange JSON");

    auto* train = app.add_subcommand("train", "train a forest from a template container");
    train->add_option("--templates", templates_path, "template container")->required();
    train->add_option("--out", forest_path, "forest output path")->required();
    train->add_option("--config", config_path, "run config JSON (defaults to the embedded one)");

    auto* detect = app.add_subcommand("detect", "detect objects in a scene container");
    detect->add_option("--scene", scene_path, "scene container")->required();
    detect->add_option("--forest", forest_path, "forest container")->required();
    detect->add_option("--templates", templates_path, "template container")->required();
    detect->add_option("--out", out_path, "detections JSONL path (default: stdout)");
    detect->add_option("--truth", truth_path, "ground-truth sidecar; prints metrics JSON");
    detect->add_option("--trace", trace_path, "write validation trace JSONL");
    detect->add_option("--reject-map", reject_map_path, "write the rejection-depth graymap (PGM)");

    auto* bench = app.add_subcommand("bench", "template-count sweep and tree-count suite");
    bench->add_option("--config", config_path, "run config JSON")->required();
    bench->add_option("--out", out_dir, "output directory");

    auto* inspect = app.add_subcommand("inspect", "print a container summary");
    inspect->add_option("path", inspect_path, "container path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen(config_path, out_dir, emit_json, flags);
        if (train->parsed()) return cmd_train(templates_path, forest_path, config_path, flags);
        if (detect->parsed())
            return cmd_detect(scene_path, forest_path, templates_path, out_path, truth_path, trace_path,
                              reject_map_path, flags);
        if (bench->parsed()) return cmd_bench(config_path, out_dir, flags);
        if (inspect->parsed()) return cmd_inspect(inspect_path);
    } catch (const fm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fm::CompatError& e) {
        std::cerr << "compatibility error: " << e.what() << "\n";
        return kExitCompat;
    } catch (const fm::ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
