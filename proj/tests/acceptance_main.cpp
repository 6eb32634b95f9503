// Acceptance suite: one pass/fail line per criterion, non-zero exit when
// any criterion fails. Tolerances are pinned in code next to each check.

#include "forestmatch/bench.hpp"
#include "forestmatch/config.hpp"
#include "forestmatch/io.hpp"
#include "forestmatch/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using namespace forestmatch;
namespace fs = std::filesystem;

namespace {

struct Harness {
    int failures = 0;

    void criterion(int n, const std::string& name, bool pass, const std::string& detail) {
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << detail
                  << std::endl;
        if (!pass) ++failures;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Exhaustive nearest template: argmax similarity, ties to lowest id.
std::uint32_t exhaustive_nearest(const FeatureMap& scene, const std::vector<Template>& store, int x, int y) {
    std::uint32_t best_id = 0;
    double best = -1.0;
    for (const Template& t : store) {
        const double s = similarity(scene, t, x, y);
        if (s > best) {
            best = s;
            best_id = t.id;
        }
    }
    return best_id;
}

struct TrialTrace {
    std::size_t initial_candidates;
    ValidationResult result;
};

struct World {
    SynthConfig synth;                      // defaults: patch 24, dense locations
    std::vector<SyntheticObject> objects;   // [0] trained, rest clutter-only
    std::vector<Template> store;            // 320 templates
    Forest forest;                          // default config, 1 tree
    std::vector<std::vector<std::uint32_t>> plan;
    ValidationConfig validation;
    static constexpr std::uint64_t kSeed = 20260808;

    World() {
        for (int i = 0; i < 4; ++i)
            objects.push_back(make_object(static_cast<std::uint32_t>(i), Rng::mix(kSeed, 101 + i), synth));
        store = build_template_set({objects[0]}, make_pose_grid(PoseGridSpec{}), synth, Rng::mix(kSeed, 7));
        forest = train_forest(store, ForestConfig{}, Rng::mix(kSeed, 11));
        plan = chunk_plan(forest.descriptor_len, validation.chunk_size, kSeed);
    }

    DescriptorLayout layout(const FeatureMap& scene) const {
        return DescriptorLayout::from_template(store.front(), scene.modalities);
    }

    ComposedScene planted_scene(int index, int placements, double clutter, double noise) const {
        SceneSpec spec;
        spec.width = 192;
        spec.height = 144;
        spec.random_placements = placements;
        spec.clutter_density = clutter;
        spec.noise_rate = noise;
        spec.seed = Rng::mix(kSeed, 5000 + index);
        return compose_scene(spec, objects, synth, &store);
    }
};

std::string run_cli(const std::string& args) {
    const std::string cmd = std::string(FORESTMATCH_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0 ? "" : "exit " + std::to_string(WEXITSTATUS(status));
}

}  // namespace

// ---------------------------------------------------------------------------

int main() {
    Harness h;
    std::cout << "building the 320-template default world..." << std::endl;
    World world;

    std::vector<TrialTrace> traces;  // feeds criterion 5

    // ----- criterion 1: noiseless oracle equivalence --------------------------
    {
        const auto t0 = std::chrono::steady_clock::now();
        int exact = 0, windows = 0;
        for (int s = 0; s < 42 && windows < 504; ++s) {
            const ComposedScene scene = world.planted_scene(s, 12, 0.2, 0.0);
            const DescriptorLayout layout = world.layout(scene.features);
            for (const PlacedObject& gt : scene.truth) {
                ++windows;
                const auto descriptor = extract_window_descriptor(scene.features, layout, gt.x, gt.y);
                const QueryResult q = forest_query(world.forest, descriptor);
                if (q.rejected) continue;
                const ValidationResult v = preemptive_validate(scene.features, gt.x, gt.y, q.candidates,
                                                               world.store, world.plan, world.validation);
                traces.push_back({q.candidates.size(), v});
                if (v.winner && v.winner->first == exhaustive_nearest(scene.features, world.store, gt.x, gt.y))
                    ++exact;
            }
        }
        const double elapsed = seconds_since(t0);
        std::ostringstream detail;
        detail << exact << "/" << windows << " exact nearest (need 100% of >= 500), " << elapsed
               << " s (limit 60)";
        h.criterion(1, "noiseless oracle equivalence", windows >= 500 && exact == windows && elapsed < 60.0,
                    detail.str());
    }

    // ----- criterion 2: noisy winner agreement --------------------------------
    {
        int agree = 0, trials = 0;
        for (int s = 0; s < 90 && trials < 1080; ++s) {
            const ComposedScene scene = world.planted_scene(1000 + s, 12, 0.25, 0.1);
            const DescriptorLayout layout = world.layout(scene.features);
            for (const PlacedObject& gt : scene.truth) {
                const auto descriptor = extract_window_descriptor(scene.features, layout, gt.x, gt.y);
                const QueryResult q = forest_query(world.forest, descriptor);
                if (q.rejected) continue;
                ++trials;
                const ValidationResult v = preemptive_validate(scene.features, gt.x, gt.y, q.candidates,
                                                               world.store, world.plan, world.validation);
                traces.push_back({q.candidates.size(), v});
                const auto [full_id, full_score] =
                    full_validate(scene.features, gt.x, gt.y, q.candidates, world.store, world.validation);
                if (v.winner ? v.winner->first == full_id : full_score <= world.validation.alpha) ++agree;
            }
        }
        const double rate = trials > 0 ? static_cast<double>(agree) / trials : 0.0;
        std::ostringstream detail;
        detail << agree << "/" << trials << " = " << rate << " agreement (need >= 0.95 over >= 1000 trials)";
        h.criterion(2, "noisy oracle agreement", trials >= 1000 && rate >= 0.95, detail.str());
    }

    // ----- criterion 3: background rejection and foreground recall ------------
    {
        DetectConfig dc;
        dc.validation = world.validation;
        dc.pipeline.chunk_seed = World::kSeed;

        std::uint64_t rejected = 0, in_range = 0;
        const std::vector<SyntheticObject> holdout(world.objects.begin() + 1, world.objects.end());
        for (int s = 0; s < 6; ++s) {
            SceneSpec spec;
            spec.width = 160;
            spec.height = 120;
            spec.clutter_density = 0.5;
            spec.noise_rate = 0.05;
            spec.seed = Rng::mix(World::kSeed, 9000 + s);
            const ComposedScene scene = compose_scene(spec, holdout, world.synth, nullptr);
            const DetectResult r = detect(scene.features, world.forest, world.store, dc);
            rejected += r.stats.windows_rejected;
            in_range += r.stats.windows_in_range;
        }
        const double rejection = static_cast<double>(rejected) / static_cast<double>(in_range);

        int recalled = 0, objects_total = 0;
        const double radius = 0.1 * world.synth.patch_size;  // k_m * extent
        for (int s = 0; s < 34; ++s) {
            const ComposedScene scene = world.planted_scene(2000 + s, 3, 0.2, 0.0);
            const DetectResult r = detect(scene.features, world.forest, world.store, dc);
            for (const PlacedObject& gt : scene.truth) {
                ++objects_total;
                bool ok = false;
                for (int dy = -2; dy <= 2 && !ok; ++dy)
                    for (int dx = -2; dx <= 2 && !ok; ++dx) {
                        const int x = gt.x + dx, y = gt.y + dy;
                        if (x < 0 || y < 0 || x >= r.outcome.width || y >= r.outcome.height) continue;
                        if (std::hypot(static_cast<double>(dx), static_cast<double>(dy)) > radius) continue;
                        if (r.outcome.at(x, y) == kOutcomeValidated) ok = true;
                    }
                recalled += ok ? 1 : 0;
            }
        }
        const double recall = static_cast<double>(recalled) / objects_total;
        std::ostringstream detail;
        detail << "clutter rejection " << rejection << " (need >= 0.90), recall into validation " << recalled
               << "/" << objects_total << " = " << recall << " (need >= 0.99)";
        h.criterion(3, "preemptive background rejection", rejection >= 0.90 && recall >= 0.99, detail.str());
    }

    // ----- criterion 4: sublinear search --------------------------------------
    {
        RunConfig cfg;
        cfg.master_seed = World::kSeed;
        const auto rows = run_sweep(cfg, 2);
        std::vector<double> sizes, totals, exhaustives;
        bool identity_ok = true;
        for (const auto& row : rows) {
            sizes.push_back(row.size);
            totals.push_back(std::max(row.mean_total, 1e-9));
            exhaustives.push_back(std::max(row.mean_exhaustive, 1e-9));
            if (std::fabs(row.mean_exhaustive - row.exhaustive_expected) > 0.01 * row.exhaustive_expected)
                identity_ok = false;
        }
        const double slope = loglog_slope(sizes, totals);
        const double exhaustive_slope = loglog_slope(sizes, exhaustives);
        std::ostringstream detail;
        detail << "forest slope " << slope << " (need < 0.5), exhaustive slope " << exhaustive_slope
               << " (need 1.0 +- 0.05, cost identity within 1%)";
        h.criterion(4, "sublinear comparison scaling",
                    slope < 0.5 && std::fabs(exhaustive_slope - 1.0) <= 0.05 && identity_ok, detail.str());
    }

    // ----- criterion 5: median halving ----------------------------------------
    {
        std::uint64_t checked = 0, violations = 0;
        for (const TrialTrace& trial : traces) {
            const std::size_t n = trial.initial_candidates;
            if (n < 2 || trial.result.alpha_floor_hit) continue;
            ++checked;
            std::size_t bound = n;
            for (std::size_t k = 0; k < trial.result.survivors_per_stage.size(); ++k) {
                bound = (bound + 1) / 2;  // ceil(n / 2^(k+1))
                if (static_cast<std::size_t>(trial.result.survivors_per_stage[k]) > bound) ++violations;
            }
            const int stage_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(n)))) + 1;
            if (trial.result.stages_run > stage_limit) ++violations;
        }
        std::ostringstream detail;
        detail << violations << " violations over " << checked << " traced validations (need 0)";
        h.criterion(5, "median-halving survivor bound", checked > 100 && violations == 0, detail.str());
    }

    // ----- criterion 6: fuzzy partition ---------------------------------------
    {
        ForestConfig crisp;
        crisp.fuzzy_margin = 0.0;
        const Tree tree0 = train_tree(world.store, crisp, Rng::mix(World::kSeed, 13));
        std::vector<std::uint32_t> all;
        for (const auto& leaf : leaf_id_sets(tree0)) all.insert(all.end(), leaf.begin(), leaf.end());
        std::sort(all.begin(), all.end());
        std::vector<std::uint32_t> expected(world.store.size());
        for (std::size_t i = 0; i < world.store.size(); ++i) expected[i] = world.store[i].id;
        const bool partition_ok = all == expected;

        ForestConfig fuzzy_cfg;
        fuzzy_cfg.fuzzy_margin = 1.0;
        const Forest fuzzy = train_forest(world.store, fuzzy_cfg, Rng::mix(World::kSeed, 17));
        std::size_t fuzzy_total = 0;
        for (const auto& leaf : leaf_id_sets(fuzzy.trees[0])) fuzzy_total += leaf.size();
        bool own_id_ok = true;
        for (const Template& t : world.store) {
            const QueryResult q = forest_query(fuzzy, t.descriptor);
            if (q.rejected || !std::binary_search(q.candidates.begin(), q.candidates.end(), t.id))
                own_id_ok = false;
        }
        std::ostringstream detail;
        detail << "xi=0 exact partition: " << (partition_ok ? "yes" : "NO") << "; xi=1 leaf total " << fuzzy_total
               << " >= " << world.store.size() << " and all 320 own-ids retrievable: " << (own_id_ok ? "yes" : "NO");
        h.criterion(6, "fuzzy partition", partition_ok && fuzzy_total >= world.store.size() && own_id_ok,
                    detail.str());
    }

    // ----- criterion 7: entropy unit checks -----------------------------------
    {
        auto mini = [](std::uint32_t id, std::vector<QuantizedValue> d, std::vector<std::uint8_t> fg) {
            Template t;
            t.id = id;
            t.descriptor = std::move(d);
            t.fg_mask = std::move(fg);
            t.patch_w = t.patch_h = 1;
            t.locations.emplace_back(0, 0);
            t.depth_patch = {0.0f};
            return t;
        };
        const std::vector<Template> point{mini(0, {5, 5}, {1, 1}), mini(1, {5, 5}, {1, 1})};
        const std::vector<Template> uniform{mini(0, {1, 2, 3, 4, 5, 6, 7, 8}, std::vector<std::uint8_t>(8, 1))};
        const std::vector<const Template*> point_set{&point[0], &point[1]};
        const std::vector<const Template*> uniform_set{&uniform[0]};
        const double h_point = entropy(point_set, {0, 1});
        const double h_uniform = entropy(uniform_set, {0, 1, 2, 3, 4, 5, 6, 7});

        // 4-template hand case vs an independent direct-formula evaluation
        const std::vector<Template> hand{
            mini(0, {1, 1, 4, 8}, {1, 1, 0, 1}),
            mini(1, {1, 2, 5, 7}, {1, 1, 1, 1}),
            mini(2, {5, 6, 1, 2}, {0, 1, 1, 1}),
            mini(3, {5, 5, 2, 2}, {1, 1, 1, 0}),
        };
        const std::vector<const Template*> hand_set{&hand[0], &hand[1], &hand[2], &hand[3]};
        SplitParams p;
        p.selector = {0, 1, 3};
        p.exemplar = {1, 1, 8};
        p.tau = 4.5;
        p.fuzzy_margin = 1.0;

        double lambda = 0.0;
        for (const Template* t : hand_set)
            for (std::uint32_t c : p.selector) lambda += t->fg_mask[c] ? 1.0 : 0.0;
        auto entropy_of = [&](const std::vector<const Template*>& s) {
            std::map<int, double> counts;
            for (const Template* t : s)
                for (std::uint32_t c : p.selector)
                    if (t->descriptor[c] >= 1) counts[t->descriptor[c]] += 1.0;
            double e = 0.0;
            for (const auto& [v, cnt] : counts) {
                const double d = cnt / (static_cast<double>(s.size()) * p.selector.size());
                e -= d * std::log(d);
            }
            return e;
        };
        std::vector<const Template*> left, right;
        for (const Template* t : hand_set) {
            int dist = 0;
            for (std::size_t i = 0; i < p.selector.size(); ++i)
                dist += dim_distance(p.exemplar[i], t->descriptor[p.selector[i]]);
            const double margin = dist - p.tau;
            if (margin < -p.fuzzy_margin) left.push_back(t);
            else if (margin > p.fuzzy_margin) right.push_back(t);
            else {
                left.push_back(t);
                right.push_back(t);
            }
        }
        const double oracle = lambda * (entropy_of(hand_set) -
                                        (left.size() * entropy_of(left) + right.size() * entropy_of(right)) /
                                            static_cast<double>(left.size() + right.size()));
        const double energy = split_energy(hand_set, p);

        const bool ok = std::fabs(h_point) <= 1e-9 && std::fabs(h_uniform - std::log(8.0)) <= 1e-9 &&
                        std::fabs(energy - oracle) <= 1e-9;
        std::ostringstream detail;
        detail << "point mass " << h_point << ", uniform " << h_uniform << " vs ln8 " << std::log(8.0)
               << ", energy " << energy << " vs oracle " << oracle << " (tolerances 1e-9)";
        h.criterion(7, "entropy unit checks", ok, detail.str());
    }

    // ----- criteria 8 + 9: tree-count suite on the default noisy scenes -------
    {
        RunConfig cfg;
        cfg.master_seed = World::kSeed;
        cfg.objects = 1;
        cfg.holdout_objects = 3;
        for (int s = 0; s < 10; ++s) {
            SceneSpec spec;
            spec.width = 160;
            spec.height = 120;
            spec.random_placements = 3;
            spec.clutter_density = 0.25;
            spec.noise_rate = 0.1;
            cfg.scenes.push_back(spec);
        }
        cfg.bench.tree_counts = {1, 5};
        const auto rows = run_tree_suite(cfg, 2);

        const double recall1 = rows[0].metrics.recall;
        const double recall5 = rows[1].metrics.recall;
        std::ostringstream d8;
        d8 << "recall(1 tree) = " << recall1 << ", recall(5 trees) = " << recall5 << " (need 5 >= 1)";
        h.criterion(8, "multi-tree benefit", recall5 >= recall1, d8.str());

        bool split_ok = true;
        double worst = 0.0;
        for (const FrameCost& frame : rows[0].frames) {
            const std::uint64_t validation = frame.validation_dim_distance + frame.validation_depth_compares;
            if (validation == 0) {
                split_ok = false;
                continue;
            }
            const double ratio = static_cast<double>(frame.tree_dim_distance) / static_cast<double>(validation);
            worst = std::max(worst, ratio);
            if (ratio > 0.05) split_ok = false;
        }
        std::ostringstream d9;
        d9 << "worst per-frame tree/validation ratio " << worst << " over " << rows[0].frames.size()
           << " frames (need <= 0.05)";
        h.criterion(9, "tree cost negligible vs validation", split_ok, d9.str());
    }

    // ----- criterion 10: determinism and serialization -------------------------
    {
        const fs::path dir = fs::temp_directory_path() / ("fm_accept_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cfg_path = (dir / "config.json").string();
        std::ofstream(cfg_path) << R"json({
  "master_seed": 77,
  "dataset": {
    "objects": 1, "holdout_objects": 1,
    "pose_grid": {"yaw_steps": 4, "pitch_steps": 2, "roll_steps": 2, "scales": [1.0]},
    "scenes": [{"size": [96, 72], "random_placements": 1, "clutter_density": 0.25, "noise_rate": 0.05}]
  },
  "forest": {"trees": 2, "max_depth": 6, "min_leaf": 4},
  "bench": {"template_sweep": [8, 16], "sweep_objects": 1, "sweep_max_depth": 6,
            "tree_counts": [1, 2], "probe_windows": 30, "exhaustive_probe_windows": 4}
})json";

        std::string err;
        auto gen_dir = [&](const std::string& name) { return (dir / name).string(); };
        err += run_cli("gen --config " + cfg_path + " --out " + gen_dir("a"));
        err += run_cli("gen --config " + cfg_path + " --out " + gen_dir("b"));
        err += run_cli("train --templates " + gen_dir("a") + "/templates.bin --out " + gen_dir("a") + "/f.bin");
        err += run_cli("train --templates " + gen_dir("b") + "/templates.bin --out " + gen_dir("b") + "/f.bin");
        err += run_cli("detect --scene " + gen_dir("a") + "/scene_000.bin --forest " + gen_dir("a") +
                       "/f.bin --templates " + gen_dir("a") + "/templates.bin --out " + gen_dir("a") +
                       "/det.jsonl --reject-map " + gen_dir("a") + "/map.pgm");
        err += run_cli("detect --scene " + gen_dir("b") + "/scene_000.bin --forest " + gen_dir("b") +
                       "/f.bin --templates " + gen_dir("b") + "/templates.bin --out " + gen_dir("b") +
                       "/det.jsonl --reject-map " + gen_dir("b") + "/map.pgm");
        err += run_cli("bench --config " + cfg_path + " --out " + gen_dir("a") + "/bench");
        err += run_cli("bench --config " + cfg_path + " --out " + gen_dir("b") + "/bench");

        bool bytes_ok = err.empty();
        for (const char* name :
             {"/templates.bin", "/scene_000.bin", "/scene_000.truth.json", "/f.bin", "/det.jsonl", "/map.pgm",
              "/bench/sweep.csv", "/bench/trees.csv", "/bench/bench.json"}) {
            if (!bytes_ok) break;
            if (read_file(gen_dir("a") + name) != read_file(gen_dir("b") + name)) bytes_ok = false;
        }

        // containers round-trip bit-exactly and reloaded forests answer identically
        const std::string t1 = (dir / "t1.bin").string(), t2 = (dir / "t2.bin").string();
        save_template_set(t1, world.store, "{}");
        save_template_set(t2, load_template_set(t1), "{}");
        bool roundtrip_ok = read_file(t1) == read_file(t2);
        const auto from_json = template_set_from_json(template_set_to_json(world.store, "{}"));
        save_template_set(t2, from_json, "{}");
        roundtrip_ok = roundtrip_ok && read_file(t1) == read_file(t2);

        const std::string f1 = (dir / "f1.bin").string(), f2 = (dir / "f2.bin").string();
        save_forest(f1, world.forest, "{}");
        const Forest reloaded = load_forest(f1);
        save_forest(f2, reloaded, "{}");
        roundtrip_ok = roundtrip_ok && read_file(f1) == read_file(f2);

        bool queries_ok = true;
        Rng rng(5);
        for (const Template& t : world.store) {
            const QueryResult a = forest_query(world.forest, t.descriptor);
            const QueryResult b = forest_query(reloaded, t.descriptor);
            if (a.rejected != b.rejected || a.candidates != b.candidates) queries_ok = false;
        }
        for (int i = 0; i < 200; ++i) {
            std::vector<QuantizedValue> probe(world.forest.descriptor_len);
            for (auto& v : probe) v = static_cast<QuantizedValue>(rng.next_int(0, 8));
            const QueryResult a = forest_query(world.forest, probe);
            const QueryResult b = forest_query(reloaded, probe);
            if (a.rejected != b.rejected || a.rejection_depth != b.rejection_depth ||
                a.candidates != b.candidates)
                queries_ok = false;
        }
        fs::remove_all(dir);

        std::ostringstream detail;
        detail << "CLI byte-reproducible: " << (bytes_ok ? "yes" : (err.empty() ? "NO" : "NO (" + err + ")"))
               << ", container round-trips bit-exact: " << (roundtrip_ok ? "yes" : "NO")
               << ", reloaded-forest queries identical: " << (queries_ok ? "yes" : "NO");
        h.criterion(10, "determinism and serialization", bytes_ok && roundtrip_ok && queries_ok, detail.str());
    }

    std::cout << (h.failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(h.failures) + " CRITERIA FAILED")
              << std::endl;
    return h.failures;
}
