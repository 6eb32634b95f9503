// Declarative run configuration: one JSON file drives dataset generation,
// training, detection and benchmarking. Every output artifact embeds the
// canonical dump of the config it was produced with.

#pragma once

#include "forestmatch/forest.hpp"
#include "forestmatch/pipeline.hpp"
#include "forestmatch/synth.hpp"
#include "forestmatch/validate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace forestmatch {

struct BenchConfig {
    std::vector<int> template_sweep = {250, 500, 1000, 2000, 4000};
    int sweep_objects = 13;
    int sweep_max_depth = 9;          // multi-object depth
    double sweep_fuzzy_margin = 0.25; // multi-object duplication budget
    int sweep_min_leaf = 32;          // multi-object leaf floor
    int sweep_repetitions = 3;        // independent forests averaged per size
    std::vector<int> tree_counts = {1, 5};
    int probe_windows = 400;
    int exhaustive_probe_windows = 24;
    bool exhaustive_baseline = true;
};

struct RunConfig {
    std::uint64_t master_seed = 1;
    int objects = 1;
    int holdout_objects = 0;  // clutter-only sources, never templated
    SynthConfig synth;
    PoseGridSpec pose_grid;
    std::vector<SceneSpec> scenes;
    ForestConfig forest;
    ValidationConfig validation;
    PipelineConfig pipeline;
    EvalCriterion criterion;
    BenchConfig bench;
};

// Parses a config JSON document; missing keys fall back to defaults,
// out-of-range values raise ConfigError.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical dump (sorted keys, fixed indentation); stable bytes for a given
// config, embedded as container metadata together with the tool version.
std::string config_to_json(const RunConfig& cfg);

// Seed helpers shared by the commands so artifacts line up across runs.
std::uint64_t object_seed(const RunConfig& cfg, int object_index);
std::uint64_t scene_seed(const RunConfig& cfg, int scene_index);
std::uint64_t template_set_seed(const RunConfig& cfg);
std::uint64_t forest_seed(const RunConfig& cfg);

}  // namespace forestmatch
