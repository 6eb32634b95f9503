// Breadth-first preemptive leaf validation: candidates are scored chunk by
// chunk, survivors must beat max(median, alpha) each stage, and the full
// scorer doubles as the exhaustive reference.

#pragma once

#include "forestmatch/features.hpp"
#include "forestmatch/forest.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace forestmatch {

struct ValidationConfig {
    int chunk_size = 128;            // descriptor coordinates per chunk
    double alpha = 0.5;
    bool use_depth = true;
    double depth_tolerance_mm = 50.0;

    bool operator==(const ValidationConfig&) const = default;
};

struct ValidationResult {
    std::optional<std::pair<std::uint32_t, double>> winner;  // (template id, accumulated score)
    int stages_run = 0;
    std::vector<int> survivors_per_stage;
    std::uint64_t chunk_evaluations = 0;  // (survivor, stage) pairs
    bool alpha_floor_hit = false;         // some stage had median < alpha
};

// Seeded random permutation of [0, descriptor_len) cut into
// ceil(len / chunk_size) contiguous chunks; one plan is shared by the query
// and every candidate.
std::vector<std::vector<std::uint32_t>> chunk_plan(int descriptor_len, int chunk_size, std::uint64_t seed);

// Normalized similarity of one chunk, restricted to its foreground
// coordinates; 0.5 when the chunk has none. With use_depth the feature term
// is blended 50/50 with mean depth closeness over the chunk's foreground
// locations.
double chunk_score(const FeatureMap& scene, int cx, int cy, const Template& t,
                   const std::vector<std::uint32_t>& chunk, const ValidationConfig& cfg,
                   CostCounters* counters = nullptr);

// Stage-wise validation of the candidate set at window (cx, cy). Survivors
// of stage k satisfy s(v) > max(median over survivors, alpha) on the
// running mean score; when that empties the stage but some score beats
// alpha, the single best-scoring candidate (lowest id on ties) survives.
ValidationResult preemptive_validate(const FeatureMap& scene, int cx, int cy,
                                     const std::vector<std::uint32_t>& candidates,
                                     const std::vector<Template>& store,
                                     const std::vector<std::vector<std::uint32_t>>& plan,
                                     const ValidationConfig& cfg, CostCounters* counters = nullptr);

// Scores every candidate over the full descriptor (plus the depth term) and
// returns the argmax, ties to the lowest id.
std::pair<std::uint32_t, double> full_validate(const FeatureMap& scene, int cx, int cy,
                                               const std::vector<std::uint32_t>& candidates,
                                               const std::vector<Template>& store, const ValidationConfig& cfg,
                                               CostCounters* counters = nullptr);

}  // namespace forestmatch
