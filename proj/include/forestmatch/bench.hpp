// Benchmark harness: template-count sweep with an exhaustive-search
// baseline, and a tree-count suite over the configured scenes.

#pragma once

#include "forestmatch/config.hpp"
#include "forestmatch/pipeline.hpp"

#include <cstdint>
#include <vector>

namespace forestmatch {

struct SweepRow {
    int size = 0;                    // |S|
    std::uint64_t windows = 0;       // probe windows measured
    double mean_tree = 0.0;          // dim_distance evaluations per window in tree traversal
    double mean_validation = 0.0;    // ... in preemptive validation
    double mean_total = 0.0;
    double mean_exhaustive = 0.0;    // full-database linear scan, 0 when the baseline is off
    double exhaustive_expected = 0.0;  // sum of foreground dims over the template prefix
};

struct FrameCost {
    std::uint64_t tree_dim_distance = 0;
    std::uint64_t validation_dim_distance = 0;
    std::uint64_t validation_depth_compares = 0;
    double rejection_fraction = 0.0;  // rejected / in-range windows
};

struct TreeSuiteRow {
    int trees = 0;
    EvalMetrics metrics;
    CostCounters counters;
    std::vector<FrameCost> frames;
};

std::vector<SweepRow> run_sweep(const RunConfig& cfg, int threads);
std::vector<TreeSuiteRow> run_tree_suite(const RunConfig& cfg, int threads);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace forestmatch
