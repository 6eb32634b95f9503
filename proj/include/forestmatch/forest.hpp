// Fuzzy decision forest over template descriptors: exemplar split
// functions scored by foreground-weighted unsupervised entropy, fuzzy
// duplication of training vectors near the threshold, and a preemptive
// background rejector in every node.

#pragma once

#include "forestmatch/features.hpp"
#include "forestmatch/rng.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace forestmatch {

// Running operation counts; dim_distance evaluations are accounted at the
// call sites so the split between tree traversal and validation stays exact.
struct CostCounters {
    std::uint64_t tree_dim_distance = 0;
    std::uint64_t validation_dim_distance = 0;
    std::uint64_t validation_depth_compares = 0;
    std::uint64_t rejector_lookups = 0;
    std::uint64_t chunk_evaluations = 0;

    std::uint64_t validation_compares() const { return validation_dim_distance + validation_depth_compares; }

    CostCounters& operator+=(const CostCounters& o) {
        tree_dim_distance += o.tree_dim_distance;
        validation_dim_distance += o.validation_dim_distance;
        validation_depth_compares += o.validation_depth_compares;
        rejector_lookups += o.rejector_lookups;
        chunk_evaluations += o.chunk_evaluations;
        return *this;
    }
};

// ---------------------------------------------------------------------------
// Node parameters
// ---------------------------------------------------------------------------

struct SplitParams {
    std::vector<std::uint32_t> selector;    // distinct descriptor coordinates
    std::vector<QuantizedValue> exemplar;   // drawn template's values at selector
    double tau = 0.0;
    double fuzzy_margin = 0.0;              // xi
};

// One known-value row per selected coordinate: row r marks the feature
// values whose empirical density at that coordinate exceeds the density
// floor. Value 0 is never known.
struct RejectorParams {
    std::vector<std::uint32_t> selector;
    std::vector<std::array<std::uint8_t, kNumBins>> known_rows;  // parallel to selector
    double accept_floor = 0.0;  // tau-check; reject iff known fraction < floor

    bool value_known(std::size_t row, QuantizedValue v) const {
        return v >= 1 && v <= kNumBins && known_rows[row][v - 1] != 0;
    }
};

enum class RouteDest { LeftOnly, RightOnly, Both };

enum class RejectorObjective { MinEntropy, MinInfoGain };

struct ForestConfig {
    int trees = 1;
    int subspace_dim = 8;        // d'
    int rejector_dim = 16;       // selector width of the background rejector
    int candidates = 64;         // |Theta|
    double fuzzy_margin = 0.5;   // xi
    double accept_floor = 0.6;   // tau-check
    double density_floor = 0.05; // rho
    int min_leaf = 64;
    int max_depth = 8;
    RejectorObjective rejector_objective = RejectorObjective::MinEntropy;

    bool operator==(const ForestConfig&) const = default;
};

// Nodes live in a flat pre-order array; children by index, -1 for none.
struct TreeNode {
    RejectorParams rejector;
    bool is_leaf = false;
    SplitParams split;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::vector<std::uint32_t> leaf_ids;
};

struct Tree {
    std::vector<TreeNode> nodes;
};

struct Forest {
    std::vector<Tree> trees;
    int descriptor_len = 0;
    ForestConfig config;
};

// ---------------------------------------------------------------------------
// Node-level operations
// ---------------------------------------------------------------------------

// sum of dim_distance over the selector minus tau.
double split_margin(const std::vector<QuantizedValue>& v, const SplitParams& p);

// margin < -xi -> LeftOnly, margin > xi -> RightOnly, otherwise Both.
RouteDest route(const std::vector<QuantizedValue>& v, const SplitParams& p);

// Aggregate value distribution over the selected coordinates of a node set;
// D[i] is the density of value i+1, normalized by |S| * d' (missing values
// count in the denominator only).
std::array<double, kNumBins> node_distribution(const std::vector<const Template*>& set,
                                               const std::vector<std::uint32_t>& selector);

double distribution_entropy(const std::array<double, kNumBins>& dist);

// Unsupervised entropy of the node set under the selector, natural log.
double entropy(const std::vector<const Template*>& set, const std::vector<std::uint32_t>& selector);

// Foreground-weighted information gain of the candidate split. Zero when
// the selector touches no foreground coordinate or either child equals the
// parent set (including the empty-child case).
double split_energy(const std::vector<const Template*>& set, const SplitParams& p);

RejectorParams train_rejector(const std::vector<const Template*>& set,
                              const std::vector<SplitParams>& candidate_pool, const ForestConfig& cfg);

// true = reject: fraction of selected coordinates with a known value is
// below the accept floor. floor_scale relaxes the floor for queries from
// pooled pyramid levels.
bool reject(const std::vector<QuantizedValue>& v, const RejectorParams& r, CostCounters* counters = nullptr,
            double floor_scale = 1.0);

// ---------------------------------------------------------------------------
// Training and query
// ---------------------------------------------------------------------------

Tree train_tree(const std::vector<Template>& templates, const ForestConfig& cfg, std::uint64_t seed);
Forest train_forest(const std::vector<Template>& templates, const ForestConfig& cfg, std::uint64_t seed);

struct QueryResult {
    bool rejected = false;
    int rejection_depth = -1;              // valid when rejected
    std::vector<std::uint32_t> candidates; // sorted, deduplicated
};

// Single-path descent: rejector first at every node; inside the fuzzy band
// the sign of the margin picks the child, ties to the left.
QueryResult descend(const Tree& tree, const std::vector<QuantizedValue>& v, CostCounters* counters = nullptr,
                    double floor_scale = 1.0);

// Union of the per-tree candidate sets; rejected only when every tree
// rejects, reporting the minimum rejection depth.
QueryResult forest_query(const Forest& forest, const std::vector<QuantizedValue>& v,
                         CostCounters* counters = nullptr, double floor_scale = 1.0);

// Leaf id multisets per tree, in node order (testing / diagnostics).
std::vector<std::vector<std::uint32_t>> leaf_id_sets(const Tree& tree);

struct TreeStats {
    int depth = 0;
    int leaves = 0;
    double mean_leaf_size = 0.0;
    int max_leaf_size = 0;
};

TreeStats tree_stats(const Tree& tree);

}  // namespace forestmatch
