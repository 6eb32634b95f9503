// End-to-end detection: coarse/fine pyramid traversal, forest-gated sliding
// windows, preemptive validation, NMS and evaluation against ground truth.

#pragma once

#include "forestmatch/forest.hpp"
#include "forestmatch/synth.hpp"
#include "forestmatch/validate.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace forestmatch {

struct Detection {
    int x = 0;
    int y = 0;
    std::uint32_t template_id = 0;
    std::uint32_t object_id = 0;
    Pose pose;
    double score = 0.0;
    std::optional<int> rejected_at_depth;  // diagnostics only, never set on emitted detections
};

struct EvalCriterion {
    double k_m = 0.1;                  // centre error allowance as a fraction of the extent
    double pose_tolerance_deg = 22.5;  // per-angle
};

struct PipelineConfig {
    double nms_overlap = 0.5;
    double depth_band_lo_mm = 0.0;     // windows with median depth outside
    double depth_band_hi_mm = 1e9;     // the band are skipped
    double coarse_floor_scale = 0.95;  // rejector floor relaxation on the pooled level
    int threads = 0;                   // 0 = hardware concurrency
    std::uint64_t chunk_seed = 0;      // shared validation chunk plan
};

// Per-window outcome codes for the rejection-depth grid.
inline constexpr int kOutcomeValidated = -1;
inline constexpr int kOutcomeDepthSkipped = -2;

struct WindowOutcomeGrid {
    int width = 0;   // fine window origins per row
    int height = 0;
    std::vector<int> codes;  // >= 0 rejection depth, or an outcome constant

    int at(int x, int y) const { return codes[static_cast<std::size_t>(y) * width + x]; }
};

struct DetectStats {
    std::uint64_t windows_total = 0;
    std::uint64_t windows_in_range = 0;   // not skipped for depth range
    std::uint64_t windows_rejected = 0;   // rejected before any leaf
    std::uint64_t windows_validated = 0;  // entered preemptive validation
};

struct TraceRecord {
    int x = 0;
    int y = 0;
    ValidationResult validation;
};

struct DetectResult {
    std::vector<Detection> detections;  // after NMS
    WindowOutcomeGrid outcome;
    DetectStats stats;
    CostCounters counters;
    std::vector<TraceRecord> traces;  // filled when cfg asks for traces
};

struct DetectConfig {
    ValidationConfig validation;
    PipelineConfig pipeline;
    bool keep_traces = false;
};

// Runs the two-level pyramid over the scene: the stride-2 modal downsample
// nominates windows whose (floor-relaxed) forest query survives, the fine
// level re-queries the nominated block and its 4-neighbourhood and validates
// the resulting candidate sets. Throws ShapeError when the scene is smaller
// than the template patch, CompatError on layout mismatch.
DetectResult detect(const FeatureMap& scene, const Forest& forest, const std::vector<Template>& store,
                    const DetectConfig& cfg);

// Greedy score-descending suppression by window IoU.
std::vector<Detection> nms(std::vector<Detection> detections, double overlap_threshold, int patch_w, int patch_h);

struct EvalMetrics {
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
    double precision = 1.0;  // 1.0 by convention when there are no detections
    bool precision_defined = false;
    double recall = 0.0;
    double accuracy = 0.0;  // tp / (tp + fp + fn)
};

bool detection_matches(const Detection& d, const PlacedObject& gt, const EvalCriterion& criterion, int patch_w,
                       int patch_h);

// One-to-one greedy matching by descending score.
EvalMetrics evaluate(const std::vector<Detection>& detections, const std::vector<PlacedObject>& truth,
                     const EvalCriterion& criterion, int patch_w, int patch_h);

// Stride-2 downsample: modal value per 2x2 block and modality (ties to the
// smaller value); depth is the median of the valid block entries.
FeatureMap downsample_modal(const FeatureMap& fine);

}  // namespace forestmatch
