// Quantized multi-modal features, the template data model and the
// normalized similarity measure.
//
// Feature values are integers 0..8. 0 means "not significant / missing";
// 1..8 index a circular bin space. Bin boundaries:
//   ColourGradient  gradient direction mod 180deg, 8 bins of 22.5deg,
//                   bin = 1 + floor(angle / 22.5deg); 0 when the gradient
//                   magnitude is below FeatureConfig::magnitude_threshold.
//   SurfaceNormal   depth-gradient direction over 360deg, 8 bins of 45deg;
//                   0 when any depth sample of the stencil is invalid or the
//                   slope magnitude is below normal_threshold (mm/px).
//   Hue             hue angle over 360deg, 8 bins of 45deg; 0 when HSV
//                   saturation is below saturation_floor.
// Border pixels (no full central-difference stencil) are 0.

#pragma once

#include "forestmatch/common.hpp"
#include "forestmatch/rng.hpp"

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace forestmatch {

using QuantizedValue = std::uint8_t;

inline constexpr int kNumBins = 8;
inline constexpr int kMaxDimDistance = 4;

enum class Modality : std::uint8_t {
    ColourGradient = 0,
    SurfaceNormal = 1,
    Hue = 2,
    Depth = 3,  // validation-stage scoring only, never part of descriptors
};

const char* modality_name(Modality m);

// ---------------------------------------------------------------------------
// Raw grids
// ---------------------------------------------------------------------------

struct ColorImage {
    int width = 0;
    int height = 0;
    std::vector<std::array<std::uint8_t, 3>> pixels;  // rgb

    ColorImage() = default;
    ColorImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, {0, 0, 0}) {}
    std::array<std::uint8_t, 3>& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const std::array<std::uint8_t, 3>& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Depth in millimetres; 0 marks an invalid measurement.
struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    DepthImage() = default;
    DepthImage(int w, int h, float fill = 0.0f) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
    float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    MaskImage() = default;
    MaskImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0) {}
    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// ---------------------------------------------------------------------------
// FeatureMap
// ---------------------------------------------------------------------------

// Dense grid of quantized values per (x, y, modality), plus an optional
// depth grid. Pixel-major, modality-minor storage.
struct FeatureMap {
    int width = 0;
    int height = 0;
    std::vector<Modality> modalities;
    std::vector<QuantizedValue> values;
    std::vector<float> depth;  // empty, or width*height entries

    FeatureMap() = default;
    FeatureMap(int w, int h, std::vector<Modality> mods)
        : width(w),
          height(h),
          modalities(std::move(mods)),
          values(static_cast<std::size_t>(w) * h * modalities.size(), 0) {}

    int num_modalities() const { return static_cast<int>(modalities.size()); }
    bool has_depth() const { return !depth.empty(); }

    QuantizedValue at(int x, int y, int m) const {
        return values[(static_cast<std::size_t>(y) * width + x) * modalities.size() + m];
    }
    void set(int x, int y, int m, QuantizedValue v) {
        values[(static_cast<std::size_t>(y) * width + x) * modalities.size() + m] = v;
    }
    float depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
};

// ---------------------------------------------------------------------------
// Template
// ---------------------------------------------------------------------------

struct Pose {
    float yaw = 0.0f;    // degrees
    float pitch = 0.0f;  // degrees
    float roll = 0.0f;   // degrees
    float scale = 1.0f;

    bool operator==(const Pose&) const = default;
};

// One object view. Descriptor coordinates are location-major,
// modality-minor: coordinate k covers locations[k / |M|] under
// modalities[k % |M|]. Background coordinates (fg_mask = 0) carry uniform
// noise in [1, 8] drawn once at construction.
struct Template {
    std::uint32_t id = 0;
    std::uint32_t object_id = 0;
    Pose pose;
    int patch_w = 0;
    int patch_h = 0;
    std::vector<std::pair<std::uint16_t, std::uint16_t>> locations;
    std::vector<QuantizedValue> descriptor;
    std::vector<std::uint8_t> fg_mask;
    std::vector<float> depth_patch;  // patch_w * patch_h, 0 = invalid

    int descriptor_len() const { return static_cast<int>(descriptor.size()); }
    int num_modalities() const {
        return locations.empty() ? 0 : static_cast<int>(descriptor.size() / locations.size());
    }
    int foreground_count() const;
    float depth_patch_at(int x, int y) const { return depth_patch[static_cast<std::size_t>(y) * patch_w + x]; }
};

// Shared descriptor geometry of a template set. The forest and the sliding
// window both assemble query descriptors through this.
struct DescriptorLayout {
    int patch_w = 0;
    int patch_h = 0;
    std::vector<std::pair<std::uint16_t, std::uint16_t>> locations;
    std::vector<Modality> modalities;  // non-depth

    int size() const { return static_cast<int>(locations.size() * modalities.size()); }
    bool operator==(const DescriptorLayout&) const = default;

    static DescriptorLayout from_template(const Template& t, const std::vector<Modality>& mods);
};

// Query descriptor for the window with top-left corner (cx, cy).
std::vector<QuantizedValue> extract_window_descriptor(const FeatureMap& scene, const DescriptorLayout& layout,
                                                      int cx, int cy);

// Lookup by template id; O(1) for dense generated sets, binary search
// otherwise. Throws DataError when the id is absent.
const Template& template_by_id(const std::vector<Template>& store, std::uint32_t id);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Per-dimension distance in [0, 4]: 0 if both missing, 4 if exactly one is
// missing, otherwise circular bin distance min(|a-b|, 8-|a-b|).
inline int dim_distance(QuantizedValue a, QuantizedValue b) {
    if (a == 0 || b == 0) return (a == b) ? 0 : kMaxDimDistance;
    const int d = a > b ? a - b : b - a;
    return d <= kNumBins - d ? d : kNumBins - d;
}

// Normalized similarity of the template against the window at (cx, cy):
// 1 - sum(dim_distance over foreground coordinates) / (4 * #foreground).
// Throws std::out_of_range if the window leaves the scene,
// ShapeError if scene modalities do not match the descriptor layout.
double similarity(const FeatureMap& scene, const Template& t, int cx, int cy);

struct FeatureConfig {
    double magnitude_threshold = 12.0;  // luminance units per pixel
    double saturation_floor = 0.15;     // HSV saturation in [0,1]
    double normal_threshold = 2.0;      // mm per pixel

    bool operator==(const FeatureConfig&) const = default;
};

// Quantizes rgb + depth into [ColourGradient, SurfaceNormal, Hue] and copies
// the depth grid through. Throws ShapeError on dimension mismatch.
FeatureMap extract_features(const ColorImage& rgb, const DepthImage& depth, const FeatureConfig& cfg = {});

// Crops a template from a feature view: locations on a stride grid over the
// patch, foreground from the mask, background coordinates filled with
// seeded uniform noise in [1, 8].
Template build_template(const FeatureMap& view, const MaskImage& mask, std::uint32_t id, std::uint32_t object_id,
                        const Pose& pose, int location_stride, Rng& rng);

}  // namespace forestmatch
