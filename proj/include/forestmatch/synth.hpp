// Procedural stand-in for CAD rendering: seeded objects, pose-sampled
// template sets and cluttered test scenes with exact ground truth.
//
// Out-of-plane rotation is approximated by an anisotropic foreshortening
// plus a yaw-dependent pre-rotation. The map from pose to transform is
// injective over the sampling ranges, so every (object, pose) label stays
// distinguishable; this is a documented fidelity limit, not a projection.

#pragma once

#include "forestmatch/features.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace forestmatch {

struct DepthProfile {
    double dome_mm = 60.0;   // peak relief at the silhouette centre; negative carves a dimple
    double slope_x = 0.0;    // mm across the patch width
    double slope_y = 0.0;    // mm across the patch height
};

struct TextureEdge {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // canonical patch coordinates
    double contrast = 0.0;                  // luminance value offset, [-0.35, 0.35]
};

struct SyntheticObject {
    std::uint32_t object_id = 0;
    std::uint64_t seed = 0;
    std::vector<std::array<double, 2>> silhouette;  // simple closed polygon
    DepthProfile depth_profile;
    double base_hue = 0.0;       // degrees
    double secondary_hue = 0.0;  // hue of the far side of the split line
    double hue_split_angle = 0.0;  // orientation of the two-tone boundary, radians
    std::vector<TextureEdge> texture_edges;
};

struct PlacedObject {
    std::uint32_t object_id = 0;
    Pose pose;
    int x = 0;  // window top-left in scene pixels
    int y = 0;
};

struct SceneSpec {
    int width = 160;
    int height = 120;
    std::vector<PlacedObject> placed;
    int random_placements = 0;  // auto-placed objects in addition to `placed`
    double clutter_density = 0.0;
    double noise_rate = 0.0;
    double occlusion_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct PoseGridSpec {
    int yaw_steps = 8;
    int pitch_steps = 5;
    int roll_steps = 4;
    std::vector<double> scales = {0.85, 1.0};
    double pitch_max = 60.0;  // degrees
};

struct SynthConfig {
    int patch_size = 24;
    int location_stride = 1;
    double min_silhouette_fraction = 0.2;
    double object_depth_mm = 1000.0;      // distance of the object base plane
    double background_depth_mm = 3000.0;  // scene far plane
    FeatureConfig features;

    bool operator==(const SynthConfig&) const = default;
};

struct RenderedView {
    ColorImage rgb;
    DepthImage depth;
    MaskImage mask;
};

struct ComposedScene {
    FeatureMap features;
    std::vector<PlacedObject> truth;
};

// Seeded random object; silhouette is star-shaped around the patch centre
// and covers at least min_silhouette_fraction of the patch at identity pose.
SyntheticObject make_object(std::uint32_t object_id, std::uint64_t seed, const SynthConfig& cfg);

std::vector<Pose> make_pose_grid(const PoseGridSpec& grid);

// Deterministic given (obj, pose). Pixels outside the transformed silhouette
// are black with invalid depth. Throws ConfigError when the pose leaves the
// configured ranges or the transform degenerates.
RenderedView render_view(const SyntheticObject& obj, const Pose& pose, const SynthConfig& cfg);

// One template per (object, pose), ids dense and ascending in
// object-major, pose-minor order.
std::vector<Template> build_template_set(const std::vector<SyntheticObject>& objects,
                                         const std::vector<Pose>& pose_grid, const SynthConfig& cfg,
                                         std::uint64_t seed);

// Composes placed views, distractor clutter and occluders, extracts
// features, fills the uncovered background with uniform noise bins and
// applies per-coordinate noise. When `store` is given, placed views whose
// (object_id, pose) matches a template overwrite their location pixels with
// that template's descriptor, so the window at the ground-truth location
// reproduces the training descriptor exactly.
ComposedScene compose_scene(const SceneSpec& spec, const std::vector<SyntheticObject>& catalogue,
                            const SynthConfig& cfg, const std::vector<Template>* store = nullptr);

}  // namespace forestmatch
