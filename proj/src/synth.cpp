#include "forestmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace forestmatch {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPitchLimit = 75.0;
constexpr double kScaleMin = 0.3;
constexpr double kScaleMax = 1.6;
constexpr int kMinMaskArea = 8;

double deg2rad(double d) { return d * kPi / 180.0; }

struct Mat2 {
    double a = 1, b = 0, c = 0, d = 1;  // row-major

    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Mat2 inverse() const {
        const double det = a * d - b * c;
        return {d / det, -b / det, -c / det, a / det};
    }
    double det() const { return a * d - b * c; }
};

Mat2 rotation(double deg) {
    const double r = deg2rad(deg);
    return {std::cos(r), -std::sin(r), std::sin(r), std::cos(r)};
}

// Pose-to-transform map. The yaw pre-rotation keeps the map injective over
// the sampling ranges even though the foreshortening factors alone are not.
Mat2 pose_transform(const Pose& pose) {
    const double yaw_r = deg2rad(pose.yaw);
    const double pitch_r = deg2rad(pose.pitch);
    const double sx = pose.scale * (1.0 - 0.09 * (1.0 - std::cos(yaw_r)));
    const double sy = pose.scale * (1.0 - 0.25 * std::sin(pitch_r));
    const Mat2 scale{sx, 0, 0, sy};
    return rotation(pose.roll) * scale * rotation(pose.yaw / 4.0);
}

bool point_in_polygon(const std::vector<std::array<double, 2>>& poly, double px, double py) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = poly[i][0], yi = poly[i][1];
        const double xj = poly[j][0], yj = poly[j][1];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

double point_segment_distance(double px, double py, const TextureEdge& e) {
    const double dx = e.x1 - e.x0, dy = e.y1 - e.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - e.x0) * dx + (py - e.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (e.x0 + t * dx), py - (e.y0 + t * dy));
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    auto u8 = [](double f) { return static_cast<std::uint8_t>(std::lround(std::clamp(f, 0.0, 1.0) * 255.0)); };
    return {u8(r + m), u8(g + m), u8(b + m)};
}

void rgb_to_hsv(const std::array<std::uint8_t, 3>& rgb, double& h, double& s, double& v) {
    const double r = rgb[0] / 255.0, g = rgb[1] / 255.0, b = rgb[2] / 255.0;
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    v = mx;
    s = mx > 0 ? delta / mx : 0;
    if (delta <= 0) {
        h = 0;
        return;
    }
    if (mx == r)
        h = 60.0 * std::fmod((g - b) / delta + 6.0, 6.0);
    else if (mx == g)
        h = 60.0 * ((b - r) / delta + 2.0);
    else
        h = 60.0 * ((r - g) / delta + 4.0);
    if (h >= 360.0) h -= 360.0;
}

MaskImage rasterize(const std::vector<std::array<double, 2>>& poly, int size, const Mat2& inv, double centre) {
    MaskImage mask(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double px = x - centre, py = y - centre;
            const double qx = inv.a * px + inv.b * py + centre;
            const double qy = inv.c * px + inv.d * py + centre;
            mask.at(x, y) = point_in_polygon(poly, qx, qy) ? 1 : 0;
        }
    }
    return mask;
}

int mask_area(const MaskImage& m) {
    int n = 0;
    for (std::uint8_t v : m.values) n += v ? 1 : 0;
    return n;
}

}  // namespace

SyntheticObject make_object(std::uint32_t object_id, std::uint64_t seed, const SynthConfig& cfg) {
    const double centre = (cfg.patch_size - 1) / 2.0;
    const double r_hi = 0.97 * (cfg.patch_size / 2.0 - 1.5);
    const double r_lo = 0.78 * (cfg.patch_size / 2.0 - 1.5);
    // Canonical coverage must survive the strongest grid foreshortening, so
    // demand roughly twice the template-level floor.
    const double canonical_floor = std::max(cfg.min_silhouette_fraction, 0.40);

    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(Rng::mix(seed, attempt));
        SyntheticObject obj;
        obj.object_id = object_id;
        obj.seed = seed;

        // silhouette family: round blobs through spiky stars
        const int n_vertices = 6 + static_cast<int>(rng.next_below(9));
        const double spike = rng.next_real(0.0, 0.35);
        for (int i = 0; i < n_vertices; ++i) {
            const double angle = 2.0 * kPi * (i + 0.3 * rng.next_real()) / n_vertices;
            double radius = rng.next_real(r_lo, r_hi);
            if (i % 2 == 1) radius *= 1.0 - spike;
            obj.silhouette.push_back({centre + radius * std::cos(angle), centre + radius * std::sin(angle)});
        }

        // two-tone colouring on either side of a random split line
        obj.base_hue = rng.next_real(0.0, 360.0);
        obj.secondary_hue = std::fmod(obj.base_hue + rng.next_real(90.0, 270.0), 360.0);
        obj.hue_split_angle = rng.next_real(0.0, 2.0 * kPi);

        // depth family: dome, dimple or wedge
        const int family = static_cast<int>(rng.next_below(3));
        if (family == 0)
            obj.depth_profile.dome_mm = rng.next_real(40.0, 80.0);
        else if (family == 1)
            obj.depth_profile.dome_mm = -rng.next_real(40.0, 80.0);
        else
            obj.depth_profile.dome_mm = rng.next_real(-15.0, 15.0);
        const double slope_span = family == 2 ? 60.0 : 30.0;
        obj.depth_profile.slope_x = rng.next_real(-slope_span, slope_span);
        obj.depth_profile.slope_y = rng.next_real(-slope_span, slope_span);

        const int n_edges = 2 + static_cast<int>(rng.next_below(5));
        for (int i = 0; i < n_edges; ++i) {
            TextureEdge e;
            e.x0 = centre + rng.next_real(-0.6, 0.6) * r_lo;
            e.y0 = centre + rng.next_real(-0.6, 0.6) * r_lo;
            e.x1 = centre + rng.next_real(-0.6, 0.6) * r_lo;
            e.y1 = centre + rng.next_real(-0.6, 0.6) * r_lo;
            e.contrast = (rng.next_below(2) ? 1.0 : -1.0) * rng.next_real(0.18, 0.35);
            obj.texture_edges.push_back(e);
        }

        const MaskImage canonical = rasterize(obj.silhouette, cfg.patch_size, Mat2{}, centre);
        const double fraction = static_cast<double>(mask_area(canonical)) / (cfg.patch_size * cfg.patch_size);
        if (fraction >= canonical_floor) return obj;
    }
}

std::vector<Pose> make_pose_grid(const PoseGridSpec& grid) {
    std::vector<Pose> poses;
    for (int yi = 0; yi < grid.yaw_steps; ++yi)
        for (int pi = 0; pi < grid.pitch_steps; ++pi)
            for (int ri = 0; ri < grid.roll_steps; ++ri)
                for (double s : grid.scales) {
                    Pose p;
                    p.yaw = static_cast<float>(360.0 * yi / grid.yaw_steps);
                    p.pitch = static_cast<float>(grid.pitch_steps > 1 ? grid.pitch_max * pi / (grid.pitch_steps - 1)
                                                                      : 0.0);
                    p.roll = static_cast<float>(360.0 * ri / grid.roll_steps);
                    p.scale = static_cast<float>(s);
                    poses.push_back(p);
                }
    return poses;
}

RenderedView render_view(const SyntheticObject& obj, const Pose& pose, const SynthConfig& cfg) {
    if (pose.pitch < 0.0f || pose.pitch > kPitchLimit || pose.scale < kScaleMin || pose.scale > kScaleMax)
        throw ConfigError("pose out of range: pitch " + std::to_string(pose.pitch) + ", scale " +
                          std::to_string(pose.scale));

    const int size = cfg.patch_size;
    const double centre = (size - 1) / 2.0;
    const Mat2 fwd = pose_transform(pose);
    const Mat2 inv = fwd.inverse();

    RenderedView view;
    view.rgb = ColorImage(size, size);
    view.depth = DepthImage(size, size, 0.0f);
    view.mask = rasterize(obj.silhouette, size, inv, centre);

    if (mask_area(view.mask) < kMinMaskArea)
        throw ConfigError("pose out of range: degenerate transform (near-zero silhouette area)");

    const double r_max = cfg.patch_size / 2.0 - 1.5;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (!view.mask.at(x, y)) continue;
            const double px = x - centre, py = y - centre;
            const double qx = inv.a * px + inv.b * py + centre;
            const double qy = inv.c * px + inv.d * py + centre;

            double value = 0.55;
            for (const auto& e : obj.texture_edges)
                if (point_segment_distance(qx, qy, e) < 1.3) value += e.contrast;
            const double side = (qx - centre) * std::cos(obj.hue_split_angle) +
                                (qy - centre) * std::sin(obj.hue_split_angle);
            const double hue = side >= 0.0 ? obj.base_hue : obj.secondary_hue;
            view.rgb.at(x, y) = hsv_to_rgb(hue, 0.8, std::clamp(value, 0.15, 0.95));

            const double rn = std::hypot(qx - centre, qy - centre) / r_max;
            const double relief = obj.depth_profile.dome_mm * std::max(0.0, 1.0 - rn * rn) +
                                  obj.depth_profile.slope_x * (qx - centre) / size +
                                  obj.depth_profile.slope_y * (qy - centre) / size;
            view.depth.at(x, y) = static_cast<float>(cfg.object_depth_mm - relief);
        }
    }
    return view;
}

std::vector<Template> build_template_set(const std::vector<SyntheticObject>& objects,
                                         const std::vector<Pose>& pose_grid, const SynthConfig& cfg,
                                         std::uint64_t seed) {
    if (objects.empty() || pose_grid.empty()) throw ConfigError("empty object list or pose grid");

    std::vector<Template> out;
    out.reserve(objects.size() * pose_grid.size());
    std::uint32_t id = 0;
    for (const auto& obj : objects) {
        for (const auto& pose : pose_grid) {
            const RenderedView view = render_view(obj, pose, cfg);
            const FeatureMap features = extract_features(view.rgb, view.depth, cfg.features);
            Rng rng(Rng::mix(seed, 0x7e6d70ull * (id + 1)));
            out.push_back(build_template(features, view.mask, id, obj.object_id, pose, cfg.location_stride, rng));
            ++id;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scene composition
// ---------------------------------------------------------------------------

namespace {

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    bool overlaps(const Rect& o) const {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }
};

const Template* find_template(const std::vector<Template>* store, std::uint32_t object_id, const Pose& pose) {
    if (!store) return nullptr;
    for (const auto& t : *store)
        if (t.object_id == object_id && t.pose == pose) return &t;
    return nullptr;
}

const SyntheticObject& catalogue_object(const std::vector<SyntheticObject>& catalogue, std::uint32_t object_id) {
    for (const auto& o : catalogue)
        if (o.object_id == object_id) return o;
    throw ConfigError("object id " + std::to_string(object_id) + " not in catalogue");
}

Pose random_pose(Rng& rng) {
    Pose p;
    p.yaw = static_cast<float>(rng.next_real(0.0, 360.0));
    p.pitch = static_cast<float>(rng.next_real(0.0, 60.0));
    p.roll = static_cast<float>(rng.next_real(0.0, 360.0));
    p.scale = static_cast<float>(rng.next_real(0.8, 1.1));
    return p;
}

}  // namespace

ComposedScene compose_scene(const SceneSpec& spec, const std::vector<SyntheticObject>& catalogue,
                            const SynthConfig& cfg, const std::vector<Template>* store) {
    if (catalogue.empty()) throw ConfigError("empty object catalogue");

    const int patch = cfg.patch_size;
    if (spec.width < patch || spec.height < patch) throw ConfigError("scene smaller than the object patch");

    Rng rng(Rng::mix(spec.seed, 0x5ce47ull));
    ColorImage rgb(spec.width, spec.height);
    DepthImage depth(spec.width, spec.height, static_cast<float>(cfg.background_depth_mm));
    MaskImage covered(spec.width, spec.height);

    std::vector<PlacedObject> placed = spec.placed;
    for (const auto& p : placed) {
        catalogue_object(catalogue, p.object_id);
        if (p.x < 0 || p.y < 0 || p.x + patch > spec.width || p.y + patch > spec.height)
            throw ConfigError("placement outside scene bounds at (" + std::to_string(p.x) + ", " +
                              std::to_string(p.y) + ")");
    }

    auto rect_of = [patch](const PlacedObject& p) { return Rect{p.x, p.y, patch, patch}; };

    // Auto-placed objects: poses come from the store when available so the
    // ground truth stays matchable.
    for (int i = 0; i < spec.random_placements; ++i) {
        PlacedObject p;
        if (store && !store->empty()) {
            const Template& t = (*store)[rng.next_below(static_cast<std::uint32_t>(store->size()))];
            p.object_id = t.object_id;
            p.pose = t.pose;
        } else {
            p.object_id = catalogue[rng.next_below(static_cast<std::uint32_t>(catalogue.size()))].object_id;
            p.pose = random_pose(rng);
        }
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            p.x = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.width - patch + 1)));
            p.y = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.height - patch + 1)));
            ok = true;
            for (const auto& q : placed)
                if (rect_of(p).overlaps(rect_of(q))) ok = false;
        }
        if (!ok) throw ConfigError("cannot fit " + std::to_string(spec.random_placements) + " random placements");
        placed.push_back(p);
    }

    // Placed views are pasted as full rectangles, black background included,
    // so the extracted features around each object match its isolated render.
    for (const auto& p : placed) {
        const RenderedView view = render_view(catalogue_object(catalogue, p.object_id), p.pose, cfg);
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) {
                rgb.at(p.x + x, p.y + y) = view.rgb.at(x, y);
                depth.at(p.x + x, p.y + y) = view.depth.at(x, y);
                covered.at(p.x + x, p.y + y) = 1;
            }
    }

    // Occluders: one nearer strip per placed object covering the requested
    // fraction of its window.
    std::vector<Rect> occluders;
    if (spec.occlusion_fraction > 0.0) {
        for (const auto& p : placed) {
            const int strip_w = std::clamp(static_cast<int>(std::lround(spec.occlusion_fraction * patch)), 1, patch);
            const int ox = p.x + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(patch - strip_w + 1)));
            const auto colour = hsv_to_rgb(rng.next_real(0.0, 360.0), 0.8, 0.6);
            for (int y = p.y; y < p.y + patch; ++y)
                for (int x = ox; x < ox + strip_w; ++x) {
                    rgb.at(x, y) = colour;
                    depth.at(x, y) = static_cast<float>(cfg.object_depth_mm - 150.0);
                }
            occluders.push_back(Rect{ox, p.y, strip_w, patch});
        }
    }

    // Distractor clutter: re-hued crops of objects other than the placed
    // ones plus random-bin noise blocks, clear of the placed windows.
    std::vector<const SyntheticObject*> clutter_sources;
    for (const auto& o : catalogue) {
        bool is_placed = false;
        for (const auto& p : placed)
            if (p.object_id == o.object_id) is_placed = true;
        if (!is_placed) clutter_sources.push_back(&o);
    }
    if (clutter_sources.empty())
        for (const auto& o : catalogue) clutter_sources.push_back(&o);

    std::vector<Rect> noise_blocks;
    const int n_clutter =
        static_cast<int>(std::lround(spec.clutter_density * spec.width * spec.height / (patch * patch)));
    for (int i = 0; i < n_clutter; ++i) {
        const bool noise_block = (i % 2) == 1;
        const int cw = patch / 2 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(patch / 2 + 1)));
        const int ch = patch / 2 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(patch / 2 + 1)));

        Rect r{0, 0, cw, ch};
        bool ok = false;
        for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
            r.x = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.width - cw + 1)));
            r.y = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(spec.height - ch + 1)));
            ok = true;
            for (const auto& q : placed)
                if (r.overlaps(rect_of(q))) ok = false;
        }
        if (!ok) continue;

        if (noise_block) {
            for (int y = r.y; y < r.y + r.h; ++y)
                for (int x = r.x; x < r.x + r.w; ++x) {
                    depth.at(x, y) = static_cast<float>(rng.next_real(cfg.object_depth_mm - 200.0,
                                                                      cfg.object_depth_mm + 300.0));
                    covered.at(x, y) = 1;
                }
            noise_blocks.push_back(r);
            continue;
        }

        const SyntheticObject& src = *clutter_sources[rng.next_below(static_cast<std::uint32_t>(clutter_sources.size()))];
        const RenderedView view = render_view(src, random_pose(rng), cfg);
        const double hue_shift = rng.next_real(90.0, 270.0);
        const int sx0 = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(patch - cw + 1)));
        const int sy0 = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(patch - ch + 1)));
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) {
                if (!view.mask.at(sx0 + x, sy0 + y)) continue;
                double h, s, v;
                rgb_to_hsv(view.rgb.at(sx0 + x, sy0 + y), h, s, v);
                rgb.at(r.x + x, r.y + y) = hsv_to_rgb(h + hue_shift, s, v);
                depth.at(r.x + x, r.y + y) = view.depth.at(sx0 + x, sy0 + y);
                covered.at(r.x + x, r.y + y) = 1;
            }
    }

    ComposedScene scene;
    scene.features = extract_features(rgb, depth, cfg.features);
    scene.truth = placed;
    const int n_mod = scene.features.num_modalities();

    for (const auto& r : noise_blocks)
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x)
                for (int m = 0; m < n_mod; ++m)
                    scene.features.set(x, y, m, static_cast<QuantizedValue>(rng.next_int(1, kNumBins)));

    for (const auto& p : placed) {
        const Template* t = find_template(store, p.object_id, p.pose);
        if (!t) continue;
        std::size_t k = 0;
        for (const auto& [rx, ry] : t->locations) {
            const int sx = p.x + rx, sy = p.y + ry;
            bool occluded = false;
            for (const auto& o : occluders)
                if (sx >= o.x && sx < o.x + o.w && sy >= o.y && sy < o.y + o.h) occluded = true;
            for (int m = 0; m < n_mod; ++m, ++k)
                if (!occluded) scene.features.set(sx, sy, m, t->descriptor[k]);
        }
    }

    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            if (covered.at(x, y)) continue;
            for (int m = 0; m < n_mod; ++m)
                scene.features.set(x, y, m, static_cast<QuantizedValue>(rng.next_int(1, kNumBins)));
        }

    if (spec.noise_rate > 0.0) {
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                for (int m = 0; m < n_mod; ++m)
                    if (rng.next_real() < spec.noise_rate)
                        scene.features.set(x, y, m, static_cast<QuantizedValue>(rng.next_int(1, kNumBins)));
    }

    return scene;
}

}  // namespace forestmatch
