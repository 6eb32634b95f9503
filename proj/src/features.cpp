#include "forestmatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace forestmatch {

namespace {

constexpr double kPi = std::numbers::pi;

// 8 bins over [0, pi): gradient orientation ignores sign.
QuantizedValue quantize_orientation_180(double gx, double gy) {
    double angle = std::atan2(gy, gx);
    if (angle < 0.0) angle += kPi;
    if (angle >= kPi) angle -= kPi;
    int bin = static_cast<int>(angle / (kPi / 8.0));
    if (bin > 7) bin = 7;
    return static_cast<QuantizedValue>(bin + 1);
}

// 8 bins over [0, 2*pi).
QuantizedValue quantize_direction_360(double x, double y) {
    double angle = std::atan2(y, x);
    if (angle < 0.0) angle += 2.0 * kPi;
    if (angle >= 2.0 * kPi) angle -= 2.0 * kPi;
    int bin = static_cast<int>(angle / (kPi / 4.0));
    if (bin > 7) bin = 7;
    return static_cast<QuantizedValue>(bin + 1);
}

QuantizedValue quantize_hue(double hue_deg) {
    int bin = static_cast<int>(hue_deg / 45.0);
    if (bin > 7) bin = 7;
    if (bin < 0) bin = 0;
    return static_cast<QuantizedValue>(bin + 1);
}

double luminance(const std::array<std::uint8_t, 3>& rgb) {
    return (static_cast<double>(rgb[0]) + rgb[1] + rgb[2]) / 3.0;
}

// hue in degrees [0, 360), saturation in [0, 1]
void rgb_to_hue_sat(const std::array<std::uint8_t, 3>& rgb, double& hue, double& sat) {
    const double r = rgb[0] / 255.0, g = rgb[1] / 255.0, b = rgb[2] / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    sat = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) {
        hue = 0.0;
        return;
    }
    if (mx == r) {
        hue = 60.0 * std::fmod((g - b) / delta + 6.0, 6.0);
    } else if (mx == g) {
        hue = 60.0 * ((b - r) / delta + 2.0);
    } else {
        hue = 60.0 * ((r - g) / delta + 4.0);
    }
    if (hue >= 360.0) hue -= 360.0;
}

}  // namespace

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::ColourGradient: return "colour_gradient";
        case Modality::SurfaceNormal: return "surface_normal";
        case Modality::Hue: return "hue";
        case Modality::Depth: return "depth";
    }
    return "unknown";
}

int Template::foreground_count() const {
    int n = 0;
    for (std::uint8_t f : fg_mask) n += f ? 1 : 0;
    return n;
}

DescriptorLayout DescriptorLayout::from_template(const Template& t, const std::vector<Modality>& mods) {
    DescriptorLayout layout;
    layout.patch_w = t.patch_w;
    layout.patch_h = t.patch_h;
    layout.locations = t.locations;
    layout.modalities = mods;
    return layout;
}

const Template& template_by_id(const std::vector<Template>& store, std::uint32_t id) {
    if (id < store.size() && store[id].id == id) return store[id];
    const auto it = std::lower_bound(store.begin(), store.end(), id,
                                     [](const Template& t, std::uint32_t v) { return t.id < v; });
    if (it == store.end() || it->id != id) throw DataError("template id not present in store");
    return *it;
}

std::vector<QuantizedValue> extract_window_descriptor(const FeatureMap& scene, const DescriptorLayout& layout,
                                                      int cx, int cy) {
    if (cx < 0 || cy < 0 || cx + layout.patch_w > scene.width || cy + layout.patch_h > scene.height)
        throw std::out_of_range("window outside scene bounds");
    if (scene.modalities != layout.modalities)
        throw ShapeError("scene modalities do not match descriptor layout");

    const int n_mod = static_cast<int>(layout.modalities.size());
    std::vector<QuantizedValue> out;
    out.reserve(layout.locations.size() * n_mod);
    for (const auto& [rx, ry] : layout.locations)
        for (int m = 0; m < n_mod; ++m) out.push_back(scene.at(cx + rx, cy + ry, m));
    return out;
}

double similarity(const FeatureMap& scene, const Template& t, int cx, int cy) {
    if (cx < 0 || cy < 0 || cx + t.patch_w > scene.width || cy + t.patch_h > scene.height)
        throw std::out_of_range("similarity window outside scene bounds");
    const int n_mod = t.num_modalities();
    if (n_mod != scene.num_modalities())
        throw ShapeError("scene modality count does not match template descriptor");

    long long sum = 0;
    long long fg = 0;
    std::size_t k = 0;
    for (const auto& [rx, ry] : t.locations) {
        const int sx = cx + rx;
        const int sy = cy + ry;
        for (int m = 0; m < n_mod; ++m, ++k) {
            if (!t.fg_mask[k]) continue;
            sum += dim_distance(t.descriptor[k], scene.at(sx, sy, m));
            ++fg;
        }
    }
    if (fg == 0) return 0.0;
    return 1.0 - static_cast<double>(sum) / (static_cast<double>(kMaxDimDistance) * static_cast<double>(fg));
}

FeatureMap extract_features(const ColorImage& rgb, const DepthImage& depth, const FeatureConfig& cfg) {
    if (rgb.width != depth.width || rgb.height != depth.height)
        throw ShapeError("rgb and depth dimensions differ");

    const int w = rgb.width;
    const int h = rgb.height;
    FeatureMap map(w, h, {Modality::ColourGradient, Modality::SurfaceNormal, Modality::Hue});
    map.depth = depth.values;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool interior = x > 0 && y > 0 && x < w - 1 && y < h - 1;

            if (interior) {
                const double gx = (luminance(rgb.at(x + 1, y)) - luminance(rgb.at(x - 1, y))) / 2.0;
                const double gy = (luminance(rgb.at(x, y + 1)) - luminance(rgb.at(x, y - 1))) / 2.0;
                if (std::hypot(gx, gy) >= cfg.magnitude_threshold)
                    map.set(x, y, 0, quantize_orientation_180(gx, gy));

                const float dl = depth.at(x - 1, y), dr = depth.at(x + 1, y);
                const float du = depth.at(x, y - 1), dd = depth.at(x, y + 1);
                if (dl > 0.0f && dr > 0.0f && du > 0.0f && dd > 0.0f) {
                    const double dzx = (static_cast<double>(dr) - dl) / 2.0;
                    const double dzy = (static_cast<double>(dd) - du) / 2.0;
                    if (std::hypot(dzx, dzy) >= cfg.normal_threshold)
                        map.set(x, y, 1, quantize_direction_360(dzx, dzy));
                }
            }

            double hue = 0.0, sat = 0.0;
            rgb_to_hue_sat(rgb.at(x, y), hue, sat);
            if (sat >= cfg.saturation_floor) map.set(x, y, 2, quantize_hue(hue));
        }
    }
    return map;
}

Template build_template(const FeatureMap& view, const MaskImage& mask, std::uint32_t id, std::uint32_t object_id,
                        const Pose& pose, int location_stride, Rng& rng) {
    if (view.width != mask.width || view.height != mask.height)
        throw ShapeError("view and mask dimensions differ");
    if (location_stride < 1) throw ConfigError("location_stride must be >= 1");

    Template t;
    t.id = id;
    t.object_id = object_id;
    t.pose = pose;
    t.patch_w = view.width;
    t.patch_h = view.height;

    const int n_mod = view.num_modalities();
    for (int y = 0; y < view.height; y += location_stride)
        for (int x = 0; x < view.width; x += location_stride)
            t.locations.emplace_back(static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y));

    t.descriptor.reserve(t.locations.size() * n_mod);
    t.fg_mask.reserve(t.locations.size() * n_mod);
    for (const auto& [x, y] : t.locations) {
        const bool fg = mask.at(x, y) != 0;
        for (int m = 0; m < n_mod; ++m) {
            t.fg_mask.push_back(fg ? 1 : 0);
            t.descriptor.push_back(fg ? view.at(x, y, m)
                                      : static_cast<QuantizedValue>(rng.next_int(1, kNumBins)));
        }
    }

    t.depth_patch = view.has_depth() ? view.depth
                                     : std::vector<float>(static_cast<std::size_t>(view.width) * view.height, 0.0f);
    return t;
}

}  // namespace forestmatch
