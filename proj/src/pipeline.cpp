#include "forestmatch/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

namespace forestmatch {

namespace {

void parallel_for(int begin, int end, int threads, const std::function<void(int, int, int)>& body) {
    const int n = end - begin;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, n));
    if (threads == 1) {
        body(0, begin, end);
        return;
    }
    std::vector<std::thread> pool;
    const int step = (n + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const int lo = begin + w * step;
        const int hi = std::min(end, lo + step);
        if (lo >= hi) break;
        pool.emplace_back([&body, w, lo, hi] { body(w, lo, hi); });
    }
    for (auto& t : pool) t.join();
}

double window_median_depth(const FeatureMap& scene, int cx, int cy, int w, int h) {
    std::vector<float> valid;
    valid.reserve(static_cast<std::size_t>(w) * h);
    for (int y = cy; y < cy + h; ++y)
        for (int x = cx; x < cx + w; ++x) {
            const float d = scene.depth_at(x, y);
            if (d > 0.0f) valid.push_back(d);
        }
    if (valid.empty()) return 0.0;
    std::sort(valid.begin(), valid.end());
    const std::size_t n = valid.size();
    return n % 2 == 1 ? valid[n / 2] : 0.5 * (static_cast<double>(valid[n / 2 - 1]) + valid[n / 2]);
}

struct WindowRect {
    int x, y, w, h;
};

double rect_iou(const WindowRect& a, const WindowRect& b) {
    const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = static_cast<double>(ix) * iy;
    const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double angle_diff_deg(double a, double b) {
    double d = std::fabs(std::fmod(a - b, 360.0));
    if (d > 180.0) d = 360.0 - d;
    return d;
}

}  // namespace

FeatureMap downsample_modal(const FeatureMap& fine) {
    const int cw = fine.width / 2;
    const int ch = fine.height / 2;
    FeatureMap coarse(cw, ch, fine.modalities);
    const int n_mod = fine.num_modalities();

    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int m = 0; m < n_mod; ++m) {
                int counts[kNumBins + 1] = {};
                ++counts[fine.at(2 * x, 2 * y, m)];
                ++counts[fine.at(2 * x + 1, 2 * y, m)];
                ++counts[fine.at(2 * x, 2 * y + 1, m)];
                ++counts[fine.at(2 * x + 1, 2 * y + 1, m)];
                int best = 0;
                for (int v = 1; v <= kNumBins; ++v)
                    if (counts[v] > counts[best]) best = v;
                coarse.set(x, y, m, static_cast<QuantizedValue>(best));
            }

    if (fine.has_depth()) {
        coarse.depth.assign(static_cast<std::size_t>(cw) * ch, 0.0f);
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) {
                std::array<float, 4> block = {fine.depth_at(2 * x, 2 * y), fine.depth_at(2 * x + 1, 2 * y),
                                              fine.depth_at(2 * x, 2 * y + 1), fine.depth_at(2 * x + 1, 2 * y + 1)};
                std::array<float, 4> valid{};
                int n = 0;
                for (float d : block)
                    if (d > 0.0f) valid[n++] = d;
                if (n == 0) continue;
                std::sort(valid.begin(), valid.begin() + n);
                coarse.depth[static_cast<std::size_t>(y) * cw + x] =
                    n % 2 == 1 ? valid[n / 2] : 0.5f * (valid[n / 2 - 1] + valid[n / 2]);
            }
    }
    return coarse;
}

DetectResult detect(const FeatureMap& scene, const Forest& forest, const std::vector<Template>& store,
                    const DetectConfig& cfg) {
    if (store.empty()) throw DataError("empty template store");
    const DescriptorLayout layout = DescriptorLayout::from_template(store.front(), scene.modalities);
    if (layout.size() != forest.descriptor_len)
        throw CompatError("scene/template layout does not match the forest descriptor length");
    if (scene.width < layout.patch_w || scene.height < layout.patch_h)
        throw ShapeError("scene smaller than the template patch");

    const int patch_w = layout.patch_w;
    const int patch_h = layout.patch_h;
    const int fine_w = scene.width - patch_w + 1;
    const int fine_h = scene.height - patch_h + 1;

    DetectResult result;
    result.outcome.width = fine_w;
    result.outcome.height = fine_h;
    result.outcome.codes.assign(static_cast<std::size_t>(fine_w) * fine_h, kOutcomeDepthSkipped);

    const auto plan = chunk_plan(forest.descriptor_len, cfg.validation.chunk_size, cfg.pipeline.chunk_seed);
    const bool band_active = scene.has_depth() && (cfg.pipeline.depth_band_lo_mm > 0.0 ||
                                                   cfg.pipeline.depth_band_hi_mm < 1e9);
    auto in_band = [&](double median) {
        return median >= cfg.pipeline.depth_band_lo_mm && median <= cfg.pipeline.depth_band_hi_mm;
    };

    // Coarse level: pooled map, relaxed rejector floors.
    const FeatureMap coarse = downsample_modal(scene);
    DescriptorLayout coarse_layout = layout;
    coarse_layout.patch_w = (patch_w + 1) / 2;
    coarse_layout.patch_h = (patch_h + 1) / 2;
    for (auto& [rx, ry] : coarse_layout.locations) {
        rx = static_cast<std::uint16_t>(rx / 2);
        ry = static_cast<std::uint16_t>(ry / 2);
    }
    const int coarse_w = coarse.width - coarse_layout.patch_w + 1;
    const int coarse_h = coarse.height - coarse_layout.patch_h + 1;

    const int threads = cfg.pipeline.threads;
    const int n_workers =
        threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());

    std::vector<std::vector<int>> worker_nominated(n_workers);
    std::vector<CostCounters> worker_counters(n_workers);

    parallel_for(0, coarse_h, threads, [&](int worker, int row_lo, int row_hi) {
        CostCounters& counters = worker_counters[worker];
        for (int cy = row_lo; cy < row_hi; ++cy) {
            for (int cx = 0; cx < coarse_w; ++cx) {
                const int fx = 2 * cx;
                const int fy = 2 * cy;
                if (fx >= fine_w || fy >= fine_h) continue;

                auto set_block = [&](int code) {
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            if (fx + dx < fine_w && fy + dy < fine_h)
                                result.outcome.codes[static_cast<std::size_t>(fy + dy) * fine_w + (fx + dx)] = code;
                };

                if (band_active) {
                    const double med =
                        window_median_depth(coarse, cx, cy, coarse_layout.patch_w, coarse_layout.patch_h);
                    if (!in_band(med)) {
                        set_block(kOutcomeDepthSkipped);
                        continue;
                    }
                }

                const auto descriptor = extract_window_descriptor(coarse, coarse_layout, cx, cy);
                const QueryResult q =
                    forest_query(forest, descriptor, &counters, cfg.pipeline.coarse_floor_scale);
                if (q.rejected) {
                    set_block(q.rejection_depth);
                    continue;
                }
                // Nominate the cell's fine block; its four members jointly
                // cover both parities in x and y.
                static constexpr int offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
                for (const auto& off : offsets) {
                    const int nx = fx + off[0];
                    const int ny = fy + off[1];
                    if (nx >= 0 && ny >= 0 && nx < fine_w && ny < fine_h)
                        worker_nominated[worker].push_back(ny * fine_w + nx);
                }
            }
        }
    });

    std::vector<int> nominated;
    for (auto& v : worker_nominated) nominated.insert(nominated.end(), v.begin(), v.end());
    std::sort(nominated.begin(), nominated.end());
    nominated.erase(std::unique(nominated.begin(), nominated.end()), nominated.end());

    // Fine level.
    struct FineOutput {
        std::vector<Detection> detections;
        std::vector<TraceRecord> traces;
    };
    std::vector<FineOutput> worker_output(n_workers);

    parallel_for(0, static_cast<int>(nominated.size()), threads, [&](int worker, int lo, int hi) {
        CostCounters& counters = worker_counters[worker];
        for (int i = lo; i < hi; ++i) {
            const int fx = nominated[i] % fine_w;
            const int fy = nominated[i] / fine_w;
            int& code = result.outcome.codes[static_cast<std::size_t>(fy) * fine_w + fx];

            if (band_active && !in_band(window_median_depth(scene, fx, fy, patch_w, patch_h))) {
                code = kOutcomeDepthSkipped;
                continue;
            }

            const auto descriptor = extract_window_descriptor(scene, layout, fx, fy);
            const QueryResult q = forest_query(forest, descriptor, &counters);
            if (q.rejected) {
                code = q.rejection_depth;
                continue;
            }
            code = kOutcomeValidated;

            const ValidationResult v =
                preemptive_validate(scene, fx, fy, q.candidates, store, plan, cfg.validation, &counters);
            if (cfg.keep_traces) worker_output[worker].traces.push_back({fx, fy, v});
            if (v.winner) {
                const Template& t = template_by_id(store, v.winner->first);
                Detection d;
                d.x = fx;
                d.y = fy;
                d.template_id = v.winner->first;
                d.object_id = t.object_id;
                d.pose = t.pose;
                d.score = v.winner->second;
                worker_output[worker].detections.push_back(d);
            }
        }
    });

    std::vector<Detection> all;
    for (auto& out : worker_output) {
        all.insert(all.end(), out.detections.begin(), out.detections.end());
        result.traces.insert(result.traces.end(), out.traces.begin(), out.traces.end());
    }
    for (const auto& c : worker_counters) result.counters += c;

    std::sort(all.begin(), all.end(), [](const Detection& a, const Detection& b) {
        if (a.y != b.y) return a.y < b.y;
        if (a.x != b.x) return a.x < b.x;
        return a.template_id < b.template_id;
    });
    result.detections = nms(std::move(all), cfg.pipeline.nms_overlap, patch_w, patch_h);

    for (int code : result.outcome.codes) {
        ++result.stats.windows_total;
        if (code == kOutcomeDepthSkipped) continue;
        ++result.stats.windows_in_range;
        if (code >= 0)
            ++result.stats.windows_rejected;
        else
            ++result.stats.windows_validated;
    }
    return result;
}

std::vector<Detection> nms(std::vector<Detection> detections, double overlap_threshold, int patch_w, int patch_h) {
    std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.template_id != b.template_id) return a.template_id < b.template_id;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const WindowRect rect{d.x, d.y, patch_w, patch_h};
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (rect_iou(rect, WindowRect{k.x, k.y, patch_w, patch_h}) > overlap_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

bool detection_matches(const Detection& d, const PlacedObject& gt, const EvalCriterion& criterion, int patch_w,
                       int patch_h) {
    if (d.object_id != gt.object_id) return false;
    const double extent = std::max(patch_w, patch_h);
    const double dx = d.x - gt.x;
    const double dy = d.y - gt.y;
    if (std::hypot(dx, dy) > criterion.k_m * extent) return false;

    const double yaw_err = angle_diff_deg(d.pose.yaw, gt.pose.yaw);
    const double roll_err = angle_diff_deg(d.pose.roll, gt.pose.roll);
    const double pitch_err = std::fabs(static_cast<double>(d.pose.pitch) - gt.pose.pitch);
    return std::max({yaw_err, pitch_err, roll_err}) <= criterion.pose_tolerance_deg;
}

EvalMetrics evaluate(const std::vector<Detection>& detections, const std::vector<PlacedObject>& truth,
                     const EvalCriterion& criterion, int patch_w, int patch_h) {
    std::vector<const Detection*> ordered;
    ordered.reserve(detections.size());
    for (const auto& d : detections) ordered.push_back(&d);
    std::sort(ordered.begin(), ordered.end(), [](const Detection* a, const Detection* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->template_id < b->template_id;
    });

    std::vector<bool> matched(truth.size(), false);
    EvalMetrics m;
    for (const Detection* d : ordered) {
        int best = -1;
        double best_dist = 0.0;
        for (std::size_t g = 0; g < truth.size(); ++g) {
            if (matched[g] || !detection_matches(*d, truth[g], criterion, patch_w, patch_h)) continue;
            const double dist = std::hypot(static_cast<double>(d->x) - truth[g].x,
                                           static_cast<double>(d->y) - truth[g].y);
            if (best < 0 || dist < best_dist) {
                best = static_cast<int>(g);
                best_dist = dist;
            }
        }
        if (best >= 0) {
            matched[best] = true;
            ++m.true_positives;
        } else {
            ++m.false_positives;
        }
    }
    m.false_negatives = static_cast<int>(truth.size()) - m.true_positives;

    m.precision_defined = !detections.empty();
    m.precision = m.precision_defined
                      ? static_cast<double>(m.true_positives) / (m.true_positives + m.false_positives)
                      : 1.0;
    m.recall = truth.empty() ? 1.0 : static_cast<double>(m.true_positives) / truth.size();
    const int denom = m.true_positives + m.false_positives + m.false_negatives;
    m.accuracy = denom > 0 ? static_cast<double>(m.true_positives) / denom : 1.0;
    return m;
}

}  // namespace forestmatch
