#include "forestmatch/validate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace forestmatch {

namespace {

double depth_closeness(float template_mm, float scene_mm, double tolerance) {
    if (template_mm > 0.0f && scene_mm > 0.0f) {
        const double delta = std::fabs(static_cast<double>(template_mm) - scene_mm);
        return 1.0 - std::min(delta / tolerance, 1.0);
    }
    return (template_mm <= 0.0f && scene_mm <= 0.0f) ? 1.0 : 0.0;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<std::vector<std::uint32_t>> chunk_plan(int descriptor_len, int chunk_size, std::uint64_t seed) {
    if (descriptor_len <= 0 || chunk_size <= 0) throw ConfigError("chunk_plan requires positive sizes");

    std::vector<std::uint32_t> order(descriptor_len);
    for (int i = 0; i < descriptor_len; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(Rng::mix(seed, 0xc4a9f1ull));
    shuffle(order, rng);

    std::vector<std::vector<std::uint32_t>> chunks;
    for (int start = 0; start < descriptor_len; start += chunk_size) {
        const int end = std::min(start + chunk_size, descriptor_len);
        chunks.emplace_back(order.begin() + start, order.begin() + end);
    }
    return chunks;
}

namespace {

// Raw sums of one chunk against the window; the running score and the full
// score are both weighted reductions of these.
struct ChunkSums {
    long long distance = 0;   // dim_distance over foreground coordinates
    int fg = 0;
    double depth_closeness_sum = 0.0;
    int fg_locations = 0;
};

ChunkSums accumulate_chunk(const FeatureMap& scene, int cx, int cy, const Template& t,
                           const std::vector<std::uint32_t>& chunk, const ValidationConfig& cfg,
                           CostCounters* counters) {
    const int n_mod = t.num_modalities();
    ChunkSums s;
    std::vector<std::uint32_t> fg_locations;
    for (std::uint32_t c : chunk) {
        if (!t.fg_mask[c]) continue;
        const std::uint32_t loc = c / n_mod;
        const int m = static_cast<int>(c % n_mod);
        const auto [rx, ry] = t.locations[loc];
        s.distance += dim_distance(t.descriptor[c], scene.at(cx + rx, cy + ry, m));
        ++s.fg;
        if (std::find(fg_locations.begin(), fg_locations.end(), loc) == fg_locations.end())
            fg_locations.push_back(loc);
    }
    if (counters) counters->validation_dim_distance += static_cast<std::uint64_t>(s.fg);
    if (!cfg.use_depth || !scene.has_depth()) return s;
    for (std::uint32_t loc : fg_locations) {
        const auto [rx, ry] = t.locations[loc];
        s.depth_closeness_sum += depth_closeness(t.depth_patch_at(rx, ry), scene.depth_at(cx + rx, cy + ry),
                                                 cfg.depth_tolerance_mm);
    }
    s.fg_locations = static_cast<int>(fg_locations.size());
    if (counters) counters->validation_depth_compares += static_cast<std::uint64_t>(s.fg_locations);
    return s;
}

// Weighted blended score; exactly the full similarity-plus-depth score when
// the sums cover the whole descriptor.
double sums_score(const ChunkSums& s, const ValidationConfig& cfg, bool with_depth) {
    if (s.fg == 0) return 0.5;  // nothing to discriminate on
    const double feature_term =
        1.0 - static_cast<double>(s.distance) / (static_cast<double>(kMaxDimDistance) * s.fg);
    if (!with_depth || !cfg.use_depth || s.fg_locations == 0) return feature_term;
    return 0.5 * feature_term + 0.5 * s.depth_closeness_sum / s.fg_locations;
}

void add_sums(ChunkSums& into, const ChunkSums& from) {
    into.distance += from.distance;
    into.fg += from.fg;
    into.depth_closeness_sum += from.depth_closeness_sum;
    into.fg_locations += from.fg_locations;
}

}  // namespace

double chunk_score(const FeatureMap& scene, int cx, int cy, const Template& t,
                   const std::vector<std::uint32_t>& chunk, const ValidationConfig& cfg, CostCounters* counters) {
    const ChunkSums s = accumulate_chunk(scene, cx, cy, t, chunk, cfg, counters);
    return sums_score(s, cfg, scene.has_depth());
}

namespace {

double full_score(const FeatureMap& scene, int cx, int cy, const Template& t, const ValidationConfig& cfg,
                  CostCounters* counters) {
    if (counters) counters->validation_dim_distance += static_cast<std::uint64_t>(t.foreground_count());
    const double feature_term = similarity(scene, t, cx, cy);
    if (!cfg.use_depth || !scene.has_depth()) return feature_term;

    const int n_mod = t.num_modalities();
    double depth_sum = 0.0;
    int n_loc = 0;
    for (std::size_t loc = 0; loc < t.locations.size(); ++loc) {
        if (!t.fg_mask[loc * n_mod]) continue;
        const auto [rx, ry] = t.locations[loc];
        depth_sum += depth_closeness(t.depth_patch_at(rx, ry), scene.depth_at(cx + rx, cy + ry),
                                     cfg.depth_tolerance_mm);
        ++n_loc;
    }
    if (n_loc == 0) return feature_term;
    if (counters) counters->validation_depth_compares += static_cast<std::uint64_t>(n_loc);
    return 0.5 * feature_term + 0.5 * depth_sum / n_loc;
}

}  // namespace

ValidationResult preemptive_validate(const FeatureMap& scene, int cx, int cy,
                                     const std::vector<std::uint32_t>& candidates,
                                     const std::vector<Template>& store,
                                     const std::vector<std::vector<std::uint32_t>>& plan,
                                     const ValidationConfig& cfg, CostCounters* counters) {
    if (candidates.empty()) throw DataError("preemptive_validate requires a non-empty candidate set");

    std::vector<std::uint32_t> survivors = candidates;
    std::sort(survivors.begin(), survivors.end());
    survivors.erase(std::unique(survivors.begin(), survivors.end()), survivors.end());

    const bool with_depth = scene.has_depth();
    std::vector<ChunkSums> sums(survivors.size());
    ValidationResult result;

    for (std::size_t stage = 0; stage < plan.size(); ++stage) {
        result.stages_run = static_cast<int>(stage + 1);
        result.chunk_evaluations += survivors.size();
        if (counters) counters->chunk_evaluations += survivors.size();

        std::vector<double> means(survivors.size());
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            add_sums(sums[i], accumulate_chunk(scene, cx, cy, template_by_id(store, survivors[i]), plan[stage],
                                               cfg, counters));
            means[i] = sums_score(sums[i], cfg, with_depth);
        }

        double threshold = cfg.alpha;
        if (survivors.size() >= 2) {
            const double med = median_of(means);
            if (med < cfg.alpha) result.alpha_floor_hit = true;
            threshold = std::max(med, cfg.alpha);
        }

        std::vector<std::uint32_t> next;
        std::vector<ChunkSums> next_sums;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            if (means[i] > threshold) {
                next.push_back(survivors[i]);
                next_sums.push_back(sums[i]);
            }
        }

        // The median can eliminate every candidate when the top scores tie;
        // keep the single best (lowest id) as long as it beats alpha.
        if (next.empty()) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < survivors.size(); ++i)
                if (means[i] > means[best]) best = i;
            if (means[best] > cfg.alpha) {
                next.push_back(survivors[best]);
                next_sums.push_back(sums[best]);
            }
        }

        survivors = std::move(next);
        sums = std::move(next_sums);
        result.survivors_per_stage.push_back(static_cast<int>(survivors.size()));
        if (survivors.size() <= 1) break;
    }

    if (!survivors.empty()) {
        std::size_t best = 0;
        double best_mean = sums_score(sums[0], cfg, with_depth);
        for (std::size_t i = 1; i < survivors.size(); ++i) {
            const double mean = sums_score(sums[i], cfg, with_depth);
            if (mean > best_mean) {
                best = i;
                best_mean = mean;
            }
        }
        // Confirm the winner over its remaining chunks so the final alpha
        // check covers the whole descriptor and equals the full score. The
        // stage loop above still terminates on the median rule, so the
        // O(log n) stage bound is untouched.
        const Template& t = template_by_id(store, survivors[best]);
        ChunkSums total = sums[best];
        for (std::size_t stage = result.stages_run; stage < plan.size(); ++stage) {
            add_sums(total, accumulate_chunk(scene, cx, cy, t, plan[stage], cfg, counters));
            ++result.chunk_evaluations;
            if (counters) ++counters->chunk_evaluations;
        }
        const double final_score = sums_score(total, cfg, with_depth);
        if (final_score > cfg.alpha) result.winner = {survivors[best], final_score};
    }
    return result;
}

std::pair<std::uint32_t, double> full_validate(const FeatureMap& scene, int cx, int cy,
                                               const std::vector<std::uint32_t>& candidates,
                                               const std::vector<Template>& store, const ValidationConfig& cfg,
                                               CostCounters* counters) {
    if (candidates.empty()) throw DataError("full_validate requires a non-empty candidate set");

    std::vector<std::uint32_t> ids = candidates;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::uint32_t best_id = ids.front();
    double best_score = -1.0;
    for (std::uint32_t id : ids) {
        const double s = full_score(scene, cx, cy, template_by_id(store, id), cfg, counters);
        if (s > best_score) {
            best_score = s;
            best_id = id;
        }
    }
    return {best_id, best_score};
}

}  // namespace forestmatch
