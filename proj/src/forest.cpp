#include "forestmatch/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace forestmatch {

namespace {

int selector_distance(const std::vector<QuantizedValue>& v, const SplitParams& p) {
    int sum = 0;
    for (std::size_t i = 0; i < p.selector.size(); ++i) sum += dim_distance(p.exemplar[i], v[p.selector[i]]);
    return sum;
}

int foreground_selected(const Template& t, const std::vector<std::uint32_t>& selector) {
    int n = 0;
    for (std::uint32_t c : selector) n += t.fg_mask[c] ? 1 : 0;
    return n;
}

double known_fraction(const std::vector<QuantizedValue>& v, const RejectorParams& r) {
    if (r.selector.empty()) return 1.0;
    int known = 0;
    for (std::size_t i = 0; i < r.selector.size(); ++i) known += r.value_known(i, v[r.selector[i]]) ? 1 : 0;
    return static_cast<double>(known) / static_cast<double>(r.selector.size());
}

// per-coordinate value densities over the node set
std::vector<std::array<std::uint8_t, kNumBins>> build_known_rows(const std::vector<const Template*>& set,
                                                                 const std::vector<std::uint32_t>& selector,
                                                                 double density_floor) {
    std::vector<std::array<std::uint8_t, kNumBins>> rows(selector.size());
    for (std::size_t i = 0; i < selector.size(); ++i) {
        std::uint32_t counts[kNumBins] = {};
        for (const Template* t : set) {
            const QuantizedValue v = t->descriptor[selector[i]];
            if (v >= 1 && v <= kNumBins) ++counts[v - 1];
        }
        for (int b = 0; b < kNumBins; ++b)
            rows[i][b] = static_cast<double>(counts[b]) / static_cast<double>(set.size()) > density_floor ? 1 : 0;
    }
    return rows;
}

}  // namespace

double split_margin(const std::vector<QuantizedValue>& v, const SplitParams& p) {
    return static_cast<double>(selector_distance(v, p)) - p.tau;
}

RouteDest route(const std::vector<QuantizedValue>& v, const SplitParams& p) {
    const double m = split_margin(v, p);
    if (m < -p.fuzzy_margin) return RouteDest::LeftOnly;
    if (m > p.fuzzy_margin) return RouteDest::RightOnly;
    return RouteDest::Both;
}

std::array<double, kNumBins> node_distribution(const std::vector<const Template*>& set,
                                               const std::vector<std::uint32_t>& selector) {
    std::array<double, kNumBins> dist{};
    std::uint64_t counts[kNumBins] = {};
    for (const Template* t : set)
        for (std::uint32_t c : selector) {
            const QuantizedValue v = t->descriptor[c];
            if (v >= 1 && v <= kNumBins) ++counts[v - 1];
        }
    const std::uint64_t denom = static_cast<std::uint64_t>(set.size()) * selector.size();
    if (denom == 0) return dist;
    for (int i = 0; i < kNumBins; ++i) dist[i] = static_cast<double>(counts[i]) / static_cast<double>(denom);
    return dist;
}

double distribution_entropy(const std::array<double, kNumBins>& dist) {
    double h = 0.0;
    for (double d : dist)
        if (d > 0.0) h -= d * std::log(d);
    return h;
}

double entropy(const std::vector<const Template*>& set, const std::vector<std::uint32_t>& selector) {
    return distribution_entropy(node_distribution(set, selector));
}

double split_energy(const std::vector<const Template*>& set, const SplitParams& p) {
    std::uint64_t fg_sum = 0;
    for (const Template* t : set) fg_sum += static_cast<std::uint64_t>(foreground_selected(*t, p.selector));
    if (fg_sum == 0) return 0.0;

    std::vector<const Template*> left, right;
    left.reserve(set.size());
    right.reserve(set.size());
    for (const Template* t : set) {
        const RouteDest dest = route(t->descriptor, p);
        if (dest != RouteDest::RightOnly) left.push_back(t);
        if (dest != RouteDest::LeftOnly) right.push_back(t);
    }
    if (left.size() == set.size() || right.size() == set.size() || left.empty() || right.empty()) return 0.0;

    // Children are normalized by |L| + |R| so fuzzy duplicates do not bias
    // the gain; on a crisp partition this is exactly the |S| denominator.
    const double h_parent = entropy(set, p.selector);
    const double h_children = (static_cast<double>(left.size()) * entropy(left, p.selector) +
                               static_cast<double>(right.size()) * entropy(right, p.selector)) /
                              static_cast<double>(left.size() + right.size());
    return static_cast<double>(fg_sum) * (h_parent - h_children);
}

RejectorParams train_rejector(const std::vector<const Template*>& set,
                              const std::vector<SplitParams>& candidate_pool, const ForestConfig& cfg) {
    // A candidate only qualifies when its known table covers every training
    // member at this fraction; nodes whose vectors are still too mixed to
    // admit such a selector fall back to an always-accept rejector instead
    // of a leaky low-floor one.
    constexpr double kCoverage = 0.6;

    const std::vector<std::uint32_t>* best_selector = nullptr;
    std::vector<std::array<std::uint8_t, kNumBins>> best_rows;
    double best_min_fraction = 0.0;
    bool best_qualified = false;
    double best_score = std::numeric_limits<double>::infinity();

    for (const SplitParams& cand : candidate_pool) {
        bool any_fg = false;
        for (const Template* t : set) {
            if (foreground_selected(*t, cand.selector) > 0) {
                any_fg = true;
                break;
            }
        }
        if (!any_fg) continue;

        const auto dist = node_distribution(set, cand.selector);
        double nonzero_mass = 0.0;
        for (double v : dist) nonzero_mass += v;
        // a selector whose values are mostly missing cannot discriminate;
        // its near-empty distribution would fake a minimal entropy
        if (nonzero_mass < 0.5) continue;

        RejectorParams probe;
        probe.selector = cand.selector;
        probe.known_rows = build_known_rows(set, cand.selector, cfg.density_floor);
        double min_fraction = 1.0;
        for (const Template* t : set) min_fraction = std::min(min_fraction, known_fraction(t->descriptor, probe));
        const bool qualified = min_fraction >= kCoverage;

        double score = 0.0;
        if (cfg.rejector_objective == RejectorObjective::MinEntropy) {
            // Aggregate entropy over the node set: the narrowest table that
            // still covers all members rejects the most background.
            score = distribution_entropy(dist);
        } else {
            // Information-gain reading of the argmin objective.
            std::vector<const Template*> left, right;
            for (const Template* t : set) {
                const RouteDest dest = route(t->descriptor, cand);
                if (dest != RouteDest::RightOnly) left.push_back(t);
                if (dest != RouteDest::LeftOnly) right.push_back(t);
            }
            const double h_children =
                (static_cast<double>(left.size()) * entropy(left, cand.selector) +
                 static_cast<double>(right.size()) * entropy(right, cand.selector)) /
                static_cast<double>(std::max<std::size_t>(left.size() + right.size(), 1));
            score = entropy(set, cand.selector) - h_children;
        }

        // qualified candidates always beat unqualified ones; within a tier,
        // lowest objective wins, with coverage as the unqualified tie-break
        const bool better = qualified != best_qualified
                                ? qualified
                                : (qualified ? score < best_score
                                             : min_fraction > best_min_fraction ||
                                                   (min_fraction == best_min_fraction && score < best_score));
        if (better || !best_selector) {
            best_score = score;
            best_selector = &cand.selector;
            best_rows = std::move(probe.known_rows);
            best_min_fraction = min_fraction;
            best_qualified = qualified;
        }
    }

    RejectorParams r;
    if (!best_selector) {
        // no candidate sees any foreground: never reject
        r.accept_floor = 0.0;
        return r;
    }

    r.selector = *best_selector;
    r.known_rows = std::move(best_rows);
    // The floor sits below every member's known fraction with a noise
    // allowance, so no training vector is ever rejected on its own path.
    r.accept_floor = std::min(cfg.accept_floor, 0.8 * best_min_fraction);
    return r;
}

bool reject(const std::vector<QuantizedValue>& v, const RejectorParams& r, CostCounters* counters,
            double floor_scale) {
    if (counters) counters->rejector_lookups += r.selector.size();
    return known_fraction(v, r) < r.accept_floor * floor_scale;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct TreeBuilder {
    const ForestConfig& cfg;
    int descriptor_len;
    Rng rng;
    std::vector<TreeNode> nodes;
    std::vector<std::uint32_t> fg_counts;       // per-node scratch
    std::vector<std::uint32_t> nonzero_counts;

    void count_coverage(const std::vector<const Template*>& set) {
        fg_counts.assign(descriptor_len, 0);
        nonzero_counts.assign(descriptor_len, 0);
        for (const Template* t : set)
            for (int c = 0; c < descriptor_len; ++c) {
                if (!t->fg_mask[c]) continue;
                ++fg_counts[c];
                if (t->descriptor[c] != 0) ++nonzero_counts[c];
            }
    }

    // Rejector selectors come from coordinates that are foreground for the
    // whole node set and carry mostly significant values, so the known
    // table reflects shared object features rather than per-template
    // background noise or missing-feature zeros.
    std::vector<SplitParams> sample_rejector_pool(const std::vector<const Template*>& set) {
        const int d = std::min(cfg.rejector_dim, descriptor_len);
        const std::uint32_t n = static_cast<std::uint32_t>(set.size());

        std::vector<std::uint32_t> eligible;
        for (int c = 0; c < descriptor_len; ++c)
            if (fg_counts[c] == n && nonzero_counts[c] * 4 >= n * 3) eligible.push_back(c);
        if (static_cast<int>(eligible.size()) < d) {
            std::vector<std::uint32_t> order(descriptor_len);
            for (int c = 0; c < descriptor_len; ++c) order[c] = static_cast<std::uint32_t>(c);
            std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
                return 2 * fg_counts[a] + nonzero_counts[a] > 2 * fg_counts[b] + nonzero_counts[b];
            });
            eligible.assign(order.begin(), order.begin() + std::min<std::size_t>(order.size(), 4 * d));
        }

        // Seed the pool with the greedy minimum: the d lowest
        // per-coordinate-entropy coordinates concentrate the node's shared
        // values (typically colour), which blind random subsets of a mixed
        // pool practically never hit.
        std::vector<double> per_coord_entropy(eligible.size(), 0.0);
        for (std::size_t e = 0; e < eligible.size(); ++e) {
            std::uint32_t counts[kNumBins] = {};
            for (const Template* t : set) {
                const QuantizedValue v = t->descriptor[eligible[e]];
                if (v >= 1 && v <= kNumBins) ++counts[v - 1];
            }
            double h = 0.0;
            for (std::uint32_t cnt : counts) {
                if (cnt == 0) continue;
                const double p = static_cast<double>(cnt) / static_cast<double>(n);
                h -= p * std::log(p);
            }
            per_coord_entropy[e] = h;
        }
        std::vector<std::uint32_t> order(eligible.size());
        for (std::size_t e = 0; e < eligible.size(); ++e) order[e] = static_cast<std::uint32_t>(e);
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return per_coord_entropy[a] < per_coord_entropy[b];
        });

        std::vector<SplitParams> pool;
        pool.reserve(cfg.candidates);
        SplitParams greedy;
        for (int k = 0; k < d && k < static_cast<int>(order.size()); ++k)
            greedy.selector.push_back(eligible[order[k]]);
        pool.push_back(std::move(greedy));
        for (int i = 1; i < cfg.candidates; ++i) {
            SplitParams p;
            const auto picks = sample_distinct(static_cast<std::uint32_t>(eligible.size()),
                                               std::min<std::uint32_t>(d, static_cast<std::uint32_t>(eligible.size())),
                                               rng);
            for (std::uint32_t k : picks) p.selector.push_back(eligible[k]);
            pool.push_back(std::move(p));
        }
        return pool;
    }

    // Split selectors are drawn with probability proportional to the
    // coordinate's foreground coverage in the node set: selectors on
    // background-noise coordinates produce noise-dominated exemplar
    // distances (and zero-coverage ones have zero energy outright).
    std::vector<std::uint32_t> weighted_selector(int d) {
        // cubed coverage so near-full-coverage coordinates dominate: a
        // selector distance is only meaningful when most templates carry
        // real features at the selected coordinates
        std::vector<std::uint64_t> cumulative(descriptor_len);
        std::uint64_t total = 0;
        for (int c = 0; c < descriptor_len; ++c) {
            const std::uint64_t w = fg_counts[c];
            total += w * w * w;
            cumulative[c] = total;
        }
        if (total == 0) return sample_distinct(static_cast<std::uint32_t>(descriptor_len),
                                               static_cast<std::uint32_t>(d), rng);
        std::vector<std::uint32_t> out;
        int guard = 0;
        while (static_cast<int>(out.size()) < d && guard++ < 64 * d) {
            const std::uint64_t r = rng.next_u64() % total;
            const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
            const std::uint32_t c = static_cast<std::uint32_t>(it - cumulative.begin());
            if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
        }
        while (static_cast<int>(out.size()) < d) {
            const std::uint32_t c = rng.next_below(static_cast<std::uint32_t>(descriptor_len));
            if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
        }
        return out;
    }

    std::vector<SplitParams> sample_candidates(const std::vector<const Template*>& set) {
        const int d = std::min(cfg.subspace_dim, descriptor_len);
        std::vector<SplitParams> pool;
        pool.reserve(cfg.candidates);
        for (int i = 0; i < cfg.candidates; ++i) {
            SplitParams p;
            p.fuzzy_margin = cfg.fuzzy_margin;
            p.selector = weighted_selector(d);
            const Template* exemplar = set[rng.next_below(static_cast<std::uint32_t>(set.size()))];
            p.exemplar.reserve(p.selector.size());
            for (std::uint32_t c : p.selector) p.exemplar.push_back(exemplar->descriptor[c]);

            // tau sits at the median exemplar-to-set distance of a subsample
            // (plus jitter): every candidate then partitions the node near
            // the middle, so deep multi-object sets separate within the
            // depth budget instead of leaving giant depth-capped leaves.
            const std::uint32_t probe_count = std::min<std::uint32_t>(static_cast<std::uint32_t>(set.size()), 32);
            std::vector<int> distances;
            distances.reserve(probe_count);
            for (std::uint32_t k = 0; k < probe_count; ++k) {
                const Template* probe = set[rng.next_below(static_cast<std::uint32_t>(set.size()))];
                distances.push_back(selector_distance(probe->descriptor, p));
            }
            std::sort(distances.begin(), distances.end());
            p.tau = static_cast<double>(distances[probe_count / 2]) + rng.next_real(-0.5, 0.5);
            pool.push_back(std::move(p));
        }
        return pool;
    }

    std::int32_t build(const std::vector<const Template*>& set, int depth) {
        const std::int32_t index = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();

        count_coverage(set);
        const std::vector<SplitParams> pool = sample_candidates(set);
        nodes[index].rejector = train_rejector(
            set, cfg.rejector_objective == RejectorObjective::MinEntropy ? sample_rejector_pool(set) : pool, cfg);

        const bool must_stop = depth >= cfg.max_depth || static_cast<int>(set.size()) <= cfg.min_leaf;
        std::size_t best = 0;
        double best_energy = 0.0;
        if (!must_stop) {
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const double e = split_energy(set, pool[i]);
                if (e > best_energy) {
                    best_energy = e;
                    best = i;
                }
            }
        }

        if (must_stop || best_energy <= 0.0) {
            nodes[index].is_leaf = true;
            for (const Template* t : set) nodes[index].leaf_ids.push_back(t->id);
            return index;
        }

        nodes[index].split = pool[best];
        std::vector<const Template*> left, right;
        for (const Template* t : set) {
            const RouteDest dest = route(t->descriptor, pool[best]);
            if (dest != RouteDest::RightOnly) left.push_back(t);
            if (dest != RouteDest::LeftOnly) right.push_back(t);
        }
        const std::int32_t l = build(left, depth + 1);
        const std::int32_t r = build(right, depth + 1);
        nodes[index].left = l;
        nodes[index].right = r;
        return index;
    }
};

}  // namespace

Tree train_tree(const std::vector<Template>& templates, const ForestConfig& cfg, std::uint64_t seed) {
    if (templates.empty()) throw DataError("cannot train a tree on an empty template set");
    const int len = templates.front().descriptor_len();
    if (len <= 0) throw DataError("templates have an empty descriptor");
    std::vector<const Template*> set;
    set.reserve(templates.size());
    for (const auto& t : templates) {
        if (t.descriptor_len() != len) throw CompatError("templates disagree on descriptor length");
        set.push_back(&t);
    }

    TreeBuilder builder{cfg, len, Rng(seed), {}, {}, {}};
    builder.build(set, 0);
    Tree tree;
    tree.nodes = std::move(builder.nodes);
    return tree;
}

Forest train_forest(const std::vector<Template>& templates, const ForestConfig& cfg, std::uint64_t seed) {
    Forest forest;
    forest.config = cfg;
    forest.descriptor_len = templates.empty() ? 0 : templates.front().descriptor_len();
    forest.trees.reserve(cfg.trees);
    for (int i = 0; i < cfg.trees; ++i)
        forest.trees.push_back(train_tree(templates, cfg, Rng::mix(seed, 0xf045e57ull * (i + 1))));
    return forest;
}

// ---------------------------------------------------------------------------
// Query
// ---------------------------------------------------------------------------

QueryResult descend(const Tree& tree, const std::vector<QuantizedValue>& v, CostCounters* counters,
                    double floor_scale) {
    QueryResult result;
    std::int32_t index = 0;
    int depth = 0;
    for (;;) {
        const TreeNode& node = tree.nodes[index];
        if (reject(v, node.rejector, counters, floor_scale)) {
            result.rejected = true;
            result.rejection_depth = depth;
            return result;
        }
        if (node.is_leaf) {
            result.candidates = node.leaf_ids;
            std::sort(result.candidates.begin(), result.candidates.end());
            return result;
        }
        if (counters) counters->tree_dim_distance += node.split.selector.size();
        const double m = split_margin(v, node.split);
        if (m < -node.split.fuzzy_margin) {
            index = node.left;
        } else if (m > node.split.fuzzy_margin) {
            index = node.right;
        } else {
            // Inside the fuzzy band the margin sign picks the nearer child.
            index = m <= 0.0 ? node.left : node.right;
        }
        ++depth;
    }
}

QueryResult forest_query(const Forest& forest, const std::vector<QuantizedValue>& v, CostCounters* counters,
                         double floor_scale) {
    if (static_cast<int>(v.size()) != forest.descriptor_len)
        throw CompatError("query descriptor length does not match forest");

    QueryResult merged;
    merged.rejected = true;
    merged.rejection_depth = std::numeric_limits<int>::max();
    for (const Tree& tree : forest.trees) {
        QueryResult r = descend(tree, v, counters, floor_scale);
        if (r.rejected) {
            merged.rejection_depth = std::min(merged.rejection_depth, r.rejection_depth);
            continue;
        }
        merged.rejected = false;
        merged.candidates.insert(merged.candidates.end(), r.candidates.begin(), r.candidates.end());
    }
    if (merged.rejected) return merged;

    merged.rejection_depth = -1;
    std::sort(merged.candidates.begin(), merged.candidates.end());
    merged.candidates.erase(std::unique(merged.candidates.begin(), merged.candidates.end()),
                            merged.candidates.end());
    return merged;
}

std::vector<std::vector<std::uint32_t>> leaf_id_sets(const Tree& tree) {
    std::vector<std::vector<std::uint32_t>> out;
    for (const TreeNode& node : tree.nodes)
        if (node.is_leaf) out.push_back(node.leaf_ids);
    return out;
}

TreeStats tree_stats(const Tree& tree) {
    TreeStats stats;
    std::uint64_t total = 0;
    // depth by walking from the root; nodes are in pre-order.
    std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [index, depth] = stack.back();
        stack.pop_back();
        const TreeNode& node = tree.nodes[index];
        stats.depth = std::max(stats.depth, depth);
        if (node.is_leaf) {
            ++stats.leaves;
            total += node.leaf_ids.size();
            stats.max_leaf_size = std::max(stats.max_leaf_size, static_cast<int>(node.leaf_ids.size()));
        } else {
            stack.push_back({node.left, depth + 1});
            stack.push_back({node.right, depth + 1});
        }
    }
    stats.mean_leaf_size = stats.leaves > 0 ? static_cast<double>(total) / stats.leaves : 0.0;
    return stats;
}

}  // namespace forestmatch
