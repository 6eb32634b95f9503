// forest: split functions, unsupervised entropy, energy, rejectors,
// training and query behaviour.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "forestmatch/forest.hpp"
#include "forestmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace forestmatch;

namespace {

Template mini_template(std::uint32_t id, const std::vector<QuantizedValue>& descriptor,
                       const std::vector<std::uint8_t>& fg) {
    Template t;
    t.id = id;
    t.descriptor = descriptor;
    t.fg_mask = fg;
    t.patch_w = 1;
    t.patch_h = 1;
    t.locations.emplace_back(0, 0);
    t.depth_patch = {0.0f};
    return t;
}

std::vector<const Template*> as_set(const std::vector<Template>& v) {
    std::vector<const Template*> out;
    for (const auto& t : v) out.push_back(&t);
    return out;
}

std::vector<Template> small_training_set(int yaw_steps = 4, int roll_steps = 2) {
    SynthConfig cfg;
    cfg.patch_size = 24;
    cfg.location_stride = 2;
    const std::vector<SyntheticObject> objects{make_object(0, 11, cfg)};
    PoseGridSpec grid;
    grid.yaw_steps = yaw_steps;
    grid.pitch_steps = 2;
    grid.roll_steps = roll_steps;
    grid.scales = {0.9, 1.0};
    return build_template_set(objects, make_pose_grid(grid), cfg, 17);
}

// Independent re-statement of the energy formula, recomputing route,
// distribution and entropy from their definitions.
double oracle_energy(const std::vector<const Template*>& set, const SplitParams& p) {
    double lambda = 0.0;
    for (const Template* t : set)
        for (std::uint32_t c : p.selector) lambda += t->fg_mask[c] ? 1.0 : 0.0;

    auto entropy_of = [&](const std::vector<const Template*>& s) {
        std::map<int, double> counts;
        for (const Template* t : s)
            for (std::uint32_t c : p.selector)
                if (t->descriptor[c] >= 1) counts[t->descriptor[c]] += 1.0;
        const double denom = static_cast<double>(s.size() * p.selector.size());
        double h = 0.0;
        for (const auto& [v, n] : counts) {
            const double d = n / denom;
            h -= d * std::log(d);
        }
        return h;
    };

    std::vector<const Template*> left, right;
    for (const Template* t : set) {
        const double margin =
            [&] {
                int sum = 0;
                for (std::size_t i = 0; i < p.selector.size(); ++i)
                    sum += dim_distance(p.exemplar[i], t->descriptor[p.selector[i]]);
                return sum - p.tau;
            }();
        if (margin < -p.fuzzy_margin) left.push_back(t);
        else if (margin > p.fuzzy_margin) right.push_back(t);
        else {
            left.push_back(t);
            right.push_back(t);
        }
    }
    if (left.size() == set.size() || right.size() == set.size() || left.empty() || right.empty()) return 0.0;
    const double gain = entropy_of(set) - (left.size() * entropy_of(left) + right.size() * entropy_of(right)) /
                                              static_cast<double>(left.size() + right.size());
    return lambda * gain;
}

}  // namespace

TEST_CASE("split_margin examples") {
    const std::vector<Template> ts{
        mini_template(0, {5, 5, 5}, {1, 1, 1}),
    };
    SplitParams p;
    p.selector = {0, 1, 2};
    p.exemplar = {5, 5, 5};
    p.tau = 3.0;
    CHECK(split_margin(ts[0].descriptor, p) == doctest::Approx(-3.0));

    p.exemplar = {6, 1, 5};  // distances (1, 4, 0)
    p.tau = 2.0;
    CHECK(split_margin(ts[0].descriptor, p) == doctest::Approx(3.0));

    p.tau = 5.0;  // distances sum to tau
    CHECK(split_margin(ts[0].descriptor, p) == doctest::Approx(0.0));
}

TEST_CASE("route follows the fuzzy interval") {
    SplitParams p;
    p.selector = {0};
    p.exemplar = {1};

    p.fuzzy_margin = 1.0;
    p.tau = 5.0;  // value 1 vs exemplar 1 -> distance 0 -> margin -5
    CHECK(route({1}, p) == RouteDest::LeftOnly);

    p.fuzzy_margin = 0.0;
    p.tau = 0.0;  // margin 0, degenerate interval holds only 0
    CHECK(route({1}, p) == RouteDest::Both);

    p.fuzzy_margin = 1.0;
    p.tau = 3.5;  // distance 4 -> margin 0.5 inside [-1, 1]
    CHECK(route({5}, p) == RouteDest::Both);

    p.tau = 1.0;  // margin 3 > 1
    CHECK(route({5}, p) == RouteDest::RightOnly);
}

TEST_CASE("node_distribution point mass, uniform and hand count") {
    std::vector<Template> point{mini_template(0, {5, 5}, {1, 1}), mini_template(1, {5, 5}, {1, 1})};
    auto d = node_distribution(as_set(point), {0, 1});
    CHECK(d[4] == doctest::Approx(1.0));
    for (int i = 0; i < 8; ++i)
        if (i != 4) CHECK(d[i] == 0.0);

    std::vector<Template> uniform{mini_template(0, {1, 2, 3, 4, 5, 6, 7, 8}, std::vector<std::uint8_t>(8, 1))};
    d = node_distribution(as_set(uniform), {0, 1, 2, 3, 4, 5, 6, 7});
    for (int i = 0; i < 8; ++i) CHECK(d[i] == doctest::Approx(0.125));

    std::vector<Template> hand{mini_template(0, {3, 3}, {1, 1}), mini_template(1, {3, 7}, {1, 1})};
    d = node_distribution(as_set(hand), {0, 1});
    CHECK(d[2] == doctest::Approx(0.75));
    CHECK(d[6] == doctest::Approx(0.25));
}

TEST_CASE("entropy unit values") {
    std::vector<Template> point{mini_template(0, {5, 5}, {1, 1})};
    CHECK(entropy(as_set(point), {0, 1}) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<Template> uniform{mini_template(0, {1, 2, 3, 4, 5, 6, 7, 8}, std::vector<std::uint8_t>(8, 1))};
    CHECK(std::abs(entropy(as_set(uniform), {0, 1, 2, 3, 4, 5, 6, 7}) - std::log(8.0)) < 1e-9);

    std::vector<Template> hand{mini_template(0, {3, 3}, {1, 1}), mini_template(1, {3, 7}, {1, 1})};
    const double expected = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
    CHECK(entropy(as_set(hand), {0, 1}) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.5623).epsilon(1e-3));
}

TEST_CASE("split_energy degenerate cases are zero") {
    std::vector<Template> ts{mini_template(0, {1, 5}, {1, 1}), mini_template(1, {2, 6}, {1, 1}),
                             mini_template(2, {3, 7}, {1, 1})};
    SplitParams p;
    p.selector = {0, 1};
    p.exemplar = {1, 5};
    p.tau = 4.0;
    p.fuzzy_margin = 100.0;  // everything lands in the fuzzy band
    CHECK(split_energy(as_set(ts), p) == 0.0);

    // selector entirely on background coordinates
    std::vector<Template> bg{mini_template(0, {1, 5}, {0, 0}), mini_template(1, {2, 6}, {0, 0}),
                             mini_template(2, {5, 1}, {0, 0})};
    p.fuzzy_margin = 0.5;
    p.tau = 2.0;
    CHECK(split_energy(as_set(bg), p) == 0.0);
}

TEST_CASE("split_energy matches the independent oracle on a 4-template hand case") {
    std::vector<Template> ts{
        mini_template(0, {1, 1, 4, 8}, {1, 1, 0, 1}),
        mini_template(1, {1, 2, 5, 7}, {1, 1, 1, 1}),
        mini_template(2, {5, 6, 1, 2}, {0, 1, 1, 1}),
        mini_template(3, {5, 5, 2, 2}, {1, 1, 1, 0}),
    };
    SplitParams p;
    p.selector = {0, 1, 3};
    p.exemplar = {1, 1, 8};
    p.tau = 4.5;
    p.fuzzy_margin = 1.0;
    const double expected = oracle_energy(as_set(ts), p);
    CHECK(split_energy(as_set(ts), p) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected > 0.0);
}

TEST_CASE("train_rejector picks the shared-value selector and applies the density floor") {
    // selector {0,1} sees the shared value 5; selector {2,3} is scattered
    std::vector<Template> ts;
    for (int i = 0; i < 4; ++i)
        ts.push_back(mini_template(static_cast<std::uint32_t>(i),
                                   {5, 5, static_cast<QuantizedValue>(i * 2 + 1),
                                    static_cast<QuantizedValue>(((i * 3) % 8) + 1)},
                                   {1, 1, 1, 1}));
    ForestConfig cfg;
    cfg.accept_floor = 0.6;
    cfg.density_floor = 0.05;

    std::vector<SplitParams> pool(2);
    pool[0].selector = {2, 3};
    pool[1].selector = {0, 1};
    const RejectorParams r = train_rejector(as_set(ts), pool, cfg);
    CHECK(r.selector == std::vector<std::uint32_t>{0, 1});
    CHECK(r.value_known(0, 5));
    CHECK(r.value_known(1, 5));

    // density-floor example: D(3) = 0.75 and D(7) = 0.25 in aggregate,
    // rho = 0.5 -> only value 3 is marked known anywhere
    std::vector<Template> hand{mini_template(0, {3, 3}, {1, 1}), mini_template(1, {3, 7}, {1, 1})};
    ForestConfig strict;
    strict.density_floor = 0.5;
    std::vector<SplitParams> pool2(1);
    pool2[0].selector = {0, 1};
    const RejectorParams r2 = train_rejector(as_set(hand), pool2, strict);
    REQUIRE(r2.known_rows.size() == 2);
    CHECK(r2.value_known(0, 3));  // density 1.0 at the first coordinate
    for (int v = 1; v <= 8; ++v) {
        if (v != 3) CHECK_FALSE(r2.value_known(0, static_cast<QuantizedValue>(v)));
        CHECK_FALSE(r2.value_known(1, static_cast<QuantizedValue>(v)));  // 0.5 not > 0.5
    }
}

TEST_CASE("rejector accepts every member of an all-identical training set") {
    std::vector<Template> ts;
    for (int i = 0; i < 5; ++i)
        ts.push_back(mini_template(static_cast<std::uint32_t>(i), {4, 2, 7, 1}, {1, 1, 1, 1}));
    ForestConfig cfg;
    std::vector<SplitParams> pool(1);
    pool[0].selector = {0, 1, 2, 3};
    const RejectorParams r = train_rejector(as_set(ts), pool, cfg);
    for (const auto& t : ts) CHECK_FALSE(reject(t.descriptor, r));
}

TEST_CASE("reject counts known fractions against the floor") {
    RejectorParams r;
    r.selector = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    r.known_rows.assign(10, {});
    for (auto& row : r.known_rows) row[0] = 1;  // value 1 known everywhere
    r.accept_floor = 0.7;
    // 6 of 10 coordinates known -> 0.6 < 0.7 -> rejected
    std::vector<QuantizedValue> v{1, 1, 1, 1, 1, 1, 2, 2, 2, 2};
    CHECK(reject(v, r));
    r.accept_floor = 0.6;
    CHECK_FALSE(reject(v, r));

    // all-zero query is always unknown
    r.accept_floor = 0.1;
    CHECK(reject(std::vector<QuantizedValue>(10, 0), r));
}

TEST_CASE("train_tree stopping and partition behaviour") {
    const std::vector<Template> set = small_training_set();
    ForestConfig cfg;
    cfg.min_leaf = 2;
    cfg.max_depth = 6;

    SUBCASE("singleton set trains to a single leaf") {
        const std::vector<Template> one(set.begin(), set.begin() + 1);
        const Tree tree = train_tree(one, cfg, 5);
        REQUIRE(tree.nodes.size() == 1);
        CHECK(tree.nodes[0].is_leaf);
        CHECK(tree.nodes[0].leaf_ids == std::vector<std::uint32_t>{0});
    }

    SUBCASE("xi = 0 gives an exact partition of S") {
        ForestConfig crisp = cfg;
        crisp.fuzzy_margin = 0.0;
        const Tree tree = train_tree(set, crisp, 5);
        std::vector<std::uint32_t> all;
        for (const auto& leaf : leaf_id_sets(tree)) all.insert(all.end(), leaf.begin(), leaf.end());
        std::sort(all.begin(), all.end());
        std::vector<std::uint32_t> expected(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) expected[i] = set[i].id;
        CHECK(all == expected);
    }

    SUBCASE("xi = 1 duplicates fuzzy vectors and keeps every id reachable") {
        ForestConfig fuzzy = cfg;
        fuzzy.fuzzy_margin = 1.0;
        const Tree tree = train_tree(set, fuzzy, 5);
        std::size_t total = 0;
        std::vector<bool> seen(set.size(), false);
        for (const auto& leaf : leaf_id_sets(tree)) {
            total += leaf.size();
            for (auto id : leaf) seen[id] = true;
        }
        CHECK(total >= set.size());
        CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
        CHECK(tree_stats(tree).depth <= fuzzy.max_depth);
    }
}

TEST_CASE("every training template descends to a leaf containing its own id") {
    const std::vector<Template> set = small_training_set(8, 4);
    ForestConfig cfg;
    cfg.max_depth = 8;
    cfg.min_leaf = 4;
    const Tree tree = train_tree(set, cfg, 33);
    for (const auto& t : set) {
        const QueryResult r = descend(tree, t.descriptor);
        REQUIRE_FALSE(r.rejected);
        CHECK(std::binary_search(r.candidates.begin(), r.candidates.end(), t.id));
    }
}

TEST_CASE("forest_query merges, deduplicates and rejects only when all trees reject") {
    const std::vector<Template> set = small_training_set(8, 4);
    ForestConfig cfg;
    cfg.trees = 3;
    cfg.min_leaf = 4;
    const Forest forest = train_forest(set, cfg, 7);

    // single tree forest behaves exactly like descend
    ForestConfig single = cfg;
    single.trees = 1;
    const Forest one = train_forest(set, single, 7);
    for (const auto& t : set) {
        const QueryResult a = forest_query(one, t.descriptor);
        const QueryResult b = descend(one.trees[0], t.descriptor);
        CHECK(a.rejected == b.rejected);
        std::vector<std::uint32_t> sorted = b.candidates;
        std::sort(sorted.begin(), sorted.end());
        CHECK(a.candidates == sorted);
    }

    for (const auto& t : set) {
        const QueryResult merged = forest_query(forest, t.descriptor);
        REQUIRE_FALSE(merged.rejected);
        CHECK(std::binary_search(merged.candidates.begin(), merged.candidates.end(), t.id));
        std::size_t sum = 0;
        for (const auto& tree : forest.trees) {
            const QueryResult r = descend(tree, t.descriptor);
            if (!r.rejected) sum += r.candidates.size();
        }
        CHECK(merged.candidates.size() <= sum);
        CHECK(std::is_sorted(merged.candidates.begin(), merged.candidates.end()));
        CHECK(std::adjacent_find(merged.candidates.begin(), merged.candidates.end()) == merged.candidates.end());
    }

    // all-zero descriptor: nothing is known anywhere
    const QueryResult zero = forest_query(forest, std::vector<QuantizedValue>(forest.descriptor_len, 0));
    CHECK(zero.rejected);
    CHECK(zero.rejection_depth == 0);
}

TEST_CASE("lowering the accept floor only grows the accepted query set") {
    const std::vector<Template> set = small_training_set(8, 2);
    ForestConfig strict_cfg;
    strict_cfg.accept_floor = 0.8;
    strict_cfg.min_leaf = 4;
    ForestConfig loose_cfg;
    loose_cfg.accept_floor = 0.4;
    loose_cfg.min_leaf = 4;
    const Forest strict = train_forest(set, strict_cfg, 91);
    const Forest loose = train_forest(set, loose_cfg, 91);

    Rng rng(55);
    int accepted_strict = 0, accepted_loose = 0;
    for (int i = 0; i < 400; ++i) {
        std::vector<QuantizedValue> v(strict.descriptor_len);
        for (auto& x : v) x = static_cast<QuantizedValue>(rng.next_int(0, 8));
        const bool a = !forest_query(strict, v).rejected;
        const bool b = !forest_query(loose, v).rejected;
        if (a) CHECK(b);  // anything the high floor accepts, the low floor accepts
        accepted_strict += a ? 1 : 0;
        accepted_loose += b ? 1 : 0;
    }
    CHECK(accepted_loose >= accepted_strict);
}

TEST_CASE("deeper trees shrink the expected candidate set") {
    const std::vector<Template> set = small_training_set(8, 4);
    ForestConfig shallow;
    shallow.max_depth = 3;
    shallow.min_leaf = 1;
    ForestConfig deep = shallow;
    deep.max_depth = 9;
    const Forest a = train_forest(set, shallow, 3);
    const Forest b = train_forest(set, deep, 3);

    double mean_a = 0.0, mean_b = 0.0;
    for (const auto& t : set) {
        mean_a += static_cast<double>(forest_query(a, t.descriptor).candidates.size());
        mean_b += static_cast<double>(forest_query(b, t.descriptor).candidates.size());
    }
    CHECK(mean_b < mean_a);
}

TEST_CASE("a single always-accept leaf returns the full training set") {
    Tree tree;
    TreeNode leaf;
    leaf.is_leaf = true;
    leaf.leaf_ids = {4, 1, 9};
    leaf.rejector.accept_floor = 0.0;  // empty selector: nothing to test
    tree.nodes.push_back(leaf);

    const QueryResult r = descend(tree, std::vector<QuantizedValue>(16, 0));
    CHECK_FALSE(r.rejected);
    CHECK(r.candidates == std::vector<std::uint32_t>{1, 4, 9});
}

TEST_CASE("entropy of any selector distribution stays within [0, ln 8]") {
    Rng rng(321);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Template> ts;
        const int n = 1 + static_cast<int>(rng.next_below(12));
        for (int i = 0; i < n; ++i) {
            std::vector<QuantizedValue> d(6);
            for (auto& v : d) v = static_cast<QuantizedValue>(rng.next_int(0, 8));  // zeros included
            ts.push_back(mini_template(static_cast<std::uint32_t>(i), d, {1, 1, 1, 1, 1, 1}));
        }
        const double h = entropy(as_set(ts), {0, 1, 2, 3, 4, 5});
        CHECK(h >= 0.0);
        CHECK(h <= std::log(8.0) + 1e-12);
    }
}
