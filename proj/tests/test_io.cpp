// io: bit-exact container round-trips, the JSON interchange form, and
// format error handling.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "forestmatch/io.hpp"

#include <cstdio>
#include <filesystem>

using namespace forestmatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fm_io_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Data {
    SynthConfig synth;
    std::vector<Template> store;
    Forest forest;
    FeatureMap scene;
    std::vector<PlacedObject> truth;

    Data() {
        synth.patch_size = 24;
        const std::vector<SyntheticObject> objects{make_object(0, 5, synth), make_object(1, 6, synth)};
        PoseGridSpec grid;
        grid.yaw_steps = 4;
        grid.pitch_steps = 2;
        grid.roll_steps = 2;
        grid.scales = {1.0};
        store = build_template_set(objects, make_pose_grid(grid), synth, 3);

        ForestConfig fc;
        fc.trees = 2;
        fc.max_depth = 5;
        fc.min_leaf = 4;
        forest = train_forest(store, fc, 11);

        SceneSpec spec;
        spec.width = 72;
        spec.height = 56;
        spec.placed.push_back({0, store[2].pose, 20, 16});
        spec.clutter_density = 0.2;
        spec.seed = 7;
        const ComposedScene composed = compose_scene(spec, objects, synth, &store);
        scene = composed.features;
        truth = composed.truth;
    }
};

}  // namespace

TEST_CASE("template container round-trips bit-exactly") {
    const Data data;
    TempDir dir;
    const std::string path = dir.file("templates.bin");
    save_template_set(path, data.store, "{\"k\":1}");
    MetaJson meta;
    const auto loaded = load_template_set(path, &meta);
    CHECK(meta == "{\"k\":1}");
    REQUIRE(loaded.size() == data.store.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].id == data.store[i].id);
        CHECK(loaded[i].object_id == data.store[i].object_id);
        CHECK(loaded[i].pose == data.store[i].pose);
        CHECK(loaded[i].locations == data.store[i].locations);
        CHECK(loaded[i].descriptor == data.store[i].descriptor);
        CHECK(loaded[i].fg_mask == data.store[i].fg_mask);
        CHECK(loaded[i].depth_patch == data.store[i].depth_patch);
    }

    const std::string second = dir.file("templates2.bin");
    save_template_set(second, loaded, meta);
    CHECK(read_file(path) == read_file(second));
}

TEST_CASE("template JSON interchange round-trips to identical binary bytes") {
    const Data data;
    TempDir dir;
    const std::string json_text = template_set_to_json(data.store, "{}");
    MetaJson meta;
    const auto from_json = template_set_from_json(json_text, &meta);

    const std::string a = dir.file("a.bin"), b = dir.file("b.bin");
    save_template_set(a, data.store, "{}");
    save_template_set(b, from_json, "{}");
    CHECK(read_file(a) == read_file(b));
}

TEST_CASE("forest container round-trips and reloaded queries match exactly") {
    const Data data;
    TempDir dir;
    const std::string path = dir.file("forest.bin");
    save_forest(path, data.forest, "{\"cfg\":true}");
    const Forest loaded = load_forest(path);

    CHECK(loaded.descriptor_len == data.forest.descriptor_len);
    CHECK(loaded.config == data.forest.config);
    REQUIRE(loaded.trees.size() == data.forest.trees.size());

    const std::string second = dir.file("forest2.bin");
    save_forest(second, loaded, "{\"cfg\":true}");
    CHECK(read_file(path) == read_file(second));

    // identical query behaviour on training descriptors and random probes
    Rng rng(23);
    for (const auto& t : data.store) {
        const QueryResult a = forest_query(data.forest, t.descriptor);
        const QueryResult b = forest_query(loaded, t.descriptor);
        CHECK(a.rejected == b.rejected);
        CHECK(a.candidates == b.candidates);
    }
    for (int i = 0; i < 50; ++i) {
        std::vector<QuantizedValue> probe(data.forest.descriptor_len);
        for (auto& v : probe) v = static_cast<QuantizedValue>(rng.next_int(0, 8));
        const QueryResult a = forest_query(data.forest, probe);
        const QueryResult b = forest_query(loaded, probe);
        CHECK(a.rejected == b.rejected);
        CHECK(a.rejection_depth == b.rejection_depth);
        CHECK(a.candidates == b.candidates);
    }
}

TEST_CASE("scene container and ground-truth sidecar round-trip") {
    const Data data;
    TempDir dir;
    const std::string path = dir.file("scene.bin");
    save_scene(path, data.scene, "{}");
    const FeatureMap loaded = load_scene(path);
    CHECK(loaded.width == data.scene.width);
    CHECK(loaded.height == data.scene.height);
    CHECK(loaded.modalities == data.scene.modalities);
    CHECK(loaded.values == data.scene.values);
    CHECK(loaded.depth == data.scene.depth);

    const std::string second = dir.file("scene2.bin");
    save_scene(second, loaded, "{}");
    CHECK(read_file(path) == read_file(second));

    const std::string truth_json = ground_truth_to_json(data.truth, "{}");
    const auto truth = ground_truth_from_json(truth_json);
    REQUIRE(truth.size() == data.truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        CHECK(truth[i].object_id == data.truth[i].object_id);
        CHECK(truth[i].x == data.truth[i].x);
        CHECK(truth[i].y == data.truth[i].y);
        CHECK(truth[i].pose == data.truth[i].pose);
    }
}

TEST_CASE("corrupt containers and wrong magic raise DataError") {
    const Data data;
    TempDir dir;
    const std::string path = dir.file("x.bin");
    write_file(path, "NOPE....garbage");
    CHECK_THROWS_AS(load_template_set(path), DataError);
    CHECK_THROWS_AS(load_forest(path), DataError);
    CHECK_THROWS_AS(load_scene(path), DataError);
    CHECK_THROWS_AS(load_template_set(dir.file("missing.bin")), DataError);

    // truncation
    save_template_set(path, data.store, "{}");
    const std::string bytes = read_file(path);
    write_file(path, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_template_set(path), DataError);

    // kind sniffing
    save_forest(path, data.forest, "{}");
    CHECK(container_kind(path) == "forest");
    save_scene(path, data.scene, "{}");
    CHECK(container_kind(path) == "scene");
}

TEST_CASE("rejection map writes a valid P5 graymap") {
    TempDir dir;
    WindowOutcomeGrid grid;
    grid.width = 4;
    grid.height = 2;
    grid.codes = {0, 3, 10, -1, -2, 5, 0, 12};
    const std::string path = dir.file("map.pgm");
    write_rejection_pgm(path, grid);
    const std::string bytes = read_file(path);
    CHECK(bytes.rfind("P5\n4 2\n255\n", 0) == 0);
    CHECK(bytes.size() == std::string("P5\n4 2\n255\n").size() + 8);
    // validated and depth-skipped windows share the dark value
    const std::size_t header = std::string("P5\n4 2\n255\n").size();
    CHECK(bytes[header + 3] == 0);
    CHECK(bytes[header + 4] == 0);
    CHECK(container_kind(path) == "pgm");
}
