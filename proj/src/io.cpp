#include "forestmatch/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace forestmatch {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

namespace {

using nlohmann::json;

constexpr std::uint32_t kContainerVersion = 1;
constexpr char kMagicTemplates[4] = {'F', 'M', 'T', 'S'};
constexpr char kMagicForest[4] = {'F', 'M', 'F', 'R'};
constexpr char kMagicScene[4] = {'F', 'M', 'S', 'C'};

// --- primitive writers -----------------------------------------------------

struct Writer {
    std::string out;

    void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct Reader {
    const std::string& in;
    std::size_t pos = 0;

    explicit Reader(const std::string& s) : in(s) {}

    void raw(void* p, std::size_t n) {
        if (pos + n > in.size()) throw DataError("container truncated");
        std::memcpy(p, in.data() + pos, n);
        pos += n;
    }
    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    std::int32_t i32() { std::int32_t v; raw(&v, 4); return v; }
    float f32() { float v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos + n > in.size()) throw DataError("container truncated");
        std::string s = in.substr(pos, n);
        pos += n;
        return s;
    }
};

void write_header(Writer& w, const char magic[4], const MetaJson& meta) {
    w.raw(magic, 4);
    w.u32(kContainerVersion);
    w.str(meta);
}

MetaJson read_header(Reader& r, const char magic[4], const char* what) {
    char m[4];
    r.raw(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw DataError(std::string("not a ") + what + " container");
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw DataError(std::string("unsupported ") + what + " container version " + std::to_string(version));
    return r.str();
}

void write_pose(Writer& w, const Pose& p) {
    w.f32(p.yaw);
    w.f32(p.pitch);
    w.f32(p.roll);
    w.f32(p.scale);
}

Pose read_pose(Reader& r) {
    Pose p;
    p.yaw = r.f32();
    p.pitch = r.f32();
    p.roll = r.f32();
    p.scale = r.f32();
    return p;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + path);
}

// ---------------------------------------------------------------------------
// Template sets
// ---------------------------------------------------------------------------

void save_template_set(const std::string& path, const std::vector<Template>& templates, const MetaJson& meta) {
    Writer w;
    write_header(w, kMagicTemplates, meta);
    w.u32(static_cast<std::uint32_t>(templates.size()));
    for (const Template& t : templates) {
        w.u32(t.id);
        w.u32(t.object_id);
        write_pose(w, t.pose);
        w.u16(static_cast<std::uint16_t>(t.patch_w));
        w.u16(static_cast<std::uint16_t>(t.patch_h));
        w.u32(static_cast<std::uint32_t>(t.locations.size()));
        for (const auto& [x, y] : t.locations) {
            w.u16(x);
            w.u16(y);
        }
        w.u32(static_cast<std::uint32_t>(t.descriptor.size()));
        w.raw(t.descriptor.data(), t.descriptor.size());
        w.raw(t.fg_mask.data(), t.fg_mask.size());
        for (float d : t.depth_patch) w.f32(d);
    }
    write_file(path, w.out);
}

std::vector<Template> load_template_set(const std::string& path, MetaJson* meta) {
    const std::string bytes = read_file(path);
    Reader r(bytes);
    const MetaJson m = read_header(r, kMagicTemplates, "template set");
    if (meta) *meta = m;

    const std::uint32_t count = r.u32();
    std::vector<Template> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Template t;
        t.id = r.u32();
        t.object_id = r.u32();
        t.pose = read_pose(r);
        t.patch_w = r.u16();
        t.patch_h = r.u16();
        const std::uint32_t n_loc = r.u32();
        t.locations.reserve(n_loc);
        for (std::uint32_t k = 0; k < n_loc; ++k) {
            const std::uint16_t x = r.u16();
            const std::uint16_t y = r.u16();
            t.locations.emplace_back(x, y);
        }
        const std::uint32_t len = r.u32();
        if (n_loc == 0 || len % n_loc != 0) throw DataError("template descriptor length not a multiple of |R|");
        t.descriptor.resize(len);
        r.raw(t.descriptor.data(), len);
        t.fg_mask.resize(len);
        r.raw(t.fg_mask.data(), len);
        t.depth_patch.resize(static_cast<std::size_t>(t.patch_w) * t.patch_h);
        for (float& d : t.depth_patch) d = r.f32();
        out.push_back(std::move(t));
    }
    return out;
}

std::string template_set_to_json(const std::vector<Template>& templates, const MetaJson& meta) {
    json root;
    root["format"] = "forestmatch-templates";
    root["version"] = kContainerVersion;
    root["meta"] = meta;
    json list = json::array();
    for (const Template& t : templates) {
        json jt;
        jt["id"] = t.id;
        jt["object_id"] = t.object_id;
        jt["pose"] = {t.pose.yaw, t.pose.pitch, t.pose.roll, t.pose.scale};
        jt["patch"] = {t.patch_w, t.patch_h};
        json locs = json::array();
        for (const auto& [x, y] : t.locations) locs.push_back({x, y});
        jt["locations"] = std::move(locs);
        jt["descriptor"] = t.descriptor;
        jt["fg_mask"] = t.fg_mask;
        jt["depth_patch"] = t.depth_patch;
        list.push_back(std::move(jt));
    }
    root["templates"] = std::move(list);
    return root.dump(1);
}

std::vector<Template> template_set_from_json(const std::string& text, MetaJson* meta) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad template JSON: ") + e.what());
    }
    if (root.value("format", "") != "forestmatch-templates") throw DataError("not a template-set JSON document");
    if (meta) *meta = root.value("meta", "");

    std::vector<Template> out;
    for (const json& jt : root.at("templates")) {
        Template t;
        t.id = jt.at("id").get<std::uint32_t>();
        t.object_id = jt.at("object_id").get<std::uint32_t>();
        const auto& pose = jt.at("pose");
        t.pose = {pose.at(0).get<float>(), pose.at(1).get<float>(), pose.at(2).get<float>(),
                  pose.at(3).get<float>()};
        t.patch_w = jt.at("patch").at(0).get<int>();
        t.patch_h = jt.at("patch").at(1).get<int>();
        for (const auto& l : jt.at("locations"))
            t.locations.emplace_back(l.at(0).get<std::uint16_t>(), l.at(1).get<std::uint16_t>());
        t.descriptor = jt.at("descriptor").get<std::vector<QuantizedValue>>();
        t.fg_mask = jt.at("fg_mask").get<std::vector<std::uint8_t>>();
        t.depth_patch = jt.at("depth_patch").get<std::vector<float>>();
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forests
// ---------------------------------------------------------------------------

namespace {

void write_rejector(Writer& w, const RejectorParams& r) {
    w.u32(static_cast<std::uint32_t>(r.selector.size()));
    for (std::uint32_t c : r.selector) w.u32(c);
    w.u32(static_cast<std::uint32_t>(r.known_rows.size()));
    for (const auto& row : r.known_rows)
        for (std::uint8_t k : row) w.u8(k);
    w.f64(r.accept_floor);
}

RejectorParams read_rejector(Reader& r) {
    RejectorParams out;
    const std::uint32_t n = r.u32();
    out.selector.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.selector.push_back(r.u32());
    const std::uint32_t rows = r.u32();
    out.known_rows.resize(rows);
    for (auto& row : out.known_rows)
        for (std::uint8_t& k : row) k = r.u8();
    out.accept_floor = r.f64();
    return out;
}

}  // namespace

void save_forest(const std::string& path, const Forest& forest, const MetaJson& meta) {
    Writer w;
    write_header(w, kMagicForest, meta);
    w.u32(static_cast<std::uint32_t>(forest.descriptor_len));

    const ForestConfig& c = forest.config;
    w.u32(static_cast<std::uint32_t>(c.trees));
    w.u32(static_cast<std::uint32_t>(c.subspace_dim));
    w.u32(static_cast<std::uint32_t>(c.rejector_dim));
    w.u32(static_cast<std::uint32_t>(c.candidates));
    w.f64(c.fuzzy_margin);
    w.f64(c.accept_floor);
    w.f64(c.density_floor);
    w.u32(static_cast<std::uint32_t>(c.min_leaf));
    w.u32(static_cast<std::uint32_t>(c.max_depth));
    w.u8(c.rejector_objective == RejectorObjective::MinEntropy ? 0 : 1);

    w.u32(static_cast<std::uint32_t>(forest.trees.size()));
    for (const Tree& tree : forest.trees) {
        w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const TreeNode& n : tree.nodes) {
            w.u8(n.is_leaf ? 1 : 0);
            write_rejector(w, n.rejector);
            if (n.is_leaf) {
                w.u32(static_cast<std::uint32_t>(n.leaf_ids.size()));
                for (std::uint32_t id : n.leaf_ids) w.u32(id);
            } else {
                w.u32(static_cast<std::uint32_t>(n.split.selector.size()));
                for (std::uint32_t c2 : n.split.selector) w.u32(c2);
                w.raw(n.split.exemplar.data(), n.split.exemplar.size());
                w.f64(n.split.tau);
                w.f64(n.split.fuzzy_margin);
                w.i32(n.left);
                w.i32(n.right);
            }
        }
    }
    write_file(path, w.out);
}

Forest load_forest(const std::string& path, MetaJson* meta) {
    const std::string bytes = read_file(path);
    Reader r(bytes);
    const MetaJson m = read_header(r, kMagicForest, "forest");
    if (meta) *meta = m;

    Forest forest;
    forest.descriptor_len = static_cast<int>(r.u32());
    ForestConfig& c = forest.config;
    c.trees = static_cast<int>(r.u32());
    c.subspace_dim = static_cast<int>(r.u32());
    c.rejector_dim = static_cast<int>(r.u32());
    c.candidates = static_cast<int>(r.u32());
    c.fuzzy_margin = r.f64();
    c.accept_floor = r.f64();
    c.density_floor = r.f64();
    c.min_leaf = static_cast<int>(r.u32());
    c.max_depth = static_cast<int>(r.u32());
    c.rejector_objective = r.u8() == 0 ? RejectorObjective::MinEntropy : RejectorObjective::MinInfoGain;

    const std::uint32_t n_trees = r.u32();
    forest.trees.reserve(n_trees);
    for (std::uint32_t ti = 0; ti < n_trees; ++ti) {
        Tree tree;
        const std::uint32_t n_nodes = r.u32();
        tree.nodes.reserve(n_nodes);
        for (std::uint32_t ni = 0; ni < n_nodes; ++ni) {
            TreeNode n;
            n.is_leaf = r.u8() != 0;
            n.rejector = read_rejector(r);
            if (n.is_leaf) {
                const std::uint32_t count = r.u32();
                n.leaf_ids.reserve(count);
                for (std::uint32_t k = 0; k < count; ++k) n.leaf_ids.push_back(r.u32());
            } else {
                const std::uint32_t sel = r.u32();
                n.split.selector.reserve(sel);
                for (std::uint32_t k = 0; k < sel; ++k) n.split.selector.push_back(r.u32());
                n.split.exemplar.resize(sel);
                r.raw(n.split.exemplar.data(), sel);
                n.split.tau = r.f64();
                n.split.fuzzy_margin = r.f64();
                n.left = r.i32();
                n.right = r.i32();
                if (n.left < 0 || n.right < 0) throw DataError("forest split node missing a child");
            }
            tree.nodes.push_back(std::move(n));
        }
        if (tree.nodes.empty()) throw DataError("forest tree has no nodes");
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

void save_scene(const std::string& path, const FeatureMap& scene, const MetaJson& meta) {
    Writer w;
    write_header(w, kMagicScene, meta);
    w.u32(static_cast<std::uint32_t>(scene.width));
    w.u32(static_cast<std::uint32_t>(scene.height));
    w.u8(static_cast<std::uint8_t>(scene.modalities.size()));
    for (Modality m : scene.modalities) w.u8(static_cast<std::uint8_t>(m));
    w.raw(scene.values.data(), scene.values.size());
    w.u8(scene.has_depth() ? 1 : 0);
    for (float d : scene.depth) w.f32(d);
    write_file(path, w.out);
}

FeatureMap load_scene(const std::string& path, MetaJson* meta) {
    const std::string bytes = read_file(path);
    Reader r(bytes);
    const MetaJson m = read_header(r, kMagicScene, "scene");
    if (meta) *meta = m;

    const int w = static_cast<int>(r.u32());
    const int h = static_cast<int>(r.u32());
    const int n_mod = r.u8();
    std::vector<Modality> mods;
    for (int i = 0; i < n_mod; ++i) mods.push_back(static_cast<Modality>(r.u8()));
    FeatureMap scene(w, h, mods);
    r.raw(scene.values.data(), scene.values.size());
    if (r.u8() != 0) {
        scene.depth.resize(static_cast<std::size_t>(w) * h);
        for (float& d : scene.depth) d = r.f32();
    }
    for (QuantizedValue v : scene.values)
        if (v > kNumBins) throw DataError("scene contains a feature value outside [0, 8]");
    return scene;
}

std::string ground_truth_to_json(const std::vector<PlacedObject>& truth, const MetaJson& meta) {
    json root;
    root["format"] = "forestmatch-truth";
    root["meta"] = meta;
    json list = json::array();
    for (const PlacedObject& p : truth) {
        list.push_back({{"object_id", p.object_id},
                        {"x", p.x},
                        {"y", p.y},
                        {"yaw", p.pose.yaw},
                        {"pitch", p.pose.pitch},
                        {"roll", p.pose.roll},
                        {"scale", p.pose.scale}});
    }
    root["objects"] = std::move(list);
    return root.dump(1);
}

std::vector<PlacedObject> ground_truth_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("bad ground-truth JSON: ") + e.what());
    }
    if (root.value("format", "") != "forestmatch-truth") throw DataError("not a ground-truth JSON document");
    std::vector<PlacedObject> out;
    for (const json& j : root.at("objects")) {
        PlacedObject p;
        p.object_id = j.at("object_id").get<std::uint32_t>();
        p.x = j.at("x").get<int>();
        p.y = j.at("y").get<int>();
        p.pose.yaw = j.at("yaw").get<float>();
        p.pose.pitch = j.at("pitch").get<float>();
        p.pose.roll = j.at("roll").get<float>();
        p.pose.scale = j.at("scale").get<float>();
        out.push_back(p);
    }
    return out;
}

void write_rejection_pgm(const std::string& path, const WindowOutcomeGrid& grid) {
    std::string body = "P5\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
    body.reserve(body.size() + grid.codes.size());
    for (int code : grid.codes) {
        std::uint8_t pixel = 0;  // validated / out of depth range
        if (code >= 0) pixel = static_cast<std::uint8_t>(80 + std::min(code, 10) * 17);
        body.push_back(static_cast<char>(pixel));
    }
    write_file(path, body);
}

std::string container_kind(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 4) return "unknown";
    if (std::memcmp(bytes.data(), kMagicTemplates, 4) == 0) return "templates";
    if (std::memcmp(bytes.data(), kMagicForest, 4) == 0) return "forest";
    if (std::memcmp(bytes.data(), kMagicScene, 4) == 0) return "scene";
    if (bytes.rfind("P5\n", 0) == 0) return "pgm";
    return "unknown";
}

}  // namespace forestmatch
