// Versioned binary containers for template sets, forests and scenes, a JSON
// interchange form for template sets, and the rejection-map graymap writer.
// All integers and floats are little-endian; round-trips are bit-exact.

#pragma once

#include "forestmatch/forest.hpp"
#include "forestmatch/pipeline.hpp"
#include "forestmatch/synth.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace forestmatch {

// Free-form metadata embedded in every container header: config snapshot
// plus tool version, serialized as canonical JSON.
using MetaJson = std::string;

void save_template_set(const std::string& path, const std::vector<Template>& templates, const MetaJson& meta);
std::vector<Template> load_template_set(const std::string& path, MetaJson* meta = nullptr);

std::string template_set_to_json(const std::vector<Template>& templates, const MetaJson& meta);
std::vector<Template> template_set_from_json(const std::string& text, MetaJson* meta = nullptr);

void save_forest(const std::string& path, const Forest& forest, const MetaJson& meta);
Forest load_forest(const std::string& path, MetaJson* meta = nullptr);

void save_scene(const std::string& path, const FeatureMap& scene, const MetaJson& meta);
FeatureMap load_scene(const std::string& path, MetaJson* meta = nullptr);

std::string ground_truth_to_json(const std::vector<PlacedObject>& truth, const MetaJson& meta);
std::vector<PlacedObject> ground_truth_from_json(const std::string& text);

// Binary P5 graymap of the rejection-depth grid: 0 for windows that reached
// validation or were skipped for depth range, brighter for later rejection.
void write_rejection_pgm(const std::string& path, const WindowOutcomeGrid& grid);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// Container kind sniffing for `inspect`.
std::string container_kind(const std::string& path);

}  // namespace forestmatch
