#pragma once

#include <string>
#include <vector>

#include "xrgen/phantom.hpp"
#include "xrgen/projector.hpp"
#include "xrgen/tensor.hpp"

namespace xrgen::data {

enum class ConditionType { Contour, ContourBone };

std::string to_string(ConditionType t);
ConditionType condition_type_from_string(const std::string& s);

// Affine rescale of a whole sweep using its global min/max; output lies in
// [0,1] and attains both bounds somewhere in the set. Throws on a constant set.
std::vector<ImageTensor> normalize_set(const std::vector<ImageTensor>& projections);

// 0.5 where drr > threshold, 0 elsewhere.
ImageTensor contour_segmentation(const ImageTensor& drr, double threshold = 0.1);

// Adds 0.5 where the bone projection exceeds bone_threshold; values capped at 1.
// Pixels whose bone support falls outside the contour support are counted as
// inconsistencies (they indicate the contour threshold clipped a bone ray).
struct BoneSegResult {
    ImageTensor image;
    long inconsistent_pixels = 0;
};
BoneSegResult bone_segmentation(const ImageTensor& bone_projection, const ImageTensor& contour,
                                double bone_threshold = 0.0);

// Per-phantom split labels: shuffled by split_seed, then cut at the cumulative
// 9/11 and 10/11 boundaries (floors), with a repair step keeping every split
// non-empty. n=11 gives 9/1/1, n=16 gives 13/1/2.
std::vector<std::string> split_assignment(int n_phantoms, std::uint64_t split_seed);

struct ManifestEntry {
    int phantom_id = 0;
    int view_index = 0;
    std::string split;
    std::string radiograph_path;
    std::string contour_path;
    std::string contour_bone_path;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

struct BuildResult {
    DatasetManifest manifest;
    int n_train_phantoms = 0, n_val_phantoms = 0, n_test_phantoms = 0;
    long images = 0;
    long bone_warnings = 0;
};

// Generates n_phantoms * n_views (radiograph, contour, contour+bone) triples
// under out_dir (PGM files + manifest.tsv). Deterministic in the seeds.
BuildResult build_dataset(int n_phantoms, const proj::ProjectionGeometry& geom,
                          const phantom::PhantomParams& base_params, std::uint64_t split_seed,
                          double bone_threshold, const std::string& out_dir);

struct DataItem {
    int phantom_id = 0;
    int view_index = 0;
    std::string split;
    ImageTensor radiograph;
    ImageTensor condition;  // empty when not requested
};

std::vector<DataItem> load_split(const std::string& data_dir, const DatasetManifest& m,
                                 const std::string& split, ConditionType type,
                                 bool load_condition = true);

}  // namespace xrgen::data
