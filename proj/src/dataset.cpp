#include "xrgen/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xrgen/errors.hpp"
#include "xrgen/pgm.hpp"
#include "xrgen/rng.hpp"

namespace fs = std::filesystem;

namespace xrgen::data {

std::string to_string(ConditionType t) {
    return t == ConditionType::Contour ? "contour" : "contour_bone";
}

ConditionType condition_type_from_string(const std::string& s) {
    if (s == "contour") return ConditionType::Contour;
    if (s == "contour_bone") return ConditionType::ContourBone;
    throw std::invalid_argument("unknown condition type: " + s);
}

std::vector<ImageTensor> normalize_set(const std::vector<ImageTensor>& projections) {
    if (projections.empty()) throw std::invalid_argument("normalize_set: empty set");
    double lo = projections[0].values[0], hi = lo;
    for (const auto& p : projections) {
        lo = std::min(lo, min_value(p));
        hi = std::max(hi, max_value(p));
    }
    if (!(hi > lo)) throw std::invalid_argument("normalize_set: constant set (max == min)");
    const double range = hi - lo;  // divide so the extrema land exactly on 0 and 1
    std::vector<ImageTensor> out;
    out.reserve(projections.size());
    for (const auto& p : projections) {
        ImageTensor q = p;
        for (double& v : q.values) v = (v - lo) / range;
        out.push_back(std::move(q));
    }
    return out;
}

ImageTensor contour_segmentation(const ImageTensor& drr, double threshold) {
    ImageTensor out(drr.height, drr.width, drr.channels);
    for (std::size_t i = 0; i < drr.size(); ++i)
        out.values[i] = drr.values[i] > threshold ? 0.5 : 0.0;
    return out;
}

BoneSegResult bone_segmentation(const ImageTensor& bone_projection, const ImageTensor& contour,
                                double bone_threshold) {
    check_same_shape(bone_projection, contour, "bone_segmentation");
    BoneSegResult res;
    res.image = contour;
    for (std::size_t i = 0; i < contour.size(); ++i) {
        if (bone_projection.values[i] > bone_threshold) {
            if (contour.values[i] == 0.0) ++res.inconsistent_pixels;
            res.image.values[i] = std::min(1.0, contour.values[i] + 0.5);
        }
    }
    return res;
}

std::vector<std::string> split_assignment(int n_phantoms, std::uint64_t split_seed) {
    if (n_phantoms < 3) throw std::invalid_argument("split_assignment: need at least 3 phantoms");
    std::vector<int> order(n_phantoms);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(split_seed);
    // Fisher-Yates with the seeded source
    for (int i = n_phantoms - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[i], order[j]);
    }
    int train_end = static_cast<int>(static_cast<long>(n_phantoms) * 9 / 11);
    int val_end = static_cast<int>(static_cast<long>(n_phantoms) * 10 / 11);
    if (val_end == train_end) {  // keep val non-empty, train gets the remainder
        --train_end;
    }

    std::vector<std::string> split(n_phantoms);
    for (int i = 0; i < n_phantoms; ++i) {
        const char* s = i < train_end ? "train" : (i < val_end ? "val" : "test");
        split[order[i]] = s;
    }
    return split;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path);
    if (!f) throw DataError("write_manifest: cannot open " + path);
    for (const auto& e : m.entries) {
        f << e.phantom_id << '\t' << e.view_index << '\t' << e.split << '\t' << e.radiograph_path
          << '\t' << e.contour_path << '\t' << e.contour_bone_path << '\n';
    }
    if (!f) throw DataError("write_manifest: write failed for " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("read_manifest: cannot open " + path);
    DatasetManifest m;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string ph, vi;
        if (!std::getline(ss, ph, '\t') || !std::getline(ss, vi, '\t') ||
            !std::getline(ss, e.split, '\t') || !std::getline(ss, e.radiograph_path, '\t') ||
            !std::getline(ss, e.contour_path, '\t') || !std::getline(ss, e.contour_bone_path))
            throw DataError("read_manifest: malformed line: " + line);
        e.phantom_id = std::stoi(ph);
        e.view_index = std::stoi(vi);
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw DataError("read_manifest: unknown split: " + e.split);
        m.entries.push_back(std::move(e));
    }
    return m;
}

namespace {

// Snap to the 16-bit storage grid so thresholds computed here agree bit-exactly
// with what a reader of the stored files recomputes.
ImageTensor quantized(const ImageTensor& img) {
    ImageTensor q = img;
    for (double& v : q.values) v = pgm::encode_sample(v) / 65535.0;
    return q;
}

}  // namespace

BuildResult build_dataset(int n_phantoms, const proj::ProjectionGeometry& geom,
                          const phantom::PhantomParams& base_params, std::uint64_t split_seed,
                          double bone_threshold, const std::string& out_dir) {
    if (n_phantoms < 3) throw std::invalid_argument("build_dataset: need n_phantoms >= 3");
    geom.validate();
    base_params.validate();

    fs::create_directories(fs::path(out_dir) / "images");

    const std::vector<std::string> split = split_assignment(n_phantoms, split_seed);
    BuildResult res;
    for (const auto& s : split) {
        if (s == "train") ++res.n_train_phantoms;
        else if (s == "val") ++res.n_val_phantoms;
        else ++res.n_test_phantoms;
    }

    for (int ph = 0; ph < n_phantoms; ++ph) {
        phantom::PhantomParams params = base_params;
        params.seed = derive_seed(base_params.seed, static_cast<std::uint64_t>(ph));
        const phantom::VolumeGrid vol = phantom::build_phantom(params);

        std::vector<ImageTensor> raw(geom.n_views), bone(geom.n_views);
#pragma omp parallel for schedule(static) if (exec_mode() == ExecMode::Parallel)
        for (int v = 0; v < geom.n_views; ++v) {
            raw[v] = proj::forward_project(vol, geom, v, ExecMode::Serial);
            bone[v] = proj::forward_project_bone(vol, geom, v, ExecMode::Serial);
        }
        const std::vector<ImageTensor> rads = normalize_set(raw);

        for (int v = 0; v < geom.n_views; ++v) {
            char name[64];
            std::snprintf(name, sizeof(name), "images/ph%03d_v%03d", ph, v);
            ManifestEntry e;
            e.phantom_id = ph;
            e.view_index = v;
            e.split = split[ph];
            e.radiograph_path = std::string(name) + "_rad.pgm";
            e.contour_path = std::string(name) + "_contour.pgm";
            e.contour_bone_path = std::string(name) + "_contour_bone.pgm";

            const ImageTensor radq = quantized(rads[v]);
            const ImageTensor contour = contour_segmentation(radq, 0.1);
            BoneSegResult bs = bone_segmentation(bone[v], contour, bone_threshold);
            res.bone_warnings += bs.inconsistent_pixels;

            pgm::write((fs::path(out_dir) / e.radiograph_path).string(), radq);
            pgm::write((fs::path(out_dir) / e.contour_path).string(), contour);
            pgm::write((fs::path(out_dir) / e.contour_bone_path).string(), bs.image);
            res.manifest.entries.push_back(std::move(e));
            ++res.images;
        }
    }

    write_manifest((fs::path(out_dir) / "manifest.tsv").string(), res.manifest);
    return res;
}

std::vector<DataItem> load_split(const std::string& data_dir, const DatasetManifest& m,
                                 const std::string& split, ConditionType type,
                                 bool load_condition) {
    std::vector<DataItem> items;
    for (const auto& e : m.entries) {
        if (e.split != split) continue;
        DataItem it;
        it.phantom_id = e.phantom_id;
        it.view_index = e.view_index;
        it.split = e.split;
        it.radiograph = pgm::read((fs::path(data_dir) / e.radiograph_path).string());
        if (load_condition) {
            const std::string& p =
                type == ConditionType::Contour ? e.contour_path : e.contour_bone_path;
            it.condition = pgm::read((fs::path(data_dir) / p).string());
        }
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace xrgen::data
