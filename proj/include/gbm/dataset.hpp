#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gbm/image.hpp"

namespace gbm {

enum class Split { unassigned, train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SampleEntry {
  std::string id;    // path relative to root, separators normalized to "/"
  std::string path;  // relative to manifest root
  int label = 0;     // 0 = normal, 1 = tumorous
  std::optional<std::string> mask_path;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::string root;
  uint64_t seed = 0;
  std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
  std::vector<SampleEntry> entries;

  // Not serialized; scan-time diagnostics.
  int skipped_files = 0;

  std::vector<const SampleEntry*> split_entries(Split s) const;
  size_t split_size(Split s) const;
};

// Walks root/yes and root/no (recursively), one entry per decodable raster
// image, labels from the folder name, sorted by id. Unreadable files are
// skipped with a warning on stderr and counted in skipped_files. A sibling
// root/masks/<id> file, when present, becomes the entry's mask_path.
DatasetManifest scan_dataset(const std::filesystem::path& root);

// Deterministic stratified assignment: entries are shuffled within each
// label class under `seed`, split targets come from largest-remainder
// rounding of ratio*N, and per-class allocations are balanced so every
// split's label mix tracks the global mix as closely as integers allow.
DatasetManifest split_manifest(const DatasetManifest& manifest, const std::array<double, 3>& ratios,
                               uint64_t seed);

// Decodes the entry's image (and mask, when referenced). Raw intensities
// 0..255; RGB files keep their 3 channels until preprocessing.
ImageSample load_sample(const SampleEntry& entry, const std::filesystem::path& root);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace gbm
