#include "gbm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "gbm/errors.hpp"
#include "gbm/hash.hpp"
#include "gbm/image_io.hpp"

namespace gbm {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw ValidationError("unknown split name '" + s + "'");
}

std::vector<const SampleEntry*> DatasetManifest::split_entries(Split s) const {
  std::vector<const SampleEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

size_t DatasetManifest::split_size(Split s) const {
  return static_cast<size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const SampleEntry& e) { return e.split == s; }));
}

namespace {

std::string normalize_relative(const fs::path& p) {
  std::string s = p.generic_string();  // '/'-separated on every platform
  return s;
}

void scan_folder(const fs::path& root, const std::string& folder, int label,
                 std::vector<SampleEntry>& entries, int& skipped) {
  const fs::path dir = root / folder;
  for (const auto& de : fs::recursive_directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const fs::path rel = fs::relative(de.path(), root);
    const std::string id = normalize_relative(rel);
    if (!probe_image(de.path())) {
      std::cerr << "warning: skipping unreadable image '" << de.path().string() << "'\n";
      ++skipped;
      continue;
    }
    SampleEntry e;
    e.id = id;
    e.path = id;
    e.label = label;
    const fs::path mask = root / "masks" / rel;
    if (fs::exists(mask) && fs::is_regular_file(mask)) {
      e.mask_path = normalize_relative(fs::path("masks") / rel);
    }
    entries.push_back(std::move(e));
  }
}

// Largest-remainder rounding of ratio*n into integer counts summing to n.
std::array<int, 3> largest_remainder_counts(int n, const std::array<double, 3>& ratios) {
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double q = ratios[static_cast<size_t>(s)] * n;
    counts[static_cast<size_t>(s)] = static_cast<int>(std::floor(q));
    frac[static_cast<size_t>(s)] = q - std::floor(q);
    assigned += counts[static_cast<size_t>(s)];
  }
  int leftover = n - assigned;
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[static_cast<size_t>(a)] > frac[static_cast<size_t>(b)]; });
  for (int i = 0; i < leftover; ++i) counts[static_cast<size_t>(order[static_cast<size_t>(i)])]++;
  return counts;
}

}  // namespace

DatasetManifest scan_dataset(const fs::path& root) {
  for (const char* required : {"yes", "no"}) {
    if (!fs::is_directory(root / required)) {
      throw ConfigError("dataset root '" + root.string() + "' is missing the '" +
                        std::string(required) + "' directory");
    }
  }
  DatasetManifest manifest;
  manifest.root = root.string();
  scan_folder(root, "yes", 1, manifest.entries, manifest.skipped_files);
  scan_folder(root, "no", 0, manifest.entries, manifest.skipped_files);
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const SampleEntry& a, const SampleEntry& b) { return a.id < b.id; });
  if (manifest.skipped_files > 0) {
    std::cerr << "warning: skipped " << manifest.skipped_files << " unreadable file(s)\n";
  }
  return manifest;
}

DatasetManifest split_manifest(const DatasetManifest& manifest, const std::array<double, 3>& ratios,
                               uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
  }
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split ratios must be non-negative");
  }
  const int n = static_cast<int>(manifest.entries.size());
  if (n == 0) throw ConfigError("cannot split an empty manifest");

  const std::array<int, 3> targets = largest_remainder_counts(n, ratios);
  for (int s = 0; s < 3; ++s) {
    if (targets[static_cast<size_t>(s)] == 0 && ratios[static_cast<size_t>(s)] > 0.0 && n >= 10) {
      throw ConfigError("split '" + to_string(static_cast<Split>(s + 1)) +
                        "' would receive 0 samples despite ratio > 0");
    }
  }

  // Shuffle indices within each label class.
  std::array<std::vector<int>, 2> by_class;
  for (int i = 0; i < n; ++i) {
    by_class[manifest.entries[static_cast<size_t>(i)].label == 1 ? 1 : 0].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, "split-shuffle", static_cast<uint64_t>(c))));
    std::shuffle(by_class[static_cast<size_t>(c)].begin(), by_class[static_cast<size_t>(c)].end(), rng);
  }

  // Per-class largest-remainder allocation, then balance column sums to the
  // global targets so split sizes stay within +/-1 of ratio*N.
  std::array<std::array<int, 3>, 2> alloc{};
  for (int c = 0; c < 2; ++c) {
    alloc[static_cast<size_t>(c)] =
        largest_remainder_counts(static_cast<int>(by_class[static_cast<size_t>(c)].size()), ratios);
  }
  auto column_sum = [&](int s) {
    return alloc[0][static_cast<size_t>(s)] + alloc[1][static_cast<size_t>(s)];
  };
  for (int guard = 0; guard < 2 * n; ++guard) {
    int over = -1, under = -1;
    for (int s = 0; s < 3; ++s) {
      if (column_sum(s) > targets[static_cast<size_t>(s)] && over < 0) over = s;
      if (column_sum(s) < targets[static_cast<size_t>(s)] && under < 0) under = s;
    }
    if (over < 0 && under < 0) break;
    // Move one entry of the class that is most over-represented in `over`.
    const int c = alloc[0][static_cast<size_t>(over)] >= alloc[1][static_cast<size_t>(over)] ? 0 : 1;
    alloc[static_cast<size_t>(c)][static_cast<size_t>(over)]--;
    alloc[static_cast<size_t>(c)][static_cast<size_t>(under)]++;
  }

  DatasetManifest out = manifest;
  out.seed = seed;
  out.split_ratios = ratios;
  for (int c = 0; c < 2; ++c) {
    size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < alloc[static_cast<size_t>(c)][static_cast<size_t>(s)]; ++k, ++cursor) {
        out.entries[static_cast<size_t>(by_class[static_cast<size_t>(c)][cursor])].split =
            static_cast<Split>(s + 1);
      }
    }
  }
  return out;
}

ImageSample load_sample(const SampleEntry& entry, const fs::path& root) {
  const fs::path full = root / entry.path;
  if (!fs::exists(full)) {
    throw IoError("sample file '" + full.string() + "' does not exist");
  }
  ImageSample sample;
  sample.channels = read_image(full);
  sample.label = entry.label;
  sample.id = entry.id;
  sample.path = full.string();
  if (sample.height() == 0 || sample.width() == 0) {
    throw ValidationError("zero-area image '" + full.string() + "'");
  }
  if (entry.mask_path) {
    sample.mask = read_png_mask(root / *entry.mask_path);
  }
  return sample;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["root"] = manifest.root;
  j["seed"] = manifest.seed;
  j["split_ratios"] = manifest.split_ratios;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json je;
    je["id"] = e.id;
    je["path"] = e.path;
    je["label"] = e.label;
    je["split"] = to_string(e.split);
    if (e.mask_path) je["mask_path"] = *e.mask_path;
    j["entries"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.root = j.at("root").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    const auto ratios = j.at("split_ratios");
    for (int i = 0; i < 3; ++i) m.split_ratios[static_cast<size_t>(i)] = ratios.at(i).get<double>();
    for (const auto& je : j.at("entries")) {
      SampleEntry e;
      e.id = je.at("id").get<std::string>();
      e.path = je.at("path").get<std::string>();
      e.label = je.at("label").get<int>();
      if (e.label != 0 && e.label != 1) {
        throw ValidationError("entry '" + e.id + "' has label " + std::to_string(e.label) +
                              "; must be 0 or 1");
      }
      e.split = split_from_string(je.at("split").get<std::string>());
      if (je.contains("mask_path")) e.mask_path = je.at("mask_path").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest JSON missing required field: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (auto parent = path.parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << manifest_to_json(manifest);
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

}  // namespace gbm
