#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "onfire/dataset.hpp"

namespace onfire {

struct SplitRatios {
  double train = 80.0;
  double val = 20.0;
  double test = 0.0;
};

// "80:20" or "70:20:10"
SplitRatios parse_ratios(const std::string& text);

struct ManifestEntry {
  std::string path;   // relative to the manifest root
  int label = 0;      // kFireClass or kNoFireClass
  std::string split;  // train, val, test or skipped (unreadable)
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;

  std::size_t count(int label, const std::string& split) const;
  std::string summary() const;
};

const char* label_name(int label);
int parse_label(const std::string& text);

using ReadableCheck = bool (*)(const std::filesystem::path&);

// Scans root/fire and root/nofire, drops undecodable files (kept as
// "skipped" entries with a warning) and splits each class independently
// with a seeded shuffle.
DatasetManifest ingest(const std::filesystem::path& root, const SplitRatios& ratios,
                       std::uint64_t seed, ReadableCheck readable = nullptr);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Decodes and letterboxes every entry of the split. An entry that no longer
// decodes is a LookupError (ingest already moved unreadable files to
// "skipped").
Dataset load_split(const DatasetManifest& manifest, const std::string& split, int height,
                   int width);

}  // namespace onfire
