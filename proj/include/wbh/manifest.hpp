#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbh/classes.hpp"
#include "wbh/geometry.hpp"

namespace wbh {

/// One labeled image. `condition` is "clean" or "corrupted:<kind>".
/// `image_path` is stored verbatim; relative paths are resolved against the
/// directory that holds the manifest file.
struct ImageRecord {
  std::string image_path;
  int width = 0;
  int height = 0;
  std::string condition = "clean";
  std::vector<Annotation> annotations;

  bool operator==(const ImageRecord&) const = default;
};

/// Labeled dataset: records + the class set their ids index into, plus a
/// free-form provenance string (seeds, lineage) for reproducibility audits.
struct DatasetManifest {
  std::vector<ImageRecord> records;
  ClassSet classes;
  std::string provenance;

  bool operator==(const DatasetManifest&) const = default;
};

/// Checks every record: bbox invariants, bbox within image bounds,
/// class_id < |classes|. Throws ContractError naming the first offender.
void validate_manifest(const DatasetManifest& m);

/// Native manifest format, versioned header "weatherbias-manifest v1".
/// Round trip is field-exact (doubles serialized shortest-round-trip).
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Resolves a record's image path against the directory containing the
/// manifest (absolute paths pass through).
std::filesystem::path resolve_image_path(const std::filesystem::path& base_dir,
                                         const ImageRecord& rec);

/// Drops annotations outside `keep` and remaps class ids to keep's indices.
/// Images stay even when they end up annotation-free. Every name in `keep`
/// must exist in m's class set.
DatasetManifest filter_classes(const DatasetManifest& m, const ClassSet& keep);

/// All of `clean` plus floor(fraction * |corrupted|) records sampled without
/// replacement from `corrupted`, deterministically shuffled. Both manifests
/// must share a class set.
DatasetManifest mix_datasets(const DatasetManifest& clean,
                             const DatasetManifest& corrupted,
                             double fraction_corrupted, std::uint64_t seed);

} // namespace wbh
