#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "lvap/core.hpp"

namespace lvap {

class LoadError : public std::runtime_error {
 public:
  enum class Kind { MalformedFile, SchemaViolation, DanglingReference, IoFailure };

  LoadError(Kind kind, const std::string& message);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* load_error_name(LoadError::Kind kind);

// What a loader skipped or repaired. Fields the model does not consume
// (file_name, area, segmentation, ...) are counted by name.
struct LoadSummary {
  std::map<std::string, std::int64_t> unknown_fields;
  std::int64_t clamped_scores = 0;
  std::int64_t records = 0;

  std::string describe() const;
};

// COCO/LVIS annotation JSON. Parsed as a stream; segmentation polygons are
// skipped without being materialized.
Dataset load_dataset(const std::filesystem::path& path, LoadSummary* summary = nullptr);
Dataset load_dataset(std::istream& in, LoadSummary* summary = nullptr);

// COCO results array. Ids are file positions 0..n-1; scores are clamped to
// [0, 1]. With a dataset, every image/category id must resolve.
DetectionSet load_detections(const std::filesystem::path& path, const Dataset& dataset,
                             LoadSummary* summary = nullptr);
DetectionSet load_detections(std::istream& in, const Dataset& dataset,
                             LoadSummary* summary = nullptr);
DetectionSet load_detections(const std::filesystem::path& path, LoadSummary* summary = nullptr);
DetectionSet load_detections(std::istream& in, LoadSummary* summary = nullptr);

// Lossless writers: load_dataset(write_dataset(d)) == d.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);
void write_detections(const DetectionSet& dets, const std::filesystem::path& path);
void write_detections(const DetectionSet& dets, std::ostream& out);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

// Writes through a sibling temporary and renames, so a failed run leaves no
// partial file behind.
void write_file_atomically(const std::filesystem::path& path, const std::string& contents);

}  // namespace lvap
