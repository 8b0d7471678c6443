#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/matcher/matcher.hpp"
#include "vplab/segcore/types.hpp"

namespace vplab::service {

inline constexpr int kSchemaVersion = 1;

struct ImageEntry {
  std::string id;
  std::string original_name;
  int original_width = 0;
  int original_height = 0;
};

struct ReferenceInfo {
  std::string image_id;
  std::vector<PointPrompt> points;
  bool validated = false;
  double confidence = 0.0;
  BinaryMask mask;  ///< masks/reference.png
};

/// One image's label. `history` is an append-only log of edit entries
/// (opaque JSON objects supplied by the client plus a status stamp).
struct MaskRecord {
  BinaryMask mask;                    ///< masks/<image>.png
  std::optional<BinaryMask> prediction;  ///< masks/<image>.pred.png, latest model output
  matcher::LabelStatus status = matcher::LabelStatus::predicted;
  double confidence = 0.0;
  std::vector<nlohmann::json> history;
  std::uint64_t updated_seq = 0;
  std::uint64_t validated_seq = 0;  ///< 0 until validated
  /// Set at load time when a mask file is missing or unreadable; not persisted.
  bool failed = false;
  std::string error;
};

struct MetricsPoint {
  std::string job_id;
  double miou = 0.0;
  int count = 0;
};

struct Project {
  int schema_version = kSchemaVersion;
  std::string id;
  std::string name;
  std::string class_label;
  std::uint64_t seq = 0;  ///< per-project logical clock
  std::vector<ImageEntry> images;
  std::optional<ReferenceInfo> reference;
  std::map<std::string, MaskRecord> labels;
  std::vector<std::string> job_ids;
  std::vector<std::string> checkpoints;  ///< file names under checkpoints/
  std::vector<MetricsPoint> metrics_history;

  [[nodiscard]] const ImageEntry* find_image(const std::string& image_id) const;
  std::uint64_t tick() { return ++seq; }
};

/// Manifest JSON (masks excluded; they live in their own files).
nlohmann::json manifest(const Project& p);

/// Flat on-disk layout under `root`:
///   projects/<id>/project.json
///   projects/<id>/images/<image>.png
///   projects/<id>/masks/<image>.png, <image>.pred.png, reference.png
///   projects/<id>/jobs/<job>.json
///   projects/<id>/checkpoints/<name>.epef
/// All writes go through a temporary file and a rename.
class ProjectStore {
 public:
  explicit ProjectStore(std::filesystem::path root);

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::filesystem::path project_dir(const std::string& id) const;

  [[nodiscard]] std::vector<std::string> list_ids() const;
  [[nodiscard]] bool exists(const std::string& id) const;

  /// Throws MigrationRequired on a schema mismatch and std::runtime_error if
  /// the manifest is missing or malformed. Unreadable mask files mark their
  /// record failed; the project still loads.
  [[nodiscard]] Project load(const std::string& id) const;
  void save(const Project& p) const;

  void write_image(const std::string& project_id, const std::string& image_id, const std::string& png) const;
  [[nodiscard]] std::string read_image(const std::string& project_id, const std::string& image_id) const;

  void write_checkpoint(const std::string& project_id, const std::string& name, const std::string& bytes) const;
  [[nodiscard]] std::string read_checkpoint(const std::string& project_id, const std::string& name) const;

  void write_job(const std::string& project_id, const std::string& job_id, const nlohmann::json& record) const;
  /// Every persisted job document across all projects.
  [[nodiscard]] std::vector<nlohmann::json> read_jobs() const;

 private:
  std::filesystem::path root_;
};

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace vplab::service
