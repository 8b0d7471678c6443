#include "vplab/service/store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "vplab/common/error.hpp"
#include "vplab/service/codec.hpp"

namespace vplab::service {

namespace fs = std::filesystem;

namespace {

nlohmann::json points_json(const std::vector<PointPrompt>& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pts) {
    a.push_back({{"x", p.x}, {"y", p.y}, {"polarity", p.polarity == Polarity::positive ? "positive" : "negative"}});
  }
  return a;
}

std::vector<PointPrompt> points_from(const nlohmann::json& a) {
  std::vector<PointPrompt> pts;
  for (const auto& p : a) {
    pts.push_back({p.at("x").get<double>(), p.at("y").get<double>(),
                   p.at("polarity").get<std::string>() == "negative" ? Polarity::negative : Polarity::positive});
  }
  return pts;
}

BinaryMask load_mask(const fs::path& path) { return decode_mask_png(read_file(path)); }

}  // namespace

const ImageEntry* Project::find_image(const std::string& image_id) const {
  for (const auto& im : images) {
    if (im.id == image_id) return &im;
  }
  return nullptr;
}

nlohmann::json manifest(const Project& p) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& im : p.images) {
    images.push_back({{"id", im.id},
                      {"original_name", im.original_name},
                      {"original_width", im.original_width},
                      {"original_height", im.original_height}});
  }
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [id, rec] : p.labels) {
    labels[id] = {{"status", matcher::to_string(rec.status)},
                  {"confidence", rec.confidence},
                  {"history", rec.history},
                  {"updated_seq", rec.updated_seq},
                  {"validated_seq", rec.validated_seq},
                  {"has_prediction", rec.prediction.has_value()}};
  }
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : p.metrics_history) metrics.push_back({{"job_id", m.job_id}, {"miou", m.miou}, {"count", m.count}});
  nlohmann::json j{{"schema_version", p.schema_version},
                   {"id", p.id},
                   {"name", p.name},
                   {"class_label", p.class_label},
                   {"seq", p.seq},
                   {"images", images},
                   {"labels", labels},
                   {"job_ids", p.job_ids},
                   {"checkpoints", p.checkpoints},
                   {"metrics_history", metrics}};
  if (p.reference) {
    j["reference"] = {{"image_id", p.reference->image_id},
                      {"points", points_json(p.reference->points)},
                      {"validated", p.reference->validated},
                      {"confidence", p.reference->confidence}};
  } else {
    j["reference"] = nullptr;
  }
  return j;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProjectStore::ProjectStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "projects"); }

fs::path ProjectStore::project_dir(const std::string& id) const { return root_ / "projects" / id; }

std::vector<std::string> ProjectStore::list_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root_ / "projects")) {
    if (e.is_directory() && fs::exists(e.path() / "project.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool ProjectStore::exists(const std::string& id) const { return fs::exists(project_dir(id) / "project.json"); }

Project ProjectStore::load(const std::string& id) const {
  const fs::path dir = project_dir(id);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "project.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest for project " + id + ": " + e.what());
  }
  const int version = j.value("schema_version", 0);
  if (version != kSchemaVersion) {
    throw MigrationRequired("project " + id + " has schema version " + std::to_string(version) + ", expected " +
                            std::to_string(kSchemaVersion));
  }
  Project p;
  p.schema_version = version;
  p.id = j.at("id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.class_label = j.at("class_label").get<std::string>();
  p.seq = j.at("seq").get<std::uint64_t>();
  for (const auto& im : j.at("images")) {
    p.images.push_back({im.at("id").get<std::string>(), im.at("original_name").get<std::string>(),
                        im.at("original_width").get<int>(), im.at("original_height").get<int>()});
  }
  if (!j.at("reference").is_null()) {
    const auto& r = j.at("reference");
    ReferenceInfo ref;
    ref.image_id = r.at("image_id").get<std::string>();
    ref.points = points_from(r.at("points"));
    ref.validated = r.at("validated").get<bool>();
    ref.confidence = r.at("confidence").get<double>();
    try {
      ref.mask = load_mask(dir / "masks" / "reference.png");
    } catch (const std::exception&) {
      // A reference without a readable mask cannot stay validated.
      ref.validated = false;
    }
    p.reference = std::move(ref);
  }
  for (const auto& [image_id, r] : j.at("labels").items()) {
    MaskRecord rec;
    rec.status = matcher::label_status_from_string(r.at("status").get<std::string>());
    rec.confidence = r.at("confidence").get<double>();
    for (const auto& h : r.at("history")) rec.history.push_back(h);
    rec.updated_seq = r.at("updated_seq").get<std::uint64_t>();
    rec.validated_seq = r.at("validated_seq").get<std::uint64_t>();
    try {
      rec.mask = load_mask(dir / "masks" / (image_id + ".png"));
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (r.at("has_prediction").get<bool>()) {
      try {
        rec.prediction = load_mask(dir / "masks" / (image_id + ".pred.png"));
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
    p.labels.emplace(image_id, std::move(rec));
  }
  p.job_ids = j.at("job_ids").get<std::vector<std::string>>();
  p.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  for (const auto& m : j.at("metrics_history")) {
    p.metrics_history.push_back({m.at("job_id").get<std::string>(), m.at("miou").get<double>(), m.at("count").get<int>()});
  }
  return p;
}

void ProjectStore::save(const Project& p) const {
  const fs::path dir = project_dir(p.id);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "jobs");
  fs::create_directories(dir / "checkpoints");
  if (p.reference && p.reference->mask.height > 0) {
    write_file_atomic(dir / "masks" / "reference.png", encode_mask_png(p.reference->mask));
  }
  for (const auto& [image_id, rec] : p.labels) {
    // Failed records keep their damaged file for inspection.
    if (rec.failed) continue;
    write_file_atomic(dir / "masks" / (image_id + ".png"), encode_mask_png(rec.mask));
    if (rec.prediction) write_file_atomic(dir / "masks" / (image_id + ".pred.png"), encode_mask_png(*rec.prediction));
  }
  write_file_atomic(dir / "project.json", manifest(p).dump(2) + "\n");
}

void ProjectStore::write_image(const std::string& project_id, const std::string& image_id, const std::string& png) const {
  write_file_atomic(project_dir(project_id) / "images" / (image_id + ".png"), png);
}

std::string ProjectStore::read_image(const std::string& project_id, const std::string& image_id) const {
  return read_file(project_dir(project_id) / "images" / (image_id + ".png"));
}

void ProjectStore::write_checkpoint(const std::string& project_id, const std::string& name,
                                    const std::string& bytes) const {
  write_file_atomic(project_dir(project_id) / "checkpoints" / name, bytes);
}

std::string ProjectStore::read_checkpoint(const std::string& project_id, const std::string& name) const {
  return read_file(project_dir(project_id) / "checkpoints" / name);
}

void ProjectStore::write_job(const std::string& project_id, const std::string& job_id,
                             const nlohmann::json& record) const {
  write_file_atomic(project_dir(project_id) / "jobs" / (job_id + ".json"), record.dump(2) + "\n");
}

std::vector<nlohmann::json> ProjectStore::read_jobs() const {
  std::vector<nlohmann::json> jobs;
  for (const auto& id : list_ids()) {
    const fs::path dir = project_dir(id) / "jobs";
    if (!fs::exists(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      try {
        jobs.push_back(nlohmann::json::parse(read_file(e.path())));
      } catch (const std::exception&) {
        // An unreadable job file is skipped; its project still loads.
      }
    }
  }
  return jobs;
}

}  // namespace vplab::service
