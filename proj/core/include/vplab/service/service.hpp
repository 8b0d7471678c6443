#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/matcher/matcher.hpp"
#include "vplab/peft/config.hpp"
#include "vplab/peft/state.hpp"
#include "vplab/segcore/weights.hpp"
#include "vplab/service/jobs.hpp"
#include "vplab/service/store.hpp"
#include "vplab/trainer/loss.hpp"

namespace vplab::service {

/// Error surfaced to API clients as {code, message} with an HTTP status.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}

  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceConfig {
  std::filesystem::path data_dir = "vplab-data";
  /// Uploaded images are resampled to work_size x work_size.
  int work_size = 64;
  int workers = 2;
  bool start_workers = true;
  peft::EPEFTConfig peft = peft::EPEFTConfig::ensemble();
  trainer::TrainConfig train;
  matcher::MatcherParams matcher;
};

struct Upload {
  std::string filename;
  std::string content_type;
  std::string bytes;
};

/// Business logic behind the HTTP API. Every method returns the JSON body of
/// a successful response or throws ApiError. Project mutations are
/// serialized per project; jobs run on the internal JobQueue.
class Service {
 public:
  Service(ServiceConfig cfg, std::shared_ptr<const DecoderWeights> base);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  nlohmann::json create_project(const nlohmann::json& body);
  nlohmann::json list_projects() const;
  nlohmann::json get_project(const std::string& pid) const;

  nlohmann::json add_images(const std::string& pid, const std::vector<Upload>& uploads);
  std::string image_png(const std::string& pid, const std::string& image_id) const;

  nlohmann::json set_reference(const std::string& pid, const nlohmann::json& body);
  nlohmann::json validate_reference(const std::string& pid, const nlohmann::json& body);

  nlohmann::json submit_match(const std::string& pid);
  nlohmann::json submit_finetune(const std::string& pid, const nlohmann::json& body);
  nlohmann::json submit_evaluate(const std::string& pid);

  nlohmann::json list_labels(const std::string& pid) const;
  nlohmann::json get_label(const std::string& pid, const std::string& image_id) const;
  nlohmann::json put_label(const std::string& pid, const std::string& image_id, const nlohmann::json& body);

  nlohmann::json get_job(const std::string& job_id) const;
  nlohmann::json list_jobs(const std::string& pid) const;
  nlohmann::json metrics(const std::string& pid) const;

  /// Latest EPEF1 checkpoint bytes.
  std::string export_checkpoint(const std::string& pid) const;

  JobQueue& jobs() { return *jobs_; }
  [[nodiscard]] const ServiceConfig& config() const { return cfg_; }
  [[nodiscard]] const ProjectStore& store() const { return store_; }

 private:
  struct Handle {
    mutable std::mutex mu;
    Project project;
    std::shared_ptr<const peft::EPEFTState> peft;  ///< latest tuned snapshot, or null
  };

  std::shared_ptr<Handle> handle(const std::string& pid) const;
  void load_all();
  nlohmann::json project_json(const Handle& h) const;
  nlohmann::json label_json(const std::string& image_id, const MaskRecord& rec) const;
  ImageRGB load_work_image(const std::string& pid, const std::string& image_id) const;
  BinaryMask mask_from_payload(const nlohmann::json& payload, int height, int width) const;

  nlohmann::json run_job(const JobRecord& job, const JobQueue::Progress& progress);
  nlohmann::json run_match(const JobRecord& job, const JobQueue::Progress& progress);
  nlohmann::json run_finetune(const JobRecord& job, const JobQueue::Progress& progress);
  nlohmann::json run_evaluate(const JobRecord& job);

  ServiceConfig cfg_;
  std::shared_ptr<const DecoderWeights> base_;
  ProjectStore store_;
  mutable std::mutex projects_mu_;
  std::map<std::string, std::shared_ptr<Handle>> projects_;
  std::unique_ptr<JobQueue> jobs_;
};

/// Mask wire form: {"width", "height", "png_base64", "rle"}.
nlohmann::json mask_payload(const BinaryMask& mask);

}  // namespace vplab::service
