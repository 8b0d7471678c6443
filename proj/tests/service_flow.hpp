#pragma once

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/service/codec.hpp"
#include "vplab/service/http.hpp"
#include "vplab/service/service.hpp"
#include "vplab/trainer/finetune.hpp"
#include "vplab/trainer/synthetic.hpp"

#include <httplib.h>

namespace vplab::testing {

/// Service plus HTTP front end on an ephemeral port, served from a thread.
class LiveServer {
 public:
  LiveServer(service::ServiceConfig cfg, std::shared_ptr<const DecoderWeights> base)
      : svc_(std::make_unique<service::Service>(std::move(cfg), std::move(base))),
        http_(std::make_unique<service::HttpServer>(*svc_)) {
    port_ = http_->bind("127.0.0.1", 0);
    if (port_ <= 0) throw std::runtime_error("cannot bind test server");
    thread_ = std::thread([this] { http_->listen(); });
    httplib::Client probe("127.0.0.1", port_);
    for (int i = 0; i < 200 && !probe.Get("/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~LiveServer() {
    http_->stop();
    if (thread_.joinable()) thread_.join();
    http_.reset();
    svc_.reset();
  }
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  [[nodiscard]] int port() const { return port_; }
  service::Service& service() { return *svc_; }

 private:
  std::unique_ptr<service::Service> svc_;
  std::unique_ptr<service::HttpServer> http_;
  std::thread thread_;
  int port_ = -1;
};

struct Reply {
  int status = 0;
  nlohmann::json body;
  std::string raw;
};

/// Thin JSON client over httplib.
class ApiClient {
 public:
  explicit ApiClient(int port) : cli_("127.0.0.1", port) { cli_.set_read_timeout(120, 0); }

  Reply get(const std::string& path) { return wrap(cli_.Get(path)); }
  Reply post(const std::string& path, const nlohmann::json& body = nlohmann::json::object()) {
    return wrap(cli_.Post(path, body.dump(), "application/json"));
  }
  Reply put(const std::string& path, const nlohmann::json& body) {
    return wrap(cli_.Put(path, body.dump(), "application/json"));
  }
  Reply upload(const std::string& path, const std::vector<std::pair<std::string, std::string>>& files) {
    httplib::MultipartFormDataItems items;
    for (const auto& [name, bytes] : files) items.push_back({"files", bytes, name, "image/png"});
    return wrap(cli_.Post(path, items));
  }

  /// Polls GET /jobs/{id} until the job is terminal.
  nlohmann::json wait_job(const std::string& id, std::chrono::seconds timeout = std::chrono::seconds(300)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      const Reply r = get("/jobs/" + id);
      if (r.status != 200) throw std::runtime_error("job lookup failed: " + r.raw);
      const std::string state = r.body.at("state");
      if (state == "done" || state == "failed") return r.body;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    throw std::runtime_error("job " + id + " did not finish in time");
  }

 private:
  static Reply wrap(const httplib::Result& res) {
    Reply r;
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    r.status = res->status;
    r.raw = res->body;
    if (res->get_header_value("Content-Type") == "application/json" && !res->body.empty()) {
      r.body = nlohmann::json::parse(res->body);
    }
    return r;
  }

  httplib::Client cli_;
};

struct FlowResult {
  std::vector<std::string> steps;  ///< step names, in order, that met expectations
  std::vector<std::string> job_states;
  std::string export_bytes;
  std::string failure;  ///< empty on success
  std::string project_id;
};

/// create -> upload -> reference -> validate -> match -> label -> finetune ->
/// re-match -> export, all over HTTP. Stops at the first unexpected reply.
inline FlowResult run_service_flow(ApiClient& api, int epochs = 3) {
  FlowResult out;
  auto expect = [&](const std::string& step, const Reply& r, int status) {
    if (r.status != status) {
      out.failure = step + ": expected " + std::to_string(status) + ", got " + std::to_string(r.status) + " " + r.raw;
      return false;
    }
    out.steps.push_back(step);
    return true;
  };
  auto finish_job = [&](const std::string& step, const Reply& r) {
    if (!expect(step, r, 202)) return false;
    const auto job = api.wait_job(r.body.at("job_id"));
    out.job_states.push_back(job.at("state"));
    if (job.at("state") != "done") {
      out.failure = step + " job ended " + job.at("state").get<std::string>() + ": " + job.value("error", "");
      return false;
    }
    return true;
  };

  const auto ds = trainer::make_synthetic_dataset({"blobs", 4, 64}, 11);
  auto r = api.post("/projects", {{"name", "flow"}, {"class_label", "blob"}});
  if (!expect("create", r, 201)) return out;
  const std::string pid = r.body.at("id");
  out.project_id = pid;
  const std::string base = "/projects/" + pid;

  std::vector<std::pair<std::string, std::string>> files;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    files.push_back({"blob" + std::to_string(i) + ".png", service::encode_image_png(ds[i].image)});
  }
  r = api.upload(base + "/images", files);
  if (!expect("upload", r, 201)) return out;
  std::vector<std::string> ids = r.body.at("image_ids");

  if (!expect("export-before-finetune", api.get(base + "/export"), 409)) return out;
  if (!expect("match-before-reference", api.post(base + "/match"), 409)) return out;

  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : trainer::gt_points(ds[0].gt_mask, 8, {})) points.push_back({{"x", p.x}, {"y", p.y}, {"polarity", "positive"}});
  r = api.put(base + "/reference", {{"image_id", ids[0]}, {"points", points}});
  if (!expect("reference", r, 200)) return out;
  const nlohmann::json edited{{"rle", service::encode_mask_rle(ds[0].gt_mask)}};
  if (!expect("validate", api.post(base + "/reference/validate", {{"mask_edits", edited}}), 200)) return out;

  if (!finish_job("match", api.post(base + "/match"))) return out;
  r = api.get(base + "/labels");
  if (!expect("labels", r, 200)) return out;
  if (r.body.size() != ids.size()) {
    out.failure = "expected one label per image, got " + std::to_string(r.body.size());
    return out;
  }

  const nlohmann::json refined{{"status", "refined"}, {"mask", {{"rle", service::encode_mask_rle(ds[1].gt_mask)}}}};
  if (!expect("label-refine", api.put(base + "/labels/" + ids[1], refined), 200)) return out;
  const nlohmann::json back{{"status", "predicted"}, {"mask", {{"rle", service::encode_mask_rle(ds[1].gt_mask)}}}};
  if (!expect("label-backward", api.put(base + "/labels/" + ids[1], back), 409)) return out;
  const nlohmann::json valid{{"status", "validated"}, {"mask", {{"rle", service::encode_mask_rle(ds[2].gt_mask)}}}};
  if (!expect("label-validate", api.put(base + "/labels/" + ids[2], valid), 200)) return out;

  if (!finish_job("finetune", api.post(base + "/finetune", {{"train_config", {{"epochs", epochs}}}}))) return out;
  if (!finish_job("rematch", api.post(base + "/match"))) return out;
  if (!expect("metrics", api.get(base + "/metrics"), 200)) return out;

  r = api.get(base + "/export");
  if (!expect("export", r, 200)) return out;
  out.export_bytes = r.raw;
  return out;
}

}  // namespace vplab::testing
