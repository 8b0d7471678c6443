#include <gtest/gtest.h>

#include "service_flow.hpp"
#include "support.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/service/store.hpp"

using namespace vplab;
using namespace vplab::service;
using vplab::testing::ApiClient;
using vplab::testing::LiveServer;
using vplab::testing::TempDir;

namespace {

std::shared_ptr<const DecoderWeights> fixture() {
  static const auto w = std::make_shared<const DecoderWeights>(vplab::testing::fixture_weights());
  return w;
}

ServiceConfig config_for(const TempDir& dir, bool start = true) {
  ServiceConfig cfg;
  cfg.data_dir = dir.path();
  cfg.start_workers = start;
  cfg.train.epochs = 2;
  return cfg;
}

std::vector<Upload> uploads(const std::vector<trainer::LabeledExample>& ds) {
  std::vector<Upload> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back({"im" + std::to_string(i) + ".png", "image/png", encode_image_png(ds[i].image)});
  }
  return out;
}

nlohmann::json points_for(const BinaryMask& gt) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : trainer::gt_points(gt, 8, {})) pts.push_back({{"x", p.x}, {"y", p.y}, {"polarity", "positive"}});
  return pts;
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    return e.status();
  }
  return 200;
}

}  // namespace

TEST(Service, ErrorContract) {
  TempDir dir;
  Service svc(config_for(dir), fixture());
  EXPECT_EQ(status_of([&] { svc.create_project(nlohmann::json::object()); }), 400);
  EXPECT_EQ(status_of([&] { svc.get_project("missing"); }), 404);
  const std::string pid = svc.create_project({{"name", "x"}}).at("id");
  EXPECT_EQ(status_of([&] { svc.add_images(pid, {{"a.gif", "image/gif", "GIF89a...."}}); }), 415);
  EXPECT_EQ(status_of([&] { svc.submit_finetune(pid, nlohmann::json::object()); }), 409);
  EXPECT_EQ(status_of([&] { svc.export_checkpoint(pid); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_match(pid); }), 409);
  EXPECT_EQ(status_of([&] { svc.set_reference(pid, {{"image_id", "img-404"}, {"points", nlohmann::json::array()}}); }), 404);

  const auto ds = trainer::make_synthetic_dataset({"blobs", 1, 64}, 1);
  const std::string img = svc.add_images(pid, uploads(ds)).at("image_ids")[0];
  EXPECT_EQ(status_of([&] { svc.set_reference(pid, {{"image_id", img}, {"points", {{{"x", 500}, {"y", 1}}}}}); }), 400);
  EXPECT_EQ(status_of([&] { svc.validate_reference(pid, nlohmann::json::object()); }), 409);
  const nlohmann::json bad_mask{{"status", "refined"}, {"mask", {{"rle", "3x3:9"}}}};
  EXPECT_EQ(status_of([&] { svc.put_label(pid, img, bad_mask); }), 400);
}

TEST(Service, MatchProducesPseudolabels) {
  TempDir dir;
  Service svc(config_for(dir), fixture());
  const std::string pid = svc.create_project({{"name", "m"}}).at("id");
  const auto ds = trainer::make_synthetic_dataset({"shapes", 3, 64}, 4);
  const auto ids = svc.add_images(pid, uploads(ds)).at("image_ids");
  const auto ref = svc.set_reference(pid, {{"image_id", ids[0]}, {"points", points_for(ds[0].gt_mask)}});
  EXPECT_EQ(ref.at("mask").at("width"), 64);
  EXPECT_EQ(svc.validate_reference(pid, nlohmann::json::object()).at("validated"), true);
  // Validating again without edits changes nothing.
  const auto before = svc.get_project(pid);
  svc.validate_reference(pid, nlohmann::json::object());
  EXPECT_EQ(svc.get_project(pid), before);

  const std::string job = svc.submit_match(pid).at("job_id");
  const std::string state = svc.get_job(job).at("state");
  EXPECT_TRUE(state == "queued" || state == "running");
  ASSERT_TRUE(svc.jobs().wait_idle(std::chrono::seconds(120)));
  const auto done = svc.get_job(job);
  EXPECT_EQ(done.at("state"), "done");
  EXPECT_EQ(done.at("result").at("pseudolabels"), 2);
  int predicted = 0;
  for (const auto& l : svc.list_labels(pid)) predicted += l.at("status") == "predicted";
  EXPECT_EQ(predicted, 2);
}

TEST(Service, TwoFinetunesSerialize) {
  TempDir dir;
  Service svc(config_for(dir, false), fixture());
  const std::string pid = svc.create_project({{"name", "f"}}).at("id");
  const auto ds = trainer::make_synthetic_dataset({"cracks", 2, 64}, 4);
  const auto ids = svc.add_images(pid, uploads(ds)).at("image_ids");
  svc.set_reference(pid, {{"image_id", ids[0]}, {"points", points_for(ds[0].gt_mask)}});
  svc.validate_reference(pid, {{"mask_edits", {{"rle", encode_mask_rle(ds[0].gt_mask)}}}});
  const std::string a = svc.submit_finetune(pid, {{"train_config", {{"epochs", 1}}}}).at("job_id");
  const std::string b = svc.submit_finetune(pid, {{"k", 1}}).at("job_id");
  svc.jobs().start();
  for (int i = 0; i < 2000 && svc.get_job(a).at("state") != "done"; ++i) {
    EXPECT_EQ(svc.get_job(b).at("state"), "queued");
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ASSERT_TRUE(svc.jobs().wait_idle(std::chrono::seconds(120)));
  EXPECT_EQ(svc.get_job(a).at("state"), "done");
  EXPECT_EQ(svc.get_job(b).at("state"), "done");
  const std::string bytes = svc.export_checkpoint(pid);
  EXPECT_NO_THROW(peft::load_delta(bytes, DecoderConfig::tiny()));
}

TEST(Service, QueuedJobsSurviveRestart) {
  TempDir dir;
  std::string pid;
  std::string job;
  {
    Service svc(config_for(dir, false), fixture());
    pid = svc.create_project({{"name", "r"}}).at("id");
    const auto ds = trainer::make_synthetic_dataset({"patches", 2, 64}, 4);
    const auto ids = svc.add_images(pid, uploads(ds)).at("image_ids");
    svc.set_reference(pid, {{"image_id", ids[0]}, {"points", points_for(ds[0].gt_mask)}});
    svc.validate_reference(pid, {{"mask_edits", {{"rle", encode_mask_rle(ds[0].gt_mask)}}}});
    job = svc.submit_match(pid).at("job_id");
    EXPECT_EQ(svc.get_job(job).at("state"), "queued");
  }
  Service again(config_for(dir), fixture());
  ASSERT_TRUE(again.jobs().wait_idle(std::chrono::seconds(120)));
  EXPECT_EQ(again.get_job(job).at("state"), "done");
  EXPECT_EQ(again.get_project(pid).at("name"), "r");
}

TEST(Http, FullFlow) {
  TempDir dir;
  LiveServer server(config_for(dir), fixture());
  ApiClient api(server.port());
  const auto health = api.get("/health");
  EXPECT_EQ(health.status, 200);
  const auto flow = vplab::testing::run_service_flow(api, 2);
  ASSERT_TRUE(flow.failure.empty()) << flow.failure;
  for (const auto& s : flow.job_states) EXPECT_EQ(s, "done");
  EXPECT_EQ(flow.job_states.size(), 3u);
  const auto state = peft::load_delta(flow.export_bytes, DecoderConfig::tiny());
  EXPECT_EQ(peft::save_delta(state), flow.export_bytes);

  const auto missing = api.get("/projects/nope");
  EXPECT_EQ(missing.status, 404);
  EXPECT_TRUE(missing.body.contains("code"));
  EXPECT_TRUE(missing.body.contains("message"));
  EXPECT_EQ(api.post("/projects", nlohmann::json("not an object")).status, 400);
  EXPECT_EQ(api.get("/projects").body.size(), 1u);
}
