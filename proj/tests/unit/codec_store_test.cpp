#include <fstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vplab/common/error.hpp"
#include "vplab/service/codec.hpp"
#include "vplab/service/store.hpp"

using namespace vplab;
using namespace vplab::service;
using vplab::testing::TempDir;

TEST(Codec, Base64) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  for (const std::string& s : std::vector<std::string>{"", "a", "ab", "abc", std::string("\0\xff\x10", 3)}) EXPECT_EQ(base64_decode(base64_encode(s)), s);
  EXPECT_THROW(base64_decode("@@@@"), std::invalid_argument);
}

TEST(Codec, MaskPngRoundTrip) {
  Rng rng(3);
  const auto m = vplab::testing::random_mask(37, 21, rng);
  const auto back = decode_mask_png(encode_mask_png(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(sniff_format(encode_mask_png(m)), ImageFormat::png);
  EXPECT_THROW(decode_mask_png("not a png"), std::invalid_argument);
}

TEST(Codec, MaskRle) {
  BinaryMask m(2, 3);
  m.set(0, 1, true);
  m.set(0, 2, true);
  m.set(1, 0, true);
  EXPECT_EQ(encode_mask_rle(m), "2x3:1,3,2");
  EXPECT_EQ(decode_mask_rle("2x3:1,3,2"), m);
  EXPECT_EQ(decode_mask_rle(encode_mask_rle(BinaryMask(4, 4, true))), BinaryMask(4, 4, true));
  EXPECT_THROW(decode_mask_rle("2x3:1,1"), std::invalid_argument);
  EXPECT_THROW(decode_mask_rle("garbage"), std::invalid_argument);
}

TEST(Codec, ImageRoundTrip) {
  const auto img = vplab::testing::random_image(32, 5);
  const auto back = decode_image(encode_image_png(img));
  ASSERT_EQ(back.size(), img.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 255 + 1e-6);
  EXPECT_EQ(sniff_format("\xff\xd8\xff\xe0"), ImageFormat::jpeg);
  EXPECT_EQ(sniff_format("GIF89a"), ImageFormat::unknown);
  EXPECT_THROW(decode_image("GIF89a"), std::invalid_argument);
  EXPECT_THROW(decode_image("\x89PNG\r\n\x1a\n broken"), InvalidImage);
}

namespace {

Project sample_project() {
  Project p;
  p.id = "p1";
  p.name = "polyps";
  p.class_label = "polyp";
  p.images.push_back({"img-1", "a.png", 120, 80});
  p.images.push_back({"img-2", "b.jpg", 64, 64});
  p.seq = 7;
  ReferenceInfo ref;
  ref.image_id = "img-1";
  ref.points = {{10, 12, Polarity::positive}, {3, 4, Polarity::negative}};
  ref.validated = true;
  ref.confidence = 0.75;
  ref.mask = BinaryMask(64, 64);
  ref.mask.set(5, 5, true);
  p.reference = ref;
  MaskRecord rec;
  rec.mask = BinaryMask(64, 64, true);
  rec.prediction = BinaryMask(64, 64);
  rec.status = matcher::LabelStatus::refined;
  rec.confidence = 0.5;
  rec.history = {{{"seq", 3}, {"status", "refined"}}};
  rec.updated_seq = 3;
  p.labels["img-2"] = rec;
  p.job_ids = {"job-a"};
  p.checkpoints = {"ft-job-a.epef"};
  p.metrics_history = {{"job-a", 42.5, 1}};
  return p;
}

}  // namespace

TEST(Store, RoundTripIsByteIdentical) {
  TempDir dir;
  ProjectStore store(dir.path());
  const Project p = sample_project();
  store.save(p);
  const std::string first = read_file(store.project_dir("p1") / "project.json");
  const Project loaded = store.load("p1");
  EXPECT_EQ(loaded.name, "polyps");
  ASSERT_TRUE(loaded.reference.has_value());
  EXPECT_EQ(loaded.reference->mask, p.reference->mask);
  EXPECT_EQ(loaded.reference->points, p.reference->points);
  EXPECT_EQ(loaded.labels.at("img-2").mask, p.labels.at("img-2").mask);
  EXPECT_EQ(loaded.labels.at("img-2").prediction, p.labels.at("img-2").prediction);
  store.save(loaded);
  EXPECT_EQ(read_file(store.project_dir("p1") / "project.json"), first);
  EXPECT_EQ(manifest(loaded), manifest(p));
}

TEST(Store, EmptyProjectRoundTrip) {
  TempDir dir;
  ProjectStore store(dir.path());
  Project p;
  p.id = "empty";
  p.name = "e";
  store.save(p);
  const Project back = store.load("empty");
  EXPECT_EQ(manifest(back), manifest(p));
  EXPECT_EQ(store.list_ids(), std::vector<std::string>{"empty"});
  EXPECT_TRUE(store.exists("empty"));
  EXPECT_FALSE(store.exists("other"));
}

TEST(Store, CorruptMaskFlagsRecord) {
  TempDir dir;
  ProjectStore store(dir.path());
  store.save(sample_project());
  write_file_atomic(store.project_dir("p1") / "masks" / "img-2.png", "corrupted bytes");
  const Project p = store.load("p1");
  EXPECT_TRUE(p.labels.at("img-2").failed);
  EXPECT_FALSE(p.labels.at("img-2").error.empty());
  EXPECT_EQ(p.images.size(), 2u);
}

TEST(Store, SchemaMismatchNeedsMigration) {
  TempDir dir;
  ProjectStore store(dir.path());
  store.save(sample_project());
  auto j = nlohmann::json::parse(read_file(store.project_dir("p1") / "project.json"));
  j["schema_version"] = kSchemaVersion + 1;
  write_file_atomic(store.project_dir("p1") / "project.json", j.dump());
  EXPECT_THROW(store.load("p1"), MigrationRequired);
}

TEST(Store, BlobsAndJobs) {
  TempDir dir;
  ProjectStore store(dir.path());
  store.save(sample_project());
  store.write_image("p1", "img-1", "png-bytes");
  EXPECT_EQ(store.read_image("p1", "img-1"), "png-bytes");
  store.write_checkpoint("p1", "ft.epef", "EPEF1...");
  EXPECT_EQ(store.read_checkpoint("p1", "ft.epef"), "EPEF1...");
  store.write_job("p1", "job-1", {{"id", "job-1"}, {"state", "queued"}});
  const auto jobs = store.read_jobs();
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0]["id"], "job-1");
}
