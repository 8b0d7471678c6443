#include <gtest/gtest.h>

#include "support.hpp"
#include "vplab/common/error.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/trainer/experiments.hpp"

using namespace vplab;
using namespace vplab::trainer;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.examples_per_family = 8;
  cfg.train.epochs = 2;
  return cfg;
}

}  // namespace

TEST(Experiments, SplitIsDeterministicHalves) {
  const auto cfg = small_config();
  const auto a = split_family("ribs", cfg);
  const auto b = split_family("ribs", cfg);
  EXPECT_EQ(a.tune.size(), 4u);
  EXPECT_EQ(a.held_out.size(), 4u);
  EXPECT_EQ(a.tune[0].gt_mask, b.tune[0].gt_mask);
}

TEST(Experiments, ShotListValidation) {
  const auto& w = vplab::testing::fixture_weights();
  EXPECT_THROW(kshot_experiment(w, {"blobs"}, {1, 2}, small_config()), SpecError);
  EXPECT_THROW(kshot_experiment(w, {"blobs"}, {0, 3, 3}, small_config()), SpecError);
  EXPECT_THROW(kshot_experiment(w, {"unknown"}, {0}, small_config()), SpecError);
}

TEST(Experiments, KShotReportShape) {
  const auto& w = vplab::testing::fixture_weights();
  const auto r = kshot_experiment(w, {"blobs", "cracks"}, {0, 2}, small_config());
  ASSERT_EQ(r.families.size(), 2u);
  for (const auto& f : r.families) {
    ASSERT_EQ(r.cells.at(f).size(), 2u);
    for (const auto& [k, cell] : r.cells.at(f)) {
      ASSERT_TRUE(cell.miou.has_value()) << cell.error;
      EXPECT_GE(*cell.miou, 0.0);
      EXPECT_LE(*cell.miou, 100.0);
    }
  }
  ASSERT_TRUE(r.average.at(0).has_value());
  EXPECT_NEAR(*r.average.at(0), (*r.cells.at("blobs").at(0).miou + *r.cells.at("cracks").at(0).miou) / 2, 1e-9);

  const std::string csv = r.to_csv();
  EXPECT_NE(csv.find("Average"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // header, 2 families, average
  const auto j = r.to_json();
  EXPECT_TRUE(j.contains("rows"));
  EXPECT_TRUE(j.contains("reference"));
  EXPECT_NE(r.to_text().find("Kvasir-Inst."), std::string::npos);
}

TEST(Experiments, PublishedTables) {
  const auto& k = published_kshot_table();
  ASSERT_EQ(k.size(), 5u);
  EXPECT_EQ(k[0].dataset, "Kvasir-Inst.");
  EXPECT_EQ(k[0].miou, (std::vector<double>{40.28, 63.44, 63.33, 65.92}));
  EXPECT_EQ(k.back().miou, (std::vector<double>{23.17, 34.64, 36.07, 37.15}));
  EXPECT_EQ(published_kshot_shots(), (std::vector<int>{0, 5, 10, 40}));

  const auto& v = published_variant_table();
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.back().params, "201.1K");
  EXPECT_DOUBLE_EQ(v.back().kvasir_seg, 88.97);
  EXPECT_DOUBLE_EQ(v.back().hq44k, 90.50);
}

TEST(Experiments, VariantConfigs) {
  const auto ens = peft::EPEFTConfig::ensemble();
  EXPECT_EQ(variant_names().front(), "frozen");
  EXPECT_EQ(variant_names().back(), "e-peft");
  EXPECT_EQ(variant_config("e-peft", ens), ens);
  const auto lora = variant_config("lora", ens);
  EXPECT_TRUE(lora.use_lora);
  EXPECT_FALSE(lora.use_ia3 || lora.use_prompts || lora.use_adapter);
  EXPECT_THROW(variant_config("frozen", ens), SpecError);
}

TEST(Experiments, VariantTableAccounting) {
  const auto& w = vplab::testing::fixture_weights();
  auto cfg = small_config();
  cfg.train.epochs = 1;
  const auto t = compare_peft_variants(w, {"patches"}, cfg);
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.row("frozen").params, 0);
  long long parts = 0;
  for (const std::string v : {"adapter", "ia3", "prompts", "lora"}) parts += t.row(v).params;
  const auto cond = peft::count_trainable(peft::attach(peft::EPEFTConfig::ensemble(), w)).cond_mlp;
  EXPECT_EQ(t.row("e-peft").params, parts + cond);
  EXPECT_NE(t.to_text().find("201.1K"), std::string::npos);
  EXPECT_NE(t.to_csv().find("e-peft"), std::string::npos);
  EXPECT_THROW(t.row("hq-sam"), SpecError);
}

TEST(Experiments, ConfigJsonRoundTrip) {
  auto cfg = small_config();
  cfg.variant_shots = 5;
  cfg.matcher.tau = 0.4;
  const auto back = nlohmann::json(cfg).get<ExperimentConfig>();
  EXPECT_EQ(back.examples_per_family, 8);
  EXPECT_EQ(back.variant_shots, 5);
  EXPECT_DOUBLE_EQ(back.matcher.tau, 0.4);
  EXPECT_EQ(back.train.epochs, 2);
}
