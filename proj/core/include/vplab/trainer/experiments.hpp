#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/matcher/matcher.hpp"
#include "vplab/peft/config.hpp"
#include "vplab/segcore/weights.hpp"
#include "vplab/trainer/loss.hpp"
#include "vplab/trainer/synthetic.hpp"

namespace vplab::trainer {

struct ExperimentConfig {
  TrainConfig train;
  peft::EPEFTConfig peft = peft::EPEFTConfig::ensemble();
  matcher::MatcherParams matcher;
  int examples_per_family = 80;  ///< split 50/50 into tuning and held-out halves
  int image_size = 64;
  /// Tuning examples per variant in compare_peft_variants; 0 uses the whole tuning half.
  int variant_shots = 0;
  std::uint64_t seed = 7;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

using LogSink = std::function<void(const std::string&)>;

/// One family's examples split into a tuning half and a held-out half. The
/// reference (validated) example is the first of the tuning half.
struct FamilySplit {
  std::vector<LabeledExample> tune;
  std::vector<LabeledExample> held_out;
};
FamilySplit split_family(const std::string& family, const ExperimentConfig& cfg);

/// Runs the visual-prompting pipeline (reference -> points -> decode) over
/// the held-out half and returns mIoU in percent.
double pipeline_miou(const DecoderWeights& base, const peft::EPEFTState* state, const matcher::ReferenceSet& ref,
                     const std::vector<LabeledExample>& held_out, const matcher::MatcherParams& params);

struct ReportCell {
  std::optional<double> miou;
  std::string error;
  double seconds = 0.0;
};

struct KShotReport {
  std::vector<std::string> families;
  std::vector<int> shots;
  std::map<std::string, std::map<int, ReportCell>> cells;
  std::map<int, std::optional<double>> average;  ///< over the families whose cell succeeded

  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Aligned table followed by the published reference table.
  [[nodiscard]] std::string to_text() const;
};

/// Published k-shot results on real data, for side-by-side printing.
struct PublishedKShotRow {
  std::string dataset;
  std::vector<double> miou;  ///< at 0, 5, 10, 40 shots
};
const std::vector<int>& published_kshot_shots();
const std::vector<PublishedKShotRow>& published_kshot_table();

/// For each family: 0-shot pipeline mIoU with the frozen base, then for each
/// k > 0 a fresh EPEFT state tuned on the first k tuning examples (ground
/// truth stands in for refined labels) and re-evaluated. Training failures
/// mark their cell and the run continues. Throws SpecError if shots is not
/// ascending or lacks 0.
KShotReport kshot_experiment(const DecoderWeights& base, const std::vector<std::string>& families,
                             const std::vector<int>& shots, const ExperimentConfig& cfg, const LogSink& log = {});

struct VariantRow {
  std::string variant;
  long long params = 0;            ///< trainable count on the run's decoder
  long long params_sam_scale = 0;  ///< same variant at SAM-scale widths
  std::map<std::string, ReportCell> cells;
  std::optional<double> mean;
};

struct VariantTable {
  std::vector<std::string> families;
  std::vector<VariantRow> rows;

  [[nodiscard]] const VariantRow& row(const std::string& variant) const;
  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string to_text() const;
};

struct PublishedVariantRow {
  std::string model;
  std::string params;
  double kvasir_seg;
  double hq44k;
};
const std::vector<PublishedVariantRow>& published_variant_table();

/// Variant names in report order.
const std::vector<std::string>& variant_names();
/// EPEFT config of a named variant (not defined for "frozen").
peft::EPEFTConfig variant_config(const std::string& variant, const peft::EPEFTConfig& ensemble);

/// Trains {frozen, adapter, IA3, prompts, LoRA, E-PEFT} under one config and
/// seed and evaluates each through the pipeline.
VariantTable compare_peft_variants(const DecoderWeights& base, const std::vector<std::string>& families,
                                   const ExperimentConfig& cfg, const LogSink& log = {});

}  // namespace vplab::trainer
