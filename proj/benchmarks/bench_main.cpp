#include <benchmark/benchmark.h>

#include "vplab/matcher/matcher.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/segcore/prompt_encoder.hpp"
#include "vplab/trainer/finetune.hpp"
#include "vplab/trainer/synthetic.hpp"

using namespace vplab;

namespace {

const std::vector<trainer::LabeledExample>& dataset() {
  static const auto ds = trainer::make_synthetic_dataset({"blobs", 8, 64}, 3);
  return ds;
}

const DecoderWeights& base() {
  static const auto w = DecoderWeights::initialize(DecoderConfig::tiny(), 11);
  return w;
}

void BM_Encode(benchmark::State& st) {
  const auto& img = dataset()[0].image;
  for (auto _ : st) benchmark::DoNotOptimize(encode_image(img));
}
BENCHMARK(BM_Encode);

void BM_Decode(benchmark::State& st) {
  const auto grid = encode_image(dataset()[0].image);
  const std::vector<PointPrompt> pts{{20, 24, Polarity::positive}, {40, 40, Polarity::positive}};
  const auto tokens = encode_points(pts, {64, 64}, base());
  const auto state = peft::attach(peft::EPEFTConfig::ensemble(), base());
  const bool with_peft = st.range(0) != 0;
  for (auto _ : st) benchmark::DoNotOptimize(decode(grid, tokens, base(), with_peft ? &state : nullptr));
}
BENCHMARK(BM_Decode)->Arg(0)->Arg(1)->ArgName("peft");

void BM_SimilarityMap(benchmark::State& st) {
  const auto& ex = dataset()[0];
  const auto ref = matcher::build_reference(encode_image(ex.image), ex.gt_mask);
  const auto target = encode_image(dataset()[1].image);
  for (auto _ : st) benchmark::DoNotOptimize(matcher::similarity_map(ref, target));
}
BENCHMARK(BM_SimilarityMap);

void BM_FinetuneEpoch(benchmark::State& st) {
  trainer::TrainConfig cfg;
  cfg.epochs = 1;
  const auto fresh = peft::attach(peft::EPEFTConfig::ensemble(), base());
  for (auto _ : st) benchmark::DoNotOptimize(trainer::finetune(base(), fresh, dataset(), cfg));
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(dataset().size()));
}
BENCHMARK(BM_FinetuneEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
