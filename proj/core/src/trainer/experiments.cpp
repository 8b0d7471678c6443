#include "vplab/trainer/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "vplab/common/error.hpp"
#include "vplab/common/rng.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/trainer/finetune.hpp"
#include "vplab/trainer/metrics.hpp"

namespace vplab::trainer {

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"train", c.train},
                     {"peft", c.peft},
                     {"matcher",
                      {{"tau", c.matcher.tau},
                       {"k_max", c.matcher.k_max},
                       {"nms_radius", c.matcher.nms_radius},
                       {"threshold", c.matcher.threshold}}},
                     {"examples_per_family", c.examples_per_family},
                     {"image_size", c.image_size},
                     {"variant_shots", c.variant_shots},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("peft")) j.at("peft").get_to(c.peft);
  if (j.contains("matcher")) {
    const auto& m = j.at("matcher");
    c.matcher.tau = m.value("tau", d.matcher.tau);
    c.matcher.k_max = m.value("k_max", d.matcher.k_max);
    c.matcher.nms_radius = m.value("nms_radius", d.matcher.nms_radius);
    c.matcher.threshold = m.value("threshold", d.matcher.threshold);
  }
  c.examples_per_family = j.value("examples_per_family", d.examples_per_family);
  c.image_size = j.value("image_size", d.image_size);
  c.variant_shots = j.value("variant_shots", d.variant_shots);
  c.seed = j.value("seed", d.seed);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string cell_text(const ReportCell& c) { return c.miou ? fmt::format("{:.2f}", *c.miou) : std::string("failed"); }

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

nlohmann::json cell_json(const ReportCell& c) {
  nlohmann::json j{{"seconds", c.seconds}};
  j["miou"] = c.miou ? nlohmann::json(*c.miou) : nlohmann::json(nullptr);
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

ReportCell tuned_cell(const DecoderWeights& base, const peft::EPEFTConfig& pcfg, const FamilySplit& split,
                      const matcher::ReferenceSet& ref, int k, const ExperimentConfig& cfg, long long* params = nullptr) {
  ReportCell cell;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    peft::EPEFTState state = peft::attach(pcfg, base);
    if (params != nullptr) *params = peft::count_trainable(state).total();
    const std::vector<LabeledExample> shots(split.tune.begin(), split.tune.begin() + k);
    PromptPolicy policy;
    policy.reference = &ref;
    policy.params = cfg.matcher;
    policy.encoder_id = base.encoder_id;
    FinetuneResult tuned = finetune(base, std::move(state), shots, cfg.train, {}, policy);
    cell.miou = pipeline_miou(base, &tuned.state, ref, split.held_out, cfg.matcher);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  cell.seconds = seconds_since(t0);
  return cell;
}

}  // namespace

FamilySplit split_family(const std::string& family, const ExperimentConfig& cfg) {
  std::vector<LabeledExample> all = make_synthetic_dataset({family, cfg.examples_per_family, cfg.image_size}, cfg.seed);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0x5b117));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  FamilySplit split;
  const std::size_t half = all.size() / 2;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < half ? split.tune : split.held_out).push_back(std::move(all[order[i]]));
  }
  return split;
}

double pipeline_miou(const DecoderWeights& base, const peft::EPEFTState* state, const matcher::ReferenceSet& ref,
                     const std::vector<LabeledExample>& held_out, const matcher::MatcherParams& params) {
  std::vector<ImageRGB> images;
  std::vector<BinaryMask> gts;
  for (const auto& ex : held_out) {
    images.push_back(ex.image);
    gts.push_back(ex.gt_mask);
  }
  const matcher::Model model{&base, base.encoder_id};
  std::vector<BinaryMask> preds;
  for (auto& pl : matcher::generate_pseudolabels(model, state, ref, images, params)) preds.push_back(std::move(pl.mask));
  return evaluate_miou(preds, gts);
}

// ---------------------------------------------------------------------------
// k-shot
// ---------------------------------------------------------------------------

const std::vector<int>& published_kshot_shots() {
  static const std::vector<int> shots = {0, 5, 10, 40};
  return shots;
}

const std::vector<PublishedKShotRow>& published_kshot_table() {
  static const std::vector<PublishedKShotRow> rows = {
      {"Kvasir-Inst.", {40.28, 63.44, 63.33, 65.92}},
      {"PaxRay", {36.39, 48.61, 51.19, 50.97}},
      {"DeepCrack", {11.96, 19.27, 21.64, 23.71}},
      {"Corrosion CS", {4.06, 7.26, 8.14, 7.98}},
      {"Average", {23.17, 34.64, 36.07, 37.15}},
  };
  return rows;
}

KShotReport kshot_experiment(const DecoderWeights& base, const std::vector<std::string>& families,
                             const std::vector<int>& shots, const ExperimentConfig& cfg, const LogSink& log) {
  if (shots.empty() || shots.front() != 0) throw SpecError("shot list must start with 0");
  if (!std::is_sorted(shots.begin(), shots.end()) ||
      std::adjacent_find(shots.begin(), shots.end()) != shots.end()) {
    throw SpecError("shot list must be strictly ascending");
  }
  for (const auto& f : families) {
    if (!is_known_family(f)) throw SpecError("unknown dataset family '" + f + "'");
  }

  KShotReport report;
  report.families = families;
  report.shots = shots;
  for (const std::string& family : families) {
    const FamilySplit split = split_family(family, cfg);
    const matcher::ReferenceSet ref =
        matcher::build_reference(encode_image(split.tune.front().image, base.encoder_id), split.tune.front().gt_mask);
    for (int k : shots) {
      ReportCell cell;
      if (k > static_cast<int>(split.tune.size())) {
        cell.error = fmt::format("{} shots requested but only {} tuning examples", k, split.tune.size());
      } else if (k == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        cell.miou = pipeline_miou(base, nullptr, ref, split.held_out, cfg.matcher);
        cell.seconds = seconds_since(t0);
      } else {
        cell = tuned_cell(base, cfg.peft, split, ref, k, cfg);
      }
      if (log) log(fmt::format("{} {}-shot: {} ({:.1f}s){}", family, k, cell_text(cell), cell.seconds,
                               cell.error.empty() ? "" : " " + cell.error));
      report.cells[family][k] = std::move(cell);
    }
  }
  for (int k : shots) {
    std::vector<std::optional<double>> column;
    for (const auto& f : families) column.push_back(report.cells[f][k].miou);
    report.average[k] = mean_of(column);
  }
  return report;
}

std::string KShotReport::to_csv() const {
  std::ostringstream os;
  os << "dataset";
  for (int k : shots) os << "," << k << "-shot";
  os << "\n";
  for (const auto& f : families) {
    os << f;
    for (int k : shots) {
      const ReportCell& c = cells.at(f).at(k);
      os << "," << (c.miou ? fmt::format("{:.2f}", *c.miou) : std::string("failed"));
    }
    os << "\n";
  }
  os << "Average";
  for (int k : shots) {
    const auto& a = average.at(k);
    os << "," << (a ? fmt::format("{:.2f}", *a) : std::string("failed"));
  }
  os << "\n";
  return os.str();
}

nlohmann::json KShotReport::to_json() const {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& f : families) {
    nlohmann::json r = nlohmann::json::object();
    for (int k : shots) r[std::to_string(k)] = cell_json(cells.at(f).at(k));
    rows[f] = r;
  }
  nlohmann::json avg = nlohmann::json::object();
  for (int k : shots) {
    const auto& a = average.at(k);
    avg[std::to_string(k)] = a ? nlohmann::json(*a) : nlohmann::json(nullptr);
  }
  nlohmann::json published = nlohmann::json::array();
  for (const auto& r : published_kshot_table()) published.push_back({{"dataset", r.dataset}, {"miou", r.miou}});
  return {{"families", families},
          {"shots", shots},
          {"rows", rows},
          {"average", avg},
          {"reference", {{"shots", published_kshot_shots()}, {"rows", published}}}};
}

std::string KShotReport::to_text() const {
  std::string out = fmt::format("{:<14}", "Dataset");
  for (int k : shots) out += fmt::format("{:>10}", fmt::format("{}-shot", k));
  out += "\n";
  for (const auto& f : families) {
    out += fmt::format("{:<14}", f);
    for (int k : shots) out += fmt::format("{:>10}", cell_text(cells.at(f).at(k)));
    out += "\n";
  }
  out += fmt::format("{:<14}", "Average");
  for (int k : shots) {
    const auto& a = average.at(k);
    out += fmt::format("{:>10}", a ? fmt::format("{:.2f}", *a) : "failed");
  }
  out += "\n\nPublished reference (real data):\n";
  out += fmt::format("{:<14}", "Dataset");
  for (int k : published_kshot_shots()) out += fmt::format("{:>10}", fmt::format("{}-shot", k));
  out += "\n";
  for (const auto& r : published_kshot_table()) {
    out += fmt::format("{:<14}", r.dataset);
    for (double v : r.miou) out += fmt::format("{:>10.2f}", v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variant comparison
// ---------------------------------------------------------------------------

const std::vector<PublishedVariantRow>& published_variant_table() {
  static const std::vector<PublishedVariantRow> rows = {
      {"SAM", "0", 72.88, 84.49},          {"Adapter", "33.1K", 84.60, 87.17}, {"IA3", "5.6K", 85.63, 88.50},
      {"D-VPT", "12.8K", 86.65, 88.49},    {"LORA", "144.4K", 87.93, 90.17},   {"HQ-SAM", "5.1M", 87.97, 89.95},
      {"E-PEFT", "201.1K", 88.97, 90.50},
  };
  return rows;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"frozen", "adapter", "ia3", "prompts", "lora", "e-peft"};
  return names;
}

peft::EPEFTConfig variant_config(const std::string& variant, const peft::EPEFTConfig& ensemble) {
  peft::EPEFTConfig c = ensemble;
  c.use_lora = variant == "lora" || variant == "e-peft";
  c.use_ia3 = variant == "ia3" || variant == "e-peft";
  c.use_prompts = variant == "prompts" || variant == "e-peft";
  c.use_adapter = variant == "adapter" || variant == "e-peft";
  if (!c.use_lora && !c.use_ia3 && !c.use_prompts && !c.use_adapter) {
    throw SpecError("variant '" + variant + "' has no trainable technique");
  }
  return c;
}

VariantTable compare_peft_variants(const DecoderWeights& base, const std::vector<std::string>& families,
                                   const ExperimentConfig& cfg, const LogSink& log) {
  for (const auto& f : families) {
    if (!is_known_family(f)) throw SpecError("unknown dataset family '" + f + "'");
  }
  VariantTable table;
  table.families = families;
  for (const auto& v : variant_names()) {
    VariantRow row;
    row.variant = v;
    if (v != "frozen") {
      const peft::EPEFTConfig vc = variant_config(v, cfg.peft);
      row.params = peft::count_trainable(peft::attach(vc, base.config)).total();
      row.params_sam_scale = peft::count_trainable(peft::attach(vc, DecoderConfig::sam_scale())).total();
    }
    table.rows.push_back(std::move(row));
  }

  for (const std::string& family : families) {
    const FamilySplit split = split_family(family, cfg);
    const matcher::ReferenceSet ref =
        matcher::build_reference(encode_image(split.tune.front().image, base.encoder_id), split.tune.front().gt_mask);
    const int k = cfg.variant_shots > 0 ? std::min<int>(cfg.variant_shots, static_cast<int>(split.tune.size()))
                                        : static_cast<int>(split.tune.size());
    for (VariantRow& row : table.rows) {
      ReportCell cell;
      if (row.variant == "frozen") {
        const auto t0 = std::chrono::steady_clock::now();
        cell.miou = pipeline_miou(base, nullptr, ref, split.held_out, cfg.matcher);
        cell.seconds = seconds_since(t0);
      } else {
        cell = tuned_cell(base, variant_config(row.variant, cfg.peft), split, ref, k, cfg);
      }
      if (log) log(fmt::format("{} {}: {} ({:.1f}s){}", family, row.variant, cell_text(cell), cell.seconds,
                               cell.error.empty() ? "" : " " + cell.error));
      row.cells[family] = std::move(cell);
    }
  }
  for (VariantRow& row : table.rows) {
    std::vector<std::optional<double>> values;
    for (const auto& f : families) values.push_back(row.cells[f].miou);
    row.mean = mean_of(values);
  }
  return table;
}

const VariantRow& VariantTable::row(const std::string& variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw SpecError("no variant '" + variant + "' in table");
}

std::string VariantTable::to_csv() const {
  std::ostringstream os;
  os << "variant,params,params_sam_scale";
  for (const auto& f : families) os << "," << f;
  os << ",mean\n";
  for (const auto& r : rows) {
    os << r.variant << "," << r.params << "," << r.params_sam_scale;
    for (const auto& f : families) os << "," << cell_text(r.cells.at(f));
    os << "," << (r.mean ? fmt::format("{:.2f}", *r.mean) : std::string("failed")) << "\n";
  }
  return os.str();
}

nlohmann::json VariantTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cells_json = nlohmann::json::object();
    for (const auto& f : families) cells_json[f] = cell_json(r.cells.at(f));
    rows_json.push_back({{"variant", r.variant},
                         {"params", r.params},
                         {"params_sam_scale", r.params_sam_scale},
                         {"cells", cells_json},
                         {"mean", r.mean ? nlohmann::json(*r.mean) : nlohmann::json(nullptr)}});
  }
  nlohmann::json published = nlohmann::json::array();
  for (const auto& p : published_variant_table()) {
    published.push_back({{"model", p.model}, {"params", p.params}, {"kvasir_seg", p.kvasir_seg}, {"hq44k", p.hq44k}});
  }
  return {{"families", families}, {"rows", rows_json}, {"reference", published}};
}

std::string VariantTable::to_text() const {
  std::string out = fmt::format("{:<10}{:>10}{:>12}", "Variant", "Params", "Params@SAM");
  for (const auto& f : families) out += fmt::format("{:>10}", f);
  out += fmt::format("{:>10}\n", "Mean");
  for (const auto& r : rows) {
    out += fmt::format("{:<10}{:>10}{:>12}", r.variant, r.params, r.params_sam_scale);
    for (const auto& f : families) out += fmt::format("{:>10}", cell_text(r.cells.at(f)));
    out += fmt::format("{:>10}\n", r.mean ? fmt::format("{:.2f}", *r.mean) : "failed");
  }
  out += "\nPublished reference (Kvasir-Seg / HQ-44k):\n";
  out += fmt::format("{:<10}{:>10}{:>12}{:>10}\n", "Model", "Params", "Kvasir-Seg", "HQ-44k");
  for (const auto& p : published_variant_table()) {
    out += fmt::format("{:<10}{:>10}{:>12.2f}{:>10.2f}\n", p.model, p.params, p.kvasir_seg, p.hq44k);
  }
  return out;
}

}  // namespace vplab::trainer
