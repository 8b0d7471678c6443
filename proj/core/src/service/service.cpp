#include "vplab/service/service.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vplab/common/error.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/segcore/prompt_encoder.hpp"
#include "vplab/service/codec.hpp"
#include "vplab/trainer/finetune.hpp"
#include "vplab/trainer/metrics.hpp"

namespace vplab::service {

using nlohmann::json;
using matcher::LabelStatus;

namespace {

[[noreturn]] void not_found(const std::string& what) { throw ApiError(404, "not_found", what); }
[[noreturn]] void conflict(const std::string& code, const std::string& what) { throw ApiError(409, code, what); }
[[noreturn]] void bad_request(const std::string& code, const std::string& what) { throw ApiError(400, code, what); }

std::string random_project_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  return fmt::format("p-{:08x}", gen() & 0xffffffffull);
}

std::vector<PointPrompt> parse_points(const json& body) {
  if (!body.contains("points") || !body.at("points").is_array()) bad_request("invalid_prompt", "points must be an array");
  std::vector<PointPrompt> pts;
  for (const auto& p : body.at("points")) {
    if (!p.is_object() || !p.contains("x") || !p.contains("y") || !p.at("x").is_number() || !p.at("y").is_number()) {
      bad_request("invalid_prompt", "each point needs numeric x and y");
    }
    const std::string pol = p.value("polarity", std::string("positive"));
    if (pol != "positive" && pol != "negative") bad_request("invalid_prompt", "polarity must be positive or negative");
    pts.push_back({p.at("x").get<double>(), p.at("y").get<double>(),
                   pol == "positive" ? Polarity::positive : Polarity::negative});
  }
  return pts;
}

json points_json(const std::vector<PointPrompt>& pts) {
  json a = json::array();
  for (const auto& p : pts) {
    a.push_back({{"x", p.x}, {"y", p.y}, {"polarity", p.polarity == Polarity::positive ? "positive" : "negative"}});
  }
  return a;
}

/// mIoU of the latest predictions against validated masks.
std::pair<std::optional<double>, int> validated_miou(const Project& p) {
  std::vector<BinaryMask> preds;
  std::vector<BinaryMask> gts;
  for (const auto& [id, rec] : p.labels) {
    if (rec.failed || rec.status != LabelStatus::validated || !rec.prediction) continue;
    preds.push_back(*rec.prediction);
    gts.push_back(rec.mask);
  }
  if (preds.empty()) return {std::nullopt, 0};
  return {trainer::evaluate_miou(preds, gts), static_cast<int>(preds.size())};
}

}  // namespace

json mask_payload(const BinaryMask& mask) {
  return {{"width", mask.width},
          {"height", mask.height},
          {"png_base64", base64_encode(encode_mask_png(mask))},
          {"rle", encode_mask_rle(mask)}};
}

Service::Service(ServiceConfig cfg, std::shared_ptr<const DecoderWeights> base)
    : cfg_(std::move(cfg)), base_(std::move(base)), store_(cfg_.data_dir) {
  if (!base_) throw std::invalid_argument("service needs base decoder weights");
  if (cfg_.work_size < 32 || cfg_.work_size % 8 != 0) throw ConfigError("work_size must be a multiple of 8, >= 32");
  cfg_.peft.validate();
  cfg_.train.validate();
  jobs_ = std::make_unique<JobQueue>([this](const JobRecord& j, const JobQueue::Progress& p) { return run_job(j, p); },
                                     [this](const JobRecord& j) { store_.write_job(j.project_id, j.id, to_json(j)); },
                                     cfg_.workers);
  load_all();
  if (cfg_.start_workers) jobs_->start();
}

Service::~Service() { jobs_->stop(); }

void Service::load_all() {
  for (const std::string& id : store_.list_ids()) {
    auto h = std::make_shared<Handle>();
    try {
      h->project = store_.load(id);
    } catch (const MigrationRequired& e) {
      spdlog::warn("skipping project {}: {}", id, e.what());
      continue;
    } catch (const std::exception& e) {
      spdlog::error("cannot load project {}: {}", id, e.what());
      continue;
    }
    for (const auto& [image_id, rec] : h->project.labels) {
      if (rec.failed) spdlog::warn("project {} label {} failed to load: {}", id, image_id, rec.error);
    }
    if (!h->project.checkpoints.empty()) {
      try {
        h->peft = std::make_shared<const peft::EPEFTState>(
            peft::load_delta(store_.read_checkpoint(id, h->project.checkpoints.back()), base_->config));
      } catch (const std::exception& e) {
        spdlog::warn("project {}: latest checkpoint unusable: {}", id, e.what());
      }
    }
    projects_[id] = std::move(h);
  }
  std::vector<JobRecord> jobs;
  for (const json& j : store_.read_jobs()) {
    try {
      JobRecord r = job_from_json(j);
      if (projects_.contains(r.project_id)) jobs.push_back(std::move(r));
    } catch (const std::exception& e) {
      spdlog::warn("skipping unreadable job record: {}", e.what());
    }
  }
  jobs_->restore(jobs);
}

std::shared_ptr<Service::Handle> Service::handle(const std::string& pid) const {
  std::lock_guard lock(projects_mu_);
  auto it = projects_.find(pid);
  if (it == projects_.end()) not_found("unknown project '" + pid + "'");
  return it->second;
}

json Service::project_json(const Handle& h) const {
  const Project& p = h.project;
  json j = manifest(p);
  j.erase("seq");
  j.erase("labels");
  j.erase("schema_version");
  if (p.reference) j["reference"]["mask"] = mask_payload(p.reference->mask);
  json counts = {{"predicted", 0}, {"refined", 0}, {"validated", 0}, {"failed", 0}};
  for (const auto& [id, rec] : p.labels) {
    const std::string key = rec.failed ? "failed" : matcher::to_string(rec.status);
    counts[key] = counts[key].get<int>() + 1;
  }
  j["label_counts"] = counts;
  j["has_model"] = h.peft != nullptr;
  return j;
}

json Service::label_json(const std::string& image_id, const MaskRecord& rec) const {
  json j{{"image_id", image_id},
         {"status", matcher::to_string(rec.status)},
         {"confidence", rec.confidence},
         {"history", rec.history},
         {"failed", rec.failed}};
  if (rec.failed) {
    j["error"] = rec.error;
  } else {
    j["mask"] = mask_payload(rec.mask);
  }
  j["prediction"] = rec.prediction ? mask_payload(*rec.prediction) : json(nullptr);
  return j;
}

json Service::create_project(const json& body) {
  if (!body.is_object() || !body.contains("name") || !body.at("name").is_string() ||
      body.at("name").get<std::string>().empty()) {
    bad_request("invalid_body", "name is required");
  }
  if (body.contains("class_label") && !body.at("class_label").is_string()) {
    bad_request("invalid_body", "class_label must be a string");
  }
  auto h = std::make_shared<Handle>();
  h->project.name = body.at("name").get<std::string>();
  h->project.class_label = body.value("class_label", std::string());
  std::lock_guard lock(projects_mu_);
  do {
    h->project.id = random_project_id();
  } while (projects_.contains(h->project.id) || store_.exists(h->project.id));
  store_.save(h->project);
  projects_[h->project.id] = h;
  return project_json(*h);
}

json Service::list_projects() const {
  std::vector<std::shared_ptr<Handle>> handles;
  {
    std::lock_guard lock(projects_mu_);
    for (const auto& [id, h] : projects_) handles.push_back(h);
  }
  json out = json::array();
  for (const auto& h : handles) {
    std::lock_guard lock(h->mu);
    out.push_back(project_json(*h));
  }
  return out;
}

json Service::get_project(const std::string& pid) const {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  return project_json(*h);
}

json Service::add_images(const std::string& pid, const std::vector<Upload>& uploads) {
  auto h = handle(pid);
  if (uploads.empty()) bad_request("invalid_body", "no image files in request");
  struct Decoded {
    ImageRGB work;
    std::string png;
    Upload const* src;
    int w;
    int hgt;
  };
  std::vector<Decoded> decoded;
  for (const Upload& u : uploads) {
    if (sniff_format(u.bytes) == ImageFormat::unknown) {
      throw ApiError(415, "unsupported_media_type", "'" + u.filename + "' is not a PNG or JPEG image");
    }
    ImageRGB img;
    try {
      img = decode_image(u.bytes);
    } catch (const std::exception& e) {
      bad_request("invalid_image", "'" + u.filename + "': " + e.what());
    }
    const ImageRGB work = resize_image(img, cfg_.work_size, cfg_.work_size);
    decoded.push_back({work, encode_image_png(work), &u, img.width, img.height});
  }
  std::lock_guard lock(h->mu);
  json ids = json::array();
  for (const Decoded& d : decoded) {
    const std::string id = fmt::format("img-{}", h->project.tick());
    store_.write_image(pid, id, d.png);
    h->project.images.push_back({id, d.src->filename, d.w, d.hgt});
    ids.push_back(id);
  }
  store_.save(h->project);
  return {{"image_ids", ids}};
}

std::string Service::image_png(const std::string& pid, const std::string& image_id) const {
  auto h = handle(pid);
  {
    std::lock_guard lock(h->mu);
    if (h->project.find_image(image_id) == nullptr) not_found("unknown image '" + image_id + "'");
  }
  return store_.read_image(pid, image_id);
}

ImageRGB Service::load_work_image(const std::string& pid, const std::string& image_id) const {
  return decode_image(store_.read_image(pid, image_id), image_id);
}

BinaryMask Service::mask_from_payload(const json& payload, int height, int width) const {
  if (!payload.is_object()) bad_request("invalid_mask", "mask must be an object");
  BinaryMask m;
  try {
    if (payload.contains("png_base64")) {
      m = decode_mask_png(base64_decode(payload.at("png_base64").get<std::string>()));
    } else if (payload.contains("rle")) {
      m = decode_mask_rle(payload.at("rle").get<std::string>());
    } else {
      bad_request("invalid_mask", "mask needs png_base64 or rle");
    }
  } catch (const ApiError&) {
    throw;
  } catch (const std::exception& e) {
    bad_request("invalid_mask", e.what());
  }
  if (m.height != height || m.width != width) {
    bad_request("invalid_mask", fmt::format("mask is {}x{}, image is {}x{}", m.height, m.width, height, width));
  }
  return m;
}

json Service::set_reference(const std::string& pid, const json& body) {
  auto h = handle(pid);
  if (!body.is_object() || !body.contains("image_id") || !body.at("image_id").is_string()) {
    bad_request("invalid_body", "image_id is required");
  }
  const std::string image_id = body.at("image_id").get<std::string>();
  const std::vector<PointPrompt> points = parse_points(body);
  std::shared_ptr<const peft::EPEFTState> snapshot;
  {
    std::lock_guard lock(h->mu);
    if (h->project.find_image(image_id) == nullptr) not_found("unknown image '" + image_id + "'");
    snapshot = h->peft;
  }
  const ImageRGB img = load_work_image(pid, image_id);
  MaskLogits ml;
  try {
    const TokenSequence tokens = encode_points(points, img.size(), *base_);
    ml = decode(encode_image(img, base_->encoder_id), tokens, *base_, snapshot.get());
  } catch (const InvalidPrompt& e) {
    bad_request("invalid_prompt", e.what());
  }
  const int slot = ml.best_slot();
  ReferenceInfo ref;
  ref.image_id = image_id;
  ref.points = points;
  ref.mask = binarize(ml, slot, img.size(), cfg_.matcher.threshold);
  ref.confidence = std::clamp(ml.iou_pred[static_cast<std::size_t>(slot)], 0.0, 1.0);

  std::lock_guard lock(h->mu);
  h->project.reference = ref;
  h->project.tick();
  store_.save(h->project);
  return {{"image_id", image_id},
          {"points", points_json(points)},
          {"validated", false},
          {"confidence", ref.confidence},
          {"mask", mask_payload(ref.mask)}};
}

json Service::validate_reference(const std::string& pid, const json& body) {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  Project& p = h->project;
  if (!p.reference) conflict("no_reference", "set a reference before validating it");
  ReferenceInfo& ref = *p.reference;
  BinaryMask mask = ref.mask;
  if (body.is_object() && body.contains("mask_edits") && !body.at("mask_edits").is_null()) {
    mask = mask_from_payload(body.at("mask_edits"), ref.mask.height, ref.mask.width);
  }
  if (mask.count() == 0) conflict("empty_reference", "a validated reference mask must not be empty");
  auto response = [&] {
    return json{{"image_id", ref.image_id},
                {"points", points_json(ref.points)},
                {"validated", true},
                {"confidence", ref.confidence},
                {"mask", mask_payload(ref.mask)}};
  };
  auto label = p.labels.find(ref.image_id);
  if (ref.validated && mask == ref.mask && label != p.labels.end() && label->second.status == LabelStatus::validated &&
      label->second.mask == mask) {
    return response();
  }
  ref.mask = mask;
  ref.validated = true;
  MaskRecord& rec = p.labels[ref.image_id];
  rec.mask = mask;
  rec.failed = false;
  rec.error.clear();
  rec.status = LabelStatus::validated;
  rec.confidence = 1.0;
  rec.updated_seq = p.tick();
  rec.validated_seq = rec.updated_seq;
  rec.history.push_back({{"seq", rec.updated_seq}, {"status", "validated"}, {"source", "reference"}});
  store_.save(p);
  return response();
}

json Service::submit_match(const std::string& pid) {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  if (!h->project.reference || !h->project.reference->validated) {
    conflict("no_validated_reference", "validate a reference before matching");
  }
  const JobRecord job = jobs_->submit(pid, JobKind::match, json::object());
  h->project.job_ids.push_back(job.id);
  store_.save(h->project);
  return {{"job_id", job.id}, {"state", to_string(job.state)}};
}

json Service::submit_finetune(const std::string& pid, const json& body) {
  auto h = handle(pid);
  std::optional<int> k;
  trainer::TrainConfig tc = cfg_.train;
  if (body.is_object()) {
    if (body.contains("k") && !body.at("k").is_null()) {
      if (!body.at("k").is_number_integer() || body.at("k").get<int>() < 1) bad_request("invalid_body", "k must be >= 1");
      k = body.at("k").get<int>();
    }
    if (body.contains("train_config") && !body.at("train_config").is_null()) {
      try {
        json merged = tc;
        merged.update(body.at("train_config"));
        tc = merged.get<trainer::TrainConfig>();
        tc.validate();
      } catch (const std::exception& e) {
        bad_request("invalid_train_config", e.what());
      }
    }
  }
  std::lock_guard lock(h->mu);
  std::vector<std::pair<std::uint64_t, std::string>> usable;
  for (const auto& [id, rec] : h->project.labels) {
    if (rec.failed) continue;
    if (k) {
      if (rec.status == LabelStatus::validated) usable.emplace_back(rec.validated_seq, id);
    } else if (rec.status != LabelStatus::predicted) {
      usable.emplace_back(rec.updated_seq, id);
    }
  }
  if (usable.empty()) conflict("no_usable_labels", "refine or validate at least one label before fine-tuning");
  std::sort(usable.begin(), usable.end(), std::greater<>());
  if (k && static_cast<std::size_t>(*k) < usable.size()) usable.resize(static_cast<std::size_t>(*k));
  json ids = json::array();
  for (const auto& [seq, id] : usable) ids.push_back(id);
  const JobRecord job = jobs_->submit(pid, JobKind::finetune, {{"image_ids", ids}, {"train_config", tc}});
  h->project.job_ids.push_back(job.id);
  store_.save(h->project);
  return {{"job_id", job.id}, {"state", to_string(job.state)}, {"examples", ids.size()}};
}

json Service::submit_evaluate(const std::string& pid) {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  const JobRecord job = jobs_->submit(pid, JobKind::evaluate, json::object());
  h->project.job_ids.push_back(job.id);
  store_.save(h->project);
  return {{"job_id", job.id}, {"state", to_string(job.state)}};
}

json Service::list_labels(const std::string& pid) const {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  json out = json::array();
  for (const auto& [id, rec] : h->project.labels) out.push_back(label_json(id, rec));
  return out;
}

json Service::get_label(const std::string& pid, const std::string& image_id) const {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  if (h->project.find_image(image_id) == nullptr) not_found("unknown image '" + image_id + "'");
  auto it = h->project.labels.find(image_id);
  if (it == h->project.labels.end()) not_found("no label for image '" + image_id + "'");
  return label_json(image_id, it->second);
}

json Service::put_label(const std::string& pid, const std::string& image_id, const json& body) {
  auto h = handle(pid);
  if (!body.is_object() || !body.contains("status") || !body.at("status").is_string() || !body.contains("mask")) {
    bad_request("invalid_body", "label payload needs mask and status");
  }
  LabelStatus status;
  try {
    status = matcher::label_status_from_string(body.at("status").get<std::string>());
  } catch (const std::exception& e) {
    bad_request("invalid_body", e.what());
  }
  std::lock_guard lock(h->mu);
  Project& p = h->project;
  if (p.find_image(image_id) == nullptr) not_found("unknown image '" + image_id + "'");
  const BinaryMask mask = mask_from_payload(body.at("mask"), cfg_.work_size, cfg_.work_size);
  MaskRecord& rec = p.labels[image_id];
  if (!matcher::can_transition(rec.status, status)) {
    conflict("backward_transition",
             "label status cannot move from " + matcher::to_string(rec.status) + " to " + matcher::to_string(status));
  }
  const bool newly_validated = status == LabelStatus::validated && rec.status != LabelStatus::validated;
  rec.status = status;
  rec.mask = mask;
  rec.failed = false;
  rec.error.clear();
  rec.confidence = status == LabelStatus::predicted ? rec.confidence : 1.0;
  rec.updated_seq = p.tick();
  if (newly_validated) rec.validated_seq = rec.updated_seq;
  json entry{{"seq", rec.updated_seq}, {"status", matcher::to_string(status)}};
  if (body.contains("strokes")) entry["strokes"] = body.at("strokes");
  rec.history.push_back(std::move(entry));
  store_.save(p);
  return label_json(image_id, rec);
}

json Service::get_job(const std::string& job_id) const {
  const auto job = jobs_->get(job_id);
  if (!job) not_found("unknown job '" + job_id + "'");
  return to_json(*job);
}

json Service::list_jobs(const std::string& pid) const {
  handle(pid);
  json out = json::array();
  for (const auto& j : jobs_->list(pid)) out.push_back(to_json(j));
  return out;
}

json Service::metrics(const std::string& pid) const {
  auto h = handle(pid);
  std::lock_guard lock(h->mu);
  const auto [miou, count] = validated_miou(h->project);
  json history = json::array();
  for (const auto& m : h->project.metrics_history) {
    history.push_back({{"job_id", m.job_id}, {"miou", m.miou}, {"count", m.count}});
  }
  return {{"miou", miou ? json(*miou) : json(nullptr)}, {"count", count}, {"history", history}};
}

std::string Service::export_checkpoint(const std::string& pid) const {
  auto h = handle(pid);
  std::string name;
  {
    std::lock_guard lock(h->mu);
    if (h->project.checkpoints.empty()) conflict("no_checkpoint", "run a fine-tune before exporting");
    name = h->project.checkpoints.back();
  }
  return store_.read_checkpoint(pid, name);
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

json Service::run_job(const JobRecord& job, const JobQueue::Progress& progress) {
  switch (job.kind) {
    case JobKind::match: return run_match(job, progress);
    case JobKind::finetune: return run_finetune(job, progress);
    case JobKind::evaluate: return run_evaluate(job);
  }
  throw std::logic_error("unknown job kind");
}

json Service::run_match(const JobRecord& job, const JobQueue::Progress& progress) {
  auto h = handle(job.project_id);
  ReferenceInfo ref;
  std::vector<std::string> targets;
  std::shared_ptr<const peft::EPEFTState> snapshot;
  {
    std::lock_guard lock(h->mu);
    if (!h->project.reference || !h->project.reference->validated) throw Error("reference is no longer validated");
    ref = *h->project.reference;
    for (const auto& im : h->project.images) {
      if (im.id != ref.image_id) targets.push_back(im.id);
    }
    snapshot = h->peft;
  }
  const ImageRGB ref_img = load_work_image(job.project_id, ref.image_id);
  const matcher::ReferenceSet refset = matcher::build_reference(encode_image(ref_img, base_->encoder_id), ref.mask);
  const matcher::Model model{base_.get(), base_->encoder_id};

  std::vector<std::pair<std::string, matcher::PseudoLabel>> results;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ImageRGB img = load_work_image(job.project_id, targets[i]);
    results.emplace_back(targets[i], matcher::pseudolabel_one(model, snapshot.get(), refset, img, cfg_.matcher));
    progress(static_cast<double>(i + 1) / static_cast<double>(targets.size() + 1));
  }

  std::lock_guard lock(h->mu);
  Project& p = h->project;
  int empty = 0;
  for (auto& [id, pl] : results) {
    if (pl.mask.count() == 0) ++empty;
    MaskRecord& rec = p.labels[id];
    rec.prediction = pl.mask;
    if (rec.status == LabelStatus::predicted || rec.failed) {
      rec.mask = pl.mask;
      rec.confidence = pl.confidence;
      rec.status = LabelStatus::predicted;
      rec.failed = false;
      rec.error.clear();
      rec.updated_seq = p.tick();
    }
  }
  const auto [miou, count] = validated_miou(p);
  if (miou) p.metrics_history.push_back({job.id, *miou, count});
  store_.save(p);
  return {{"pseudolabels", results.size()},
          {"empty", empty},
          {"used_finetuned_model", snapshot != nullptr},
          {"validated_miou", miou ? json(*miou) : json(nullptr)}};
}

json Service::run_finetune(const JobRecord& job, const JobQueue::Progress& progress) {
  auto h = handle(job.project_id);
  const auto image_ids = job.payload.at("image_ids").get<std::vector<std::string>>();
  const auto tc = job.payload.at("train_config").get<trainer::TrainConfig>();
  std::optional<ReferenceInfo> ref;
  std::vector<std::pair<std::string, BinaryMask>> labels;
  {
    std::lock_guard lock(h->mu);
    if (h->project.reference && h->project.reference->validated) ref = h->project.reference;
    for (const auto& id : image_ids) {
      auto it = h->project.labels.find(id);
      if (it == h->project.labels.end() || it->second.failed) throw Error("label for '" + id + "' is no longer usable");
      labels.emplace_back(id, it->second.mask);
    }
  }
  std::vector<trainer::LabeledExample> data;
  for (const auto& [id, mask] : labels) {
    trainer::LabeledExample ex;
    ex.image = load_work_image(job.project_id, id);
    ex.gt_mask = mask;
    ex.origin = trainer::Origin::refined_pseudolabel;
    data.push_back(std::move(ex));
  }
  std::optional<matcher::ReferenceSet> refset;
  if (ref) {
    refset = matcher::build_reference(
        encode_image(load_work_image(job.project_id, ref->image_id), base_->encoder_id), ref->mask);
  }
  trainer::PromptPolicy policy;
  policy.reference = refset ? &*refset : nullptr;
  policy.params = cfg_.matcher;
  policy.encoder_id = base_->encoder_id;

  peft::EPEFTState fresh = peft::attach(cfg_.peft, *base_);
  trainer::FinetuneResult tuned = trainer::finetune(
      *base_, std::move(fresh), data, tc,
      [&](const trainer::ProgressEvent& e) { progress(0.95 * e.epoch / std::max(1, e.epochs)); }, policy);

  const std::string bytes = peft::save_delta(tuned.state);
  const std::string name = "ft-" + job.id + ".epef";
  store_.write_checkpoint(job.project_id, name, bytes);
  {
    std::lock_guard lock(h->mu);
    h->peft = std::make_shared<const peft::EPEFTState>(std::move(tuned.state));
    h->project.checkpoints.push_back(name);
    store_.save(h->project);
  }
  return {{"examples", data.size()},
          {"epochs", tc.epochs},
          {"history", tuned.history.epoch_loss},
          {"final_loss", tuned.history.epoch_loss.empty() ? json(nullptr) : json(tuned.history.epoch_loss.back())},
          {"checkpoint", name}};
}

json Service::run_evaluate(const JobRecord& job) {
  auto h = handle(job.project_id);
  std::lock_guard lock(h->mu);
  const auto [miou, count] = validated_miou(h->project);
  return {{"miou", miou ? json(*miou) : json(nullptr)}, {"count", count}};
}

}  // namespace vplab::service
