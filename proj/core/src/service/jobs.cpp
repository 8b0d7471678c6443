#include "vplab/service/jobs.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace vplab::service {

std::string to_string(JobKind k) {
  switch (k) {
    case JobKind::match: return "match";
    case JobKind::finetune: return "finetune";
    case JobKind::evaluate: return "evaluate";
  }
  return "match";
}

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "queued";
}

JobKind job_kind_from_string(const std::string& s) {
  if (s == "match") return JobKind::match;
  if (s == "finetune") return JobKind::finetune;
  if (s == "evaluate") return JobKind::evaluate;
  throw std::invalid_argument("unknown job kind '" + s + "'");
}

JobState job_state_from_string(const std::string& s) {
  if (s == "queued") return JobState::queued;
  if (s == "running") return JobState::running;
  if (s == "done") return JobState::done;
  if (s == "failed") return JobState::failed;
  throw std::invalid_argument("unknown job state '" + s + "'");
}

bool job_transition_allowed(JobState from, JobState to) {
  switch (from) {
    case JobState::queued: return to == JobState::running || to == JobState::failed;
    case JobState::running: return to == JobState::done || to == JobState::failed;
    default: return false;
  }
}

void JobRecord::transition(JobState to) {
  if (!job_transition_allowed(state, to)) {
    throw std::logic_error("illegal job transition " + to_string(state) + " -> " + to_string(to));
  }
  state = to;
  if (to == JobState::done) progress = 1.0;
}

nlohmann::json to_json(const JobRecord& j) {
  return {{"id", j.id},           {"project_id", j.project_id}, {"kind", to_string(j.kind)},
          {"state", to_string(j.state)}, {"progress", j.progress},     {"payload", j.payload},
          {"result", j.result},   {"error", j.error},           {"order", j.order}};
}

JobRecord job_from_json(const nlohmann::json& j) {
  JobRecord r;
  r.id = j.at("id").get<std::string>();
  r.project_id = j.at("project_id").get<std::string>();
  r.kind = job_kind_from_string(j.at("kind").get<std::string>());
  r.state = job_state_from_string(j.at("state").get<std::string>());
  r.progress = j.at("progress").get<double>();
  r.payload = j.value("payload", nlohmann::json::object());
  r.result = j.value("result", nlohmann::json(nullptr));
  r.error = j.value("error", std::string());
  r.order = j.at("order").get<std::uint64_t>();
  return r;
}

namespace {

std::string random_job_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  return fmt::format("job-{:012x}", gen() & 0xffffffffffffull);
}

}  // namespace

JobQueue::JobQueue(Runner runner, Persist persist, int workers)
    : runner_(std::move(runner)), persist_(std::move(persist)), workers_(std::max(1, workers)) {}

JobQueue::~JobQueue() { stop(); }

void JobQueue::restore(const std::vector<JobRecord>& jobs) {
  std::lock_guard lock(mu_);
  for (JobRecord job : jobs) {
    if (job.state == JobState::running) {
      job.transition(JobState::failed);
      job.error = "service stopped while the job was running";
      persist_(job);
    }
    next_order_ = std::max(next_order_, job.order + 1);
    jobs_[job.id] = std::move(job);
  }
  cv_.notify_all();
}

JobRecord JobQueue::submit(const std::string& project_id, JobKind kind, nlohmann::json payload) {
  std::lock_guard lock(mu_);
  JobRecord job;
  do {
    job.id = random_job_id();
  } while (jobs_.contains(job.id));
  job.project_id = project_id;
  job.kind = kind;
  job.payload = std::move(payload);
  job.order = next_order_++;
  persist_(job);
  jobs_[job.id] = job;
  cv_.notify_all();
  return job;
}

std::optional<JobRecord> JobQueue::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobRecord> JobQueue::list(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  std::vector<JobRecord> out;
  for (const auto& [id, j] : jobs_) {
    if (j.project_id == project_id) out.push_back(j);
  }
  std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) { return a.order < b.order; });
  return out;
}

void JobQueue::start() {
  std::lock_guard lock(mu_);
  if (running_) return;
  running_ = true;
  for (int i = 0; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
}

void JobQueue::stop() {
  {
    std::lock_guard lock(mu_);
    if (!running_) return;
    running_ = false;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
  threads_.clear();
}

bool JobQueue::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return cv_.wait_for(lock, timeout, [this] {
    return std::all_of(jobs_.begin(), jobs_.end(), [](const auto& kv) { return is_terminal(kv.second.state); });
  });
}

std::optional<std::string> JobQueue::pick_locked() const {
  const JobRecord* best = nullptr;
  for (const auto& [id, j] : jobs_) {
    if (j.state != JobState::queued) continue;
    const bool blocked = std::any_of(jobs_.begin(), jobs_.end(), [&](const auto& kv) {
      return kv.second.state == JobState::running && kv.second.project_id == j.project_id && kv.second.kind == j.kind;
    });
    if (blocked) continue;
    if (best == nullptr || j.order < best->order) best = &j;
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

void JobQueue::set_state_locked(JobRecord& job, JobState to) {
  job.transition(to);
  persist_(job);
  cv_.notify_all();
}

void JobQueue::worker_loop() {
  for (;;) {
    std::string id;
    JobRecord snapshot;
    {
      std::unique_lock lock(mu_);
      std::optional<std::string> picked;
      cv_.wait(lock, [&] {
        if (!running_) return true;
        picked = pick_locked();
        return picked.has_value();
      });
      if (!running_) return;
      id = *picked;
      JobRecord& job = jobs_.at(id);
      set_state_locked(job, JobState::running);
      snapshot = job;
    }

    const Progress progress = [this, &id](double p) {
      std::lock_guard lock(mu_);
      JobRecord& job = jobs_.at(id);
      const double clamped = std::clamp(p, 0.0, 1.0);
      if (job.state == JobState::running && clamped > job.progress) {
        job.progress = clamped;
        persist_(job);
      }
    };

    nlohmann::json result;
    std::string error;
    try {
      result = runner_(snapshot, progress);
    } catch (const std::exception& e) {
      error = e.what();
      if (error.empty()) error = "job failed";
    } catch (...) {
      error = "job failed with an unknown error";
    }

    std::lock_guard lock(mu_);
    JobRecord& job = jobs_.at(id);
    if (error.empty()) {
      job.result = std::move(result);
      set_state_locked(job, JobState::done);
    } else {
      job.error = error;
      set_state_locked(job, JobState::failed);
    }
  }
}

}  // namespace vplab::service
