#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace vplab::service {

enum class JobKind { match, finetune, evaluate };
enum class JobState { queued, running, done, failed };

std::string to_string(JobKind k);
std::string to_string(JobState s);
JobKind job_kind_from_string(const std::string& s);
JobState job_state_from_string(const std::string& s);

/// queued -> running -> (done | failed); queued -> failed is allowed for
/// jobs abandoned before they start. Nothing leaves a terminal state.
bool job_transition_allowed(JobState from, JobState to);
inline bool is_terminal(JobState s) { return s == JobState::done || s == JobState::failed; }

struct JobRecord {
  std::string id;
  std::string project_id;
  JobKind kind = JobKind::match;
  JobState state = JobState::queued;
  double progress = 0.0;
  nlohmann::json payload = nlohmann::json::object();
  nlohmann::json result = nullptr;
  std::string error;
  std::uint64_t order = 0;  ///< submission order, persisted

  /// Throws std::logic_error on an illegal transition.
  void transition(JobState to);
};

nlohmann::json to_json(const JobRecord& j);
JobRecord job_from_json(const nlohmann::json& j);

/// Persisted FIFO job queue. A worker takes the oldest queued job whose
/// (project, kind) pair has no running job, so at most one job of each kind
/// runs per project while different projects proceed in parallel.
class JobQueue {
 public:
  using Progress = std::function<void(double)>;
  using Runner = std::function<nlohmann::json(const JobRecord&, const Progress&)>;
  using Persist = std::function<void(const JobRecord&)>;

  JobQueue(Runner runner, Persist persist, int workers);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  /// Reloads persisted jobs: queued jobs are scheduled again, jobs caught
  /// running by a shutdown are marked failed.
  void restore(const std::vector<JobRecord>& jobs);

  JobRecord submit(const std::string& project_id, JobKind kind, nlohmann::json payload);
  [[nodiscard]] std::optional<JobRecord> get(const std::string& id) const;
  [[nodiscard]] std::vector<JobRecord> list(const std::string& project_id) const;

  void start();
  /// Stops accepting work: running jobs finish, queued jobs stay queued.
  void stop();
  /// Blocks until nothing is queued or running, or the timeout elapses.
  bool wait_idle(std::chrono::milliseconds timeout) const;

 private:
  void worker_loop();
  std::optional<std::string> pick_locked() const;
  void set_state_locked(JobRecord& job, JobState to);

  Runner runner_;
  Persist persist_;
  int workers_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, JobRecord> jobs_;
  std::uint64_t next_order_ = 1;
  bool running_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace vplab::service
