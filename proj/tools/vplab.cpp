#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "vplab/common/error.hpp"
#include "vplab/segcore/weights.hpp"
#include "vplab/service/http.hpp"
#include "vplab/service/service.hpp"
#include "vplab/service/store.hpp"
#include "vplab/trainer/experiments.hpp"
#include "vplab/trainer/pretrain.hpp"

namespace fs = std::filesystem;
using namespace vplab;

namespace {

constexpr int kDefaultPort = 8731;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

// --weights, then $VPLAB_BASE_WEIGHTS, then the source-tree fixture, then the installed copy.
fs::path resolve_weights(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv("VPLAB_BASE_WEIGHTS"); v != nullptr && *v != '\0') return v;
  for (const fs::path p : {fs::path(VPLAB_BUILD_WEIGHTS), fs::path(VPLAB_INSTALL_WEIGHTS)}) {
    if (fs::exists(p)) return p;
  }
  throw Error("no base decoder weights found; pass --weights or set VPLAB_BASE_WEIGHTS");
}

trainer::ExperimentConfig load_experiment_config(const std::string& path) {
  trainer::ExperimentConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  cfg = nlohmann::json::parse(in).get<trainer::ExperimentConfig>();
  return cfg;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error("cannot write " + out);
  f << text;
}

int run_serve(const std::string& weights_flag, const std::string& host, int workers) {
  const int port = std::stoi(env_or("VPLAB_PORT", std::to_string(kDefaultPort)));
  service::ServiceConfig cfg;
  cfg.data_dir = env_or("VPLAB_DATA_DIR", "vplab-data");
  cfg.workers = workers;
  const fs::path weights = resolve_weights(weights_flag);
  auto base = std::make_shared<const DecoderWeights>(load_weights_file(weights));
  spdlog::info("base weights {}", weights.string());
  spdlog::info("data dir {}", fs::absolute(cfg.data_dir).string());

  // Block termination signals before any thread starts; a dedicated thread waits for them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::Service svc(cfg, base);
  service::HttpServer server(svc);
  const int bound = server.bind(host, port);
  if (bound < 0) {
    spdlog::error("cannot bind {}:{}", host, port);
    return 1;
  }
  std::jthread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("signal {}, shutting down", sig);
    server.stop();
  });
  spdlog::info("listening on http://{}:{}", host, bound);
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vplab: visual prompting with parameter-efficient fine-tuning"};
  app.require_subcommand(1);

  std::string weights;
  app.add_option("--weights", weights, "Base decoder weights (SEGC1)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service (VPLAB_PORT, VPLAB_DATA_DIR)");
  std::string host = "127.0.0.1";
  int workers = 2;
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--workers", workers, "Job worker threads")->capture_default_str()->check(CLI::Range(1, 64));

  auto* kshot = app.add_subcommand("kshot", "K-shot experiment on the synthetic families");
  std::vector<int> shots{0, 5, 10, 40};
  std::vector<std::string> families = trainer::evaluation_families();
  std::string config_path;
  std::string format = "text";
  std::string out;
  kshot->add_option("--shots", shots, "Shot counts, ascending, starting at 0")->capture_default_str();
  auto* compare = app.add_subcommand("compare-peft", "Compare PEFT variants under one budget");
  for (auto* sub : {kshot, compare}) {
    sub->add_option("--families", families, "Synthetic families")->capture_default_str();
    sub->add_option("--config", config_path, "Experiment config (JSON)");
    sub->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
    sub->add_option("--out", out, "Output file (default stdout)");
  }

  auto* exp = app.add_subcommand("export", "Write a project's latest EPEF1 checkpoint");
  std::string project;
  std::string export_out;
  exp->add_option("--project", project, "Project id")->required();
  exp->add_option("--out", export_out, "Output file")->required();

  auto* pre = app.add_subcommand("pretrain", "Pretrain the tiny base decoder on synthetic data");
  trainer::PretrainConfig pc;
  std::string pre_out = "base_tiny.segc";
  pre->add_option("--out", pre_out, "Output SEGC1 file")->capture_default_str();
  pre->add_option("--steps", pc.steps, "Optimizer steps")->capture_default_str();
  pre->add_option("--images", pc.images, "Training images")->capture_default_str();
  pre->add_option("--family", pc.family, "Synthetic family")->capture_default_str();
  pre->add_option("--seed", pc.seed, "Seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) return run_serve(weights, host, workers);

    if (kshot->parsed() || compare->parsed()) {
      const auto cfg = load_experiment_config(config_path);
      const DecoderWeights base = load_weights_file(resolve_weights(weights));
      const trainer::LogSink log = [](const std::string& line) { spdlog::info("{}", line); };
      if (kshot->parsed()) {
        const auto report = trainer::kshot_experiment(base, families, shots, cfg, log);
        emit(format == "csv" ? report.to_csv() : format == "json" ? report.to_json().dump(2) : report.to_text(), out);
      } else {
        const auto table = trainer::compare_peft_variants(base, families, cfg, log);
        emit(format == "csv" ? table.to_csv() : format == "json" ? table.to_json().dump(2) : table.to_text(), out);
      }
      return 0;
    }

    if (exp->parsed()) {
      service::ServiceConfig cfg;
      cfg.data_dir = env_or("VPLAB_DATA_DIR", "vplab-data");
      cfg.start_workers = false;
      auto base = std::make_shared<const DecoderWeights>(load_weights_file(resolve_weights(weights)));
      service::Service svc(cfg, base);
      service::write_file_atomic(export_out, svc.export_checkpoint(project));
      fmt::print("wrote {}\n", export_out);
      return 0;
    }

    if (pre->parsed()) {
      const auto w = trainer::pretrain_base(DecoderConfig::tiny(), pc, [](const trainer::ProgressEvent& e) {
        spdlog::info("step {}/{} loss {:.4f}", e.epoch, e.epochs, e.loss);
      });
      save_weights_file(w, pre_out);
      fmt::print("wrote {}\n", pre_out);
      return 0;
    }
  } catch (const service::ApiError& e) {
    spdlog::error("{}: {}", e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
