#pragma once

#include <memory>
#include <string>

#include "vplab/service/service.hpp"

namespace vplab::service {

/// REST front end over a Service. Every error body is {"code", "message"};
/// CORS is open so a browser client on another origin can call it.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port,
  /// or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vplab::service
