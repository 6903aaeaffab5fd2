#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "couplesim/service/session_manager.hpp"

namespace couplesim::service {

struct ServerConfig {
  std::string bind = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks an ephemeral port
  int threads = 2;
};

// HTTP + WebSocket front end on a single port.
//   GET /healthz                    {"status":"ok","open_sessions":N}
//   GET /scenarios                  built-in scenarios
//   GET /sessions/{id}/transcript   the persisted JSONL transcript
//   /ws[?session=ID]                event channel; without a session id the
//                                   first frame must be CreateSession
class Server {
 public:
  Server(ServerConfig config, SessionManager& manager);
  ~Server();

  // Binds and starts the I/O threads; returns the bound port.
  std::uint16_t start();
  void stop();
  // Blocks until stop() is called or SIGINT/SIGTERM arrives.
  void run_until_signal();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace couplesim::service
