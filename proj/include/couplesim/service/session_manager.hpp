#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "couplesim/service/session_controller.hpp"

namespace couplesim::service {

class UnknownScenario : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Owns one session's event queue and worker thread. Every mutation of the
// session happens on the worker, in queue order; frames go to all attached
// subscribers in the order they were generated.
class SessionActor {
 public:
  using Subscriber = std::function<void(const std::string& frame)>;

  SessionActor(std::unique_ptr<SessionController> controller, std::chrono::milliseconds a2a_delay);
  ~SessionActor();
  SessionActor(const SessionActor&) = delete;
  SessionActor& operator=(const SessionActor&) = delete;

  const std::string& id() const { return id_; }

  void post(ClientEvent event);
  // Subscribers run on the actor's thread and must not call back into it.
  std::size_t subscribe(Subscriber s);
  // Once this returns the subscriber is never called again.
  void unsubscribe(std::size_t token);

  bool closed() const;
  std::chrono::steady_clock::time_point last_activity() const;
  // Blocks until the queue is empty and no loop is running (or the session closed).
  void wait_idle();

 private:
  void run(std::stop_token stop);
  void broadcast(const ServerEvent& e);
  void handle(const ClientEvent& e);

  std::string id_;
  std::unique_ptr<SessionController> controller_;
  std::chrono::milliseconds a2a_delay_;

  mutable std::mutex mu_;
  std::mutex deliver_mu_;  // held while subscribers run
  std::condition_variable_any cv_;
  std::condition_variable idle_cv_;
  std::deque<ClientEvent> queue_;
  bool busy_ = false;
  bool closed_ = false;
  std::chrono::steady_clock::time_point last_activity_;
  std::map<std::size_t, Subscriber> subscribers_;
  std::size_t next_token_ = 0;
  std::jthread worker_;
};

struct ManagerConfig {
  std::filesystem::path data_dir = "sessions";
  std::chrono::milliseconds idle_timeout = std::chrono::minutes(60);
  std::chrono::milliseconds reap_interval = std::chrono::seconds(30);
  std::chrono::milliseconds a2a_delay{0};  // pause between loop utterances
};

class SessionManager {
 public:
  SessionManager(const Engine& engine, const prompts::PromptLibrary& prompts, ManagerConfig config);
  ~SessionManager();

  // Throws UnknownScenario. The session starts at Greeting and is persisted
  // before this returns.
  std::shared_ptr<SessionActor> create(const CreateSession& request, SessionCreated* created = nullptr);

  // Live session, or one reloaded from disk if it was persisted and not
  // closed. A reloaded session keeps its stage state; its a2a loop is inactive.
  std::shared_ptr<SessionActor> find(const std::string& id);

  std::size_t open_sessions() const;
  // Closes sessions idle for longer than the timeout; returns how many.
  std::size_t reap_idle();

  const SessionStore& store() const { return store_; }
  const prompts::PromptLibrary& prompts() const { return prompts_; }

 private:
  std::shared_ptr<SessionActor> make_actor(Session s);
  std::string new_id();

  const Engine& engine_;
  const prompts::PromptLibrary& prompts_;
  ManagerConfig config_;
  SessionStore store_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<SessionActor>> sessions_;
  std::jthread reaper_;
};

}  // namespace couplesim::service
