#include "couplesim/service/session_manager.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace couplesim::service {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

}  // namespace

// ---- SessionActor -----------------------------------------------------------

SessionActor::SessionActor(std::unique_ptr<SessionController> controller, std::chrono::milliseconds a2a_delay)
    : id_(controller->session().id),
      controller_(std::move(controller)),
      a2a_delay_(a2a_delay),
      closed_(controller_->closed()),
      last_activity_(std::chrono::steady_clock::now()) {
  worker_ = std::jthread([this](std::stop_token st) { run(st); });
}

SessionActor::~SessionActor() {
  wait_idle();
  worker_.request_stop();
  cv_.notify_all();
}

void SessionActor::post(ClientEvent event) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(event));
    last_activity_ = std::chrono::steady_clock::now();
  }
  cv_.notify_all();
}

std::size_t SessionActor::subscribe(Subscriber s) {
  std::lock_guard lock(mu_);
  subscribers_.emplace(next_token_, std::move(s));
  return next_token_++;
}

void SessionActor::unsubscribe(std::size_t token) {
  std::lock_guard delivering(deliver_mu_);  // no callback is running once this returns
  std::lock_guard lock(mu_);
  subscribers_.erase(token);
}

bool SessionActor::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::chrono::steady_clock::time_point SessionActor::last_activity() const {
  std::lock_guard lock(mu_);
  return last_activity_;
}

void SessionActor::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

void SessionActor::broadcast(const ServerEvent& e) {
  const auto frame = encode(e, id_);
  std::lock_guard delivering(deliver_mu_);
  std::vector<Subscriber> targets;
  {
    std::lock_guard lock(mu_);
    for (const auto& [token, s] : subscribers_) targets.push_back(s);
  }
  for (const auto& s : targets) s(frame);
}

void SessionActor::handle(const ClientEvent& e) {
  const ServerSink sink = [this](const ServerEvent& ev) { broadcast(ev); };
  std::visit(overloaded{[&](const CreateSession&) {
                          sink(ErrorEvent{"already_attached", "this connection is already attached to " + id_});
                        },
                        [&](const TherapistMessage& m) { controller_->handle_therapist_message(m, sink); },
                        [&](const Interrupt&) { controller_->handle_interrupt(sink); },
                        [&](const EndSession& end) { controller_->end_session(sink, end.reason); }},
             e);
  if (controller_->closed()) {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
}

void SessionActor::run(std::stop_token stop) {
  const ServerSink sink = [this](const ServerEvent& ev) { broadcast(ev); };
  auto pop = [&](ClientEvent& out) {
    std::lock_guard lock(mu_);
    if (queue_.empty()) return false;
    out = std::move(queue_.front());
    queue_.pop_front();
    last_activity_ = std::chrono::steady_clock::now();
    return true;
  };

  for (;;) {
    {
      std::unique_lock lock(mu_);
      busy_ = false;
      idle_cv_.notify_all();
      if (!cv_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      busy_ = true;
    }
    ClientEvent event;
    if (!pop(event)) continue;
    handle(event);

    // The loop yields whenever a client event is queued; that event's handler
    // performs the interrupt.
    const InterruptProbe probe = [&] {
      std::unique_lock lock(mu_);
      if (a2a_delay_.count() > 0) cv_.wait_for(lock, stop, a2a_delay_, [&] { return !queue_.empty(); });
      return !queue_.empty() || stop.stop_requested();
    };
    while (controller_->a2a_active() && !controller_->closed()) {
      if (controller_->run_a2a(sink, probe)) break;
      if (!pop(event)) break;
      handle(event);
    }
  }
}

// ---- SessionManager ---------------------------------------------------------

SessionManager::SessionManager(const Engine& engine, const prompts::PromptLibrary& prompts, ManagerConfig config)
    : engine_(engine), prompts_(prompts), config_(std::move(config)), store_(config_.data_dir) {
  reaper_ = std::jthread([this](std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    std::unique_lock lock(m);
    while (!cv.wait_for(lock, st, config_.reap_interval, [] { return false; }) && !st.stop_requested()) {
      lock.unlock();
      reap_idle();
      lock.lock();
    }
  });
}

SessionManager::~SessionManager() {
  reaper_.request_stop();
  if (reaper_.joinable()) reaper_.join();
  std::map<std::string, std::shared_ptr<SessionActor>> sessions;
  {
    std::lock_guard lock(mu_);
    sessions.swap(sessions_);
  }
}

std::string SessionManager::new_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  for (;;) {
    std::string id;
    auto bits = rng();
    for (int i = 0; i < 12; ++i, bits >>= 4) id.push_back(kHex[bits & 0xf]);
    if (!sessions_.count(id) && !store_.exists(id)) return id;
  }
}

std::shared_ptr<SessionActor> SessionManager::make_actor(Session s) {
  auto controller = std::make_unique<SessionController>(std::move(s), engine_, &store_);
  return std::make_shared<SessionActor>(std::move(controller), config_.a2a_delay);
}

std::shared_ptr<SessionActor> SessionManager::create(const CreateSession& request, SessionCreated* created) {
  Scenario scenario;
  if (request.custom_text && !request.custom_text->empty()) {
    scenario = Scenario{"custom", *request.custom_text};
  } else if (request.scenario_id) {
    auto found = prompts_.find_scenario(*request.scenario_id);
    if (!found) throw UnknownScenario("unknown scenario \"" + *request.scenario_id + "\"");
    scenario = *found;
  } else {
    throw UnknownScenario("no scenario given");
  }

  std::lock_guard lock(mu_);
  Session s;
  s.id = new_id();
  s.scenario = scenario;
  s.difficulty = request.difficulty;
  store_.create(s);
  if (created) *created = SessionCreated{s.id, s.scenario.id, s.difficulty, s.current_stage};
  auto actor = make_actor(std::move(s));
  sessions_.emplace(actor->id(), actor);
  return actor;
}

std::shared_ptr<SessionActor> SessionManager::find(const std::string& id) {
  if (!valid_id(id)) return nullptr;
  std::lock_guard lock(mu_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  if (!store_.exists(id)) return nullptr;
  auto loaded = store_.load(id);
  if (loaded.closed) return nullptr;
  auto actor = make_actor(std::move(loaded.session));
  sessions_.emplace(id, actor);
  return actor;
}

std::size_t SessionManager::open_sessions() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(sessions_.begin(), sessions_.end(),
                                                [](const auto& kv) { return !kv.second->closed(); }));
}

std::size_t SessionManager::reap_idle() {
  const auto now = std::chrono::steady_clock::now();
  std::vector<std::shared_ptr<SessionActor>> expired;
  {
    std::lock_guard lock(mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const bool idle = now - it->second->last_activity() > config_.idle_timeout;
      if (it->second->closed() || idle) {
        if (!it->second->closed()) expired.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& actor : expired) actor->post(EndSession{"idle_timeout"});
  return expired.size();
}

}  // namespace couplesim::service
