#include "couplesim/service/server.hpp"

#include <deque>
#include <memory>
#include <mutex>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <nlohmann/json.hpp>

#include "couplesim/engine/transcript_io.hpp"

namespace couplesim::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

struct Target {
  std::string path;
  std::map<std::string, std::string> query;
};

Target split_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    t.query[std::string(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return t;
}

bool safe_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

class WsSession;

// Live WebSocket connections, so shutdown can detach them from their actors
// before the io_context goes away.
struct WsRegistry {
  std::mutex mu;
  std::vector<std::weak_ptr<WsSession>> sessions;

  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mu);
    std::erase_if(sessions, [](const auto& w) { return w.expired(); });
    sessions.push_back(s);
  }
  void detach_all();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, SessionManager& manager, std::string attach_id)
      : ws_(std::move(socket)), manager_(manager), attach_id_(std::move(attach_id)) {}

  ~WsSession() { detach(); }

  // Only while no I/O thread runs this connection.
  void detach() {
    if (actor_) actor_->unsubscribe(token_);
    actor_.reset();
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  // Callable from any thread.
  void send(std::string frame) {
    net::post(ws_.get_executor(),
              [self = shared_from_this(), frame = std::move(frame)]() mutable { self->enqueue(std::move(frame)); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    if (!attach_id_.empty()) {
      if (auto actor = manager_.find(attach_id_)) {
        attach(std::move(actor));
      } else {
        send(encode(ErrorEvent{"unknown_session", "no open session " + attach_id_}));
      }
    }
    do_read();
  }

  void attach(std::shared_ptr<SessionActor> actor) {
    actor_ = std::move(actor);
    // Runs on the actor's thread: hand the frame over without ever owning the
    // connection there, so it is always destroyed on an I/O thread.
    token_ = actor_->subscribe([weak = weak_from_this(), ex = ws_.get_executor()](const std::string& frame) {
      net::post(ex, [weak, frame] {
        if (auto self = weak.lock()) self->enqueue(frame);
      });
    });
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      if (actor_) {
        actor_->unsubscribe(token_);
        actor_.reset();
      }
      return;
    }
    const auto frame = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    handle(frame);
    do_read();
  }

  void handle(const std::string& frame) {
    ClientEvent event;
    try {
      event = parse_client_event(frame);
    } catch (const ProtocolError& e) {
      send(encode(ErrorEvent{e.code(), e.what()}, actor_ ? actor_->id() : std::string{}));
      return;
    }
    if (const auto* create = std::get_if<CreateSession>(&event)) {
      if (actor_) {
        send(encode(ErrorEvent{"already_attached", "connection is attached to " + actor_->id()}, actor_->id()));
        return;
      }
      try {
        SessionCreated created;
        auto actor = manager_.create(*create, &created);
        send(encode(created));
        attach(std::move(actor));
      } catch (const UnknownScenario& e) {
        send(encode(ErrorEvent{"unknown_scenario", e.what()}));
      } catch (const std::exception& e) {
        send(encode(ErrorEvent{"internal", e.what()}));
      }
      return;
    }
    if (!actor_) {
      send(encode(ErrorEvent{"no_session", "send CreateSession first or connect with ?session=ID"}));
      return;
    }
    actor_->post(std::move(event));
  }

  void enqueue(std::string frame) {
    outbox_.push_back(std::move(frame));
    if (outbox_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    outbox_.pop_front();
    if (!outbox_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionManager& manager_;
  std::string attach_id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::shared_ptr<SessionActor> actor_;
  std::size_t token_ = 0;
};

void WsRegistry::detach_all() {
  std::vector<std::shared_ptr<WsSession>> live;
  {
    std::lock_guard lock(mu);
    for (const auto& w : sessions)
      if (auto s = w.lock()) live.push_back(std::move(s));
    sessions.clear();
  }
  for (const auto& s : live) s->detach();
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, SessionManager& manager, WsRegistry& registry)
      : stream_(std::move(socket)), manager_(manager), registry_(registry) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return close();
    if (ec) return;

    if (websocket::is_upgrade(req_)) {
      auto target = split_target(std::string_view(req_.target().data(), req_.target().size()));
      if (target.path != "/ws") return write(error_response(http::status::not_found, "no websocket endpoint here"));
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), manager_, target.query["session"]);
      registry_.add(ws);
      ws->run(std::move(req_));
      return;
    }
    write(route());
  }

  http::response<http::string_body> json_response(http::status status, const json& body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req_.keep_alive());
    res.body() = body.dump();
    res.prepare_payload();
    return res;
  }

  http::response<http::string_body> error_response(http::status status, const std::string& msg) {
    return json_response(status, {{"error", msg}});
  }

  http::response<http::string_body> route() {
    if (req_.method() != http::verb::get) return error_response(http::status::method_not_allowed, "GET only");
    const auto target = split_target(std::string_view(req_.target().data(), req_.target().size()));
    const auto& path = target.path;

    if (path == "/healthz") return json_response(http::status::ok, {{"status", "ok"}, {"open_sessions", manager_.open_sessions()}});

    if (path == "/scenarios") {
      json list = json::array();
      for (const auto& s : manager_.prompts().scenarios())
        list.push_back({{"id", s.id}, {"title", s.title}, {"description", s.description}});
      return json_response(http::status::ok, list);
    }

    constexpr std::string_view kPrefix = "/sessions/";
    constexpr std::string_view kSuffix = "/transcript";
    if (path.size() > kPrefix.size() + kSuffix.size() && path.compare(0, kPrefix.size(), kPrefix) == 0 &&
        path.compare(path.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
      const auto id = path.substr(kPrefix.size(), path.size() - kPrefix.size() - kSuffix.size());
      const auto file = transcript_path(manager_.store().dir(), id);
      if (!safe_id(id) || !std::filesystem::exists(file))
        return error_response(http::status::not_found, "unknown session");
      std::ifstream in(file, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      http::response<http::string_body> res{http::status::ok, req_.version()};
      res.set(http::field::content_type, "application/x-ndjson");
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req_.keep_alive());
      res.body() = body.str();
      res.prepare_payload();
      return res;
    }
    return error_response(http::status::not_found, "not found");
  }

  void write(http::response<http::string_body> res) {
    auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
    const bool keep_alive = sp->keep_alive();
    http::async_write(stream_, *sp, [self = shared_from_this(), sp, keep_alive](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (keep_alive) {
        self->do_read();
      } else {
        self->close();
      }
    });
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  SessionManager& manager_;
  WsRegistry& registry_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, SessionManager& manager, WsRegistry& registry)
      : ioc_(ioc), acceptor_(net::make_strand(ioc)), manager_(manager), registry_(registry) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  void run() { do_accept(); }
  void stop() {
    net::post(acceptor_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      self->acceptor_.close(ec);
    });
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), manager_, registry_)->run();
    do_accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  SessionManager& manager_;
  WsRegistry& registry_;
};

}  // namespace

struct Server::Impl {
  ServerConfig config;
  SessionManager& manager;
  WsRegistry registry;
  net::io_context ioc;
  std::shared_ptr<Listener> listener;
  std::vector<std::thread> threads;
  bool stopped = false;

  Impl(ServerConfig c, SessionManager& m) : config(std::move(c)), manager(m), ioc(std::max(1, config.threads)) {}
};

Server::Server(ServerConfig config, SessionManager& manager)
    : impl_(std::make_unique<Impl>(std::move(config), manager)) {}

Server::~Server() { stop(); }

std::uint16_t Server::start() {
  const auto address = net::ip::make_address(impl_->config.bind);
  impl_->listener = std::make_shared<Listener>(impl_->ioc, tcp::endpoint{address, impl_->config.port}, impl_->manager,
                                                       impl_->registry);
  impl_->listener->run();
  for (int i = 0; i < std::max(1, impl_->config.threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  return impl_->listener->port();
}

void Server::stop() {
  if (impl_->stopped) return;
  impl_->stopped = true;
  if (impl_->listener) impl_->listener->stop();
  impl_->ioc.stop();
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->registry.detach_all();
}

void Server::run_until_signal() {
  net::io_context signals_ctx;
  net::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) { signals_ctx.stop(); });
  signals_ctx.run();
  stop();
}

}  // namespace couplesim::service
