#include "imdauth/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <iostream>
#include <regex>

namespace imdauth::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

// ---- live session ----

LiveSession::LiveSession(std::string id, scenario::Scenario s, Mode mode, Clock clock,
                         std::optional<simnet::LoginRequest> login)
    : id_(std::move(id)), name_(s.name), mode_(mode), clock_(clock), created_(std::chrono::steady_clock::now()) {
  auto cfg = s.world;
  if (mode_ == Mode::interactive) cfg.user_enabled = false;
  world_ = std::make_unique<simnet::World>(cfg);
  if (mode_ == Mode::interactive) world_->phone().request(login.value_or(cfg.user.login));
}

double LiveSession::now_ms() const { return sim::to_seconds(world_->simulator().now()) * 1000.0; }

void LiveSession::advance_to(double t_ms) {
  const auto t = sim::from_millis(t_ms);
  if (t > world_->simulator().now()) world_->simulator().run_until(t);
}

LiveSession::TapReply LiveSession::tap(double t_ms, bool down) {
  advance_to(t_ms);
  auto& dev = world_->device();
  const bool accepted = dev.sampling_touch();
  dev.set_touch(down);
  ++(accepted ? taps_accepted_ : taps_ignored_);
  return {accepted, dev.state()};
}

void LiveSession::login(simnet::LoginRequest r) { world_->phone().request(std::move(r)); }

json LiveSession::view() const {
  auto& w = *world_;
  auto& dev = w.device();
  json v;
  v["id"] = id_;
  v["scenario"] = name_;
  v["mode"] = mode_ == Mode::interactive ? "interactive" : "scripted";
  v["clock"] = clock_ == Clock::wall ? "wall" : "manual";
  v["sim_time_ms"] = now_ms();
  v["state"] = device::to_string(dev.state());
  v["sampling_touch"] = dev.sampling_touch();
  json sms = json::array();
  for (const auto& m : w.sms()) sms.push_back({{"at_ms", sim::to_seconds(m.at) * 1000.0}, {"body", m.body}});
  v["sms"] = sms;
  const auto& recs = w.log().records();
  v["outcome"] = recs.empty() ? json(nullptr) : json(recs.back().outcome);
  v["executions"] = dev.executions().size();
  v["taps"] = {{"accepted", taps_accepted_}, {"ignored", taps_ignored_}};
  return v;
}

json LiveSession::report() {
  world_->device().settle();
  return scenario::build_report(*world_, name_);
}

// ---- routing ----

std::pair<std::string, unsigned short> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("bind address must be host:port");
  std::string host = bind.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in " + bind);
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("bad port in " + bind);
  return {host, static_cast<unsigned short>(port)};
}

Api::Api(ServiceConfig config) : cfg_(std::move(config)) {}

namespace {

HttpResponse error(unsigned status, const std::string& message) { return {status, json{{"error", message}}}; }

std::optional<simnet::LoginRequest> login_from(const json& j, const simnet::LoginRequest& fallback) {
  if (!j.is_object()) return std::nullopt;
  simnet::LoginRequest r = fallback;
  if (j.contains("identity")) r.identity = j.at("identity").get<std::string>();
  if (j.contains("credential")) r.credential = j.at("credential").get<std::string>();
  if (j.contains("dose")) r.dose = j.at("dose").get<std::uint32_t>();
  return r;
}

}  // namespace

HttpResponse Api::create(const std::string& body) {
  json req = body.empty() ? json::object() : json::parse(body);
  const auto name = req.value("scenario", std::string("happy_dual_factor"));
  if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos)
    return error(400, "bad scenario name");
  const auto mode_name = req.value("mode", std::string("interactive"));
  const auto clock_name = req.value("clock", std::string("wall"));
  if (mode_name != "interactive" && mode_name != "scripted") return error(400, "mode must be interactive or scripted");
  if (clock_name != "wall" && clock_name != "manual") return error(400, "clock must be wall or manual");

  scenario::Scenario s;
  try {
    s = scenario::load((std::filesystem::path(cfg_.scenario_dir) / name).string());
  } catch (const scenario::ParseError& e) {
    return error(404, e.what());
  }
  if (req.contains("seed")) s.world.seed = req.at("seed").get<std::uint64_t>();
  std::optional<simnet::LoginRequest> login;
  if (req.contains("login")) login = login_from(req.at("login"), s.world.user.login);

  const auto id = "s" + std::to_string(next_id_++);
  auto session = std::make_unique<LiveSession>(
      id, std::move(s), mode_name == "interactive" ? LiveSession::Mode::interactive : LiveSession::Mode::scripted,
      clock_name == "wall" ? LiveSession::Clock::wall : LiveSession::Clock::manual, login);
  auto view = session->view();
  sessions_.emplace(id, std::move(session));
  return {201, view};
}

HttpResponse Api::handle(const std::string& method, const std::string& target, const std::string& body) {
  static const std::regex kSession(R"(^/sessions/([A-Za-z0-9]+)(/[a-z]+)?$)");
  const std::string path = target.substr(0, target.find('?'));
  try {
    if (path == "/health" && method == "GET") return {200, json{{"ok", true}}};
    if (path == "/sessions") {
      if (method == "POST") return create(body);
      if (method == "GET") {
        json ids = json::array();
        for (const auto& [id, s] : sessions_) ids.push_back(id);
        return {200, json{{"sessions", ids}}};
      }
      return error(405, "method not allowed");
    }
    std::smatch m;
    if (!std::regex_match(path, m, kSession)) return error(404, "no such endpoint");
    auto it = sessions_.find(m[1].str());
    if (it == sessions_.end()) return error(404, "unknown session " + m[1].str());
    auto& s = *it->second;
    const std::string sub = m[2].str();
    if (sub.empty() && method == "GET") return {200, s.view()};
    if (sub == "/report" && method == "GET") return {200, s.report()};
    if (sub == "/advance" && method == "POST") {
      if (s.clock() != LiveSession::Clock::manual) return error(409, "session runs on the wall clock");
      s.advance_to(json::parse(body).at("t_ms").get<double>());
      return {200, s.view()};
    }
    if (sub == "/login" && method == "POST") {
      auto r = login_from(json::parse(body), s.world().config().user.login);
      if (!r) return error(400, "login body must be an object");
      s.login(*r);
      return {200, s.view()};
    }
    if (sub == "/taps") return error(426, "taps are a WebSocket endpoint");
    return error(405, "method not allowed");
  } catch (const json::exception& e) {
    return error(400, std::string("bad request body: ") + e.what());
  }
}

json Api::tap_message(const std::string& session_id, const std::string& message) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return json{{"error", "unknown session " + session_id}};
  json j;
  try {
    j = json::parse(message);
    const double t_ms = j.at("t_ms").get<double>();
    const auto& level = j.at("level");
    bool down = false;
    if (level.is_boolean()) {
      down = level.get<bool>();
    } else if (level.is_number()) {
      down = level.get<double>() != 0.0;
    } else if (level == "down") {
      down = true;
    } else if (level == "up") {
      down = false;
    } else {
      return json{{"error", "level must be down or up"}};
    }
    if (!(t_ms >= 0.0)) return json{{"error", "t_ms must be >= 0"}};
    auto reply = it->second->tap(t_ms, down);
    return json{{"accepted", reply.accepted}, {"state", device::to_string(reply.state)}};
  } catch (const json::exception& e) {
    return json{{"error", std::string("bad tap event: ") + e.what()}};
  }
}

void Api::tick_wall_clock() {
  const auto now = std::chrono::steady_clock::now();
  for (auto& [id, s] : sessions_) {
    if (s->clock() != LiveSession::Clock::wall) continue;
    const auto elapsed = std::chrono::duration<double, std::milli>(now - s->created() - cfg_.lag).count();
    if (elapsed > 0) s->advance_to(elapsed);
  }
}

// ---- transport ----

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, Api& api, std::string session_id)
      : ws_(std::move(socket)), api_(api), session_id_(std::move(session_id)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

 private:
  void read() {
    buffer_.clear();
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->reply_ = self->api_.tap_message(self->session_id_, beast::buffers_to_string(self->buffer_.data())).dump();
      self->ws_.text(true);
      self->ws_.async_write(asio::buffer(self->reply_), [self](beast::error_code ec2, std::size_t) {
        if (!ec2) self->read();
      });
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::string reply_;
  Api& api_;
  std::string session_id_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Api& api) : stream_(std::move(socket)), api_(api) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;

    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      static const std::regex kTaps(R"(^/sessions/([A-Za-z0-9]+)/taps$)");
      std::smatch m;
      if (std::regex_match(target, m, kTaps) && api_.has_session(m[1].str())) {
        stream_.expires_never();
        std::make_shared<WsConnection>(stream_.release_socket(), api_, m[1].str())->run(std::move(req_));
        return;
      }
      respond({404, json{{"error", "no such WebSocket endpoint"}}});
      return;
    }
    if (req_.method() == http::verb::options) {
      respond({204, nullptr});
      return;
    }
    respond(api_.handle(std::string(req_.method_string()), target, req_.body()));
  }

  void respond(const HttpResponse& r) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status), req_.version());
    res->set(http::field::server, "imdauth");
    res->set(http::field::access_control_allow_origin, "*");
    res->set(http::field::access_control_allow_headers, "Content-Type");
    res->set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    if (!r.body.is_null()) {
      res->set(http::field::content_type, "application/json");
      res->body() = r.body.dump(-1, ' ', false, json::error_handler_t::replace);
    }
    res->keep_alive(req_.keep_alive());
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Api& api_;
};

}  // namespace

struct Server::Impl {
  explicit Impl(ServiceConfig c) : cfg(c), api(c), acceptor(ioc), ticker(ioc) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(socket), api)->start();
      accept();
    });
  }

  void tick() {
    ticker.expires_after(cfg.tick);
    ticker.async_wait([this](beast::error_code ec) {
      if (ec) return;
      api.tick_wall_clock();
      tick();
    });
  }

  ServiceConfig cfg;
  asio::io_context ioc{1};
  Api api;
  tcp::acceptor acceptor;
  asio::steady_timer ticker;
};

Server::Server(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
Server::~Server() = default;

unsigned short Server::listen() {
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->cfg.host, ec);
  if (ec) throw std::runtime_error("bad bind host " + impl_->cfg.host);
  const tcp::endpoint ep(address, impl_->cfg.port);
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol(), ec);
  if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(ep, ec);
  if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw std::runtime_error("cannot listen on " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port) + ": " + ec.message());
  impl_->accept();
  impl_->tick();
  return acc.local_endpoint().port();
}

void Server::run() {
  asio::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
  signals.async_wait([this](beast::error_code ec, int) {
    if (!ec) stop();
  });
  impl_->ioc.run();
}

void Server::stop() {
  asio::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->ticker.cancel();
    impl->ioc.stop();
  });
}

int serve(const ServiceConfig& config) {
  Server server(config);
  try {
    const auto port = server.listen();
    std::cerr << "imdauth serving on " << config.host << ":" << port << "\n";
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  server.run();
  return 0;
}

}  // namespace imdauth::service
