// Copyright 2026 The prefopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prefopt/server.hpp"

#include <sys/socket.h>

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <map>
#include <thread>

namespace prefopt {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  std::string_view path = target.substr(0, q);
  if (q != std::string_view::npos) {
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const std::string_view pair = rest.substr(0, amp);
      const auto eq = pair.find('=');
      t.query[std::string(pair.substr(0, eq))] =
          eq == std::string_view::npos ? "" : std::string(pair.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest = rest.substr(amp + 1);
    }
  }
  while (!path.empty()) {
    const auto start = path.find_first_not_of('/');
    if (start == std::string_view::npos) break;
    path = path.substr(start);
    const auto end = path.find('/');
    t.segments.emplace_back(path.substr(0, end));
    if (end == std::string_view::npos) break;
    path = path.substr(end);
  }
  return t;
}

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response make_response(const Request& req, http::status status, const json& body) {
  Response res{status, req.version()};
  res.set(http::field::server, "prefopt");
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  if (status != http::status::no_content) res.body() = body.dump();
  res.prepare_payload();
  return res;
}

Response error_response(const Request& req, http::status status, const std::string& message) {
  return make_response(req, status, json{{"error", message}});
}

json parse_body(const Request& req) {
  if (req.body().empty()) return json::object();
  try {
    return json::parse(req.body());
  } catch (const json::parse_error& e) {
    throw BadRequestError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

struct Server::Impl {
  std::shared_ptr<SessionManager> sessions;
  ServerOptions options;
  net::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::atomic<bool> running{false};
  std::uint16_t bound_port = 0;

  std::mutex conn_mu;
  std::condition_variable conn_cv;
  std::map<int, int> live_fds;  // connection id -> native socket
  int next_conn = 0;
  std::size_t active = 0;

  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;

  Response route(const Request& req);
  void serve_connection(tcp::socket socket, int conn);
  void stream(tcp::socket& socket, Request req, const std::shared_ptr<Session>& session,
              std::size_t from);
  void accept_loop();
};

Response Server::Impl::route(const Request& req) {
  if (req.method() == http::verb::options) {
    Response res = make_response(req, http::status::no_content, json());
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type, Authorization");
    return res;
  }
  if (!options.bearer_token.empty() &&
      req[http::field::authorization] != "Bearer " + options.bearer_token) {
    return error_response(req, http::status::unauthorized, "missing or wrong bearer token");
  }
  const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
  const auto& s = t.segments;
  const bool get = req.method() == http::verb::get;
  const bool post = req.method() == http::verb::post;
  try {
    if (s.size() == 1 && s[0] == "health" && get) {
      return make_response(req, http::status::ok, json{{"ok", true}});
    }
    if (s.empty() || s[0] != "sessions") {
      return error_response(req, http::status::not_found, "no such endpoint");
    }
    if (s.size() == 1) {
      if (post) {
        const std::string id = sessions->create(parse_body(req));
        json body = sessions->get(id)->summary();
        body["id"] = id;
        return make_response(req, http::status::created, body);
      }
      if (get) return make_response(req, http::status::ok, sessions->list());
      return error_response(req, http::status::method_not_allowed, "use GET or POST");
    }
    const auto session = sessions->get(s[1]);
    if (s.size() == 2 && get) return make_response(req, http::status::ok, session->summary());
    if (s.size() == 3 && s[2] == "prompt" && get) {
      return make_response(req, http::status::ok, session->prompt());
    }
    if (s.size() == 3 && s[2] == "log" && get) {
      return make_response(req, http::status::ok, session->log());
    }
    if (s.size() == 3 && s[2] == "feedback" && post) {
      const json body = parse_body(req);
      if (!body.is_object() || !body.contains("step") || !body.at("step").is_number_unsigned()) {
        throw BadRequestError("feedback: expected a non-negative integer 'step'");
      }
      if (!body.contains("choice") || !body.at("choice").is_string()) {
        throw BadRequestError("feedback: expected 'choice' = 'current' or 'previous'");
      }
      return make_response(req, http::status::ok,
                           session->submit(body.at("step").get<std::size_t>(),
                                           body.at("choice").get<std::string>()));
    }
    if (s.size() == 3 && s[2] == "stream") {
      return error_response(req, http::status::bad_request, "WebSocket upgrade required");
    }
    return error_response(req, http::status::not_found, "no such endpoint");
  } catch (const NotFoundError& e) {
    return error_response(req, http::status::not_found, e.what());
  } catch (const ConflictError& e) {
    return error_response(req, http::status::conflict, e.what());
  } catch (const BadRequestError& e) {
    return error_response(req, http::status::bad_request, e.what());
  } catch (const GoneError& e) {
    return error_response(req, http::status::gone, e.what());
  } catch (const CapacityError& e) {
    return error_response(req, http::status::service_unavailable, e.what());
  } catch (const std::exception& e) {
    return error_response(req, http::status::internal_server_error, e.what());
  }
}

void Server::Impl::stream(tcp::socket& socket, Request req, const std::shared_ptr<Session>& session,
                          std::size_t from) {
  websocket::stream<tcp::socket&> ws(socket);
  ws.accept(req);
  ws.text(true);
  std::size_t sent = from;
  auto idle = std::chrono::steady_clock::now();
  while (running) {
    const std::size_t count = session->wait_for_rows(sent, std::chrono::milliseconds(200));
    if (count > sent) {
      for (auto& row : session->rows_from(sent)) {
        row["type"] = "row";
        ws.write(net::buffer(row.dump()));
      }
      sent = count;
      idle = std::chrono::steady_clock::now();
    }
    if (session->status() == SessionStatus::finished && session->row_count() <= sent) {
      ws.write(net::buffer(json{{"type", "end"}, {"rows", sent}}.dump()));
      ws.close(websocket::close_code::normal);
      return;
    }
    if (std::chrono::steady_clock::now() - idle > std::chrono::seconds(5)) {
      ws.ping({});  // throws once the client is gone
      idle = std::chrono::steady_clock::now();
    }
  }
  ws.close(websocket::close_code::going_away);
}

void Server::Impl::serve_connection(tcp::socket socket, int conn) {
  beast::error_code ec;
  beast::flat_buffer buffer;
  try {
    while (running) {
      Request req;
      http::read(socket, buffer, req, ec);
      if (ec) break;
      const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
      if (websocket::is_upgrade(req)) {
        Response refusal;
        std::shared_ptr<Session> session;
        std::size_t from = 0;
        try {
          if (t.segments.size() != 3 || t.segments[0] != "sessions" || t.segments[2] != "stream") {
            throw NotFoundError("no such stream");
          }
          if (!options.bearer_token.empty() &&
              req[http::field::authorization] != "Bearer " + options.bearer_token &&
              (!t.query.count("token") || t.query.at("token") != options.bearer_token)) {
            refusal = error_response(req, http::status::unauthorized, "missing or wrong bearer token");
          } else {
            session = sessions->get(t.segments[1]);
            if (t.query.count("from")) from = std::stoul(t.query.at("from"));
          }
        } catch (const NotFoundError& e) {
          refusal = error_response(req, http::status::not_found, e.what());
        } catch (const std::exception& e) {
          refusal = error_response(req, http::status::bad_request, e.what());
        }
        if (!session) {
          refusal.keep_alive(false);
          http::write(socket, refusal, ec);
          break;
        }
        stream(socket, std::move(req), session, from);
        break;
      }
      Response res = route(req);
      const bool keep = res.keep_alive();
      http::write(socket, res, ec);
      if (ec || !keep) break;
    }
  } catch (const std::exception&) {
    // Peer went away mid-write; nothing to report.
  }
  socket.shutdown(tcp::socket::shutdown_both, ec);
  socket.close(ec);
  std::lock_guard lock(conn_mu);
  live_fds.erase(conn);
  --active;
  conn_cv.notify_all();
}

void Server::Impl::accept_loop() {
  while (running) {
    beast::error_code ec;
    tcp::socket socket(ioc);
    acceptor->accept(socket, ec);
    if (ec) {
      if (!running) break;
      continue;
    }
    int conn = 0;
    {
      std::lock_guard lock(conn_mu);
      conn = next_conn++;
      live_fds[conn] = socket.native_handle();
      ++active;
    }
    std::thread([this, s = std::move(socket), conn]() mutable {
      serve_connection(std::move(s), conn);
    }).detach();
  }
}

Server::Server(std::shared_ptr<SessionManager> sessions, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->sessions = std::move(sessions);
  impl_->options = std::move(options);
}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running) return;
  const auto address = net::ip::make_address(impl_->options.address);
  impl_->acceptor.emplace(impl_->ioc);
  const tcp::endpoint endpoint(address, impl_->options.port);
  impl_->acceptor->open(endpoint.protocol());
  impl_->acceptor->set_option(net::socket_base::reuse_address(true));
  impl_->acceptor->bind(endpoint);
  impl_->acceptor->listen();
  impl_->bound_port = impl_->acceptor->local_endpoint().port();
  impl_->running = true;
  {
    std::lock_guard lock(impl_->stop_mu);
    impl_->stopped = false;
  }
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void Server::stop() {
  if (!impl_ || !impl_->running.exchange(false)) return;
  // shutdown(2) wakes threads blocked in accept or read.
  ::shutdown(impl_->acceptor->native_handle(), SHUT_RDWR);
  {
    std::lock_guard lock(impl_->conn_mu);
    for (const auto& [id, fd] : impl_->live_fds) ::shutdown(fd, SHUT_RDWR);
  }
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  beast::error_code ec;
  impl_->acceptor->close(ec);
  {
    std::unique_lock lock(impl_->conn_mu);
    impl_->conn_cv.wait(lock, [&] { return impl_->active == 0; });
  }
  {
    std::lock_guard lock(impl_->stop_mu);
    impl_->stopped = true;
  }
  impl_->stop_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->stop_mu);
  impl_->stop_cv.wait(lock, [&] { return impl_->stopped; });
}

std::uint16_t Server::port() const { return impl_->bound_port; }

}  // namespace prefopt
