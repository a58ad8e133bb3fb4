#include "racelab/realtime_server.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace racelab {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedStates = 8;

const char* kFallbackIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>racelab</title></head>
<body>
<p>racelab session server. Connect a client to <code>/ws</code>; the track is at
<a href="/track.json">/track.json</a>. Start <code>serve</code> with <code>--static DIR</code>
to serve the browser client from DIR.</p>
</body></html>
)";

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class WsClient;

// Registry of live WebSocket clients. Touched only on the I/O thread.
struct Hub {
  std::vector<std::weak_ptr<WsClient>> clients;
  void broadcast(const std::shared_ptr<const std::string>& msg);
};

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, Session& session, Hub& hub)
      : ws_(std::move(socket)), session_(session), hub_(hub) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.clients.push_back(self);
      self->send(std::make_shared<const std::string>(self->session_.hello_message()));
      self->read();
    });
  }

  // State frames are droppable: a slow reader loses frames, never the clock.
  void send(std::shared_ptr<const std::string> msg, bool droppable = false) {
    if (closing_) return;
    if (droppable && queue_.size() >= kMaxQueuedStates) return;
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) write();
  }

  void close_with_bye(const std::string& reason) {
    send(std::make_shared<const std::string>(R"({"type":"bye","reason":")" + reason + R"("})"));
    closing_ = true;
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;  // disconnect; the session keeps running
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->session_.handle_message(text);
      if (text.find(R"("bye")") != std::string::npos && text.find(R"("type")") != std::string::npos) {
        self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
        return;
      }
      self->read();
    });
  }

  void write() {
    ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Session& session_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closing_{false};
};

void Hub::broadcast(const std::shared_ptr<const std::string>& msg) {
  std::erase_if(clients, [](const auto& w) { return w.expired(); });
  for (auto& w : clients) {
    if (auto c = w.lock()) c->send(msg, true);
  }
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Session& session, Hub& hub, std::string track_doc)
      : stream_(std::move(socket)), session_(session), hub_(hub), track_doc_(std::move(track_doc)) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->handle();
    });
  }

  void handle() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() != "/ws") return respond(http::status::not_found, "text/plain", "no such endpoint\n");
      stream_.expires_never();
      std::make_shared<WsClient>(stream_.release_socket(), session_, hub_)->start(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      return respond(http::status::method_not_allowed, "text/plain", "GET only\n");
    }
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target == "/track.json") return respond(http::status::ok, "application/json", track_doc_);
    const auto& dir = session_.config().static_dir;
    if (target == "/" || target == "/index.html") {
      if (!dir.empty()) {
        if (auto body = read_file(dir / "index.html")) return respond(http::status::ok, "text/html", *body);
      }
      return respond(http::status::ok, "text/html", kFallbackIndex);
    }
    if (!dir.empty() && target.size() > 1 && target.find("..") == std::string::npos) {
      const auto path = dir / target.substr(1);
      if (auto body = read_file(path)) return respond(http::status::ok, mime_type(path), *body);
    }
    respond(http::status::not_found, "text/plain", "not found\n");
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "racelab");
    res->set(http::field::content_type, type);
    res->set(http::field::cache_control, "no-store");
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->need_eof()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  Session& session_;
  Hub& hub_;
  std::string track_doc_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct RealtimeServer::Impl {
  explicit Impl(SessionConfig cfg)
      : session(std::move(cfg)), acceptor(ioc), signals(ioc, SIGINT, SIGTERM), track_doc(track_to_text(*session.config().track)) {
    beast::error_code ec;
    const tcp::endpoint ep(asio::ip::make_address("0.0.0.0"), session.config().port);
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw ServerError("cannot listen on port " + std::to_string(session.config().port) + ": " + ec.message());
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpConnection>(std::move(socket), session, hub, track_doc)->start();
      accept();
    });
  }

  Session session;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::signal_set signals;
  std::string track_doc;
  Hub hub;
  std::atomic<bool> stop{false};
};

RealtimeServer::RealtimeServer(SessionConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

RealtimeServer::~RealtimeServer() = default;

unsigned short RealtimeServer::port() const { return impl_->acceptor.local_endpoint().port(); }

Session& RealtimeServer::session() { return impl_->session; }

void RealtimeServer::stop() { impl_->stop = true; }

RealtimeServer::RunStats RealtimeServer::run(double max_wall_seconds) {
  Impl& s = *impl_;
  s.accept();
  s.signals.async_wait([&s](beast::error_code ec, int) {
    if (!ec) s.stop = true;
  });
  auto guard = asio::make_work_guard(s.ioc);
  std::thread io([&s] { s.ioc.run(); });

  using clock = std::chrono::steady_clock;
  const auto dt = std::chrono::duration<double>(s.session.config().env.physics_dt);
  const auto start = clock::now();
  RunStats stats;
  std::exception_ptr failure;
  try {
    while (!s.stop && !s.session.stop_requested()) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(dt * static_cast<double>(stats.ticks + 1));
      std::this_thread::sleep_until(due);
      const bool broadcast = s.session.tick();
      ++stats.ticks;
      if (broadcast) {
        auto msg = std::make_shared<const std::string>(s.session.state_message());
        asio::post(s.ioc, [&s, msg] { s.hub.broadcast(msg); });
        ++stats.broadcasts;
      }
      if (max_wall_seconds > 0.0 && std::chrono::duration<double>(clock::now() - start).count() >= max_wall_seconds) {
        break;
      }
    }
  } catch (...) {
    failure = std::current_exception();
  }
  stats.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  stats.sim_seconds = static_cast<double>(stats.ticks) * s.session.config().env.physics_dt;
  stats.malformed = s.session.malformed();
  s.session.finish();

  // Say goodbye, give the writes a moment, then stop the I/O thread.
  asio::post(s.ioc, [&s] {
    for (auto& w : s.hub.clients) {
      if (auto c = w.lock()) c->close_with_bye("session ended");
    }
    beast::error_code ignored;
    s.acceptor.close(ignored);
    s.signals.cancel();
  });
  guard.reset();
  asio::steady_timer timer(s.ioc, std::chrono::milliseconds(500));
  timer.async_wait([&s](beast::error_code) { s.ioc.stop(); });
  io.join();
  if (failure) std::rethrow_exception(failure);
  return stats;
}

}  // namespace racelab
