#pragma once

#include <atomic>
#include <memory>

#include "racelab/session.hpp"

namespace racelab {

class ServerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Serves one Session over HTTP + WebSocket on a single port:
//   GET /            static index page (from static_dir when present)
//   GET /track.json  the track document
//   GET /<file>      other static assets under static_dir
//   /ws              WebSocket: server sends hello then state messages;
//                    clients send input, control, hello, bye.
// The physics clock runs on the thread that calls run(); network I/O runs on
// a separate thread and reaches the session only through its mailbox.
class RealtimeServer {
 public:
  // Binds immediately; throws ServerError when the port is unavailable.
  explicit RealtimeServer(SessionConfig cfg);
  ~RealtimeServer();
  RealtimeServer(const RealtimeServer&) = delete;
  RealtimeServer& operator=(const RealtimeServer&) = delete;

  unsigned short port() const;

  struct RunStats {
    long long ticks{0};
    long long broadcasts{0};
    double sim_seconds{0.0};
    double wall_seconds{0.0};
    long long malformed{0};
  };
  // Blocks until stop(), a client "stop" control, SIGINT/SIGTERM, or
  // max_wall_seconds (0 = unlimited). Flushes session artifacts before returning.
  RunStats run(double max_wall_seconds = 0.0);
  void stop();  // thread-safe

  Session& session();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace racelab
