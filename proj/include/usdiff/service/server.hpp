#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>

#include "usdiff/service/engine.hpp"

namespace httplib {
class Server;
}

namespace usdiff::service {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8733;  // 0 picks a free port
  std::string diffusion_ckpt;
  std::string control_ckpt;
  int max_concurrent = 2;
  std::uint64_t seed = 0;  // seeds the stream that fills in missing request seeds

  /// USDIFF_DIFFUSION_CKPT / USDIFF_CONTROL_CKPT override the paths when set.
  void apply_env();
};

/// HTTP front end for GenerationEngine:
///   POST /generate  GET /health  GET /meta
/// Checkpoints load on a background thread; /generate and /meta answer 503
/// until loading finishes. At most `max_concurrent` generations run at once;
/// later requests wait for a slot.
class Server {
 public:
  explicit Server(ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket and starts loading. Returns the bound port.
  int bind();
  /// Serves until stop(). Call bind() first.
  void run();
  void stop();
  /// Blocks until loading finished; false if it failed.
  bool wait_ready();

  std::string state() const;

 private:
  void load();
  void routes();

  ServerConfig cfg_;
  std::unique_ptr<httplib::Server> http_;
  std::thread loader_;
  mutable std::mutex mu_;
  std::shared_ptr<const GenerationEngine> engine_;
  std::string load_error_;
  std::atomic<int> phase_{0};  // 0 loading, 1 ready, 2 failed
  std::counting_semaphore<64> slots_;
  std::mutex seed_mu_;
  std::uint64_t seed_counter_ = 0;
};

}  // namespace usdiff::service
