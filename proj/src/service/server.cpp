#include "usdiff/service/server.hpp"

#include <httplib.h>

#include <cstdlib>

#include "usdiff/io/hash.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::service {

using nlohmann::json;

void ServerConfig::apply_env() {
  if (const char* p = std::getenv("USDIFF_DIFFUSION_CKPT"); p && *p) diffusion_ckpt = p;
  if (const char* p = std::getenv("USDIFF_CONTROL_CKPT"); p && *p) control_ckpt = p;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error(httplib::Response& res, int status, const std::string& code, const std::string& msg,
           const std::string& field = {}) {
  json j = {{"error", code}, {"message", msg}};
  if (!field.empty()) j["field"] = field;
  reply(res, status, j);
}

}  // namespace

Server::Server(ServerConfig cfg)
    : cfg_(std::move(cfg)), http_(std::make_unique<httplib::Server>()), slots_(0) {
  if (cfg_.max_concurrent < 1 || cfg_.max_concurrent > 64) throw std::invalid_argument("max_concurrent must be in [1, 64]");
  if (cfg_.diffusion_ckpt.empty() && cfg_.control_ckpt.empty())
    throw std::invalid_argument("serve: no checkpoint given (--diffusion/--control or USDIFF_DIFFUSION_CKPT)");
  slots_.release(cfg_.max_concurrent);
  routes();
}

Server::~Server() {
  stop();
  if (loader_.joinable()) loader_.join();
}

std::string Server::state() const {
  switch (phase_.load()) {
    case 0: return "loading";
    case 1: return "ok";
    default: return "error";
  }
}

void Server::load() {
  try {
    auto e = std::make_shared<const GenerationEngine>(cfg_.diffusion_ckpt, cfg_.control_ckpt);
    std::lock_guard lk(mu_);
    engine_ = std::move(e);
    phase_ = 1;
  } catch (const std::exception& ex) {
    std::lock_guard lk(mu_);
    load_error_ = ex.what();
    phase_ = 2;
  }
  phase_.notify_all();
}

bool Server::wait_ready() {
  int p;
  while ((p = phase_.load()) == 0) phase_.wait(0);
  return p == 1;
}

int Server::bind() {
  int port = cfg_.port == 0 ? http_->bind_to_any_port(cfg_.host) : (http_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
  if (port < 0) throw std::runtime_error("serve: cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  if (!loader_.joinable()) loader_ = std::thread([this] { load(); });
  return port;
}

void Server::run() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_) http_->stop();
}

void Server::routes() {
  http_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  http_->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  http_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    json j = {{"status", state()}};
    std::lock_guard lk(mu_);
    if (engine_) {
      j["checkpoints"] = {{"diffusion", engine_->diffusion_hash()},
                          {"control", engine_->control_available() ? json(engine_->control_hash()) : json(nullptr)}};
    }
    if (!load_error_.empty()) j["message"] = load_error_;
    reply(res, 200, j);
  });

  auto engine = [this]() {
    std::lock_guard lk(mu_);
    return engine_;
  };

  http_->Get("/meta", [this, engine](const httplib::Request&, httplib::Response& res) {
    auto e = engine();
    if (!e) return error(res, 503, "unavailable", "checkpoints are " + state());
    reply(res, 200, e->meta());
  });

  http_->Post("/generate", [this, engine](const httplib::Request& req, httplib::Response& res) {
    auto e = engine();
    if (!e) return error(res, 503, "unavailable", "checkpoints are " + state());
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) return error(res, 400, "invalid_request", "body is not valid JSON", "body");
    std::uint64_t fallback;
    {
      std::lock_guard lk(seed_mu_);
      fallback = Rng::derive(cfg_.seed, seed_counter_++) >> 11;  // fits a JSON double exactly
    }
    GenerationRequest r;
    try {
      r = parse_request(body, e->image_size(), e->max_timestep(), fallback);
    } catch (const RequestError& ex) {
      return error(res, 400, "invalid_request", ex.what(), ex.field());
    }
    if (r.mask && !e->control_available())
      return error(res, 409, "control_unavailable", "mask supplied but no control checkpoint is loaded", "mask");

    slots_.acquire();
    GenerationResult out;
    try {
      out = e->generate(r);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();

    json images = json::array();
    for (const auto& png : out.png) {
      images.push_back(io::base64_encode({reinterpret_cast<const std::uint8_t*>(png.data()), png.size()}));
    }
    reply(res, 200,
          {{"images", images},
           {"seed_used", out.seed_used},
           {"timings_ms", {{"sampling", out.sampling_ms}, {"encode", out.encode_ms}}},
           {"request", request_echo(r)}});
  });

  http_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& ex) {
      error(res, 500, "internal", ex.what());
    } catch (...) {
      error(res, 500, "internal", "unknown error");
    }
  });
}

}  // namespace usdiff::service
