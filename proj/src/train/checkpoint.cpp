#include "usdiff/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "usdiff/io/hash.hpp"

namespace usdiff::train {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'U', 'S', 'D', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

void put_floats(std::string& out, std::span<const float> v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : b_(bytes), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("truncated: checkpoint ends early");
  }
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(std::span<float> out) {
    need(out.size() * sizeof(float));
    std::memcpy(out.data(), b_.data() + pos_, out.size() * sizeof(float));
    pos_ += out.size() * sizeof(float);
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string hex_to_bytes(const std::string& hex) {
  std::string out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) out.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

std::string bytes_to_hex(const std::string& b) {
  static const char* d = "0123456789abcdef";
  std::string out;
  for (unsigned char c : b) {
    out.push_back(d[c >> 4]);
    out.push_back(d[c & 15]);
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(Checkpoint& ckpt) {
  const auto& params = ckpt.params.params();
  const bool has_optim = ckpt.optim.m.size() == params.size();
  json blobs = json::array();
  for (const auto& p : params) blobs.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"frozen", p.frozen}});

  json h;
  h["stage"] = ckpt.stage;
  h["step"] = ckpt.step;
  h["seed"] = ckpt.seed;
  h["config"] = ckpt.config;
  h["model"] = ckpt.model;
  h["parent_hash"] = ckpt.parent_hash;
  h["latent_scale"] = ckpt.latent_scale;
  h["rng_state"] = ckpt.rng_state;
  h["trained_on"] = ckpt.trained_on;
  h["blobs"] = blobs;
  h["optimizer"] = {{"present", has_optim},
                    {"step_count", ckpt.optim.step_count},
                    {"lr", ckpt.optim.lr},
                    {"beta1", ckpt.optim.beta1},
                    {"beta2", ckpt.optim.beta2},
                    {"eps", ckpt.optim.eps_hat}};
  const auto header = h.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& p : params) put_floats(out, p.tensor.data());
  if (has_optim) {
    // Moments for trainable blobs only, in blob order: all m, then all v.
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!params[i].frozen) put_floats(out, ckpt.optim.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!params[i].frozen) put_floats(out, ckpt.optim.v[i]);
  }
  const auto digest = io::sha256_hex(out);
  out += hex_to_bytes(digest);
  ckpt.hash = digest;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("bad magic: not a usdiff checkpoint");
  }
  if (bytes.size() < sizeof kMagic + 4 + 8 + 32) throw CheckpointError("truncated: checkpoint too short");
  const std::size_t body = bytes.size() - 32;
  Reader r(bytes, body);
  r.str(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("version mismatch: file has version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto digest = io::sha256_hex(bytes.data(), body);
  if (digest != bytes_to_hex(bytes.substr(body))) {
    throw CheckpointError("hash mismatch: checkpoint content does not match its digest (corrupt or truncated)");
  }

  const auto header_len = r.get<std::uint64_t>();
  json h;
  try {
    h = json::parse(r.str(header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }

  Checkpoint c;
  try {
    c.stage = h.at("stage").get<std::string>();
    c.step = h.at("step").get<std::int64_t>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.config = h.at("config");
    c.model = h.at("model");
    c.parent_hash = h.at("parent_hash").get<std::string>();
    c.latent_scale = h.at("latent_scale").get<double>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.trained_on = h.at("trained_on").get<std::vector<std::string>>();
    for (const auto& b : h.at("blobs")) {
      const auto name = b.at("name").get<std::string>();
      if (c.params.find(name)) throw CheckpointError("malformed header: duplicate blob '" + name + "'");
      auto t = c.params.add(name, b.at("shape").get<nn::Shape>());
      c.params.params().back().frozen = b.at("frozen").get<bool>();
      t.set_requires_grad(!c.params.params().back().frozen);
      r.floats(t.data());
    }
    const auto& o = h.at("optimizer");
    c.optim.step_count = o.at("step_count").get<std::int64_t>();
    c.optim.lr = o.at("lr").get<double>();
    c.optim.beta1 = o.at("beta1").get<double>();
    c.optim.beta2 = o.at("beta2").get<double>();
    c.optim.eps_hat = o.at("eps").get<double>();
    if (o.at("present").get<bool>()) {
      c.optim.init(c.params);
      auto& ps = c.params.params();
      for (std::size_t i = 0; i < ps.size(); ++i)
        if (!ps[i].frozen) r.floats(c.optim.m[i]);
      for (std::size_t i = 0; i < ps.size(); ++i)
        if (!ps[i].frozen) r.floats(c.optim.v[i]);
      c.optim.step_count = o.at("step_count").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }
  if (r.pos() != body) throw CheckpointError("malformed header: trailing bytes after blobs");
  c.hash = digest;
  return c;
}

void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("checkpoint: cannot rename to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

std::string blob_hash(const nn::ParamStore<float>& params, const std::string& prefix) {
  io::Sha256 h;
  for (const auto& p : params.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    h.update(p.name);
    h.update(nn::to_string(p.tensor.shape()));
    const auto d = p.tensor.data();
    h.update(d.data(), d.size() * sizeof(float));
  }
  return h.hex();
}

}  // namespace usdiff::train
