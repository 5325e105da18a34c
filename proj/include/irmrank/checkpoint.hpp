#pragma once

// Checkpoint file: one JSON header line, then a little-endian float64
// payload holding every named tensor back to back.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irmrank/config.hpp"
#include "irmrank/errors.hpp"
#include "irmrank/numerics/optimizer.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

inline constexpr const char* kCheckpointMagic = "IRMCKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  ParamStore params;
  OptimizerState optimizer;
  std::string rng_state;  // textual std::mt19937_64 state
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t split_hash = 0;

  bool operator==(const Checkpoint& o) const {
    return config == o.config && params == o.params && optimizer == o.optimizer && rng_state == o.rng_state &&
           epoch == o.epoch && split_hash == o.split_hash;
  }
};

namespace detail {

inline std::uint64_t fnv_bytes(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
}

inline double get_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= std::uint64_t{static_cast<unsigned char>(p[b])} << (8 * b);
  return std::bit_cast<double>(bits);
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex << x;
  return s.str();
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  std::string payload;
  nlohmann::json tensors = nlohmann::json::array();
  auto put = [&](const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
    for (double x : t.data()) detail::put_f64(payload, x);
  };
  for (const auto& [name, t] : ck.params.values()) put("param/" + name, t);
  for (const auto& [name, t] : ck.optimizer.first_moment) put("moment1/" + name, t);
  for (const auto& [name, t] : ck.optimizer.second_moment) put("moment2/" + name, t);
  const nlohmann::json header = {
      {"magic", kCheckpointMagic},
      {"version", kCheckpointVersion},
      {"config", config_json(ck.config)},
      {"epoch", ck.epoch},
      {"rng_state", ck.rng_state},
      {"split_hash", detail::hex64(ck.split_hash)},
      {"optimizer",
       {{"kind", optimizer_name(ck.optimizer.kind)},
        {"learning_rate", ck.optimizer.learning_rate},
        {"beta1", ck.optimizer.beta1},
        {"beta2", ck.optimizer.beta2},
        {"epsilon", ck.optimizer.epsilon},
        {"step", ck.optimizer.step}}},
      {"dtype", "f64le"},
      {"tensors", tensors},
      {"payload_bytes", payload.size()},
      {"checksum", detail::hex64(detail::fnv_bytes(payload))}};
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw InputError("checkpoint: write failed");
}

/// Parses a whole checkpoint or throws FormatError; never returns a
/// partially filled object.
inline Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint: missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (!h.is_object() || h.value("magic", "") != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
    if (h.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint: unsupported version " + h.at("version").dump() + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    if (h.at("dtype").get<std::string>() != "f64le") throw FormatError("checkpoint: unsupported dtype");
    const auto bytes = h.at("payload_bytes").get<std::size_t>();
    std::string payload(bytes, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
      throw FormatError("checkpoint: truncated payload (expected " + std::to_string(bytes) + " bytes, got " +
                        std::to_string(in.gcount()) + ")");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after payload");
    if (detail::hex64(detail::fnv_bytes(payload)) != h.at("checksum").get<std::string>())
      throw FormatError("checkpoint: checksum mismatch");

    ck.config = config_from_json(h.at("config"));
    ck.epoch = h.at("epoch").get<std::size_t>();
    ck.rng_state = h.at("rng_state").get<std::string>();
    ck.split_hash = std::stoull(h.at("split_hash").get<std::string>(), nullptr, 16);
    const auto& o = h.at("optimizer");
    ck.optimizer.kind = parse_optimizer(o.at("kind").get<std::string>());
    ck.optimizer.learning_rate = o.at("learning_rate").get<double>();
    ck.optimizer.beta1 = o.at("beta1").get<double>();
    ck.optimizer.beta2 = o.at("beta2").get<double>();
    ck.optimizer.epsilon = o.at("epsilon").get<double>();
    ck.optimizer.step = o.at("step").get<std::uint64_t>();

    std::size_t offset = 0;
    for (const auto& t : h.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      if (offset + 8 * n > payload.size()) throw FormatError("checkpoint: tensor " + name + " runs past the payload");
      Tensor value(shape);
      for (std::size_t i = 0; i < n; ++i) value.vec()[i] = detail::get_f64(payload.data() + offset + 8 * i);
      offset += 8 * n;
      const auto slash = name.find('/');
      const std::string group = name.substr(0, slash), key = name.substr(slash + 1);
      if (slash == std::string::npos) throw FormatError("checkpoint: bad tensor name " + name);
      if (group == "param") ck.params.add(key, std::move(value));
      else if (group == "moment1") ck.optimizer.first_moment.emplace(key, std::move(value));
      else if (group == "moment2") ck.optimizer.second_moment.emplace(key, std::move(value));
      else throw FormatError("checkpoint: unknown tensor group " + group);
    }
    if (offset != payload.size()) throw FormatError("checkpoint: payload has unlisted bytes");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  save_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace irm
