#include <bit>
#include <cmath>
#include <cstring>

#include "exo/telemetry.hpp"

namespace exo::telemetry {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

namespace {

constexpr std::array<std::uint8_t, 4> kStateMagic{'E', 'X', 'S', 'T'};
constexpr std::array<std::uint8_t, 4> kCommandMagic{'E', 'X', 'C', 'M'};

class Writer {
 public:
  explicit Writer(std::uint8_t* out) : out_(out) {}
  template <class T>
  void put(T v) {
    std::memcpy(out_ + pos_, &v, sizeof(T));
    pos_ += sizeof(T);
  }
  void bytes(const std::uint8_t* src, std::size_t n) {
    std::memcpy(out_ + pos_, src, n);
    pos_ += n;
  }

 private:
  std::uint8_t* out_;
  std::size_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::uint8_t* in) : in_(in) {}
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, in_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::uint8_t* skip(std::size_t n) {
    const std::uint8_t* p = in_ + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::uint8_t* in_;
  std::size_t pos_ = 0;
};

template <class T>
Decoded<T> fail(DecodeError e, std::string detail) {
  Decoded<T> d;
  d.error = e;
  d.detail = std::move(detail);
  return d;
}

bool all_finite(const std::array<float, 4>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_state(const StatePacket& p) {
  if (p.version != kProtocolVersion) throw ValidationError("version", "unsupported version");
  if (p.mode > 2) throw ValidationError("mode", "must be 0, 1 or 2");
  if ((p.flags & ~(kFlagNotReady | kFlagFault)) != 0) throw ValidationError("flags", "unknown bits set");
  if (!all_finite(p.angles)) throw ValidationError("angles", "non-finite value");
  if (!all_finite(p.velocities)) throw ValidationError("velocities", "non-finite value");
  if (!all_finite(p.torque_cmd)) throw ValidationError("torque_cmd", "non-finite value");
  if (!std::isfinite(p.scale)) throw ValidationError("scale", "non-finite value");
}

void check_command(const CommandPacket& p) {
  if (p.version != kProtocolVersion) throw ValidationError("version", "unsupported version");
  if (static_cast<std::uint8_t>(p.cmd) > 5) throw ValidationError("cmd", "unknown command");
  if (!std::isfinite(p.arg)) throw ValidationError("arg", "non-finite value");
  if (p.cmd == CommandType::SetScale && !(p.arg >= 0.0f && p.arg <= 1.0f)) {
    throw ValidationError("arg", "set_scale needs an argument in [0, 1]");
  }
  if (p.cmd == CommandType::SetMode && p.arg != 0.0f && p.arg != 1.0f) {
    throw ValidationError("arg", "set_mode needs 0 (ZeroTorque) or 1 (Assist)");
  }
  if (p.tag.size() > kTagLength) throw ValidationError("tag", "longer than 16 bytes");
  if (p.tag.find('\0') != std::string::npos) throw ValidationError("tag", "contains NUL");
}

}  // namespace

std::string_view to_string(CommandType cmd) {
  switch (cmd) {
    case CommandType::Heartbeat: return "heartbeat";
    case CommandType::SetMode: return "set_mode";
    case CommandType::SetScale: return "set_scale";
    case CommandType::EStop: return "estop";
    case CommandType::Reset: return "reset";
    case CommandType::Tag: return "tag";
  }
  return "?";
}

std::optional<CommandType> parse_command_type(std::string_view text) {
  for (std::uint8_t c = 0; c <= 5; ++c) {
    const auto type = static_cast<CommandType>(c);
    if (to_string(type) == text) return type;
  }
  return std::nullopt;
}

std::string_view to_string(DecodeError e) {
  switch (e) {
    case DecodeError::ShortBuffer: return "short buffer";
    case DecodeError::BadMagic: return "bad magic";
    case DecodeError::BadVersion: return "bad version";
    case DecodeError::InvalidField: return "invalid field";
  }
  return "?";
}

std::array<std::uint8_t, kStatePacketSize> encode_state(const StatePacket& p) {
  check_state(p);
  std::array<std::uint8_t, kStatePacketSize> out{};
  Writer w(out.data());
  w.bytes(kStateMagic.data(), 4);
  w.put(p.version);
  w.put(p.mode);
  w.put(p.flags);
  w.put(std::uint8_t{0});
  w.put(p.seq);
  w.put(p.t_ms);
  for (float v : p.angles) w.put(v);
  for (float v : p.velocities) w.put(v);
  for (float v : p.torque_cmd) w.put(v);
  w.put(p.scale);
  w.put(p.missed_deadlines);
  return out;
}

Decoded<StatePacket> decode_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kStatePacketSize) {
    return fail<StatePacket>(DecodeError::ShortBuffer,
                             std::to_string(bytes.size()) + " of 76 bytes");
  }
  Reader r(bytes.data());
  if (std::memcmp(r.skip(4), kStateMagic.data(), 4) != 0) {
    return fail<StatePacket>(DecodeError::BadMagic, "expected EXST");
  }
  StatePacket p;
  p.version = r.get<std::uint8_t>();
  if (p.version != kProtocolVersion) {
    return fail<StatePacket>(DecodeError::BadVersion, "version " + std::to_string(p.version));
  }
  p.mode = r.get<std::uint8_t>();
  p.flags = r.get<std::uint8_t>();
  r.skip(1);
  p.seq = r.get<std::uint32_t>();
  p.t_ms = r.get<std::uint64_t>();
  for (float& v : p.angles) v = r.get<float>();
  for (float& v : p.velocities) v = r.get<float>();
  for (float& v : p.torque_cmd) v = r.get<float>();
  p.scale = r.get<float>();
  p.missed_deadlines = r.get<std::uint32_t>();
  try {
    check_state(p);
  } catch (const ValidationError& e) {
    return fail<StatePacket>(DecodeError::InvalidField, e.what());
  }
  Decoded<StatePacket> d;
  d.value = p;
  return d;
}

std::array<std::uint8_t, kCommandPacketSize> encode_command(const CommandPacket& p) {
  check_command(p);
  std::array<std::uint8_t, kCommandPacketSize> out{};
  Writer w(out.data());
  w.bytes(kCommandMagic.data(), 4);
  w.put(p.version);
  w.put(static_cast<std::uint8_t>(p.cmd));
  w.put(p.arg);
  std::array<std::uint8_t, kTagLength> tag{};
  std::memcpy(tag.data(), p.tag.data(), p.tag.size());
  w.bytes(tag.data(), tag.size());
  w.put(p.seq);
  return out;
}

Decoded<CommandPacket> decode_command(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCommandPacketSize) {
    return fail<CommandPacket>(DecodeError::ShortBuffer,
                               std::to_string(bytes.size()) + " of 30 bytes");
  }
  Reader r(bytes.data());
  if (std::memcmp(r.skip(4), kCommandMagic.data(), 4) != 0) {
    return fail<CommandPacket>(DecodeError::BadMagic, "expected EXCM");
  }
  CommandPacket p;
  p.version = r.get<std::uint8_t>();
  if (p.version != kProtocolVersion) {
    return fail<CommandPacket>(DecodeError::BadVersion, "version " + std::to_string(p.version));
  }
  const auto cmd = r.get<std::uint8_t>();
  if (cmd > 5) return fail<CommandPacket>(DecodeError::InvalidField, "cmd " + std::to_string(cmd));
  p.cmd = static_cast<CommandType>(cmd);
  p.arg = r.get<float>();
  const std::uint8_t* tag = r.skip(kTagLength);
  std::size_t len = 0;
  while (len < kTagLength && tag[len] != 0) ++len;
  for (std::size_t i = len; i < kTagLength; ++i) {
    if (tag[i] != 0) return fail<CommandPacket>(DecodeError::InvalidField, "tag: bytes after NUL");
  }
  p.tag.assign(reinterpret_cast<const char*>(tag), len);
  p.seq = r.get<std::uint32_t>();
  try {
    check_command(p);
  } catch (const ValidationError& e) {
    return fail<CommandPacket>(DecodeError::InvalidField, e.what());
  }
  Decoded<CommandPacket> d;
  d.value = p;
  return d;
}

nlohmann::json to_json(const StatePacket& p) {
  return {{"type", "state"},
          {"version", p.version},
          {"mode", p.mode},
          {"flags", p.flags},
          {"seq", p.seq},
          {"t_ms", p.t_ms},
          {"angles", p.angles},
          {"velocities", p.velocities},
          {"torque_cmd", p.torque_cmd},
          {"scale", p.scale},
          {"missed_deadlines", p.missed_deadlines}};
}

nlohmann::json to_json(const CommandPacket& p) {
  return {{"type", "command"},
          {"version", p.version},
          {"cmd", static_cast<int>(p.cmd)},
          {"arg", p.arg},
          {"tag", p.tag},
          {"seq", p.seq}};
}

namespace {

template <class T>
T field(const nlohmann::json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(name, e.what());
  }
}

}  // namespace

CommandPacket command_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("command", "expected a JSON object");
  if (!j.contains("cmd")) throw ValidationError("cmd", "missing");
  CommandPacket p;
  const auto& cmd = j.at("cmd");
  if (cmd.is_string()) {
    const auto parsed = parse_command_type(cmd.get<std::string>());
    if (!parsed) throw ValidationError("cmd", "unknown command '" + cmd.get<std::string>() + "'");
    p.cmd = *parsed;
  } else if (cmd.is_number_integer() && cmd.get<int>() >= 0 && cmd.get<int>() <= 5) {
    p.cmd = static_cast<CommandType>(cmd.get<int>());
  } else {
    throw ValidationError("cmd", "expected a command name or code 0..5");
  }
  p.version = field<std::uint8_t>(j, "version", kProtocolVersion);
  p.arg = field<float>(j, "arg", 0.0f);
  p.tag = field<std::string>(j, "tag", "");
  p.seq = field<std::uint32_t>(j, "seq", 0);
  check_command(p);
  return p;
}

StatePacket state_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("state", "expected a JSON object");
  StatePacket p;
  p.version = field<std::uint8_t>(j, "version", kProtocolVersion);
  p.mode = field<std::uint8_t>(j, "mode", 0);
  p.flags = field<std::uint8_t>(j, "flags", 0);
  p.seq = field<std::uint32_t>(j, "seq", 0);
  p.t_ms = field<std::uint64_t>(j, "t_ms", 0);
  p.angles = field<std::array<float, 4>>(j, "angles", {});
  p.velocities = field<std::array<float, 4>>(j, "velocities", {});
  p.torque_cmd = field<std::array<float, 4>>(j, "torque_cmd", {});
  p.scale = field<float>(j, "scale", 0.0f);
  p.missed_deadlines = field<std::uint32_t>(j, "missed_deadlines", 0);
  check_state(p);
  return p;
}

}  // namespace exo::telemetry
