#pragma once

// Fixed-size little-endian UDP packets between runtime and operator
// console, plus their JSON mirrors for the browser bridge.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "exo/common.hpp"

namespace exo::telemetry {

inline constexpr std::size_t kStatePacketSize = 76;
inline constexpr std::size_t kCommandPacketSize = 30;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kTagLength = 16;

inline constexpr std::uint8_t kFlagNotReady = 0x01;
inline constexpr std::uint8_t kFlagFault = 0x02;

struct StatePacket {
  std::uint8_t version = kProtocolVersion;
  std::uint8_t mode = 0;  // 0 ZeroTorque, 1 Assist, 2 EStop
  std::uint8_t flags = 0;
  std::uint32_t seq = 0;
  std::uint64_t t_ms = 0;
  std::array<float, 4> angles{};
  std::array<float, 4> velocities{};
  std::array<float, 4> torque_cmd{};
  float scale = 0.0f;
  std::uint32_t missed_deadlines = 0;

  bool operator==(const StatePacket&) const = default;
};

enum class CommandType : std::uint8_t {
  Heartbeat = 0,
  SetMode = 1,
  SetScale = 2,
  EStop = 3,
  Reset = 4,
  Tag = 5,
};

std::string_view to_string(CommandType cmd);
std::optional<CommandType> parse_command_type(std::string_view text);

struct CommandPacket {
  std::uint8_t version = kProtocolVersion;
  CommandType cmd = CommandType::Heartbeat;
  float arg = 0.0f;
  std::string tag;  // at most 16 bytes, no NUL
  std::uint32_t seq = 0;

  bool operator==(const CommandPacket&) const = default;
};

enum class DecodeError { ShortBuffer, BadMagic, BadVersion, InvalidField };

std::string_view to_string(DecodeError e);

template <class T>
struct Decoded {
  std::optional<T> value;
  DecodeError error = DecodeError::ShortBuffer;
  std::string detail;

  bool ok() const noexcept { return value.has_value(); }
};

/// Throws ValidationError for packets that violate the field invariants.
std::array<std::uint8_t, kStatePacketSize> encode_state(const StatePacket& p);
std::array<std::uint8_t, kCommandPacketSize> encode_command(const CommandPacket& p);

/// Total: every byte string yields a packet or a typed error. Bytes past
/// the fixed size are ignored.
Decoded<StatePacket> decode_state(std::span<const std::uint8_t> bytes);
Decoded<CommandPacket> decode_command(std::span<const std::uint8_t> bytes);

/// Field names match the packet fields; "type" is "state" or "command".
nlohmann::json to_json(const StatePacket& p);
nlohmann::json to_json(const CommandPacket& p);
/// Accepts cmd as its integer code or name. Throws ValidationError.
CommandPacket command_from_json(const nlohmann::json& j);
StatePacket state_from_json(const nlohmann::json& j);

}  // namespace exo::telemetry
