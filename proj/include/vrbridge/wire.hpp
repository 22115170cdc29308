#pragma once

// Companion-viewer wire format. Binary frames carry a fixed 16-byte header
// followed by raw RGBA8 rows; control traffic is JSON text.
//
//   0  'V' 'R' 'B' 'F'
//   4  seq      u32 LE
//   8  eye      u8   0 left, 1 right, 2 side-by-side, 3 companion
//   9  format   u8   0 = rgba8
//  10  width    u16 LE
//  12  height   u16 LE
//  14  reserved u16  zero

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/framebuffer.hpp"
#include "vrbridge/frametime.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::wire {

using nlohmann::json;

inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::uint8_t kFormatRgba8 = 0;

enum class StreamEye : std::uint8_t { Left = 0, Right = 1, SideBySide = 2, Companion = 3 };

struct FrameHeader {
  std::uint32_t seq = 0;
  StreamEye eye = StreamEye::SideBySide;
  std::uint8_t format = kFormatRgba8;
  std::uint16_t width = 0, height = 0;
  std::uint16_t reserved = 0;

  std::size_t payload_size() const { return static_cast<std::size_t>(width) * height * 4; }
  bool operator==(const FrameHeader&) const = default;
};

inline std::array<std::uint8_t, kHeaderSize> encode_header(const FrameHeader& h) {
  std::array<std::uint8_t, kHeaderSize> b{'V', 'R', 'B', 'F'};
  for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<std::uint8_t>(h.seq >> (8 * i));
  b[8] = static_cast<std::uint8_t>(h.eye);
  b[9] = h.format;
  b[10] = static_cast<std::uint8_t>(h.width);
  b[11] = static_cast<std::uint8_t>(h.width >> 8);
  b[12] = static_cast<std::uint8_t>(h.height);
  b[13] = static_cast<std::uint8_t>(h.height >> 8);
  b[14] = static_cast<std::uint8_t>(h.reserved);
  b[15] = static_cast<std::uint8_t>(h.reserved >> 8);
  return b;
}

/// Validates the header alone; with a full message it also checks the payload length.
inline FrameHeader parse_header(std::span<const std::uint8_t> bytes, bool whole_message = true) {
  if (bytes.size() < kHeaderSize) fail(ErrorCode::ParseError, "frame shorter than the 16-byte header");
  if (bytes[0] != 'V' || bytes[1] != 'R' || bytes[2] != 'B' || bytes[3] != 'F') fail(ErrorCode::ParseError, "bad frame magic");
  FrameHeader h;
  h.seq = static_cast<std::uint32_t>(bytes[4]) | static_cast<std::uint32_t>(bytes[5]) << 8 |
          static_cast<std::uint32_t>(bytes[6]) << 16 | static_cast<std::uint32_t>(bytes[7]) << 24;
  if (bytes[8] > 3) fail(ErrorCode::ParseError, "unknown eye code " + std::to_string(bytes[8]));
  h.eye = static_cast<StreamEye>(bytes[8]);
  h.format = bytes[9];
  if (h.format != kFormatRgba8) fail(ErrorCode::ParseError, "unknown pixel format " + std::to_string(h.format));
  h.width = static_cast<std::uint16_t>(bytes[10] | bytes[11] << 8);
  h.height = static_cast<std::uint16_t>(bytes[12] | bytes[13] << 8);
  h.reserved = static_cast<std::uint16_t>(bytes[14] | bytes[15] << 8);
  if (h.reserved != 0) fail(ErrorCode::ParseError, "reserved header bits set");
  if (h.width == 0 || h.height == 0) fail(ErrorCode::ParseError, "empty frame dimensions");
  if (whole_message && bytes.size() != kHeaderSize + h.payload_size())
    fail(ErrorCode::ParseError, "payload is " + std::to_string(bytes.size() - kHeaderSize) + " bytes, header says " +
                                    std::to_string(h.payload_size()));
  return h;
}

inline std::string encode_frame(std::uint32_t seq, StreamEye eye, const render::Framebuffer& fb) {
  if (fb.width <= 0 || fb.height <= 0 || fb.width > 0xffff || fb.height > 0xffff)
    fail(ErrorCode::DimMismatch, "frame does not fit the wire header");
  const auto h = encode_header({seq, eye, kFormatRgba8, static_cast<std::uint16_t>(fb.width),
                                static_cast<std::uint16_t>(fb.height), 0});
  std::string out(kHeaderSize + fb.color.size(), '\0');
  std::copy(h.begin(), h.end(), out.begin());
  std::copy(fb.color.begin(), fb.color.end(), out.begin() + kHeaderSize);
  return out;
}

inline render::Framebuffer decode_frame(std::span<const std::uint8_t> bytes, FrameHeader* header = nullptr) {
  const FrameHeader h = parse_header(bytes);
  render::Framebuffer fb(h.width, h.height);
  std::copy(bytes.begin() + kHeaderSize, bytes.end(), fb.color.begin());
  if (header) *header = h;
  return fb;
}

inline std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// ------------------------------------------------------------ control messages

enum class Stream { SideBySide, Companion, None };

inline const char* to_string(Stream s) {
  switch (s) {
    case Stream::SideBySide: return "sbs";
    case Stream::Companion: return "companion";
    case Stream::None: return "none";
  }
  return "?";
}

struct PoseMsg {
  xform::RigidTransform pose;
};
struct ParamMsg {
  std::string node, name;
  json value;
};
struct SubscribeMsg {
  Stream stream = Stream::SideBySide;
};

using ClientMessage = std::variant<PoseMsg, ParamMsg, SubscribeMsg>;

namespace detail {

inline std::array<double, 4> numbers(const json& j, std::size_t n, const char* what) {
  if (!j.is_array() || j.size() != n) fail(ErrorCode::SchemaError, std::string(what) + " must be an array of " + std::to_string(n) + " numbers");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_number()) fail(ErrorCode::SchemaError, std::string(what) + " must contain numbers");
    out[i] = j[i].get<double>();
    if (!std::isfinite(out[i])) fail(ErrorCode::SchemaError, std::string(what) + " must be finite");
  }
  return out;
}

inline const std::string& string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) fail(ErrorCode::SchemaError, std::string("\"") + key + "\" must be a string");
  return j.at(key).get_ref<const std::string&>();
}

}  // namespace detail

/// Pose is an absolute snapshot: position [x,y,z] m, orientation [qx,qy,qz,qw].
inline ClientMessage parse_client_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    fail(ErrorCode::ParseError, "message is not valid JSON");
  }
  if (!j.is_object()) fail(ErrorCode::SchemaError, "message must be a JSON object");
  const std::string& type = detail::string_field(j, "type");
  if (type == "pose") {
    if (!j.contains("position") || !j.contains("orientation")) fail(ErrorCode::SchemaError, "pose needs position and orientation");
    const auto p = detail::numbers(j.at("position"), 3, "position");
    const auto q = detail::numbers(j.at("orientation"), 4, "orientation");
    const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (std::abs(qn - 1.0) > 1e-3) fail(ErrorCode::SchemaError, "orientation must be a unit quaternion");
    return PoseMsg{{xform::QuatRotation::from_components(q[0], q[1], q[2], q[3]), {p[0], p[1], p[2]}}};
  }
  if (type == "param") {
    if (!j.contains("value")) fail(ErrorCode::SchemaError, "param needs a value");
    return ParamMsg{detail::string_field(j, "node"), detail::string_field(j, "name"), j.at("value")};
  }
  if (type == "subscribe") {
    const std::string& s = detail::string_field(j, "stream");
    if (s == "sbs" || s == "side-by-side") return SubscribeMsg{Stream::SideBySide};
    if (s == "companion") return SubscribeMsg{Stream::Companion};
    if (s == "none") return SubscribeMsg{Stream::None};
    fail(ErrorCode::SchemaError, "unknown stream '" + s + "'");
  }
  fail(ErrorCode::SchemaError, "unknown message type '" + type + "'");
}

inline json pose_json(const xform::RigidTransform& p) {
  const auto& q = p.rotation;
  return {{"position", {p.translation.x, p.translation.y, p.translation.z}}, {"orientation", {q.x, q.y, q.z, q.w}}};
}

inline std::string error_message(const std::string& reason) { return json{{"type", "error"}, {"reason", reason}}.dump(); }

inline std::string timing_message(const frametime::FrameTimingRecord& r, const xform::RigidTransform& head) {
  json j = frametime::record_json(r);
  j["type"] = "timing";
  j["pose"] = pose_json(head);
  return j.dump();
}

}  // namespace vrbridge::wire
