#pragma once

// Simulated headset runtime: vsync clock with running start, blocking pose
// acquisition, per-eye submission and present/drop decisions.
//
// Schedule (all ms, T = 1000 / refreshHz): frame slot k starts when
// wait_get_poses returns at R_k = k*T - runningStart. Its poses are predicted
// for k*T + vsyncToPhotons. The frame must be submitted by the next latch
// point R_{k+1}; otherwise it is dropped and shown at the first later latch.
// After end_frame the next wait returns at the first R_m >= now, m > k.

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/framebuffer.hpp"
#include "vrbridge/frametime.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::hmd {

using xform::Mat4;
using xform::QuatRotation;
using xform::RigidTransform;
using xform::Vec3;

enum class ClockKind { Virtual, Real };
enum class Eye { Left = 0, Right = 1 };

struct HmdConfig {
  int eyeWidthPx = 1080;
  int eyeHeightPx = 1200;
  double refreshHz = 90.0;
  double fovDeg = 110.0;
  double ipdM = 0.064;
  double nearM = 0.1;
  double farM = 100.0;
  double distortionK1 = 0.22;
  double distortionK2 = 0.24;
  double runningStartMs = 3.0;
  double vsyncToPhotonsMs = 3.0;
  double compositorMs = 1.0;
  ClockKind clock = ClockKind::Virtual;

  double period_ms() const { return 1000.0 / refreshHz; }
};

inline void validate(const HmdConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::ConfigError, std::string(name) + " must be positive");
  };
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::ConfigError, std::string(name) + " must not be negative");
  };
  if (c.eyeWidthPx <= 0 || c.eyeHeightPx <= 0) fail(ErrorCode::ConfigError, "eye dimensions must be positive");
  if (c.eyeWidthPx > 16384 || c.eyeHeightPx > 16384) fail(ErrorCode::ConfigError, "eye dimensions too large");
  positive(c.refreshHz, "refreshHz");
  positive(c.fovDeg, "fovDeg");
  if (c.fovDeg >= 180.0) fail(ErrorCode::ConfigError, "fovDeg must be below 180");
  nonneg(c.ipdM, "ipdM");
  positive(c.nearM, "nearM");
  positive(c.farM, "farM");
  if (!(c.nearM < c.farM)) fail(ErrorCode::ConfigError, "nearM must be less than farM");
  nonneg(c.distortionK1, "distortionK1");
  nonneg(c.distortionK2, "distortionK2");
  nonneg(c.runningStartMs, "runningStartMs");
  nonneg(c.vsyncToPhotonsMs, "vsyncToPhotonsMs");
  nonneg(c.compositorMs, "compositorMs");
  if (!(c.runningStartMs < c.period_ms())) fail(ErrorCode::ConfigError, "runningStartMs must be shorter than a frame");
}

inline nlohmann::json config_json(const HmdConfig& c) {
  return {{"eyeWidthPx", c.eyeWidthPx},     {"eyeHeightPx", c.eyeHeightPx},
          {"refreshHz", c.refreshHz},       {"fovDeg", c.fovDeg},
          {"ipdM", c.ipdM},                 {"nearM", c.nearM},
          {"farM", c.farM},                 {"distortionK1", c.distortionK1},
          {"distortionK2", c.distortionK2}, {"runningStartMs", c.runningStartMs},
          {"vsyncToPhotonsMs", c.vsyncToPhotonsMs}, {"compositorMs", c.compositorMs},
          {"clock", c.clock == ClockKind::Real ? "real" : "virtual"}};
}

/// Sets one field by name from its text form (the --hmd.<field> flags).
inline void set_config_field(HmdConfig& c, const std::string& field, const std::string& value) {
  auto real = [&](double& dst) {
    double v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size())
      fail(ErrorCode::ConfigError, "hmd." + field + ": '" + value + "' is not a number");
    dst = v;
  };
  auto integer = [&](int& dst) {
    int v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size())
      fail(ErrorCode::ConfigError, "hmd." + field + ": '" + value + "' is not an integer");
    dst = v;
  };
  if (field == "eyeWidthPx") integer(c.eyeWidthPx);
  else if (field == "eyeHeightPx") integer(c.eyeHeightPx);
  else if (field == "refreshHz") real(c.refreshHz);
  else if (field == "fovDeg") real(c.fovDeg);
  else if (field == "ipdM") real(c.ipdM);
  else if (field == "nearM") real(c.nearM);
  else if (field == "farM") real(c.farM);
  else if (field == "distortionK1") real(c.distortionK1);
  else if (field == "distortionK2") real(c.distortionK2);
  else if (field == "runningStartMs") real(c.runningStartMs);
  else if (field == "vsyncToPhotonsMs") real(c.vsyncToPhotonsMs);
  else if (field == "compositorMs") real(c.compositorMs);
  else if (field == "clock") {
    if (value == "real") c.clock = ClockKind::Real;
    else if (value == "virtual") c.clock = ClockKind::Virtual;
    else fail(ErrorCode::ConfigError, "hmd.clock must be real or virtual");
  } else {
    fail(ErrorCode::ConfigError, "unknown hmd field '" + field + "'");
  }
}

// ------------------------------------------------------------ projection

/// Symmetric per-eye frustum from the horizontal FOV; vertical follows the panel aspect.
inline Mat4 projection_matrix(const HmdConfig& c, Eye = Eye::Left) {
  validate(c);
  const double tanH = std::tan(c.fovDeg * std::numbers::pi / 360.0);
  const double tanV = tanH * static_cast<double>(c.eyeHeightPx) / static_cast<double>(c.eyeWidthPx);
  Mat4 p = Mat4::zero();
  p(0, 0) = 1.0 / tanH;
  p(1, 1) = 1.0 / tanV;
  p(2, 2) = -(c.farM + c.nearM) / (c.farM - c.nearM);
  p(2, 3) = -2.0 * c.farM * c.nearM / (c.farM - c.nearM);
  p(3, 2) = -1.0;
  return p;
}

inline RigidTransform eye_to_head(const HmdConfig& c, Eye eye) {
  const double half = 0.5 * c.ipdM;
  return {QuatRotation::identity(), {eye == Eye::Left ? -half : half, 0.0, 0.0}};
}

// ------------------------------------------------------------ poses

struct PoseSample {
  double tS = 0.0;
  RigidTransform deviceToWorld;
  bool valid = true;
};

/// Constant-velocity extrapolation from the last two samples; one sample is held.
inline RigidTransform predict_pose(const std::vector<PoseSample>& history, double tPhotonS) {
  if (history.empty()) fail(ErrorCode::Empty, "pose prediction needs at least one sample");
  const PoseSample& b = history.back();
  if (history.size() == 1) return b.deviceToWorld;
  const PoseSample& a = history[history.size() - 2];
  const double dt = b.tS - a.tS;
  if (!(dt > 0.0)) return b.deviceToWorld;
  const double s = (tPhotonS - b.tS) / dt;
  const Vec3 p0 = a.deviceToWorld.translation, p1 = b.deviceToWorld.translation;
  const Vec3 pos = p1 + (p1 - p0) * s;
  const QuatRotation q0 = a.deviceToWorld.rotation, q1 = b.deviceToWorld.rotation;
  QuatRotation delta = q1 * q0.conjugate();
  if (delta.w < 0.0) delta = delta.negated();
  const xform::AxisAngle aa = xform::axis_angle_from_quat(delta);
  const QuatRotation step = xform::quat_from_axis_angle(aa.axis, aa.angle * s);
  const QuatRotation q = step * q1;
  return {QuatRotation::from_components(q.x, q.y, q.z, q.w), pos};
}

struct StaticSource {
  RigidTransform pose;
};

// position = center + r (sin wt, 0, cos wt), facing the center.
struct OrbitSource {
  Vec3 center{0.0, 0.0, 0.0};
  double radiusM = 0.6;
  double angularSpeed = 0.5;  // rad/s

  RigidTransform at(double tS) const {
    const double th = angularSpeed * tS;
    return {xform::quat_from_axis_angle(Vec3{0, 1, 0}, th),
            center + Vec3{radiusM * std::sin(th), 0.0, radiusM * std::cos(th)}};
  }
};

struct TraceSource {
  std::vector<PoseSample> samples;
};

class LiveMailbox {
 public:
  void post(const PoseSample& s) {
    std::lock_guard lock(mu_);
    latest_ = s;
    ++version_;
  }
  std::optional<PoseSample> latest() const {
    std::lock_guard lock(mu_);
    return latest_;
  }
  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  std::optional<PoseSample> latest_;
  std::uint64_t version_ = 0;
};

struct LiveSource {
  RigidTransform initial;
  std::shared_ptr<LiveMailbox> mailbox = std::make_shared<LiveMailbox>();
};

using PoseSource = std::variant<StaticSource, OrbitSource, TraceSource, LiveSource>;

inline void validate_trace(const std::vector<PoseSample>& s) {
  if (s.empty()) fail(ErrorCode::ParseError, "pose trace is empty");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i].tS)) fail(ErrorCode::ParseError, "pose trace time is not finite");
    if (i && !(s[i].tS > s[i - 1].tS)) fail(ErrorCode::ParseError, "pose trace times must strictly increase");
  }
}

/// Header `t,px,py,pz,qx,qy,qz,qw`; seconds, meters, unit quaternion.
inline std::vector<PoseSample> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::ParseError, "pose trace is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,px,py,pz,qx,qy,qz,qw") fail(ErrorCode::ParseError, "pose trace header must be t,px,py,pz,qx,qy,qz,qw");
  std::vector<PoseSample> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v[8];
    std::size_t pos = 0;
    for (int k = 0; k < 8; ++k) {
      const std::size_t end = k < 7 ? line.find(',', pos) : line.size();
      if (end == std::string::npos) fail(ErrorCode::ParseError, "pose trace line " + std::to_string(lineno) + ": expected 8 columns");
      auto [p, ec] = std::from_chars(line.data() + pos, line.data() + end, v[k]);
      if (ec != std::errc() || p != line.data() + end)
        fail(ErrorCode::ParseError, "pose trace line " + std::to_string(lineno) + ": bad number");
      pos = end + 1;
    }
    const double qn = std::sqrt(v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]);
    if (std::abs(qn - 1.0) > 1e-6) fail(ErrorCode::ParseError, "pose trace line " + std::to_string(lineno) + ": quaternion not unit");
    out.push_back({v[0], {QuatRotation::from_components(v[4], v[5], v[6], v[7]), {v[1], v[2], v[3]}}, true});
  }
  validate_trace(out);
  return out;
}

inline std::vector<PoseSample> load_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open pose trace '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str());
}

// ------------------------------------------------------------ roster

enum class DeviceClass { Hmd, Controller, BaseStation };

inline const char* to_string(DeviceClass c) {
  switch (c) {
    case DeviceClass::Hmd: return "Hmd";
    case DeviceClass::Controller: return "Controller";
    case DeviceClass::BaseStation: return "BaseStation";
  }
  return "?";
}

struct RosterEntry {
  DeviceClass cls;
  std::string id;
  bool connected = true;
};

inline std::vector<RosterEntry> default_roster() {
  return {{DeviceClass::Hmd, "hmd0", true},
          {DeviceClass::Controller, "controller0", true},
          {DeviceClass::Controller, "controller1", true},
          {DeviceClass::BaseStation, "lighthouse0", true},
          {DeviceClass::BaseStation, "lighthouse1", true}};
}

// ------------------------------------------------------------ device

struct PresentInfo {
  std::uint64_t frameIndex = 0;
  bool dropped = false;
  std::int64_t presentedVsync = 0;
};

class Device {
 public:
  Device(HmdConfig config, PoseSource source) : cfg_(config), source_(std::move(source)) {
    validate(cfg_);
    if (auto* t = std::get_if<TraceSource>(&source_)) validate_trace(t->samples);
    if (cfg_.clock == ClockKind::Real) anchor_ = std::chrono::steady_clock::now();
    roster_ = default_roster();
  }

  const HmdConfig& config() const { return cfg_; }
  const std::vector<RosterEntry>& roster() const { return roster_; }
  const frametime::Sink& timing() const { return sink_; }
  frametime::Sink& timing() { return sink_; }
  std::uint64_t frame_count() const { return frames_; }
  double period_ms() const { return cfg_.period_ms(); }

  double now_ms() const {
    if (cfg_.clock == ClockKind::Virtual) return virtual_ms_;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - anchor_).count();
  }

  /// Modeled workload: moves the virtual clock; a real clock already moved.
  void advance(double ms) {
    if (ms < 0.0) fail(ErrorCode::ConfigError, "cannot advance the clock backwards");
    if (cfg_.clock == ClockKind::Virtual) virtual_ms_ += ms;
  }

  /// Running-start instant of slot k.
  double slot_return_ms(std::int64_t k) const { return static_cast<double>(k) * period_ms() - cfg_.runningStartMs; }
  double photon_ms(std::int64_t k) const { return static_cast<double>(k) * period_ms() + cfg_.vsyncToPhotonsMs; }

  PoseSample wait_get_poses() {
    if (in_frame_) fail(ErrorCode::OutOfOrder, "wait_get_poses called before the previous frame ended");
    const double ret = slot_return_ms(next_slot_);
    sleep_until(ret);
    slot_ = next_slot_;
    pose_return_ms_ = cfg_.clock == ClockKind::Virtual ? ret : std::max(ret, now_ms());
    const double tPhotonS = photon_ms(slot_) / 1000.0;
    PoseSample out{tPhotonS, pose_for(tPhotonS, pose_return_ms_ / 1000.0), true};
    last_pose_ = out;
    in_frame_ = true;
    submitted_[0] = submitted_[1] = false;
    return out;
  }

  void submit_eye(Eye eye, render::Framebuffer fb) {
    if (!in_frame_) fail(ErrorCode::OutOfOrder, "submit_eye before wait_get_poses");
    if (fb.width != cfg_.eyeWidthPx || fb.height != cfg_.eyeHeightPx)
      fail(ErrorCode::DimMismatch, "eye texture is " + std::to_string(fb.width) + "x" + std::to_string(fb.height) +
                                       ", expected " + std::to_string(cfg_.eyeWidthPx) + "x" +
                                       std::to_string(cfg_.eyeHeightPx));
    auto& flag = submitted_[static_cast<int>(eye)];
    if (flag) fail(ErrorCode::DoubleSubmit, std::string(eye == Eye::Left ? "left" : "right") + " eye already submitted");
    flag = true;
    textures_[static_cast<int>(eye)] = std::move(fb);
    if (submitted_[0] && submitted_[1]) second_submit_ms_ = now_ms();
  }

  const render::Framebuffer& last_texture(Eye eye) const { return textures_[static_cast<int>(eye)]; }
  const PoseSample& last_pose() const { return last_pose_; }

  PresentInfo end_frame() {
    if (!in_frame_) fail(ErrorCode::OutOfOrder, "end_frame before wait_get_poses");
    if (!submitted_[0] || !submitted_[1]) fail(ErrorCode::EyesMissing, "end_frame needs both eye textures");
    const double end = now_ms();
    constexpr double eps = 1e-9;
    const std::int64_t target = slot_ + 1;
    const bool dropped = second_submit_ms_ > slot_return_ms(target) + eps;
    std::int64_t presented = target;
    while (slot_return_ms(presented) + eps < second_submit_ms_) ++presented;
    std::int64_t next = slot_ + 1;
    while (slot_return_ms(next) + eps < end) ++next;
    frametime::FrameEvents ev;
    ev.frameIndex = frames_;
    ev.posesReturnMs = pose_return_ms_;
    ev.secondSubmitMs = second_submit_ms_;
    ev.frameEndMs = end;
    ev.intervalMs = static_cast<double>(next - slot_) * period_ms();
    ev.compositorBudgetMs = cfg_.compositorMs;
    ev.dropped = dropped;
    ev.presentedVsync = presented;
    frametime::record_frame(sink_, ev);
    next_slot_ = next;
    in_frame_ = false;
    return {frames_++, dropped, presented};
  }

  void inject_live_pose(const PoseSample& s) {
    auto* live = std::get_if<LiveSource>(&source_);
    if (!live) fail(ErrorCode::WrongSourceKind, "inject_live_pose needs a live pose source");
    live->mailbox->post(s);
  }

  std::shared_ptr<LiveMailbox> live_mailbox() const {
    const auto* live = std::get_if<LiveSource>(&source_);
    return live ? live->mailbox : nullptr;
  }

 private:
  void sleep_until(double ms) {
    if (cfg_.clock == ClockKind::Virtual) {
      virtual_ms_ = std::max(virtual_ms_, ms);
      return;
    }
    const auto target = anchor_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double, std::milli>(ms));
    std::this_thread::sleep_until(target);
  }

  RigidTransform pose_for(double tPhotonS, double nowS) {
    return std::visit(
        [&](auto& src) -> RigidTransform {
          using T = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<T, StaticSource>) {
            return src.pose;
          } else if constexpr (std::is_same_v<T, OrbitSource>) {
            return src.at(tPhotonS);
          } else if constexpr (std::is_same_v<T, TraceSource>) {
            const auto& s = src.samples;
            if (nowS > s.back().tS + period_ms() / 1000.0)
              fail(ErrorCode::SourceExhausted, "pose trace ended at t=" + std::to_string(s.back().tS) + " s");
            std::vector<PoseSample> hist;
            for (const auto& p : s) {
              if (p.tS > nowS) break;
              hist.push_back(p);
            }
            if (hist.empty()) return s.front().deviceToWorld;
            if (hist.size() > 2) hist.erase(hist.begin(), hist.end() - 2);
            return predict_pose(hist, tPhotonS);
          } else {
            auto latest = src.mailbox->latest();
            return latest ? latest->deviceToWorld : src.initial;
          }
        },
        source_);
  }

  HmdConfig cfg_;
  PoseSource source_;
  std::vector<RosterEntry> roster_;
  frametime::Sink sink_;
  std::chrono::steady_clock::time_point anchor_{};
  double virtual_ms_ = 0.0;
  std::int64_t next_slot_ = 1;
  std::int64_t slot_ = 0;
  std::uint64_t frames_ = 0;
  bool in_frame_ = false;
  bool submitted_[2] = {false, false};
  double pose_return_ms_ = 0.0;
  double second_submit_ms_ = 0.0;
  render::Framebuffer textures_[2];
  PoseSample last_pose_;
};

inline Device init_device(const HmdConfig& config, PoseSource source) { return Device(config, std::move(source)); }

}  // namespace vrbridge::hmd
