#pragma once

// Command-line front end and the frame loop that drives a network through
// the simulated headset: pose in, scene out, two eyes rendered, distorted,
// submitted and timed.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/frametime.hpp"
#include "vrbridge/hmdsim.hpp"
#include "vrbridge/netgraph_json.hpp"
#include "vrbridge/png.hpp"
#include "vrbridge/protocol.hpp"
#include "vrbridge/render.hpp"
#include "vrbridge/wire.hpp"

namespace vrbridge::bridge {

namespace fs = std::filesystem;
using nlohmann::json;

struct Workload {
  double sceneMs = 0.0;  // modeled application time before the second submit
  double otherMs = 0.0;  // modeled time after it
};

/// Named workloads standing in for the two machines of the original measurements.
inline Workload profile_workload(const std::string& name) {
  if (name == "desktop") return {6.0, 0.0};
  if (name == "laptop") return {18.0, 0.0};
  if (name == "none" || name.empty()) return {};
  fail(ErrorCode::ConfigError, "unknown profile '" + name + "' (desktop, laptop, none)");
}

struct RunConfig {
  std::string command;  // run | render | serve | help
  std::string networkPath;
  std::string poseSpec = "orbit";
  std::optional<long long> frames;  // nullopt: unbounded
  hmd::HmdConfig hmd;
  std::string reportPath;
  std::string dumpDir;
  std::string serveAddr = "127.0.0.1:8080";
  std::string staticDir;
  std::optional<bool> texture;
  std::string profile = "none";
  Workload work;
  bool printConfig = false;
  std::string helpText;
};

inline json config_json(const RunConfig& c) {
  json j = {{"command", c.command},
            {"network", c.networkPath},
            {"pose", c.poseSpec},
            {"frames", c.frames ? json(*c.frames) : json("unbounded")},
            {"hmd", hmd::config_json(c.hmd)},
            {"profile", c.profile},
            {"sceneMs", c.work.sceneMs},
            {"otherMs", c.work.otherMs}};
  if (!c.reportPath.empty()) j["report"] = c.reportPath;
  if (!c.dumpDir.empty()) j["dump"] = c.dumpDir;
  if (c.command == "serve") j["serve"] = c.serveAddr;
  if (c.texture) j["texture"] = *c.texture;
  return j;
}

// ------------------------------------------------------------ CLI

inline RunConfig parse_cli(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"Dataflow network to simulated headset bridge", "vrbridge"};
  app.require_subcommand(0, 1);
  std::optional<long long> frames;
  std::map<std::string, std::string> overrides;
  std::string clock;
  std::string profile = "none";
  std::optional<double> sceneMs, otherMs;
  bool texture = false;
  CLI::Option* textureOpt = nullptr;

  auto* run = app.add_subcommand("run", "run the frame loop and write a timing report");
  auto* rend = app.add_subcommand("render", "render side-by-side and companion PNGs per frame");
  auto* serve = app.add_subcommand("serve", "stream frames to companion viewers over WebSocket");
  const auto hmdFields = hmd::config_json(hmd::HmdConfig{});
  for (CLI::App* sub : {run, rend, serve}) {
    sub->add_option("--network", cfg.networkPath, "network JSON document")->required();
    sub->add_option("--pose", cfg.poseSpec, "orbit | trace:<path> | live");
    sub->add_option("--frames", frames, "frame count (default: run 900, render 1, serve unbounded)");
    sub->add_option("--report", cfg.reportPath, "timing report path (.json, .csv or .svg)");
    sub->add_option("--dump", cfg.dumpDir, "directory for PNG frame dumps");
    sub->add_option("--clock", clock, "real | virtual");
    sub->add_option("--profile", profile, "modeled workload: desktop | laptop | none");
    sub->add_option("--scene-ms", sceneMs, "modeled scene time per frame");
    sub->add_option("--other-ms", otherMs, "modeled time after the second submit");
    sub->add_flag("--print-config", cfg.printConfig, "print the effective configuration");
    textureOpt = sub->add_flag("--texture,!--no-texture", texture, "checker texture on every renderer");
    for (const auto& [field, _] : hmdFields.items()) {
      if (field == "clock") continue;
      sub->add_option_function<std::string>(
          "--hmd." + field, [&overrides, f = field](const std::string& v) { overrides[f] = v; }, "headset override");
    }
    if (sub == serve) {
      sub->add_option("--serve", cfg.serveAddr, "listen address host:port");
      sub->add_option("--static", cfg.staticDir, "companion viewer bundle directory");
    }
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    cfg.command = "help";
    cfg.helpText = app.help();
    return cfg;
  } catch (const CLI::CallForAllHelp&) {
    cfg.command = "help";
    cfg.helpText = app.help("", CLI::AppFormatMode::All);
    return cfg;
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::Usage, std::string(e.what()) + "\n" + app.help());
  }
  for (CLI::App* sub : {run, rend, serve})
    if (sub->parsed()) cfg.command = sub->get_name();
  if (cfg.command.empty()) fail(ErrorCode::Usage, "a subcommand is required: run, render or serve\n" + app.help());

  for (CLI::App* sub : {run, rend, serve})
    if (sub->parsed()) textureOpt = sub->get_option("--texture");
  if (textureOpt->count() > 0) cfg.texture = texture;
  // serve defaults to piloting from the companion viewer
  if (cfg.command == "serve" && serve->get_option("--pose")->count() == 0) cfg.poseSpec = "live";

  for (const auto& [field, value] : overrides) hmd::set_config_field(cfg.hmd, field, value);
  if (!clock.empty()) hmd::set_config_field(cfg.hmd, "clock", clock);
  if (cfg.command == "serve" && clock.empty() && !overrides.count("clock")) cfg.hmd.clock = hmd::ClockKind::Real;
  hmd::validate(cfg.hmd);

  cfg.profile = profile;
  cfg.work = profile_workload(profile);
  if (sceneMs) cfg.work.sceneMs = *sceneMs;
  if (otherMs) cfg.work.otherMs = *otherMs;
  if (!(cfg.work.sceneMs >= 0.0) || !(cfg.work.otherMs >= 0.0)) fail(ErrorCode::ConfigError, "workload times must not be negative");

  if (frames) {
    if (*frames < 1) fail(ErrorCode::ConfigError, "--frames must be at least 1");
    cfg.frames = frames;
  } else if (cfg.command == "run") {
    cfg.frames = 900;
  } else if (cfg.command == "render") {
    cfg.frames = 1;
  }
  if (cfg.command == "render" && cfg.dumpDir.empty()) fail(ErrorCode::Usage, "render needs --dump <dir>");
  return cfg;
}

// ------------------------------------------------------------ frame loop

inline hmd::PoseSource make_pose_source(const std::string& spec) {
  if (spec == "orbit") return hmd::OrbitSource{};
  if (spec == "live") return hmd::LiveSource{hmd::OrbitSource{}.at(0.0)};
  if (spec.rfind("trace:", 0) == 0) return hmd::TraceSource{hmd::load_trace_csv(spec.substr(6))};
  fail(ErrorCode::ConfigError, "unknown pose source '" + spec + "' (orbit, trace:<path>, live)");
}

inline std::string frame_name(std::uint64_t frame, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frame_%05llu_%s.png", static_cast<unsigned long long>(frame), kind);
  return buf;
}

class FrameLoop {
 public:
  // All configuration and file errors surface here, before the first frame.
  explicit FrameLoop(RunConfig cfg)
      : cfg_(std::move(cfg)),
        net_(net::load_network_file(cfg_.networkPath)),
        device_(cfg_.hmd, make_pose_source(cfg_.poseSpec)) {
    if (cfg_.frames && *cfg_.frames < 1) fail(ErrorCode::ConfigError, "frames must be at least 1");
    if (cfg_.texture)
      for (const auto& id : net_.node_ids())
        if (const auto* p = net_.node(id).type->param("texture"); p && p->type() == net::ParamType::Bool)
          net_.set_param(id, "texture", *cfg_.texture);
    for (const auto& id : net_.node_ids()) {
      const auto& n = net_.node(id);
      if (vr_.empty() && n.type->name == "HTCVive") vr_ = id;
      if (viewer_.empty() && n.type->name == "SoSeparator" && std::get<bool>(net_.get_param(id, "useCamera"))) viewer_ = id;
    }
    if (vr_.empty()) fail(ErrorCode::SchemaError, "network '" + cfg_.networkPath + "' has no HTCVive node");
    // node input files (meshes, volumes) are read here rather than mid-run
    vr_scene_ = std::get<net::ScenePtr>(net_.evaluate(net::Endpoint{vr_, "scene"}));
    if (!cfg_.dumpDir.empty()) {
      std::error_code ec;
      fs::create_directories(cfg_.dumpDir, ec);
      if (ec || !fs::is_directory(cfg_.dumpDir)) fail(ErrorCode::Io, "cannot create dump directory '" + cfg_.dumpDir + "'");
    }
  }

  const RunConfig& config() const { return cfg_; }
  net::Network& network() { return net_; }
  hmd::Device& device() { return device_; }
  const std::string& headset_node() const { return vr_; }
  const std::string& viewer_node() const { return viewer_; }
  std::uint64_t frames_done() const { return device_.frame_count(); }
  const xform::RigidTransform& last_head() const { return head_; }
  const render::Scene* last_vr_scene() const { return vr_scene_.get(); }

  void attach(wire::Hub* hub) { hub_ = hub; }

  /// Parameter table and configuration announced to companion clients.
  json announcement() const {
    json params = json::array();
    for (const auto& id : net_.node_ids()) {
      for (const auto& spec : net_.node(id).type->params)
        params.push_back({{"node", id},
                          {"name", spec.name},
                          {"type", net::to_string(spec.type())},
                          {"value", net::detail::param_to_json(net_.get_param(id, spec.name))},
                          {"output", spec.output}});
    }
    return {{"config", hmd::config_json(cfg_.hmd)}, {"params", params}, {"headset", vr_}, {"viewer", viewer_}};
  }

  bool done() const { return cfg_.frames && device_.frame_count() >= static_cast<std::uint64_t>(*cfg_.frames); }

  /// One frame. Returns false once the bounded run is complete or the trace ran out.
  bool step() {
    if (done()) return false;
    hmd::PoseSample pose;
    try {
      pose = device_.wait_get_poses();
    } catch (const Error& e) {
      // an unbounded run simply ends with its trace
      if (e.code() == ErrorCode::SourceExhausted && !cfg_.frames) return false;
      throw;
    }
    const double start = device_.now_ms();
    apply_client_params();
    head_ = pose.deviceToWorld;
    const xform::Mat4 headM = xform::compose(head_);
    net_.set_param(vr_, "HMDPoseMatrix", headM);
    vr_scene_ = std::get<net::ScenePtr>(net_.evaluate(net::Endpoint{vr_, "scene"}));
    const render::Scene& scene = *vr_scene_;
    const auto& hc = device_.config();

    auto eye = [&](hmd::Eye e) {
      return render::apply_distortion(render::render_scene_eye(scene, render::eye_desc(hc, headM, e)), hc.distortionK1,
                                      hc.distortionK2, scene.background);
    };
    device_.submit_eye(hmd::Eye::Left, eye(hmd::Eye::Left));
    auto right = eye(hmd::Eye::Right);
    pad(start, cfg_.work.sceneMs);
    device_.submit_eye(hmd::Eye::Right, std::move(right));
    const double second = device_.now_ms();

    emit_outputs();
    pad(second, cfg_.work.otherMs);
    device_.end_frame();
    if (hub_) hub_->broadcast_text(wire::timing_message(device_.timing().records.back(), head_));
    return !done();
  }

  void run(const std::atomic<bool>* stop = nullptr) {
    while ((!stop || !stop->load()) && step()) {
    }
  }

  frametime::TimingReport report() const { return frametime::aggregate(device_.timing().records, cfg_.hmd.refreshHz); }

  void write_report(const frametime::TimingReport& rep) const {
    if (cfg_.reportPath.empty()) return;
    const fs::path p = cfg_.reportPath;
    std::string text;
    if (p.extension() == ".csv") {
      text = frametime::export_csv(rep);
    } else if (p.extension() == ".svg") {
      text = frametime::export_stacked_svg(rep);
    } else {
      json j = frametime::report_json(rep);
      j["config"] = config_json(cfg_);
      text = j.dump(2) + "\n";
    }
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write report '" + cfg_.reportPath + "'");
    out << text;
    if (!out) fail(ErrorCode::Io, "write to '" + cfg_.reportPath + "' failed");
  }

  render::Framebuffer side_by_side() const {
    return render::compose_side_by_side(device_.last_texture(hmd::Eye::Left), device_.last_texture(hmd::Eye::Right));
  }

  /// Undistorted viewer image: the useCamera separator's pose when present, else the head.
  render::Framebuffer companion() {
    const auto& hc = device_.config();
    const auto desc = render::companion_desc(hc, hc.eyeWidthPx, hc.eyeHeightPx);
    if (!viewer_.empty()) {
      auto s = std::get<net::ScenePtr>(net_.evaluate(net::Endpoint{viewer_, "self"}));
      if (s->companionPose) return render::render_companion(*s, xform::decompose(*s->companionPose), desc);
    }
    return render::render_companion(*vr_scene_, head_, desc);
  }

 private:
  void pad(double from, double ms) {
    if (ms <= 0.0) return;
    if (device_.config().clock == hmd::ClockKind::Virtual) {
      device_.advance(ms);
      return;
    }
    const double left = from + ms - device_.now_ms();
    if (left > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(left));
  }

  void apply_client_params() {
    if (!hub_) return;
    for (auto& p : hub_->take_params()) {
      try {
        const auto& spec = net_.node(p.msg.node).type->param(p.msg.name);
        if (!spec) fail(ErrorCode::UnknownParam, "node '" + p.msg.node + "' has no param '" + p.msg.name + "'");
        if (spec->type() == net::ParamType::Trigger) {
          net_.fire_trigger({p.msg.node, p.msg.name});
        } else {
          net_.set_param(p.msg.node, p.msg.name,
                         net::detail::param_from_json(p.msg.value, spec->type(), "$.value"));
        }
        hub_->broadcast_text(json{{"type", "param"},
                                  {"node", p.msg.node},
                                  {"name", p.msg.name},
                                  {"value", net::detail::param_to_json(net_.get_param(p.msg.node, p.msg.name))}}
                                 .dump());
      } catch (const Error& e) {
        hub_->send_text(p.client, wire::error_message(e.what()));
      }
    }
  }

  void emit_outputs() {
    const bool dump = !cfg_.dumpDir.empty();
    const bool wantSbs = dump || (hub_ && hub_->wants(wire::Stream::SideBySide));
    const bool wantCompanion = dump || (hub_ && hub_->wants(wire::Stream::Companion));
    const auto seq = static_cast<std::uint32_t>(device_.frame_count());
    if (wantSbs) {
      const auto sbs = side_by_side();
      if (dump) render::write_png(sbs, (fs::path(cfg_.dumpDir) / frame_name(device_.frame_count(), "sbs")).string());
      if (hub_ && hub_->wants(wire::Stream::SideBySide))
        hub_->publish_frame(wire::Stream::SideBySide, wire::encode_frame(seq, wire::StreamEye::SideBySide, sbs));
    }
    if (wantCompanion) {
      const auto comp = companion();
      if (dump) render::write_png(comp, (fs::path(cfg_.dumpDir) / frame_name(device_.frame_count(), "companion")).string());
      if (hub_ && hub_->wants(wire::Stream::Companion))
        hub_->publish_frame(wire::Stream::Companion, wire::encode_frame(seq, wire::StreamEye::Companion, comp));
    }
  }

  RunConfig cfg_;
  net::Network net_;
  hmd::Device device_;
  std::string vr_, viewer_;
  wire::Hub* hub_ = nullptr;
  xform::RigidTransform head_;
  net::ScenePtr vr_scene_;
};

inline std::string summary_line(const frametime::TimingReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "frames %zu  meanFps %.3f  dropped %zu (%.1f%%)  scene p50/p95/p99 %.3f/%.3f/%.3f ms  %s",
                r.records.size(), r.meanFps, r.droppedCount, r.droppedPct, r.sceneP50, r.sceneP95, r.sceneP99,
                frametime::to_string(r.rating));
  return buf;
}

/// Exit status: 0 success, 2 usage/config/input errors before the first frame, 1 failures during the run.
inline int cmd_run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::optional<FrameLoop> loop;
  try {
    loop.emplace(cfg);
  } catch (const Error& e) {
    err << "vrbridge: " << e.what() << "\n";
    return 2;
  }
  try {
    if (cfg.printConfig) out << config_json(cfg).dump(2) << "\n";
    loop->run();
    const auto rep = loop->report();
    loop->write_report(rep);
    out << summary_line(rep) << "\n";
    return 0;
  } catch (const Error& e) {
    err << "vrbridge: frame " << loop->frames_done() << ": " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_render(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  if (cfg.dumpDir.empty()) {
    err << "vrbridge: render needs --dump <dir>\n";
    return 2;
  }
  return cmd_run(cfg, out, err);
}

/// Shared entry point; `serve` is supplied by the tool that links the network server.
template <class ServeFn>
int main_entry(const std::vector<std::string>& args, ServeFn&& serve, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig cfg;
  try {
    cfg = parse_cli(args);
  } catch (const Error& e) {
    err << "vrbridge: " << e.what() << "\n";
    return 2;
  }
  if (cfg.command == "help") {
    out << cfg.helpText;
    return 0;
  }
  if (cfg.command == "run") return cmd_run(cfg, out, err);
  if (cfg.command == "render") return cmd_render(cfg, out, err);
  return serve(cfg);
}

}  // namespace vrbridge::bridge
