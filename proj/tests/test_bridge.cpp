#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "vrbridge/bridge.hpp"
#include "vrbridge/png.hpp"

using namespace vrbridge;
using namespace vrbridge::bridge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kHeadsetNet = std::string(VRBRIDGE_NETWORKS_DIR) + "/fig6.json";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("vrbridge_bridge_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig cli(std::vector<std::string> a) { return parse_cli(a); }

// small eyes keep long virtual-clock runs quick
std::vector<std::string> small(std::vector<std::string> a) {
  for (const char* s : {"--hmd.eyeWidthPx", "108", "--hmd.eyeHeightPx", "120"}) a.push_back(s);
  return a;
}

int no_serve(const RunConfig&) { return 99; }

struct RunOut {
  int code;
  std::string out, err;
};

RunOut entry(const std::vector<std::string>& a) {
  std::ostringstream out, err;
  const int c = main_entry(a, no_serve, out, err);
  return {c, out.str(), err.str()};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Io;
}

meshvol::Aabb world_bbox(const render::Scene& s) {
  meshvol::Aabb b{{1e300, 1e300, 1e300}, {-1e300, -1e300, -1e300}};
  for (const auto& it : s.items)
    for (const auto& v : it.mesh->vertices) {
      const auto w = it.modelToWorld.transform_point(v);
      b.min = {std::min(b.min.x, w.x), std::min(b.min.y, w.y), std::min(b.min.z, w.z)};
      b.max = {std::max(b.max.x, w.x), std::max(b.max.y, w.y), std::max(b.max.z, w.z)};
    }
  return b;
}

}  // namespace

TEST(ParseCli, NoSubcommandIsUsageExit2) {
  EXPECT_EQ(code_of([] { cli({}); }), ErrorCode::Usage);
  const auto r = entry({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(ParseCli, UnknownFlagAndMissingValue) {
  EXPECT_EQ(code_of([] { cli({"run", "--network", kHeadsetNet, "--bogus"}); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { cli({"run", "--network"}); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { cli({"run"}); }), ErrorCode::Usage);
  EXPECT_EQ(code_of([] { cli({"run", "--network", kHeadsetNet, "--hmd.refreshHz", "fast"}); }), ErrorCode::ConfigError);
}

TEST(ParseCli, HelpExitsZero) {
  const auto r = entry({"run", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--hmd.fovDeg"), std::string::npos);
}

TEST(ParseCli, HmdOverrideVisibleInConfigDump) {
  const auto c = cli({"run", "--network", kHeadsetNet, "--hmd.fovDeg", "90", "--clock", "virtual"});
  EXPECT_DOUBLE_EQ(c.hmd.fovDeg, 90.0);
  EXPECT_DOUBLE_EQ(config_json(c)["hmd"]["fovDeg"].get<double>(), 90.0);
  const auto r = entry(small({"run", "--network", kHeadsetNet, "--hmd.fovDeg", "90", "--frames", "1", "--print-config"}));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"fovDeg\": 90.0"), std::string::npos) << r.out;
}

TEST(ParseCli, FramesDefaultsAndZero) {
  EXPECT_EQ(*cli({"run", "--network", kHeadsetNet}).frames, 900);
  EXPECT_EQ(*cli({"render", "--network", kHeadsetNet, "--dump", "/tmp/x"}).frames, 1);
  EXPECT_FALSE(cli({"serve", "--network", kHeadsetNet}).frames);
  EXPECT_EQ(code_of([] { cli({"run", "--network", kHeadsetNet, "--frames", "0"}); }), ErrorCode::ConfigError);
  EXPECT_EQ(entry({"render", "--network", kHeadsetNet, "--frames", "0", "--dump", "/tmp/x"}).code, 2);
  EXPECT_EQ(code_of([] { cli({"render", "--network", kHeadsetNet}); }), ErrorCode::Usage);
}

TEST(ParseCli, ServeDefaults) {
  const auto c = cli({"serve", "--network", kHeadsetNet});
  EXPECT_EQ(c.poseSpec, "live");
  EXPECT_EQ(c.hmd.clock, hmd::ClockKind::Real);
  EXPECT_EQ(c.serveAddr, "127.0.0.1:8080");
  const auto d = cli({"serve", "--network", kHeadsetNet, "--pose", "orbit", "--clock", "virtual", "--serve", ":0"});
  EXPECT_EQ(d.poseSpec, "orbit");
  EXPECT_EQ(d.hmd.clock, hmd::ClockKind::Virtual);
  EXPECT_EQ(d.serveAddr, ":0");
  EXPECT_EQ(code_of([] { cli({"run", "--network", kHeadsetNet, "--serve", ":1"}); }), ErrorCode::Usage);
}

TEST(ParseCli, Profiles) {
  EXPECT_DOUBLE_EQ(cli({"run", "--network", kHeadsetNet, "--profile", "desktop"}).work.sceneMs, 6.0);
  EXPECT_DOUBLE_EQ(cli({"run", "--network", kHeadsetNet, "--profile", "laptop"}).work.sceneMs, 18.0);
  EXPECT_DOUBLE_EQ(cli({"run", "--network", kHeadsetNet, "--profile", "laptop", "--scene-ms", "3"}).work.sceneMs, 3.0);
  EXPECT_EQ(code_of([] { cli({"run", "--network", kHeadsetNet, "--profile", "toaster"}); }), ErrorCode::ConfigError);
}

TEST(FailFast, MissingTraceFailsAtStartup) {
  const auto c = cli({"run", "--network", kHeadsetNet, "--pose", "trace:missing.csv"});
  EXPECT_EQ(code_of([&] { FrameLoop loop(c); }), ErrorCode::Io);
  const auto r = entry({"run", "--network", kHeadsetNet, "--pose", "trace:missing.csv"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.csv"), std::string::npos);
  EXPECT_EQ(r.err.find("frame "), std::string::npos);
}

TEST(FailFast, MissingNetworkNamesPath) {
  const auto r = entry({"run", "--network", "/nowhere/net.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nowhere/net.json"), std::string::npos);
}

TEST(FailFast, UnknownPoseSpec) {
  EXPECT_EQ(code_of([] { FrameLoop loop(cli({"run", "--network", kHeadsetNet, "--pose", "joystick"})); }),
            ErrorCode::ConfigError);
}

TEST(CmdRun, HeadsetNetworkNineHundredFramesAt90) {
  const auto dir = scratch("run900");
  const auto r = entry(small({"run", "--network", kHeadsetNet, "--report", (dir / "r.json").string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = frametime::parse_report_json(slurp(dir / "r.json"));
  EXPECT_EQ(rep.records.size(), 900u);
  EXPECT_DOUBLE_EQ(rep.meanFps, 90.0);
  EXPECT_EQ(rep.droppedCount, 0u);
  const auto j = json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["config"]["frames"], 900);
}

TEST(CmdRun, RefreshOverrideChangesPeriod) {
  const auto dir = scratch("hz45");
  ASSERT_EQ(entry(small({"run", "--network", kHeadsetNet, "--frames", "10", "--hmd.refreshHz", "45", "--report",
                         (dir / "r.json").string()}))
                .code,
            0);
  const auto j = json::parse(slurp(dir / "r.json"));
  EXPECT_NEAR(j["framePeriodMs"].get<double>(), 22.222, 1e-3);
  EXPECT_DOUBLE_EQ(j["meanFps"].get<double>(), 45.0);
}

TEST(CmdRun, CsvAndSvgReports) {
  const auto dir = scratch("formats");
  ASSERT_EQ(entry(small({"run", "--network", kHeadsetNet, "--frames", "4", "--report", (dir / "r.csv").string()})).code, 0);
  EXPECT_EQ(frametime::parse_csv(slurp(dir / "r.csv")).size(), 4u);
  ASSERT_EQ(entry(small({"run", "--network", kHeadsetNet, "--frames", "4", "--report", (dir / "r.svg").string()})).code, 0);
  EXPECT_NE(slurp(dir / "r.svg").find("<svg"), std::string::npos);
}

TEST(CmdRun, DesktopAndLaptopProfiles) {
  auto rate = [](const char* profile) {
    FrameLoop loop(cli(small({"run", "--network", kHeadsetNet, "--frames", "180", "--profile", profile})));
    loop.run();
    return loop.report();
  };
  const auto desk = rate("desktop"), lap = rate("laptop");
  EXPECT_EQ(desk.rating, frametime::Rating::VrReady);
  EXPECT_DOUBLE_EQ(desk.meanFps, 90.0);
  EXPECT_EQ(lap.rating, frametime::Rating::Interactive);
  EXPECT_DOUBLE_EQ(lap.meanFps, 45.0);
  EXPECT_NEAR(lap.sceneP50, 18.0, 1e-9);
}

TEST(CmdRender, OneFrameIsFullSideBySidePng) {
  const auto dir = scratch("render1");
  const auto r = entry({"render", "--network", kHeadsetNet, "--dump", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sbs = render::read_png((dir / "frame_00000_sbs.png").string());
  EXPECT_EQ(sbs.width, 2160);
  EXPECT_EQ(sbs.height, 1200);
  const auto comp = render::read_png((dir / "frame_00000_companion.png").string());
  EXPECT_EQ(comp.width, 1080);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".png";
  EXPECT_EQ(files, 2u);
}

TEST(CmdRender, TextureFlagChangesImage) {
  const auto a = scratch("tex_on"), b = scratch("tex_off");
  ASSERT_EQ(entry(small({"render", "--network", kHeadsetNet, "--dump", a.string(), "--texture"})).code, 0);
  ASSERT_EQ(entry(small({"render", "--network", kHeadsetNet, "--dump", b.string(), "--no-texture"})).code, 0);
  EXPECT_NE(slurp(a / "frame_00000_sbs.png"), slurp(b / "frame_00000_sbs.png"));
}

TEST(CmdRender, UnwritableDumpDirFailsAtStartup) {
  const auto dir = scratch("blocked");
  std::ofstream(dir / "file") << "x";
  const auto r = entry(small({"render", "--network", kHeadsetNet, "--dump", (dir / "file" / "sub").string()}));
  EXPECT_EQ(r.code, 2);
}

TEST(Reproducible, VirtualClockRunsAreBitIdentical) {
  const auto dir = scratch("repro");
  auto once = [&] {
    fs::remove_all(dir / "d");
    EXPECT_EQ(entry(small({"render", "--network", kHeadsetNet, "--frames", "3", "--dump", (dir / "d").string(),
                           "--report", (dir / "r.json").string()}))
                  .code,
              0);
    return std::make_pair(slurp(dir / "r.json"), slurp(dir / "d" / "frame_00002_sbs.png"));
  };
  const auto first = once(), second = once();
  EXPECT_FALSE(first.second.empty());
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}

namespace {

struct Harness {
  FrameLoop loop;
  wire::Hub hub;
  int client;
  explicit Harness(const std::vector<std::string>& args)
      : loop(cli(small(args))), hub(loop.device().live_mailbox()) {
    hub.set_announcement(loop.announcement());
    loop.attach(&hub);
    client = hub.connect();
  }
  std::vector<wire::Outbound> drain() { return hub.queue(client)->drain(); }
  std::vector<json> texts() {
    std::vector<json> out;
    for (auto& m : drain())
      if (!m.binary) out.push_back(json::parse(m.data));
    return out;
  }
};

}  // namespace

TEST(Serve, AnnouncementListsParams) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual"});
  const auto hello = h.texts().at(0);
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["headset"], "HTCVive");
  bool found = false;
  for (const auto& p : hello["params"])
    if (p["node"] == "Modify" && p["name"] == "Scalefactor") found = p["type"] == "Float" && p["value"] == 1.0;
  EXPECT_TRUE(found);
}

TEST(Serve, PoseSteersWithinTwoFrames) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual", "--frames", "10"});
  ASSERT_TRUE(h.loop.step());
  h.drain();
  wire::FrameHeader hdr;
  const std::string before = [&] {
    h.loop.step();
    std::string last;
    for (auto& m : h.drain())
      if (m.binary) last = m.data;
    return last;
  }();
  ASSERT_FALSE(before.empty());

  h.hub.on_text(h.client, R"({"type":"pose","position":[0.4,0.1,0.9],"orientation":[0,0.38268343,0,0.92387953]})");
  int steered = -1;
  for (int k = 1; k <= 2 && steered < 0; ++k) {
    h.loop.step();
    for (auto& m : h.drain()) {
      if (!m.binary) {
        const auto j = json::parse(m.data);
        if (j["type"] == "timing" && std::abs(j["pose"]["position"][0].get<double>() - 0.4) < 1e-12) steered = k;
      } else {
        wire::decode_frame(wire::as_bytes(m.data), &hdr);
        EXPECT_EQ(hdr.width, 216);
      }
    }
  }
  EXPECT_GE(steered, 1);
  EXPECT_LE(steered, 2);
  EXPECT_NEAR(h.loop.last_head().translation.z, 0.9, 1e-12);
  std::string after;
  for (int k = 0; k < 1; ++k) {
    h.loop.step();
    for (auto& m : h.drain())
      if (m.binary) after = m.data;
  }
  EXPECT_NE(before.substr(16), after.substr(16));
}

TEST(Serve, ScalefactorEchoDoublesBbox) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual", "--frames", "5", "--pose", "orbit"});
  h.loop.step();
  const auto b1 = world_bbox(*h.loop.last_vr_scene());
  h.drain();
  h.hub.on_text(h.client, R"({"type":"param","node":"Modify","name":"Scalefactor","value":2.0})");
  h.loop.step();
  const auto b2 = world_bbox(*h.loop.last_vr_scene());
  const auto e1 = b1.extent(), e2 = b2.extent();
  EXPECT_NEAR(e2.x / e1.x, 2.0, 1e-9);
  EXPECT_NEAR(e2.y / e1.y, 2.0, 1e-9);
  EXPECT_NEAR(e2.z / e1.z, 2.0, 1e-9);
  bool echoed = false;
  for (const auto& j : h.texts())
    if (j["type"] == "param" && j["name"] == "Scalefactor") echoed = j["value"] == 2.0;
  EXPECT_TRUE(echoed);
}

TEST(Serve, BadParamReportedToSenderOnly) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual", "--frames", "3"});
  const int other = h.hub.connect();
  h.drain();
  h.hub.queue(other)->drain();
  h.hub.on_text(h.client, R"({"type":"param","node":"Modify","name":"Nope","value":1})");
  h.hub.on_text(h.client, R"({"type":"param","node":"Modify","name":"Scalefactor","value":"big"})");
  h.loop.step();
  int errors = 0;
  for (const auto& j : h.texts()) errors += j["type"] == "error";
  EXPECT_EQ(errors, 2);
  for (auto& m : h.hub.queue(other)->drain())
    if (!m.binary) {
      EXPECT_NE(json::parse(m.data)["type"], "error");
    }
}

TEST(Serve, TimingMessagePerFrameNeverDropped) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual", "--frames", "12", "--pose", "orbit"});
  h.drain();
  h.loop.run();
  int timing = 0, frames = 0;
  for (auto& m : h.drain()) {
    if (m.binary) ++frames;
    else timing += json::parse(m.data)["type"] == "timing";
  }
  EXPECT_EQ(timing, 12);
  EXPECT_EQ(frames, 2);
  EXPECT_EQ(h.hub.queue(h.client)->dropped_frames(), 10u);
}

TEST(Serve, CompanionSubscriptionStreamsCompanion) {
  Harness h({"serve", "--network", kHeadsetNet, "--clock", "virtual", "--frames", "2", "--pose", "orbit"});
  h.hub.on_text(h.client, R"({"type":"subscribe","stream":"companion"})");
  h.drain();
  h.loop.step();
  for (auto& m : h.drain())
    if (m.binary) {
      wire::FrameHeader hdr;
      wire::decode_frame(wire::as_bytes(m.data), &hdr);
      EXPECT_EQ(hdr.eye, wire::StreamEye::Companion);
      EXPECT_EQ(hdr.width, 108);
    }
}
