#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "schedule_oracle.hpp"
#include "vrbridge/hmdsim.hpp"

using namespace vrbridge;
using namespace vrbridge::hmd;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no vrbridge::Error thrown";
  return ErrorCode::Empty;
}

HmdConfig tiny() {
  HmdConfig c;
  c.eyeWidthPx = 4;
  c.eyeHeightPx = 4;
  return c;
}

render::Framebuffer eye_fb(const HmdConfig& c) { return render::Framebuffer(c.eyeWidthPx, c.eyeHeightPx); }

// One frame with `scene` ms before the second submit and `other` ms after it.
PresentInfo run_frame(Device& d, double scene, double other) {
  d.wait_get_poses();
  d.submit_eye(Eye::Left, eye_fb(d.config()));
  d.advance(scene);
  d.submit_eye(Eye::Right, eye_fb(d.config()));
  d.advance(other);
  return d.end_frame();
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

TEST(Init, DefaultPeriod) {
  Device d(HmdConfig{}, StaticSource{});
  EXPECT_NEAR(d.period_ms(), 11.111, 1e-3);
  EXPECT_DOUBLE_EQ(d.period_ms(), 1000.0 / 90.0);
  EXPECT_EQ(d.frame_count(), 0u);
  EXPECT_EQ(d.now_ms(), 0.0);
}

TEST(Init, DefaultsAreThePanelResolution) {
  HmdConfig c;
  EXPECT_EQ(c.eyeWidthPx, 1080);
  EXPECT_EQ(c.eyeHeightPx, 1200);
  EXPECT_EQ(c.refreshHz, 90.0);
  EXPECT_EQ(c.fovDeg, 110.0);
}

TEST(Init, ZeroRefreshIsConfigError) {
  HmdConfig c;
  c.refreshHz = 0;
  EXPECT_EQ(code_of([&] { Device d(c, StaticSource{}); }), ErrorCode::ConfigError);
  c = HmdConfig{};
  c.nearM = 200;
  EXPECT_EQ(code_of([&] { Device d(c, StaticSource{}); }), ErrorCode::ConfigError);
  c = HmdConfig{};
  c.eyeWidthPx = -1;
  EXPECT_EQ(code_of([&] { Device d(c, StaticSource{}); }), ErrorCode::ConfigError);
}

TEST(Init, RosterHasHeadsetControllersAndBaseStations) {
  Device d(HmdConfig{}, StaticSource{});
  const auto& r = d.roster();
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r[0].cls, DeviceClass::Hmd);
  EXPECT_EQ(r[1].cls, DeviceClass::Controller);
  EXPECT_EQ(r[2].cls, DeviceClass::Controller);
  EXPECT_EQ(r[3].cls, DeviceClass::BaseStation);
  EXPECT_EQ(r[4].cls, DeviceClass::BaseStation);
  for (const auto& e : r) EXPECT_TRUE(e.connected);
}

TEST(Config, FieldOverridesByName) {
  HmdConfig c;
  set_config_field(c, "fovDeg", "90");
  set_config_field(c, "eyeWidthPx", "540");
  set_config_field(c, "clock", "real");
  EXPECT_EQ(c.fovDeg, 90.0);
  EXPECT_EQ(c.eyeWidthPx, 540);
  EXPECT_EQ(c.clock, ClockKind::Real);
  EXPECT_EQ(config_json(c).at("fovDeg"), 90.0);
  EXPECT_EQ(code_of([&] { set_config_field(c, "warp", "1"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { set_config_field(c, "fovDeg", "wide"); }), ErrorCode::ConfigError);
}

TEST(WaitGetPoses, FirstReturnAtRunningStart) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  EXPECT_NEAR(d.now_ms(), 1000.0 / 90.0 - 3.0, 1e-12);
  EXPECT_NEAR(d.now_ms(), 8.111, 1e-3);
}

TEST(WaitGetPoses, StaticPoseIsReturnedExactly) {
  std::mt19937_64 rng(3);
  const RigidTransform pose = xform::decompose(oracle::random_rigid(rng));
  Device d(tiny(), StaticSource{pose});
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(d.wait_get_poses().deviceToWorld, pose);
    d.submit_eye(Eye::Left, eye_fb(d.config()));
    d.submit_eye(Eye::Right, eye_fb(d.config()));
    d.end_frame();
  }
}

TEST(WaitGetPoses, TraceIsExtrapolatedToPhotonTime) {
  // +x at 1 m/s, last sample at t=0, x=0.
  TraceSource tr;
  for (int i = -5; i <= 0; ++i) tr.samples.push_back({i * 0.01, {{}, {i * 0.01, 0, 0}}, true});
  Device d(tiny(), tr);
  const PoseSample s = d.wait_get_poses();
  EXPECT_NEAR(s.tS, 0.014111, 1e-6);
  EXPECT_NEAR(s.deviceToWorld.translation.x, (1000.0 / 90.0 + 3.0) / 1000.0, 1e-12);
  EXPECT_NEAR(s.deviceToWorld.translation.x, 0.014111, 1e-6);
}

TEST(WaitGetPoses, TraceExhaustion) {
  TraceSource tr;
  tr.samples = {{0.0, {}, true}, {0.001, {}, true}};
  Device d(tiny(), tr);
  run_frame(d, 1, 0);
  EXPECT_EQ(code_of([&] { d.wait_get_poses(); }), ErrorCode::SourceExhausted);
}

TEST(WaitGetPoses, OrbitFacesCenter) {
  OrbitSource o{{0, 1.5, 0}, 0.6, 1.0};
  Device d(tiny(), o);
  const PoseSample s = d.wait_get_poses();
  const Vec3 fwd = s.deviceToWorld.rotation.rotate({0, 0, -1});
  const Vec3 to_center = xform::normalized(o.center - s.deviceToWorld.translation);
  EXPECT_LT(oracle::dist(fwd, to_center), 1e-12);
  EXPECT_NEAR(xform::norm(s.deviceToWorld.translation - o.center), 0.6, 1e-12);
}

TEST(WaitGetPoses, TwiceWithoutEndFrameIsOutOfOrder) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  EXPECT_EQ(code_of([&] { d.wait_get_poses(); }), ErrorCode::OutOfOrder);
}

TEST(SubmitEye, WrongSizeIsDimMismatch) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  EXPECT_EQ(code_of([&] { d.submit_eye(Eye::Left, render::Framebuffer(5, 4)); }), ErrorCode::DimMismatch);
}

TEST(SubmitEye, DoubleSubmit) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  d.submit_eye(Eye::Left, eye_fb(d.config()));
  EXPECT_EQ(code_of([&] { d.submit_eye(Eye::Left, eye_fb(d.config())); }), ErrorCode::DoubleSubmit);
}

TEST(SubmitEye, BeforeWaitIsOutOfOrder) {
  Device d(tiny(), StaticSource{});
  EXPECT_EQ(code_of([&] { d.submit_eye(Eye::Left, eye_fb(d.config())); }), ErrorCode::OutOfOrder);
}

TEST(SubmitEye, SceneSegmentEndsAtSecondSubmit) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  const double t0 = d.now_ms();
  d.advance(1.5);
  d.submit_eye(Eye::Left, eye_fb(d.config()));
  d.advance(2.25);
  d.submit_eye(Eye::Right, eye_fb(d.config()));
  const double t2 = d.now_ms();
  d.advance(1.0);
  d.end_frame();
  const auto& r = d.timing().records.at(0);
  EXPECT_NEAR(r.sceneMs, t2 - t0, 1e-12);
  EXPECT_NEAR(r.sceneMs, 3.75, 1e-12);
  EXPECT_NEAR(r.otherMs, 1.0, 1e-12);
}

TEST(EndFrame, EyesMissing) {
  Device d(tiny(), StaticSource{});
  d.wait_get_poses();
  d.submit_eye(Eye::Right, eye_fb(d.config()));
  EXPECT_EQ(code_of([&] { d.end_frame(); }), ErrorCode::EyesMissing);
}

TEST(EndFrame, LightWorkPresentsAtOwnVsync) {
  Device d(tiny(), StaticSource{});
  for (int i = 0; i < 10; ++i) {
    const PresentInfo p = run_frame(d, 4, 1);
    EXPECT_FALSE(p.dropped);
    EXPECT_EQ(p.presentedVsync, i + 2);
    EXPECT_EQ(p.frameIndex, static_cast<std::uint64_t>(i));
  }
}

TEST(EndFrame, FifteenMsDropsEveryFrameAtHalfRate) {
  Device d(tiny(), StaticSource{});
  std::int64_t last = 0;
  for (int i = 0; i < 20; ++i) {
    const PresentInfo p = run_frame(d, 15, 0);
    EXPECT_TRUE(p.dropped);
    if (i) {
      EXPECT_EQ(p.presentedVsync - last, 2);
    }
    last = p.presentedVsync;
  }
  const auto rep = frametime::aggregate(d.timing().records, 90.0);
  EXPECT_DOUBLE_EQ(rep.meanFps, 45.0);
}

TEST(Schedule, FpsLawMatchesDiscreteEventOracle) {
  for (int w : {2, 5, 11, 12, 15, 23, 34}) {
    Device d(tiny(), StaticSource{});
    for (int i = 0; i < 900; ++i) run_frame(d, w, 0);
    const auto expect = oracle::simulate_schedule(90, 3, w, 0, 900);
    const auto& recs = d.timing().records;
    ASSERT_EQ(recs.size(), 900u);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      EXPECT_EQ(recs[i].dropped, expect[i].dropped) << "w=" << w << " frame " << i;
      EXPECT_NEAR(recs[i].interval_ms(), expect[i].intervalTicks / 90.0, 1e-6);
      EXPECT_NEAR(recs[i].posesReturnT * 1000.0, expect[i].startTick / 90.0, 1e-6);
    }
    const double law = 90.0 / std::ceil(w / (1000.0 / 90.0));
    EXPECT_NEAR(oracle::oracle_fps(expect, 90), law, 1e-12) << w;
    EXPECT_DOUBLE_EQ(frametime::aggregate(recs, 90.0).meanFps, law) << w;
  }
}

TEST(Schedule, SplitWorkFollowsOracle) {
  for (auto [scene, other] : std::vector<std::pair<int, int>>{{3, 9}, {10, 2}, {12, 1}, {6, 6}, {1, 30}}) {
    Device d(tiny(), StaticSource{});
    for (int i = 0; i < 200; ++i) run_frame(d, scene, other);
    const auto expect = oracle::simulate_schedule(90, 3, scene, other, 200);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      EXPECT_EQ(d.timing().records[i].dropped, expect[i].dropped);
      EXPECT_NEAR(d.timing().records[i].interval_ms(), expect[i].intervalTicks / 90.0, 1e-6);
    }
  }
}

TEST(Schedule, SegmentsConserveInterval) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> work(0.0, 30.0);
  Device d(tiny(), StaticSource{});
  for (int i = 0; i < 500; ++i) run_frame(d, work(rng), work(rng) * 0.2);
  std::int64_t prev = 0;
  for (const auto& r : d.timing().records) {
    EXPECT_GE(r.sceneMs, 0.0);
    EXPECT_GE(r.otherMs, 0.0);
    EXPECT_GE(r.compositorMs, 0.0);
    EXPECT_GE(r.idleMs, -1e-9);
    EXPECT_LE(r.compositorMs, 1.0 + 1e-12);
    EXPECT_GT(r.presentedVsync, prev);
    prev = r.presentedVsync;
  }
}

TEST(Schedule, ReturnTimesOnGridWhenNotDropping) {
  Device d(tiny(), StaticSource{});
  for (int k = 1; k <= 100; ++k) {
    d.wait_get_poses();
    EXPECT_NEAR(d.now_ms(), k * (1000.0 / 90.0) - 3.0, 1e-9);
    d.submit_eye(Eye::Left, eye_fb(d.config()));
    d.advance(7);
    d.submit_eye(Eye::Right, eye_fb(d.config()));
    d.end_frame();
  }
}

TEST(Schedule, RealClockPacesFrames) {
  HmdConfig c = tiny();
  c.clock = ClockKind::Real;
  c.refreshHz = 200.0;
  c.runningStartMs = 1.0;
  Device d(c, StaticSource{});
  for (int i = 0; i < 5; ++i) run_frame(d, 0, 0);
  EXPECT_GE(d.now_ms(), 5 * 5.0 - 1.0 - 1e-6);
  for (const auto& r : d.timing().records) EXPECT_NEAR(r.interval_ms(), 5.0, 1e-9);
}

TEST(Projection, NinetyDegreesSquareIsUnit) {
  HmdConfig c;
  c.fovDeg = 90;
  c.eyeWidthPx = c.eyeHeightPx = 100;
  const Mat4 p = projection_matrix(c, Eye::Left);
  EXPECT_NEAR(p(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p(1, 1), 1.0, 1e-15);
}

TEST(Projection, DefaultConstants) {
  const Mat4 p = projection_matrix(HmdConfig{}, Eye::Right);
  // cot(55 deg) by sin/cos, and its 1080/1200 scaling for the vertical.
  const double h = std::cos(55.0 * std::numbers::pi / 180.0) / std::sin(55.0 * std::numbers::pi / 180.0);
  EXPECT_NEAR(p(0, 0), h, 1e-12);
  EXPECT_NEAR(p(1, 1), h * 1080.0 / 1200.0, 1e-12);
  EXPECT_NEAR(p(2, 2), -100.1 / 99.9, 1e-12);
  EXPECT_NEAR(p(2, 3), -20.0 / 99.9, 1e-12);
  EXPECT_NEAR(p(0, 0), 0.70021, 1e-4);
  EXPECT_NEAR(p(1, 1), 0.63019, 1e-4);
  EXPECT_NEAR(p(2, 2), -1.002002, 1e-4);
  EXPECT_NEAR(p(2, 3), -0.2002, 1e-4);
  EXPECT_EQ(p(3, 2), -1.0);
  EXPECT_EQ(p(3, 3), 0.0);
}

TEST(Projection, FrustumEdgesMapToUnitClip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> fov(20, 160), dim(100, 2000), nearD(0.01, 1), depth(0.5, 50);
  for (int i = 0; i < 100; ++i) {
    HmdConfig c;
    c.fovDeg = fov(rng);
    c.eyeWidthPx = static_cast<int>(dim(rng));
    c.eyeHeightPx = static_cast<int>(dim(rng));
    c.nearM = nearD(rng);
    c.farM = c.nearM + 10 + depth(rng) * 10;
    const Mat4 p = projection_matrix(c);
    const double tH = std::tan(c.fovDeg * std::numbers::pi / 360.0);
    const double tV = tH * c.eyeHeightPx / c.eyeWidthPx;
    const double z = c.nearM + (c.farM - c.nearM) * std::uniform_real_distribution<double>(0, 1)(rng);
    for (double sx : {-1.0, 1.0}) {
      const Vec3 edge{sx * tH * z, 0.0, -z};
      const double cx = p(0, 0) * edge.x, cw = p(3, 2) * edge.z;
      EXPECT_NEAR(cx / cw, sx, 1e-12);
    }
    for (double sy : {-1.0, 1.0}) {
      const Vec3 edge{0.0, sy * tV * z, -z};
      EXPECT_NEAR(p(1, 1) * edge.y / (p(3, 2) * edge.z), sy, 1e-12);
    }
    // near and far planes land on -1 and +1
    auto ndc_z = [&](double d) { return (p(2, 2) * -d + p(2, 3)) / d; };
    EXPECT_NEAR(ndc_z(c.nearM), -1.0, 1e-9);
    EXPECT_NEAR(ndc_z(c.farM), 1.0, 1e-9);
  }
}

TEST(EyeToHead, SymmetricBaseline) {
  HmdConfig c;
  const auto l = eye_to_head(c, Eye::Left), r = eye_to_head(c, Eye::Right);
  EXPECT_EQ(l.translation.x, -0.032);
  EXPECT_EQ(l.translation.x + r.translation.x, 0.0);
  EXPECT_EQ(l.rotation, QuatRotation::identity());
}

TEST(EyeToHead, ViewMatricesDifferOnlyByBaseline) {
  HmdConfig c;
  const Mat4 head = Mat4::identity();
  const Mat4 vl = xform::inverse_rigid(head * xform::compose(eye_to_head(c, Eye::Left)));
  const Mat4 vr = xform::inverse_rigid(head * xform::compose(eye_to_head(c, Eye::Right)));
  const Mat4 diff = vl * xform::inverse_rigid(vr);
  EXPECT_LT(oracle::max_abs(diff, Mat4::translation({0.064, 0, 0})), 1e-15);
}

TEST(Predict, SingleSampleHeld) {
  std::mt19937_64 rng(8);
  const RigidTransform p = xform::decompose(oracle::random_rigid(rng));
  EXPECT_EQ(predict_pose({{1.0, p, true}}, 1.5), p);
}

TEST(Predict, AffineTranslationIsExact) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p0 = oracle::random_vec(rng), v = oracle::random_vec(rng);
    const double t0 = 0.3, t1 = 0.31, tp = 0.33;
    const auto r = predict_pose({{t0, {{}, p0 + v * t0}, true}, {t1, {{}, p0 + v * t1}, true}}, tp);
    EXPECT_LT(oracle::dist(r.translation, p0 + v * tp), 1e-12);
  }
}

TEST(Predict, RotationTenDegreesPerFrame) {
  const double T = 1.0 / 90.0;
  const auto q0 = xform::quat_from_axis_angle(Vec3{0, 0, 1}, deg(20));
  const auto q1 = xform::quat_from_axis_angle(Vec3{0, 0, 1}, deg(30));
  const auto r = predict_pose({{0.0, {q0, {}}, true}, {T, {q1, {}}, true}}, 2 * T);
  const auto aa = xform::axis_angle_from_quat(r.rotation);
  EXPECT_NEAR(aa.angle, deg(40), 1e-6);
  EXPECT_NEAR(aa.axis.z, 1.0, 1e-9);
}

TEST(Predict, RotationAboutArbitraryAxisMatchesRodrigues) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 50; ++i) {
    const auto aa = oracle::random_axis_angle(rng);
    const double w = 0.7;  // rad per unit time
    const auto q = [&](double t) { return xform::quat_from_axis_angle(aa.axis, w * t) * xform::quat_from_axis_angle(Vec3{1, 0, 0}, 0.2); };
    const auto r = predict_pose({{1.0, {q(1.0), {}}, true}, {1.1, {q(1.1), {}}, true}}, 1.25);
    const Vec3 v = oracle::random_vec(rng);
    const Vec3 want = oracle::rodrigues(oracle::rodrigues(v, {1, 0, 0}, 0.2), aa.axis, w * 1.25);
    EXPECT_LT(oracle::dist(r.rotation.rotate(v), want), 1e-9);
  }
}

TEST(Predict, EqualTimestampsHold) {
  const RigidTransform a{QuatRotation::identity(), {1, 0, 0}}, b{QuatRotation::identity(), {2, 0, 0}};
  EXPECT_EQ(predict_pose({{1.0, a, true}, {1.0, b, true}}, 2.0), b);
}

TEST(Live, InjectedPoseIsObserved) {
  Device d(tiny(), LiveSource{});
  const RigidTransform p{xform::quat_from_axis_angle(Vec3{0, 1, 0}, 0.3), {0, 1.6, 0.5}};
  d.inject_live_pose({0.0, p, true});
  EXPECT_EQ(d.wait_get_poses().deviceToWorld, p);
}

TEST(Live, LastWriterWins) {
  Device d(tiny(), LiveSource{});
  const RigidTransform a{QuatRotation::identity(), {1, 0, 0}}, b{QuatRotation::identity(), {0, 2, 0}};
  d.inject_live_pose({0.0, a, true});
  d.live_mailbox()->post({0.0, b, true});
  EXPECT_EQ(d.wait_get_poses().deviceToWorld, b);
}

TEST(Live, CrossThreadInjection) {
  Device d(tiny(), LiveSource{});
  auto box = d.live_mailbox();
  std::thread t([box] {
    for (int i = 1; i <= 1000; ++i) box->post({0.0, {QuatRotation::identity(), {static_cast<double>(i), 0, 0}}, true});
  });
  t.join();
  EXPECT_EQ(d.wait_get_poses().deviceToWorld.translation.x, 1000.0);
}

TEST(Live, WrongSourceKind) {
  Device d(tiny(), OrbitSource{});
  EXPECT_EQ(code_of([&] { d.inject_live_pose({}); }), ErrorCode::WrongSourceKind);
}

TEST(Trace, CsvParses) {
  const auto s = parse_trace_csv("t,px,py,pz,qx,qy,qz,qw\n0,0,1.6,0,0,0,0,1\n0.5,0.1,1.6,0,0,0.7071067811865476,0,0.7071067811865476\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].tS, 0.5);
  EXPECT_EQ(s[1].deviceToWorld.translation.x, 0.1);
  EXPECT_NEAR(s[1].deviceToWorld.rotation.y, std::sqrt(0.5), 1e-15);
}

TEST(Trace, CsvErrors) {
  EXPECT_EQ(code_of([] { parse_trace_csv("time,x\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_trace_csv("t,px,py,pz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1\n0,0,0,0,0,0,0,1\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_trace_csv("t,px,py,pz,qx,qy,qz,qw\n0,0,0,0,0,0,0,2\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_trace_csv("t,px,py,pz,qx,qy,qz,qw\n0,0,0,0,0,0,1\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { load_trace_csv("/nonexistent/trace.csv"); }), ErrorCode::Io);
}
