#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "vrbridge/netgraph_json.hpp"
#include "vrbridge/png.hpp"
#include "vrbridge/render.hpp"

using namespace vrbridge;
using namespace vrbridge::render;
using xform::Mat4;
using xform::Vec3;
namespace fs = std::filesystem;

namespace {

const fs::path kNetworks = VRBRIDGE_NETWORKS_DIR;

std::shared_ptr<const meshvol::TriangleMesh> share(meshvol::TriangleMesh m) {
  return std::make_shared<const meshvol::TriangleMesh>(std::move(m));
}

meshvol::TriangleMesh quad(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  meshvol::TriangleMesh m;
  m.vertices = {a, b, c, d};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return m;
}

Material flat(Rgba8 c) { return {c, Shading::Flat, false}; }

EyeRenderDesc identity_desc(int w, int h) { return {Mat4::identity(), Mat4::identity(), w, h}; }

EyeRenderDesc default_eye(int w = 1080, int h = 1200) {
  hmd::HmdConfig c;
  c.eyeWidthPx = w;
  c.eyeHeightPx = h;
  return {Mat4::identity(), hmd::projection_matrix(c), w, h};
}

std::size_t count_color(const Framebuffer& fb, Rgba8 c) {
  std::size_t n = 0;
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) n += fb.pixel(x, y) == c;
  return n;
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

Framebuffer noise(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  Framebuffer fb(w, h);
  for (auto& c : fb.color) c = static_cast<std::uint8_t>(rng() & 0xff);
  return fb;
}

const Rgba8 kWhite{255, 255, 255, 255};
const Rgba8 kRed{255, 0, 0, 255};
const Rgba8 kGreen{0, 255, 0, 255};

}  // namespace

TEST(Raster, EmptySceneIsBackground) {
  Scene s;
  const auto fb = render_scene_eye(s, default_eye(64, 48));
  EXPECT_EQ(count_color(fb, s.background), 64u * 48u);
  for (float d : fb.depth) EXPECT_EQ(d, 1.0f);
}

TEST(Raster, FullViewportQuadCoversEveryPixel) {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{64, 48}, {1, 1}, {33, 17}, {1080, 1200}}) {
    Scene s;
    s.items.push_back({share(quad({-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0})), Mat4::identity(), flat(kWhite)});
    const auto fb = render_scene_eye(s, identity_desc(w, h));
    EXPECT_EQ(count_color(fb, kWhite), static_cast<std::size_t>(w) * h) << w << "x" << h;
    for (float d : fb.depth) EXPECT_EQ(d, 0.5f);
  }
}

// Each pixel inside a shared-edge tessellation belongs to exactly one triangle.
TEST(Raster, TopLeftRuleTilesWithoutGapsOrOverlap) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  const int n = 6;
  std::vector<Vec3> grid;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      const bool border = i == 0 || j == 0 || i == n || j == n;
      // grid spans beyond the viewport so the union covers it
      double x = -1.2 + 2.4 * i / n + (border ? 0 : jitter(rng) * 2.4 / n);
      double y = -1.2 + 2.4 * j / n + (border ? 0 : jitter(rng) * 2.4 / n);
      // odd rows land on half-pixel positions: pixel centers and pixel edges, to force ties
      if (!border && j % 2) {
        x = -1.0 + 2.0 * std::round((x + 1.0) * 40.0) / 80.0;
        y = -1.0 + 2.0 * std::round((y + 1.0) * 30.0) / 60.0;
      }
      grid.push_back({x, y, 0});
    }
  std::vector<int> coverage(40 * 30, 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::uint32_t a = j * (n + 1) + i, b = a + 1, c = a + n + 2, d = a + n + 1;
      for (auto f : {meshvol::Face{a, b, c}, meshvol::Face{a, c, d}}) {
        meshvol::TriangleMesh m;
        m.vertices = {grid[f[0]], grid[f[1]], grid[f[2]]};
        m.faces = {{0, 1, 2}};
        Scene s;
        s.items.push_back({share(m), Mat4::identity(), flat(kWhite)});
        const auto fb = render_scene_eye(s, identity_desc(40, 30));
        for (int y = 0; y < 30; ++y)
          for (int x = 0; x < 40; ++x) coverage[y * 40 + x] += fb.pixel(x, y) == kWhite;
      }
    }
  for (int k = 0; k < 40 * 30; ++k) EXPECT_EQ(coverage[k], 1) << "pixel " << k % 40 << "," << k / 40;
}

TEST(Raster, CubeSilhouetteMatchesProjectedSquare) {
  const int W = 1080, H = 1200;
  const auto desc = default_eye(W, H);
  Scene s;
  s.items.push_back({share(meshvol::make_cube(1.0)), Mat4::translation({-0.5, -0.5, -2.5}), flat(kWhite)});
  const auto fb = render_scene_eye(s, desc);
  // front face at z = -1.5 hides the rest; its half-extent in ndc is 0.5 / 1.5 * P
  const double hx = 0.5 / 1.5 * desc.proj(0, 0) * W / 2.0;
  const double hy = 0.5 / 1.5 * desc.proj(1, 1) * H / 2.0;
  const double area = (2 * hx) * (2 * hy);
  const double got = static_cast<double>(count_color(fb, kWhite));
  EXPECT_NEAR(got, area, 0.01 * area);
}

TEST(Raster, NearerTriangleWinsInEitherOrder) {
  const auto desc = default_eye(160, 120);
  auto near = share(quad({-1, -1, -2}, {1, -1, -2}, {1, 1, -2}, {-1, 1, -2}));
  auto far = share(quad({-1.5, -0.5, -3}, {2, -0.5, -3}, {2, 2, -3}, {-1.5, 2, -3}));
  Scene a, b;
  a.items = {{near, Mat4::identity(), flat(kRed)}, {far, Mat4::identity(), flat(kGreen)}};
  b.items = {{far, Mat4::identity(), flat(kGreen)}, {near, Mat4::identity(), flat(kRed)}};
  const auto fa = render_scene_eye(a, desc), fbb = render_scene_eye(b, desc);
  EXPECT_EQ(fa.color, fbb.color);
  // near quad alone tells which pixels it covers
  Scene only;
  only.items = {{near, Mat4::identity(), flat(kRed)}};
  const auto fn = render_scene_eye(only, desc);
  std::size_t green = 0;
  for (int y = 0; y < 120; ++y)
    for (int x = 0; x < 160; ++x) {
      if (fn.pixel(x, y) == kRed) {
        EXPECT_EQ(fa.pixel(x, y), kRed);
      }
      green += fa.pixel(x, y) == kGreen;
    }
  EXPECT_GT(green, 100u);
}

TEST(Raster, IntersectingTrianglesResolvePerPixel) {
  // Two quads crossing at x = 0: left half of red is nearer, right half of green is nearer.
  const auto desc = default_eye(101, 51);
  Scene s;
  s.items = {{share(quad({-1, -1, -1.5}, {1, -1, -2.5}, {1, 1, -2.5}, {-1, 1, -1.5})), Mat4::identity(), flat(kRed)},
             {share(quad({-1, -1, -2.5}, {1, -1, -1.5}, {1, 1, -1.5}, {-1, 1, -2.5})), Mat4::identity(), flat(kGreen)}};
  const auto fb = render_scene_eye(s, desc);
  EXPECT_EQ(fb.pixel(35, 25), kRed);
  EXPECT_EQ(fb.pixel(65, 25), kGreen);
}

TEST(Raster, Deterministic) {
  auto mesh = share(meshvol::compute_normals(meshvol::make_uv_sphere(0.5, 24, 32)));
  Scene s;
  s.items = {{mesh, Mat4::translation({0.1, 0, -2}), {{200, 180, 160, 255}, Shading::Lambert, true}}};
  const auto desc = default_eye(200, 220);
  const auto a = render_scene_eye(s, desc), b = render_scene_eye(s, desc);
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(Raster, RigidMotionOfCameraAndSceneIsInvisible) {
  auto mesh = share(meshvol::compute_normals(meshvol::make_uv_sphere(0.4, 16, 24)));
  Scene s;
  const Mat4 model = Mat4::translation({0.25, -0.125, -2});
  s.items = {{mesh, model, {{220, 200, 180, 255}, Shading::Lambert, false}}};
  const auto desc = default_eye(160, 180);
  const auto base = render_scene_eye(s, desc);

  // exactly representable motion: quarter turns and dyadic offsets
  Mat4 quarter = Mat4::identity();
  quarter(0, 0) = 0;
  quarter(0, 2) = 1;
  quarter(2, 0) = -1;
  quarter(2, 2) = 0;
  const Mat4 g = Mat4::translation({4, -2, 0.5}) * quarter;
  Scene moved = s;
  moved.items[0].modelToWorld = g * model;
  EyeRenderDesc d2 = desc;
  d2.view = xform::inverse_rigid(g);
  EXPECT_EQ(render_scene_eye(moved, d2).color, base.color);

  // general motion: equal up to rounding at a few silhouette pixels
  std::mt19937_64 rng(31);
  for (int t = 0; t < 3; ++t) {
    const Mat4 r = oracle::random_rigid(rng);
    moved.items[0].modelToWorld = r * model;
    d2.view = xform::inverse_rigid(r);
    const auto fb = render_scene_eye(moved, d2);
    std::size_t same = 0;
    for (std::size_t i = 0; i < fb.color.size(); i += 4) same += std::equal(&fb.color[i], &fb.color[i + 4], &base.color[i]);
    EXPECT_GE(static_cast<double>(same) / (160.0 * 180.0), 0.995);
  }
}

TEST(Raster, PerspectiveCorrectTexture) {
  // Quad receding to the right; u = 0.5 lies at world x = 0 which projects to the center column.
  const int W = 400, H = 100;
  const auto desc = default_eye(W, H);
  meshvol::TriangleMesh m = quad({-1, -0.2, -1}, {1, -0.2, -3}, {1, 0.2, -3}, {-1, 0.2, -1});
  m.uvs = {{0, 0.01}, {1, 0.01}, {1, 0.02}, {0, 0.02}};  // a single checker row
  Scene s;
  s.items = {{share(m), Mat4::identity(), {kWhite, Shading::Flat, true}}};
  const auto fb = render_scene_eye(s, desc);
  const int row = H / 2;
  int transition = -1;
  for (int x = 1; x < W; ++x) {
    const bool prevBright = fb.pixel(x - 1, row).r == 255, bright = fb.pixel(x, row).r == 255;
    // cells 3 (dark) -> 4 (bright) at u = 0.5
    if (!prevBright && bright && (transition < 0 || std::abs(x - W / 2) < std::abs(transition - W / 2))) transition = x;
  }
  EXPECT_NEAR(transition, W / 2, 1);
}

TEST(Raster, LambertHeadlight) {
  const auto desc = default_eye(101, 101);
  Scene facing;
  facing.items = {{share(quad({-1, -1, -2}, {1, -1, -2}, {1, 1, -2}, {-1, 1, -2})), Mat4::identity(),
                   {{200, 200, 200, 255}, Shading::Lambert, false}}};
  EXPECT_EQ(render_scene_eye(facing, desc).pixel(50, 50).r, 200);

  // tilted 60 degrees about Y through the view axis: n.l = cos 60 at the center pixel
  Scene tilted = facing;
  tilted.items[0].modelToWorld =
      Mat4::translation({0, 0, -2}) * xform::rotation_matrix(xform::quat_from_axis_angle(Vec3{0, 1, 0}, std::numbers::pi / 3)) *
      Mat4::translation({0, 0, 2});
  const double want = 200.0 * (kAmbient + (1 - kAmbient) * 0.5);
  EXPECT_NEAR(render_scene_eye(tilted, desc).pixel(50, 50).r, want, 2.0);

  // back side is lit the same way
  Scene back = facing;
  back.items[0].mesh = share(quad({-1, -1, -2}, {-1, 1, -2}, {1, 1, -2}, {1, -1, -2}));
  EXPECT_EQ(render_scene_eye(back, desc).pixel(50, 50).r, 200);
}

TEST(Raster, NearPlaneClipsGeometryBehindTheEye) {
  // Floor through the eye's feet extending behind the camera.
  const auto desc = default_eye(120, 100);
  Scene s;
  s.items = {{share(quad({-50, -1, 5}, {50, -1, 5}, {50, -1, -50}, {-50, -1, -50})), Mat4::identity(), flat(kWhite)}};
  const auto fb = render_scene_eye(s, desc);
  for (int x = 0; x < 120; ++x) {
    EXPECT_EQ(fb.pixel(x, 0), s.background);
    EXPECT_EQ(fb.pixel(x, 99), kWhite);
  }
}

TEST(Raster, TexturedWithoutUvsUsesPlanarMapping) {
  auto cube = meshvol::make_cube(1.0);
  cube.uvs.clear();
  Scene s;
  s.items = {{share(cube), Mat4::translation({-0.5, -0.5, -2.5}), {kWhite, Shading::Flat, true}}};
  const auto fb = render_scene_eye(s, default_eye(200, 200));
  const Rgba8 dark{static_cast<std::uint8_t>(std::lround(255 * kCheckerDark)), static_cast<std::uint8_t>(std::lround(255 * kCheckerDark)),
                   static_cast<std::uint8_t>(std::lround(255 * kCheckerDark)), 255};
  EXPECT_GT(count_color(fb, dark), 500u);
  EXPECT_GT(count_color(fb, kWhite), 500u);
}

TEST(Distortion, ZeroCoefficientsAreIdentity) {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{64, 48}, {33, 77}, {1, 1}}) {
    const auto src = noise(w, h, 5);
    EXPECT_EQ(apply_distortion(src, 0, 0).color, src.color);
  }
}

TEST(Distortion, CenterPixelFixed) {
  const auto src = noise(101, 81, 9);
  for (double k : {0.1, 0.22, 1.0, 5.0}) EXPECT_EQ(apply_distortion(src, k, k).pixel(50, 40), src.pixel(50, 40));
}

TEST(Distortion, RadiusPolynomial) {
  EXPECT_NEAR(distorted_radius(0.5, 0.2, 0), 0.525, 1e-15);
  EXPECT_EQ(distorted_radius(0.0, 0.22, 0.24), 0.0);
  EXPECT_NEAR(distorted_radius(1.0, 0.22, 0.24), 1.46, 1e-15);
}

TEST(Distortion, ImageSamplesAtDistortedRadius) {
  // red encodes the source column; destination r = 0.5 on the +x axis reads column at r = 0.525
  const int W = 201, H = 200;
  Framebuffer src(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) src.set_pixel(x, y, {static_cast<std::uint8_t>(x), 0, 0, 255});
  const auto out = apply_distortion(src, 0.2, 0.0);
  const double unit = 100.0;
  const int x = 100 + 50;  // ox = 50 = 0.5 unit
  const double oy = 0.5;   // row 100 sits half a pixel below center
  const double r = std::hypot(50.0, oy) / unit;
  const double expect = 100.5 + 50.0 * (1 + 0.2 * r * r) - 0.5;
  EXPECT_NEAR(out.pixel(x, 100).r, expect, 0.5 + 1e-9);
  EXPECT_NEAR(expect, 152.5, 1e-3);
}

TEST(Distortion, MappingIsMonotone) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> k(0, 2);
  for (int t = 0; t < 200; ++t) {
    const double k1 = k(rng), k2 = k(rng);
    double prev = -1;
    for (double r = 0; r <= std::sqrt(2.0) + 1e-12; r += 1e-3) {
      const double d = distorted_radius(r, k1, k2);
      EXPECT_GT(d, prev);
      prev = d;
    }
  }
}

TEST(Distortion, OutsideSamplesAreBackground) {
  const auto src = noise(64, 64, 2);
  const Rgba8 bg{1, 2, 3, 255};
  const auto out = apply_distortion(src, 0.22, 0.24, bg);
  EXPECT_EQ(out.pixel(0, 0), bg);
  EXPECT_EQ(out.pixel(63, 63), bg);
}

TEST(SideBySide, PanelResolution) {
  const Framebuffer l(1080, 1200, kRed), r(1080, 1200, kGreen);
  const auto sbs = compose_side_by_side(l, r);
  EXPECT_EQ(sbs.width, 2160);
  EXPECT_EQ(sbs.height, 1200);
  EXPECT_EQ(sbs.pixel(0, 0), l.pixel(0, 0));
  EXPECT_EQ(sbs.pixel(1079, 1199), kRed);
  EXPECT_EQ(sbs.pixel(1080, 0), kGreen);
  EXPECT_EQ(sbs.pixel(2159, 1199), kGreen);
}

TEST(SideBySide, ColumnsCopiedExactly) {
  const auto l = noise(13, 7, 1), r = noise(9, 7, 2);
  const auto s = compose_side_by_side(l, r);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 13; ++x) EXPECT_EQ(s.pixel(x, y), l.pixel(x, y));
    for (int x = 0; x < 9; ++x) EXPECT_EQ(s.pixel(13 + x, y), r.pixel(x, y));
  }
}

TEST(SideBySide, HeightMismatch) {
  try {
    compose_side_by_side(Framebuffer(4, 4), Framebuffer(4, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HeightMismatch);
  }
}

TEST(Companion, EqualsEyeRenderWithZeroBaseline) {
  hmd::HmdConfig cfg;
  cfg.eyeWidthPx = 180;
  cfg.eyeHeightPx = 200;
  cfg.ipdM = 0.0;
  Scene s;
  s.items = {{share(meshvol::compute_normals(meshvol::make_uv_sphere(0.3, 12, 16))), Mat4::translation({0, 1.5, -1}),
              {{210, 190, 170, 255}, Shading::Lambert, true}}};
  std::mt19937_64 rng(5);
  const Mat4 head = oracle::random_rigid(rng);
  for (auto eye : {hmd::Eye::Left, hmd::Eye::Right}) {
    const auto e = render_scene_eye(s, eye_desc(cfg, head, eye));
    const auto c = render_companion(s, xform::decompose(head), companion_desc(cfg, 180, 200));
    EXPECT_EQ(apply_distortion(e, 0, 0).color, c.color);
  }
  const auto ei = render_scene_eye(s, eye_desc(cfg, Mat4::identity(), hmd::Eye::Left));
  const auto ci = render_companion(s, xform::RigidTransform::identity(), companion_desc(cfg, 180, 200));
  EXPECT_EQ(ei.color, ci.color);
}

TEST(Companion, HeadsetNetworkGoldenHash) {
  net::Network n = net::load_network_file(kNetworks / "fig6.json");
  const hmd::OrbitSource orbit;
  const Mat4 head = xform::compose(orbit.at(0.0));
  n.set_param("HTCVive", "HMDPoseMatrix", head);
  const auto scene = std::get<net::ScenePtr>(n.evaluate("3DUserView.self"));
  ASSERT_TRUE(scene->companionPose.has_value());
  EXPECT_LT(oracle::max_abs(*scene->companionPose, head), 1e-12);
  const auto fb = render_companion(*scene, xform::decompose(*scene->companionPose), companion_desc(hmd::HmdConfig{}, 320, 240));
  const auto again = render_companion(*scene, xform::decompose(*scene->companionPose), companion_desc(hmd::HmdConfig{}, 320, 240));
  EXPECT_EQ(fb.color, again.color);
  EXPECT_LT(count_color(fb, scene->background), 320u * 240u - 500u);
  EXPECT_EQ(fnv1a(fb.color), 7514044548453616426ull) << std::hex << fnv1a(fb.color);
  const auto png = encode_png(fb);
  EXPECT_EQ(png, encode_png(again));
}

TEST(Png, RoundTrip) {
  const auto src = noise(37, 23, 8);
  const auto back = decode_png(encode_png(src));
  EXPECT_EQ(back.width, 37);
  EXPECT_EQ(back.height, 23);
  EXPECT_EQ(back.color, src.color);
}

TEST(Png, OneRedPixelThroughAFile) {
  const auto path = (fs::temp_directory_path() / "vrbridge_red.png").string();
  write_png(Framebuffer(1, 1, kRed), path);
  const auto fb = read_png(path);
  ASSERT_EQ(fb.width, 1);
  EXPECT_EQ(fb.pixel(0, 0), (Rgba8{255, 0, 0, 255}));
  fs::remove(path);
}

TEST(Png, IoErrors) {
  try {
    write_png(Framebuffer(1, 1), "/nonexistent-dir/x.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
  EXPECT_THROW(read_png("/nonexistent-dir/x.png"), Error);
  EXPECT_THROW(decode_png({1, 2, 3}), Error);
}
