#pragma once

// Node catalog keyed by type name. Networks name these strings; behavior lives here.

#include <algorithm>
#include <charconv>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vrbridge/isosurface.hpp"
#include "vrbridge/mesh_io.hpp"
#include "vrbridge/netgraph.hpp"
#include "vrbridge/volume.hpp"

namespace vrbridge::net {

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline int phantom_arg(const std::vector<std::string>& parts, std::size_t i, int fallback) {
  if (parts.size() <= i) return fallback;
  int v = 0;
  const auto& s = parts[i];
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v <= 0)
    fail(ErrorCode::ConfigError, "bad phantom argument '" + s + "'");
  return v;
}

inline bool is_phantom(const std::string& name) { return name.rfind("phantom:", 0) == 0; }

// Procedural volumes are 200 mm across regardless of resolution.
inline meshvol::Volume phantom_volume(const std::string& spec) {
  const auto parts = split(spec, ':');
  const std::string shape = parts.size() > 1 ? parts[1] : "";
  const int n = phantom_arg(parts, 2, 64);
  if (n < 4) fail(ErrorCode::ConfigError, "phantom resolution must be at least 4");
  meshvol::Volume v = [&] {
    if (shape == "skull") return meshvol::make_skull_phantom(n);
    if (shape == "sphere") return meshvol::make_sphere_phantom(n, 0.35 * n);
    if (shape == "radial") return meshvol::make_radial_phantom(n, 0.45 * n);
    fail(ErrorCode::ConfigError, "unknown volume phantom '" + shape + "'");
  }();
  const double s = 200.0 / n;
  v.spacing = {s, s, s};
  return v;
}

inline void recenter(meshvol::TriangleMesh& m) {
  const auto box = meshvol::bounding_box(m);
  const xform::Vec3 c = (box.min + box.max) * 0.5;
  for (auto& p : m.vertices) p = p - c;
}

inline meshvol::TriangleMesh phantom_mesh(const std::string& spec) {
  const auto parts = split(spec, ':');
  const std::string shape = parts.size() > 1 ? parts[1] : "";
  meshvol::TriangleMesh m;
  if (shape == "skull" || shape == "sphere") {
    m = meshvol::isosurface(phantom_volume(spec), 500.0);
  } else if (shape == "cube") {
    m = meshvol::make_cube(phantom_arg(parts, 2, 100));
  } else if (shape == "uvsphere") {
    m = meshvol::make_uv_sphere(100.0, phantom_arg(parts, 2, 32), phantom_arg(parts, 3, 64));
    return m;
  } else {
    fail(ErrorCode::ConfigError, "unknown mesh phantom '" + shape + "'");
  }
  recenter(m);
  return m;
}

inline std::filesystem::path resolve(const ComputeContext& ctx, const std::string& name) {
  std::filesystem::path p(name);
  if (p.is_relative() && !ctx.base_dir().empty()) p = ctx.base_dir() / p;
  return p;
}

inline render::Shading parse_shading(const std::string& s) {
  if (s == "Lambert") return render::Shading::Lambert;
  if (s == "Flat") return render::Shading::Flat;
  fail(ErrorCode::ConfigError, "shading must be Lambert or Flat, got '" + s + "'");
}

inline render::Rgba8 color_param(const std::string& s) {
  auto c = render::parse_color(s);
  if (!c) fail(ErrorCode::ConfigError, "bad color '" + s + "'");
  return *c;
}

inline ParamSpec real(std::string n, double v, bool out = false) { return {std::move(n), v, out, {}}; }
inline ParamSpec integer(std::string n, long long v, bool out = false) { return {std::move(n), v, out, {}}; }
inline ParamSpec boolean(std::string n, bool v, bool out = false) { return {std::move(n), v, out, {}}; }
inline ParamSpec text(std::string n, std::string v) { return {std::move(n), std::move(v), false, {}}; }
inline ParamSpec trigger(std::string n) { return {std::move(n), TriggerTag{}, false, {}}; }
inline ParamSpec matrix(std::string n, bool out = false) { return {std::move(n), xform::Mat4::identity(), out, {}}; }
inline ParamSpec rotation(std::string n, bool out = false) {
  return {std::move(n), xform::AxisAngle{{0, 0, 1}, 0.0}, out, {}};
}

inline void drive(NodeType& t, const std::vector<std::string>& from, const std::vector<std::string>& to) {
  for (auto& p : t.params)
    if (std::find(from.begin(), from.end(), p.name) != from.end()) p.drives = to;
}

inline std::vector<ParamSpec> modify_params(bool integer_translation) {
  std::vector<ParamSpec> p{real("X-Rotation", 0.0), real("Scalefactor", 1.0)};
  for (const char* axis : {"X", "Y", "Z"}) {
    std::string n = std::string(axis) + "-Translation[mm]";
    p.push_back(integer_translation ? integer(n, 0) : real(n, 0.0));
  }
  return p;
}

inline meshvol::ModifyParams read_modify(const ComputeContext& ctx, bool integer_translation) {
  meshvol::ModifyParams mp;
  mp.xRotationDeg = ctx.param<double>("X-Rotation");
  mp.scaleFactor = ctx.param<double>("Scalefactor");
  double* t[3] = {&mp.tx, &mp.ty, &mp.tz};
  const char* names[3] = {"X-Translation[mm]", "Y-Translation[mm]", "Z-Translation[mm]"};
  for (int i = 0; i < 3; ++i)
    *t[i] = integer_translation ? static_cast<double>(ctx.param<long long>(names[i])) : ctx.param<double>(names[i]);
  return mp;
}

inline NodeTypePtr wem_load() {
  auto t = std::make_shared<NodeType>();
  t->name = "WEMLoad";
  t->outputs = {{"outWEM", PortKind::Base}};
  t->params = {text("filename", "")};
  t->compute = [](ComputeContext& ctx) {
    const auto& name = ctx.param<std::string>("filename");
    if (name.empty()) fail(ErrorCode::ConfigError, "filename is empty");
    auto mesh = is_phantom(name) ? phantom_mesh(name) : meshvol::load_mesh(resolve(ctx, name));
    ctx.output("outWEM", std::make_shared<const meshvol::TriangleMesh>(std::move(mesh)));
  };
  return t;
}

inline NodeTypePtr volume_load() {
  auto t = std::make_shared<NodeType>();
  t->name = "VolumeLoad";
  t->outputs = {{"outImage", PortKind::Image}};
  t->params = {text("filename", "")};
  t->compute = [](ComputeContext& ctx) {
    const auto& name = ctx.param<std::string>("filename");
    if (name.empty()) fail(ErrorCode::ConfigError, "filename is empty");
    auto v = is_phantom(name) ? phantom_volume(name) : meshvol::load_volume(resolve(ctx, name));
    ctx.output("outImage", std::make_shared<const meshvol::Volume>(std::move(v)));
  };
  return t;
}

inline NodeTypePtr threshold_node() {
  auto t = std::make_shared<NodeType>();
  t->name = "Threshold";
  t->inputs = {{"input0", PortKind::Image}};
  t->outputs = {{"output0", PortKind::Image}};
  t->params = {real("threshold", 0.0)};
  t->compute = [](ComputeContext& ctx) {
    auto in = ctx.input_as<VolumePtr>("input0");
    ctx.output("output0", std::make_shared<const meshvol::Volume>(meshvol::threshold(*in, ctx.param<double>("threshold"))));
  };
  return t;
}

inline NodeTypePtr mask_stats() {
  auto t = std::make_shared<NodeType>();
  t->name = "MaskStats";
  t->inputs = {{"input0", PortKind::Image}};
  t->outputs = {{"stats", PortKind::Base}};
  t->compute = [](ComputeContext& ctx) {
    auto in = ctx.input_as<VolumePtr>("input0");
    const auto count = meshvol::count_nonzero(*in);
    const auto total = in->scalars.size();
    nlohmann::json j{{"count", count}, {"total", total}, {"fraction", static_cast<double>(count) / static_cast<double>(total)}};
    ctx.output("stats", std::make_shared<const nlohmann::json>(std::move(j)));
  };
  return t;
}

inline NodeTypePtr iso_surface() {
  auto t = std::make_shared<NodeType>();
  t->name = "IsoSurface";
  t->inputs = {{"input0", PortKind::Image}};
  t->outputs = {{"outWEM", PortKind::Base}};
  t->params = {real("iso", 500.0)};
  t->compute = [](ComputeContext& ctx) {
    auto in = ctx.input_as<VolumePtr>("input0");
    ctx.output("outWEM", std::make_shared<const meshvol::TriangleMesh>(meshvol::isosurface(*in, ctx.param<double>("iso"))));
  };
  return t;
}

inline NodeTypePtr wem_modify() {
  auto t = std::make_shared<NodeType>();
  t->name = "WEMModify";
  t->inputs = {{"inWEM", PortKind::Base}};
  t->outputs = {{"outWEM", PortKind::Base}};
  t->params = modify_params(false);
  t->compute = [](ComputeContext& ctx) {
    auto in = ctx.input_as<MeshPtr>("inWEM");
    const auto mp = read_modify(ctx, false);
    if (mp.is_identity()) {
      ctx.output("outWEM", in);
      return;
    }
    ctx.output("outWEM", std::make_shared<const meshvol::TriangleMesh>(meshvol::modify_mesh(*in, mp)));
  };
  return t;
}

inline std::vector<ParamSpec> material_params() {
  return {text("baseColor", "#d8d0c0"), text("shading", "Lambert"), boolean("texture", false), real("modelScale", 0.001),
          text("triangulationMode", "Strip")};
}

inline render::SceneItem make_item(const ComputeContext& ctx, MeshPtr mesh, const xform::Mat4& model) {
  render::SceneItem item;
  item.mesh = std::move(mesh);
  const double s = ctx.param<double>("modelScale");
  if (!(s > 0.0)) fail(ErrorCode::ConfigError, "modelScale must be positive");
  item.modelToWorld = model * xform::Mat4::scale(s);
  item.material.baseColor = color_param(ctx.param<std::string>("baseColor"));
  item.material.shading = parse_shading(ctx.param<std::string>("shading"));
  item.material.textured = ctx.param<bool>("texture");
  return item;
}

inline NodeTypePtr so_wem_renderer() {
  auto t = std::make_shared<NodeType>();
  t->name = "SoWEMRenderer";
  t->kind = NodeKind::SceneNode;
  t->inputs = {{"inWEM", PortKind::Base}};
  t->outputs = {{"scene", PortKind::Scene}};
  t->params = material_params();
  t->params.push_back(matrix("modelMatrix"));
  t->compute = [](ComputeContext& ctx) {
    auto mesh = ctx.input_as<MeshPtr>("inWEM");
    auto scene = std::make_shared<render::Scene>();
    scene->items.push_back(make_item(ctx, mesh, ctx.param<xform::Mat4>("modelMatrix")));
    ctx.output("scene", ScenePtr(std::move(scene)));
  };
  return t;
}

inline constexpr int kSeparatorChildren = 4;

// With useCamera set, the separator acts as a viewer and publishes `camera` as the companion pose.
inline NodeTypePtr so_separator() {
  auto t = std::make_shared<NodeType>();
  t->name = "SoSeparator";
  t->kind = NodeKind::SceneNode;
  for (int i = 0; i < kSeparatorChildren; ++i) t->inputs.push_back({"child" + std::to_string(i), PortKind::Scene, false});
  t->outputs = {{"self", PortKind::Scene}};
  t->params = {matrix("camera"), boolean("useCamera", false)};
  t->compute = [](ComputeContext& ctx) {
    auto scene = std::make_shared<render::Scene>();
    for (int i = 0; i < kSeparatorChildren; ++i) {
      const DataValue& v = ctx.input("child" + std::to_string(i));
      if (const auto* s = std::get_if<ScenePtr>(&v)) {
        scene->items.insert(scene->items.end(), (*s)->items.begin(), (*s)->items.end());
        if (!scene->companionPose && (*s)->companionPose) scene->companionPose = (*s)->companionPose;
      }
    }
    if (ctx.param<bool>("useCamera")) {
      const auto& cam = ctx.param<xform::Mat4>("camera");
      xform::decompose(cam);  // rejects non-rigid cameras
      scene->companionPose = cam;
    }
    ctx.output("self", ScenePtr(std::move(scene)));
  };
  return t;
}

// The headset module. Pose params are written by the frame loop every frame;
// the mesh input is placed with the module's own modify params.
inline NodeTypePtr htc_vive() {
  auto t = std::make_shared<NodeType>();
  t->name = "HTCVive";
  t->kind = NodeKind::SceneNode;
  t->inputs = {{"inScene", PortKind::Scene, false}, {"inMesh", PortKind::Base, false}};
  t->outputs = {{"scene", PortKind::Scene}};
  t->params = {boolean("listenToFinishNotifications", true), boolean("listenToRepairNotifications", true),
               boolean("listenToSelectionChangedNotifications", true), real("progress", 0.0, true)};
  for (auto& p : material_params()) t->params.push_back(std::move(p));
  t->params.push_back(trigger("Offline"));
  t->params.push_back(boolean("offlineMode", false, true));
  for (auto& p : modify_params(true)) t->params.push_back(std::move(p));
  t->params.push_back(matrix("HMDPoseMatrix", true));
  t->params.push_back(rotation("HMDQuaternionRot/Vec", true));
  drive(*t, {"HMDPoseMatrix"}, {"HMDQuaternionRot/Vec"});
  drive(*t, {"Offline"}, {"offlineMode"});
  t->on_param = [](ParamContext& ctx, const std::string& name) {
    if (name == "HMDPoseMatrix") {
      const auto pose = xform::decompose(ctx.get<xform::Mat4>("HMDPoseMatrix"));
      ctx.set("HMDQuaternionRot/Vec", xform::axis_angle_from_quat(pose.rotation));
    } else if (name == "Offline") {
      ctx.set("offlineMode", true);
    }
  };
  t->compute = [](ComputeContext& ctx) {
    auto scene = std::make_shared<render::Scene>();
    if (const auto* s = std::get_if<ScenePtr>(&ctx.input("inScene"))) *scene = **s;
    if (const auto* m = std::get_if<MeshPtr>(&ctx.input("inMesh"))) {
      const auto mp = read_modify(ctx, true);
      MeshPtr placed = mp.is_identity() ? *m : std::make_shared<const meshvol::TriangleMesh>(meshvol::modify_mesh(**m, mp));
      scene->items.push_back(make_item(ctx, placed, xform::Mat4::identity()));
    }
    ctx.output("scene", ScenePtr(std::move(scene)));
  };
  return t;
}

inline NodeTypePtr decompose_matrix() {
  auto t = std::make_shared<NodeType>();
  t->name = "DecomposeMatrix";
  t->params = {matrix("matrix"), rotation("rotation", true), real("tx", 0.0, true), real("ty", 0.0, true),
               real("tz", 0.0, true)};
  drive(*t, {"matrix"}, {"rotation", "tx", "ty", "tz"});
  t->on_param = [](ParamContext& ctx, const std::string& name) {
    if (name != "matrix") return;
    const auto r = xform::decompose(ctx.get<xform::Mat4>("matrix"));
    ctx.set("rotation", xform::axis_angle_from_quat(r.rotation));
    ctx.set("tx", r.translation.x);
    ctx.set("ty", r.translation.y);
    ctx.set("tz", r.translation.z);
  };
  return t;
}

inline NodeTypePtr compose_matrix() {
  auto t = std::make_shared<NodeType>();
  t->name = "ComposeMatrix";
  t->params = {rotation("rotation"), real("tx", 0.0), real("ty", 0.0), real("tz", 0.0), matrix("matrix", true)};
  drive(*t, {"rotation", "tx", "ty", "tz"}, {"matrix"});
  t->on_param = [](ParamContext& ctx, const std::string& name) {
    if (name == "matrix") return;
    const xform::RigidTransform r{xform::quat_from_axis_angle(ctx.get<xform::AxisAngle>("rotation")),
                                  {ctx.get<double>("tx"), ctx.get<double>("ty"), ctx.get<double>("tz")}};
    ctx.set("matrix", xform::compose(r));
  };
  return t;
}

inline NodeTypePtr matrix_arithmetic() {
  auto t = std::make_shared<NodeType>();
  t->name = "MatrixArithmetic";
  t->params = {matrix("a"), matrix("b"), text("operation", "multiply"), matrix("result", true)};
  drive(*t, {"a", "b", "operation"}, {"result"});
  t->on_param = [](ParamContext& ctx, const std::string& name) {
    if (name == "result") return;
    const auto& op = ctx.get<std::string>("operation");
    const auto& a = ctx.get<xform::Mat4>("a");
    if (op == "multiply") ctx.set("result", a * ctx.get<xform::Mat4>("b"));
    else if (op == "inverse") ctx.set("result", xform::inverse_rigid(a));
    else fail(ErrorCode::ConfigError, "operation must be multiply or inverse, got '" + op + "'");
  };
  return t;
}

inline NodeTypePtr arithmetic() {
  auto t = std::make_shared<NodeType>();
  t->name = "Arithmetic";
  t->params = {real("a", 0.0), real("b", 0.0), text("operation", "add"), real("result", 0.0, true)};
  drive(*t, {"a", "b", "operation"}, {"result"});
  t->on_param = [](ParamContext& ctx, const std::string& name) {
    if (name == "result") return;
    const double a = ctx.get<double>("a"), b = ctx.get<double>("b");
    const auto& op = ctx.get<std::string>("operation");
    if (op == "add") ctx.set("result", a + b);
    else if (op == "subtract") ctx.set("result", a - b);
    else if (op == "multiply") ctx.set("result", a * b);
    else if (op == "divide") ctx.set("result", a / b);
    else fail(ErrorCode::ConfigError, "unknown operation '" + op + "'");
  };
  return t;
}

}  // namespace detail

inline const std::map<std::string, NodeTypePtr>& catalog() {
  static const std::map<std::string, NodeTypePtr> types = [] {
    std::map<std::string, NodeTypePtr> m;
    for (auto t : {detail::wem_load(), detail::volume_load(), detail::threshold_node(), detail::mask_stats(),
                   detail::iso_surface(), detail::wem_modify(), detail::so_wem_renderer(), detail::so_separator(),
                   detail::htc_vive(), detail::decompose_matrix(), detail::compose_matrix(),
                   detail::matrix_arithmetic(), detail::arithmetic()})
      m.emplace(t->name, t);
    return m;
  }();
  return types;
}

inline NodeTypePtr node_type(const std::string& name) {
  auto it = catalog().find(name);
  if (it == catalog().end()) fail(ErrorCode::SchemaError, "unknown node type '" + name + "'");
  return it->second;
}

}  // namespace vrbridge::net
