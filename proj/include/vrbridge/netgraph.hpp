#pragma once

// Demand-driven dataflow network: typed nodes, kind-checked data
// connections, directional parameter links, whole-value caching with dirty
// propagation, and macro nodes that own a sub-network.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/mesh.hpp"
#include "vrbridge/scene.hpp"
#include "vrbridge/volume.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::net {

// Connector shapes: triangle (Image), rectangle (Base), half circle (Scene).
enum class PortKind { Image, Base, Scene, Param };
enum class NodeKind { Processing, SceneNode, Macro };
enum class ParamType { Bool, Int, Real, String, Trigger, Matrix, Rotation };

inline const char* to_string(PortKind k) {
  switch (k) {
    case PortKind::Image: return "Image";
    case PortKind::Base: return "Base";
    case PortKind::Scene: return "Scene";
    case PortKind::Param: return "Param";
  }
  return "?";
}

inline const char* to_string(ParamType t) {
  switch (t) {
    case ParamType::Bool: return "Bool";
    case ParamType::Int: return "Integer";
    case ParamType::Real: return "Float";
    case ParamType::String: return "String";
    case ParamType::Trigger: return "Trigger";
    case ParamType::Matrix: return "Matrix";
    case ParamType::Rotation: return "Rotation";
  }
  return "?";
}

struct TriggerTag {
  bool operator==(const TriggerTag&) const = default;
};

// Alternative index equals the ParamType enumerator.
using ParamValue = std::variant<bool, long long, double, std::string, TriggerTag, xform::Mat4, xform::AxisAngle>;

inline ParamType type_of(const ParamValue& v) { return static_cast<ParamType>(v.index()); }

using MeshPtr = std::shared_ptr<const meshvol::TriangleMesh>;
using VolumePtr = std::shared_ptr<const meshvol::Volume>;
using ScenePtr = std::shared_ptr<const render::Scene>;
using ObjectPtr = std::shared_ptr<const nlohmann::json>;

// Image ports carry volumes, Scene ports scenes, Base ports meshes or generic objects.
using DataValue = std::variant<std::monostate, MeshPtr, VolumePtr, ScenePtr, ObjectPtr>;

inline bool fits_kind(const DataValue& v, PortKind k) {
  switch (k) {
    case PortKind::Image: return std::holds_alternative<VolumePtr>(v);
    case PortKind::Scene: return std::holds_alternative<ScenePtr>(v);
    case PortKind::Base: return std::holds_alternative<MeshPtr>(v) || std::holds_alternative<ObjectPtr>(v);
    case PortKind::Param: return false;
  }
  return false;
}

struct PortSpec {
  std::string name;
  PortKind kind = PortKind::Base;
  bool required = true;
};

struct ParamSpec {
  std::string name;
  ParamValue default_value;
  bool output = false;  // written by the node itself (panel "Out" column)
  std::vector<std::string> drives;  // output params the change handler rewrites
  ParamType type() const { return type_of(default_value); }
};

class Network;
class ComputeContext;
class ParamContext;

struct NodeType {
  std::string name;
  NodeKind kind = NodeKind::Processing;
  std::vector<PortSpec> inputs;
  std::vector<PortSpec> outputs;
  std::vector<ParamSpec> params;
  std::function<void(ComputeContext&)> compute;
  // Runs synchronously after a param write or trigger on this node.
  std::function<void(ParamContext&, const std::string&)> on_param;

  const PortSpec* input(const std::string& n) const {
    for (const auto& p : inputs)
      if (p.name == n) return &p;
    return nullptr;
  }
  const PortSpec* output(const std::string& n) const {
    for (const auto& p : outputs)
      if (p.name == n) return &p;
    return nullptr;
  }
  const ParamSpec* param(const std::string& n) const {
    for (const auto& p : params)
      if (p.name == n) return &p;
    return nullptr;
  }
  bool has_data_outputs() const { return !outputs.empty(); }
};

using NodeTypePtr = std::shared_ptr<const NodeType>;

struct Endpoint {
  std::string node;
  std::string name;  // port or param

  std::string str() const { return node + "." + name; }
  bool operator==(const Endpoint&) const = default;
  auto operator<=>(const Endpoint&) const = default;
};

/// "node.port"; node ids never contain '.', port and param names may.
inline Endpoint parse_endpoint(const std::string& s) {
  const auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == s.size())
    fail(ErrorCode::UnknownPort, "endpoint '" + s + "' is not of the form node.port");
  return {s.substr(0, dot), s.substr(dot + 1)};
}

struct Connection {
  Endpoint from, to;
  bool operator==(const Connection&) const = default;
};

// Macro exports map an outer name to an inner endpoint.
struct MacroExports {
  std::vector<std::pair<std::string, Endpoint>> inputs, outputs, params;
};

struct Node {
  std::string id;
  NodeTypePtr type;
  std::vector<std::pair<std::string, ParamValue>> params;  // declaration order
  std::map<std::string, DataValue> outputs;
  bool dirty = true;
  std::size_t compute_count = 0;
  // Macro only.
  std::unique_ptr<Network> subnet;
  MacroExports exports;

  ParamValue* find_param(const std::string& n) {
    for (auto& [k, v] : params)
      if (k == n) return &v;
    return nullptr;
  }
  const ParamValue* find_param(const std::string& n) const {
    for (const auto& [k, v] : params)
      if (k == n) return &v;
    return nullptr;
  }
};

class ComputeContext {
 public:
  ComputeContext(Network& net, Node& node, std::map<std::string, DataValue> inputs)
      : net_(net), node_(node), inputs_(std::move(inputs)) {}

  const std::string& node_id() const { return node_.id; }

  // Unconnected optional inputs read as monostate.
  const DataValue& input(const std::string& port) const {
    static const DataValue none;
    auto it = inputs_.find(port);
    return it == inputs_.end() ? none : it->second;
  }
  template <class T>
  T input_as(const std::string& port) const {
    const DataValue& v = input(port);
    if (const T* p = std::get_if<T>(&v)) return *p;
    fail(ErrorCode::KindMismatch, "input '" + port + "' of node '" + node_.id + "' carries the wrong data type");
  }

  template <class T>
  const T& param(const std::string& name) const {
    const ParamValue* v = node_.find_param(name);
    if (!v) fail(ErrorCode::UnknownParam, node_.id + "." + name);
    return std::get<T>(*v);
  }

  void output(const std::string& port, DataValue v) {
    const PortSpec* spec = node_.type->output(port);
    if (!spec) fail(ErrorCode::UnknownPort, node_.id + "." + port);
    if (!fits_kind(v, spec->kind)) fail(ErrorCode::KindMismatch, "output " + node_.id + "." + port + " produced wrong data");
    node_.outputs[port] = std::move(v);
  }

  const std::filesystem::path& base_dir() const;

 private:
  Network& net_;
  Node& node_;
  std::map<std::string, DataValue> inputs_;
};

class ParamContext {
 public:
  ParamContext(Network& net, const std::string& node) : net_(net), node_(node) {}
  const std::string& node_id() const { return node_; }
  template <class T>
  const T& get(const std::string& name) const;
  void set(const std::string& name, ParamValue v);

 private:
  Network& net_;
  std::string node_;
};

class Network {
 public:
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::filesystem::path base_dir;  // relative file params resolve against this

  // ---------------------------------------------------------- structure

  const std::string& add_node(const std::string& id, NodeTypePtr type) {
    if (!type) fail(ErrorCode::SchemaError, "null node type for '" + id + "'");
    if (type->kind == NodeKind::Macro) fail(ErrorCode::SchemaError, "use add_macro for macro nodes");
    auto node = std::make_unique<Node>();
    node->id = id;
    node->type = type;
    for (const auto& p : type->params) node->params.emplace_back(p.name, p.default_value);
    return insert(std::move(node));
  }

  /// Adds a macro node owning `inner`; ports and params come from the exports.
  const std::string& add_macro(const std::string& id, Network inner, MacroExports exports) {
    auto type = std::make_shared<NodeType>();
    type->name = "Macro";
    type->kind = NodeKind::Macro;
    auto check = [&](const Endpoint& e) -> Node& {
      Node* n = inner.find(e.node);
      if (!n) fail(ErrorCode::SchemaError, "macro '" + id + "' exports unknown inner node '" + e.node + "'");
      return *n;
    };
    for (const auto& [outer, e] : exports.inputs) {
      const PortSpec* p = check(e).type->input(e.name);
      if (!p) fail(ErrorCode::SchemaError, "macro '" + id + "' exports unknown input " + e.str());
      type->inputs.push_back({outer, p->kind, p->required});
    }
    for (const auto& [outer, e] : exports.outputs) {
      Node& n = check(e);
      const PortSpec* p = n.type->output(e.name);
      if (!p) fail(ErrorCode::SchemaError, "macro '" + id + "' exports unknown output " + e.str());
      type->outputs.push_back({outer, p->kind, true});
    }
    for (const auto& [outer, e] : exports.params) {
      const ParamValue* v = check(e).find_param(e.name);
      if (!v) fail(ErrorCode::SchemaError, "macro '" + id + "' exports unknown param " + e.str());
      type->params.push_back({outer, *v, false, {}});
    }
    auto node = std::make_unique<Node>();
    node->id = id;
    node->type = type;
    for (const auto& p : type->params) node->params.emplace_back(p.name, p.default_value);
    node->subnet = std::make_unique<Network>(std::move(inner));
    node->exports = std::move(exports);
    return insert(std::move(node));
  }

  void remove_node(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::UnknownId, "no node '" + id + "'");
    std::vector<std::string> downstream;
    for (const auto& c : connections_)
      if (c.from.node == id) downstream.push_back(c.to.node);
    std::erase_if(connections_, [&](const Connection& c) { return c.from.node == id || c.to.node == id; });
    std::erase_if(param_links_, [&](const Connection& c) { return c.from.node == id || c.to.node == id; });
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(it->second));
    reindex();
    for (const auto& d : downstream) mark_dirty(d);
  }

  void connect(const Endpoint& from, const Endpoint& to) {
    Node& src = get(from.node);
    Node& dst = get(to.node);
    const PortSpec* out = src.type->output(from.name);
    const PortSpec* in = dst.type->input(to.name);
    if (!out) fail(ErrorCode::UnknownPort, "no output port " + from.str());
    if (!in) fail(ErrorCode::UnknownPort, "no input port " + to.str());
    if (out->kind != in->kind)
      fail(ErrorCode::KindMismatch, from.str() + " (" + to_string(out->kind) + ") cannot feed " + to.str() + " (" +
                                        to_string(in->kind) + ")");
    for (const auto& c : connections_)
      if (c.to == to) fail(ErrorCode::PortOccupied, to.str() + " already has a connection");
    if (from.node == to.node || data_reachable(to.node, from.node))
      fail(ErrorCode::CycleDetected, "connecting " + from.str() + " -> " + to.str() + " would create a cycle");
    connections_.push_back({from, to});
    mark_dirty(to.node);
  }
  void connect(const std::string& from, const std::string& to) { connect(parse_endpoint(from), parse_endpoint(to)); }

  void disconnect(const Endpoint& to) {
    const auto before = connections_.size();
    std::erase_if(connections_, [&](const Connection& c) { return c.to == to; });
    if (connections_.size() != before) mark_dirty(to.node);
  }

  /// Directional link; the target immediately takes the source's value.
  void connect_params(const Endpoint& from, const Endpoint& to) {
    const ParamValue& sv = param_ref(from);
    const ParamValue& tv = param_ref(to);
    if (sv.index() != tv.index())
      fail(ErrorCode::TypeMismatch, from.str() + " (" + to_string(type_of(sv)) + ") cannot link to " + to.str() + " (" +
                                        to_string(type_of(tv)) + ")");
    // The reverse of an existing link is allowed (bidirectional sync); anything longer is a cycle.
    for (const auto& c : param_links_)
      if (c.from == from && c.to == to) return;
    if (from == to || param_reachable(to, from, Connection{to, from}))
      fail(ErrorCode::CycleDetected, "param link " + from.str() + " -> " + to.str() + " would create a cycle");
    param_links_.push_back({from, to});
    if (type_of(sv) != ParamType::Trigger) set_param(to, sv);
  }
  void connect_params(const std::string& from, const std::string& to) {
    connect_params(parse_endpoint(from), parse_endpoint(to));
  }

  // ---------------------------------------------------------------- params

  void set_param(const Endpoint& where, const ParamValue& value) {
    std::set<Endpoint> visited;
    write_param(where, value, visited);
  }
  void set_param(const std::string& node, const std::string& name, const ParamValue& value) {
    set_param(Endpoint{node, name}, value);
  }

  void fire_trigger(const Endpoint& where) {
    std::set<Endpoint> visited;
    pulse(where, visited);
  }
  void fire_trigger(const std::string& node, const std::string& name) { fire_trigger(Endpoint{node, name}); }

  const ParamValue& get_param(const Endpoint& where) const {
    const Node* n = find(where.node);
    if (!n) fail(ErrorCode::UnknownId, "no node '" + where.node + "'");
    const ParamValue* v = n->find_param(where.name);
    if (!v) fail(ErrorCode::UnknownParam, "no param " + where.str());
    return *v;
  }
  const ParamValue& get_param(const std::string& node, const std::string& name) const {
    return get_param(Endpoint{node, name});
  }

  // ------------------------------------------------------------ evaluation

  /// Pulls the value of an output port, recomputing only dirty nodes.
  DataValue evaluate(const Endpoint& port) {
    Node& n = get(port.node);
    if (!n.type->output(port.name)) fail(ErrorCode::UnknownPort, "no output port " + port.str());
    pull(n);
    return n.outputs.at(port.name);
  }
  DataValue evaluate(const std::string& port) { return evaluate(parse_endpoint(port)); }

  /// Supplies a value for an unconnected input (used for macro inner networks).
  void set_external_input(const Endpoint& port, DataValue v) {
    get(port.node);
    auto it = external_inputs_.find(port);
    if (it != external_inputs_.end() && it->second == v) return;
    external_inputs_[port] = std::move(v);
    mark_dirty(port.node);
  }

  // ---------------------------------------------------------- inspection

  std::vector<std::string> node_ids() const {
    std::vector<std::string> ids;
    for (const auto& n : nodes_) ids.push_back(n->id);
    return ids;
  }
  const Node* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : nodes_[it->second].get();
  }
  Node* find(const std::string& id) {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : nodes_[it->second].get();
  }
  const Node& node(const std::string& id) const {
    const Node* n = find(id);
    if (!n) fail(ErrorCode::UnknownId, "no node '" + id + "'");
    return *n;
  }
  const std::vector<Connection>& connections() const { return connections_; }
  const std::vector<Connection>& param_links() const { return param_links_; }

  /// Data computations per node since the last reset (macro internals included in the macro's count).
  std::map<std::string, std::size_t> compute_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& n : nodes_) out[n->id] = n->compute_count;
    return out;
  }
  std::size_t total_computations() const {
    std::size_t s = 0;
    for (const auto& n : nodes_) s += n->compute_count;
    return s;
  }
  void reset_counters() {
    for (auto& n : nodes_) n->compute_count = 0;
  }

 private:
  friend class ParamContext;

  struct DepthGuard {
    DepthGuard(Network& n, const Endpoint& e) : net(n) {
      if (++net.depth_ > 64) {
        --net.depth_;
        fail(ErrorCode::CycleDetected, "parameter propagation through " + e.str() + " does not terminate");
      }
    }
    ~DepthGuard() { --net.depth_; }
    Network& net;
  };

  void write_param(const Endpoint& where, const ParamValue& value, std::set<Endpoint>& visited) {
    ParamValue& slot = param_ref(where);
    if (slot.index() != value.index())
      fail(ErrorCode::TypeMismatch, where.str() + " is " + to_string(type_of(slot)) + ", got " + to_string(type_of(value)));
    if (type_of(value) == ParamType::Trigger) fail(ErrorCode::TypeMismatch, where.str() + " is a trigger; use fire_trigger");
    if (!visited.insert(where).second) return;
    DepthGuard guard(*this, where);
    slot = value;
    Node& n = get(where.node);
    if (n.subnet)
      for (const auto& [outer, inner] : n.exports.params)
        if (outer == where.name) n.subnet->set_param(inner, value);
    // Output params are results the node publishes; writing them does not invalidate its data.
    const ParamSpec* spec = n.type->param(where.name);
    if (!spec || !spec->output) mark_dirty(where.node);
    if (n.type->on_param) {
      ParamContext ctx(*this, where.node);
      n.type->on_param(ctx, where.name);
    }
    for (const auto& link : std::vector<Connection>(param_links_))
      if (link.from == where) write_param(link.to, value, visited);
  }

  void pulse(const Endpoint& where, std::set<Endpoint>& visited) {
    const ParamValue& slot = param_ref(where);
    if (type_of(slot) != ParamType::Trigger) fail(ErrorCode::TypeMismatch, where.str() + " is not a trigger");
    if (!visited.insert(where).second) return;
    DepthGuard guard(*this, where);
    Node& n = get(where.node);
    if (n.subnet)
      for (const auto& [outer, inner] : n.exports.params)
        if (outer == where.name) n.subnet->fire_trigger(inner);
    mark_dirty(where.node);
    if (n.type->on_param) {
      ParamContext ctx(*this, where.node);
      n.type->on_param(ctx, where.name);
    }
    for (const auto& link : std::vector<Connection>(param_links_))
      if (link.from == where) pulse(link.to, visited);
  }

  const std::string& insert(std::unique_ptr<Node> node) {
    if (node->id.empty() || node->id.find('.') != std::string::npos)
      fail(ErrorCode::SchemaError, "node id '" + node->id + "' must be non-empty and contain no '.'");
    if (index_.count(node->id)) fail(ErrorCode::DuplicateId, "node id '" + node->id + "' already exists");
    index_[node->id] = nodes_.size();
    nodes_.push_back(std::move(node));
    return nodes_.back()->id;
  }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i]->id] = i;
  }

  Node& get(const std::string& id) {
    Node* n = find(id);
    if (!n) fail(ErrorCode::UnknownId, "no node '" + id + "'");
    return *n;
  }

  ParamValue& param_ref(const Endpoint& e) {
    Node& n = get(e.node);
    ParamValue* v = n.find_param(e.name);
    if (!v) fail(ErrorCode::UnknownParam, "no param " + e.str());
    return *v;
  }

  bool data_reachable(const std::string& from, const std::string& target) const {
    std::vector<std::string> stack{from};
    std::set<std::string> seen;
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (cur == target) return true;
      if (!seen.insert(cur).second) continue;
      for (const auto& c : connections_)
        if (c.from.node == cur) stack.push_back(c.to.node);
    }
    return false;
  }

  bool param_reachable(const Endpoint& from, const Endpoint& target, const Connection& skip) const {
    std::vector<Endpoint> stack{from};
    std::set<Endpoint> seen;
    while (!stack.empty()) {
      Endpoint cur = stack.back();
      stack.pop_back();
      if (cur == target) return true;
      if (!seen.insert(cur).second) continue;
      for (const auto& c : param_links_)
        if (c.from == cur && !(c == skip)) stack.push_back(c.to);
    }
    return false;
  }

  void mark_dirty(const std::string& id) {
    std::vector<std::string> stack{id};
    std::set<std::string> seen;
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      if (Node* n = find(cur)) n->dirty = true;
      for (const auto& c : connections_)
        if (c.from.node == cur) stack.push_back(c.to.node);
    }
  }

  void pull(Node& n) {
    std::map<std::string, DataValue> inputs;
    for (const PortSpec& in : n.type->inputs) {
      const Connection* conn = nullptr;
      for (const auto& c : connections_)
        if (c.to.node == n.id && c.to.name == in.name) conn = &c;
      if (conn) {
        Node& up = get(conn->from.node);
        pull(up);
        inputs[in.name] = up.outputs.at(conn->from.name);
      } else if (auto ext = external_inputs_.find({n.id, in.name}); ext != external_inputs_.end()) {
        inputs[in.name] = ext->second;
      } else if (in.required) {
        fail(ErrorCode::MissingInput, "node '" + n.id + "' input '" + in.name + "' is not connected");
      }
    }
    if (!n.dirty && !n.outputs.empty()) return;
    n.outputs.clear();
    try {
      if (n.subnet) {
        compute_macro(n, inputs);
      } else if (n.type->compute) {
        ComputeContext ctx(*this, n, std::move(inputs));
        n.type->compute(ctx);
      }
    } catch (const Error& e) {
      n.outputs.clear();
      if (e.code() == ErrorCode::MissingInput || e.code() == ErrorCode::NodeError) throw;
      fail(ErrorCode::NodeError, "node '" + n.id + "' failed: " + e.what());
    } catch (const std::exception& e) {
      n.outputs.clear();
      fail(ErrorCode::NodeError, "node '" + n.id + "' failed: " + e.what());
    }
    for (const PortSpec& out : n.type->outputs)
      if (!n.outputs.count(out.name)) {
        n.outputs.clear();
        fail(ErrorCode::NodeError, "node '" + n.id + "' produced no value for '" + out.name + "'");
      }
    n.dirty = false;
    ++n.compute_count;
  }

  void compute_macro(Node& n, const std::map<std::string, DataValue>& inputs) {
    for (const auto& [outer, inner] : n.exports.inputs) {
      auto it = inputs.find(outer);
      n.subnet->set_external_input(inner, it == inputs.end() ? DataValue{} : it->second);
    }
    for (const auto& [outer, inner] : n.exports.outputs) n.outputs[outer] = n.subnet->evaluate(inner);
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Connection> connections_;
  std::vector<Connection> param_links_;
  std::map<Endpoint, DataValue> external_inputs_;
  int depth_ = 0;
};

inline const std::filesystem::path& ComputeContext::base_dir() const { return net_.base_dir; }

template <class T>
const T& ParamContext::get(const std::string& name) const {
  return std::get<T>(net_.get_param(Endpoint{node_, name}));
}

inline void ParamContext::set(const std::string& name, ParamValue v) { net_.set_param(Endpoint{node_, name}, v); }

}  // namespace vrbridge::net
