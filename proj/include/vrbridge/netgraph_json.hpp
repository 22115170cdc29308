#pragma once

// Network documents:
//   {"nodes":[{"id","type","params":{...}}],
//    "connections":[{"from":"id.port","to":"id.port"}],
//    "paramLinks":[{"from":"id.param","to":"id.param"}]}
// Macro nodes carry "network" (a nested document) and
// "exports":{"inputs":{outer:"id.port"},"outputs":{...},"params":{...}}.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vrbridge/netgraph.hpp"
#include "vrbridge/nodes.hpp"

namespace vrbridge::net {

namespace detail {

using nlohmann::json;

[[noreturn]] inline void schema(const std::string& path, const std::string& reason) {
  fail(ErrorCode::SchemaError, path + ": " + reason);
}

inline const json& member(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) schema(path, std::string("missing \"") + key + "\"");
  return obj.at(key);
}

inline json param_to_json(const ParamValue& v) {
  switch (type_of(v)) {
    case ParamType::Bool: return std::get<bool>(v);
    case ParamType::Int: return std::get<long long>(v);
    case ParamType::Real: return std::get<double>(v);
    case ParamType::String: return std::get<std::string>(v);
    case ParamType::Trigger: return nullptr;
    case ParamType::Matrix: {
      json a = json::array();
      for (double x : std::get<xform::Mat4>(v).m) a.push_back(x);
      return a;
    }
    case ParamType::Rotation: {
      const auto& r = std::get<xform::AxisAngle>(v);
      return json::array({r.axis.x, r.axis.y, r.axis.z, r.angle});
    }
  }
  return nullptr;
}

inline ParamValue param_from_json(const json& j, ParamType want, const std::string& path) {
  switch (want) {
    case ParamType::Bool:
      if (!j.is_boolean()) schema(path, "expected a boolean");
      return j.get<bool>();
    case ParamType::Int:
      if (!j.is_number_integer()) schema(path, "expected an integer");
      return j.get<long long>();
    case ParamType::Real:
      if (!j.is_number()) schema(path, "expected a number");
      return j.get<double>();
    case ParamType::String:
      if (!j.is_string()) schema(path, "expected a string");
      return j.get<std::string>();
    case ParamType::Trigger: schema(path, "triggers hold no value");
    case ParamType::Matrix: {
      if (!j.is_array() || j.size() != 16) schema(path, "expected 16 numbers (row-major)");
      xform::Mat4 m = xform::Mat4::zero();
      for (std::size_t i = 0; i < 16; ++i) {
        if (!j[i].is_number()) schema(path, "matrix entries must be numbers");
        m.m[i] = j[i].get<double>();
      }
      return m;
    }
    case ParamType::Rotation: {
      if (!j.is_array() || j.size() != 4) schema(path, "expected [ax, ay, az, angle]");
      for (const auto& x : j)
        if (!x.is_number()) schema(path, "rotation entries must be numbers");
      return xform::AxisAngle{{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}, j[3].get<double>()};
    }
  }
  schema(path, "unsupported type");
}

inline Endpoint endpoint_at(const json& j, const std::string& path) {
  if (!j.is_string()) schema(path, "expected \"node.name\"");
  try {
    return parse_endpoint(j.get<std::string>());
  } catch (const Error& e) {
    schema(path, e.what());
  }
}

inline Network from_json(const json& doc, const std::filesystem::path& base_dir, const std::string& path);

inline void apply_params(Network& net, const std::string& id, const json& params, const std::string& path) {
  if (!params.is_object()) schema(path, "params must be an object");
  for (const auto& [name, value] : params.items()) {
    const std::string p = path + "." + name;
    const Node& n = net.node(id);
    const ParamSpec* spec = n.type->param(name);
    if (!spec) schema(p, "unknown param for " + n.type->name);
    if (spec->type() == ParamType::Trigger) {
      if (!value.is_null()) schema(p, "triggers hold no value");
      continue;
    }
    try {
      net.set_param(id, name, param_from_json(value, spec->type(), p));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SchemaError) throw;
      schema(p, e.what());
    }
  }
}

inline MacroExports exports_from_json(const json& j, const std::string& path) {
  MacroExports ex;
  auto read = [&](const char* key, std::vector<std::pair<std::string, Endpoint>>& out) {
    if (!j.contains(key)) return;
    const json& m = j.at(key);
    if (!m.is_object()) schema(path + "." + key, "must be an object");
    for (const auto& [outer, inner] : m.items()) out.emplace_back(outer, endpoint_at(inner, path + "." + key + "." + outer));
  };
  if (!j.is_object()) schema(path, "must be an object");
  read("inputs", ex.inputs);
  read("outputs", ex.outputs);
  read("params", ex.params);
  return ex;
}

inline Network from_json(const json& doc, const std::filesystem::path& base_dir, const std::string& path) {
  if (!doc.is_object()) schema(path, "document must be an object");
  for (const auto& [key, _] : doc.items())
    if (key != "nodes" && key != "connections" && key != "paramLinks") schema(path, "unexpected key \"" + key + "\"");
  Network net;
  net.base_dir = base_dir;
  const json& nodes = member(doc, "nodes", path);
  if (!nodes.is_array()) schema(path + ".nodes", "must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = path + ".nodes[" + std::to_string(i) + "]";
    const json& n = nodes[i];
    const json& id = member(n, "id", p);
    const json& type = member(n, "type", p);
    if (!id.is_string()) schema(p + ".id", "must be a string");
    if (!type.is_string()) schema(p + ".type", "must be a string");
    const std::string sid = id.get<std::string>();
    try {
      if (type == "Macro") {
        Network inner = from_json(member(n, "network", p), base_dir, p + ".network");
        net.add_macro(sid, std::move(inner), exports_from_json(member(n, "exports", p), p + ".exports"));
      } else {
        net.add_node(sid, node_type(type.get<std::string>()));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SchemaError) schema(p, e.what());
      schema(p, std::string(to_string(e.code())) + ": " + e.what());
    }
    if (n.contains("params")) apply_params(net, sid, n.at("params"), p + ".params");
  }
  auto edges = [&](const char* key, bool data) {
    if (!doc.contains(key)) return;
    const json& list = doc.at(key);
    if (!list.is_array()) schema(path + "." + key, "must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string p = path + "." + key + "[" + std::to_string(i) + "]";
      const Endpoint from = endpoint_at(member(list[i], "from", p), p + ".from");
      const Endpoint to = endpoint_at(member(list[i], "to", p), p + ".to");
      try {
        if (data) net.connect(from, to);
        else net.connect_params(from, to);
      } catch (const Error& e) {
        schema(p, std::string(to_string(e.code())) + ": " + e.what());
      }
    }
  };
  edges("connections", true);
  edges("paramLinks", false);
  return net;
}

inline json to_json(const Network& net) {
  json nodes = json::array();
  for (const auto& id : net.node_ids()) {
    const Node& n = net.node(id);
    json j{{"id", id}, {"type", n.type->name}};
    json params = json::object();
    for (const auto& spec : n.type->params) {
      if (spec.type() == ParamType::Trigger) continue;
      const ParamValue* v = n.find_param(spec.name);
      if (*v != spec.default_value) params[spec.name] = param_to_json(*v);
    }
    if (!params.empty()) j["params"] = params;
    if (n.subnet) {
      j["network"] = to_json(*n.subnet);
      json ex = json::object();
      auto put = [&](const char* key, const std::vector<std::pair<std::string, Endpoint>>& list) {
        json m = json::object();
        for (const auto& [outer, inner] : list) m[outer] = inner.str();
        if (!m.empty()) ex[key] = m;
      };
      put("inputs", n.exports.inputs);
      put("outputs", n.exports.outputs);
      put("params", n.exports.params);
      j["exports"] = ex;
    }
    nodes.push_back(std::move(j));
  }
  auto list = [](const std::vector<Connection>& cs) {
    json a = json::array();
    for (const auto& c : cs) a.push_back({{"from", c.from.str()}, {"to", c.to.str()}});
    return a;
  };
  return {{"nodes", nodes}, {"connections", list(net.connections())}, {"paramLinks", list(net.param_links())}};
}

// Inlines macro nodes as "<macro>/<inner>" ids, innermost first.
inline json expand_json(const json& doc) {
  json out{{"nodes", json::array()}, {"connections", json::array()}, {"paramLinks", json::array()}};
  // Where an outer "macro.name" endpoint really lives after inlining.
  std::map<std::string, std::string> redirect;
  for (const auto& n : doc.at("nodes")) {
    if (n.at("type") != "Macro") {
      out["nodes"].push_back(n);
      continue;
    }
    const std::string mid = n.at("id").get<std::string>();
    const json inner = expand_json(n.at("network"));
    auto rename = [&](const std::string& ep) { return mid + "/" + ep; };
    for (auto node : inner.at("nodes")) {
      node["id"] = mid + "/" + node.at("id").get<std::string>();
      out["nodes"].push_back(node);
    }
    for (const char* key : {"connections", "paramLinks"})
      for (const auto& c : inner.at(key))
        out[key].push_back({{"from", rename(c.at("from").get<std::string>())}, {"to", rename(c.at("to").get<std::string>())}});
    const json& ex = n.at("exports");
    for (const char* key : {"inputs", "outputs", "params"})
      if (ex.contains(key))
        for (const auto& [outer, innerEp] : ex.at(key).items()) redirect[mid + "." + outer] = rename(innerEp.get<std::string>());
    // Outer param values the macro carries override the inner defaults.
    if (n.contains("params"))
      for (const auto& [outer, value] : n.at("params").items()) {
        const auto it = redirect.find(mid + "." + outer);
        if (it == redirect.end()) continue;
        const Endpoint ep = parse_endpoint(it->second);
        for (auto& node : out["nodes"])
          if (node.at("id") == ep.node) node["params"][ep.name] = value;
      }
  }
  auto fix = [&](const std::string& ep) {
    auto it = redirect.find(ep);
    return it == redirect.end() ? ep : it->second;
  };
  for (const char* key : {"connections", "paramLinks"})
    if (doc.contains(key))
      for (const auto& c : doc.at(key))
        out[key].push_back({{"from", fix(c.at("from").get<std::string>())}, {"to", fix(c.at("to").get<std::string>())}});
  return out;
}

}  // namespace detail

inline Network load_network_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  return detail::from_json(doc, base_dir, "$");
}

inline Network load_network(const std::string& text, const std::filesystem::path& base_dir = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    detail::schema("$", std::string("invalid JSON: ") + e.what());
  }
  return load_network_json(doc, base_dir);
}

inline Network load_network_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open network file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_network(ss.str(), path.parent_path());
}

inline nlohmann::json save_network_json(const Network& net) { return detail::to_json(net); }

inline std::string save_network(const Network& net) { return save_network_json(net).dump(2) + "\n"; }

/// Flat copy with macro internals inlined; the original is left untouched.
inline Network macro_expand(const Network& net) {
  return load_network_json(detail::expand_json(save_network_json(net)), net.base_dir);
}

}  // namespace vrbridge::net
