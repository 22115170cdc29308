#pragma once

// Mesh file formats: binary and ASCII STL, OFF, ASCII PLY.

#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vrbridge/mesh.hpp"

namespace vrbridge::meshvol {

enum class MeshFormat { StlBinary, StlAscii, Off, PlyAscii };

namespace detail {

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] inline void parse_error(std::string_view what, std::size_t where, std::string_view unit,
                                     std::string_view reason) {
  fail(ErrorCode::ParseError,
       std::string(what) + " " + std::string(unit) + " " + std::to_string(where) + ": " + std::string(reason));
}

inline std::uint32_t read_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

inline float read_f32_le(const char* p) { return std::bit_cast<float>(read_u32_le(p)); }

inline void write_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void write_f32_le(std::string& out, float f) { write_u32_le(out, std::bit_cast<std::uint32_t>(f)); }

// Line-oriented tokenizer tracking line numbers for diagnostics.
class TokenReader {
 public:
  TokenReader(std::string_view text, std::string_view what) : what_(what) {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(start, end - start);
      if (auto hash = line.find('#'); hash != std::string_view::npos && what_ != "PLY") line = line.substr(0, hash);
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) tokens_.push_back({std::string(line.substr(i, j - i)), line_no_});
        i = j;
      }
      ++line_no_;
      start = end + 1;
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }
  std::size_t line() const { return pos_ < tokens_.size() ? tokens_[pos_].second : line_no_; }

  const std::string& next(std::string_view expecting) {
    if (done()) parse_error(what_, line_no_, "line", "unexpected end of file, expected " + std::string(expecting));
    return tokens_[pos_++].first;
  }
  const std::string& peek() const {
    static const std::string empty;
    return done() ? empty : tokens_[pos_].first;
  }
  void expect(std::string_view word) {
    const std::size_t l = line();
    const std::string& t = next(word);
    if (t != word) parse_error(what_, l, "line", "expected '" + std::string(word) + "', got '" + t + "'");
  }
  double number(std::string_view expecting) {
    const std::size_t l = line();
    const std::string& t = next(expecting);
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      parse_error(what_, l, "line", "expected " + std::string(expecting) + ", got '" + t + "'");
    }
  }
  long long integer(std::string_view expecting) {
    const std::size_t l = line();
    const std::string& t = next(expecting);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      parse_error(what_, l, "line", "expected " + std::string(expecting) + ", got '" + t + "'");
    }
  }
  void skip_line(std::size_t l) {
    while (!done() && tokens_[pos_].second == l) ++pos_;
  }

 private:
  std::vector<std::pair<std::string, std::size_t>> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 1;
  std::string_view what_;
};

// Welds vertices by exact coordinate identity.
class VertexWelder {
 public:
  std::uint32_t add(const Vec3& v) {
    const Key k{std::bit_cast<std::uint64_t>(v.x), std::bit_cast<std::uint64_t>(v.y), std::bit_cast<std::uint64_t>(v.z)};
    auto [it, inserted] = index_.try_emplace(k, static_cast<std::uint32_t>(vertices.size()));
    if (inserted) vertices.push_back(v);
    return it->second;
  }
  std::vector<Vec3> vertices;

 private:
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>;
  std::map<Key, std::uint32_t> index_;
};

inline TriangleMesh finish(TriangleMesh m, std::string_view what) {
  drop_degenerate_faces(m);
  if (m.faces.empty()) fail(ErrorCode::EmptyMesh, std::string(what) + " contains no faces");
  check_mesh(m);
  if (!normals_usable(m)) m = compute_normals(std::move(m));
  return m;
}

inline TriangleMesh parse_stl_binary(std::string_view bytes) {
  if (bytes.size() < 84) parse_error("binary STL", bytes.size(), "offset", "file shorter than the 84-byte header");
  const std::uint32_t count = read_u32_le(bytes.data() + 80);
  const std::size_t need = 84 + static_cast<std::size_t>(count) * 50;
  if (bytes.size() < need)
    parse_error("binary STL", bytes.size(), "offset",
                "facet count " + std::to_string(count) + " needs " + std::to_string(need) + " bytes");
  VertexWelder welder;
  TriangleMesh m;
  m.faces.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const char* rec = bytes.data() + 84 + static_cast<std::size_t>(i) * 50;
    Face f{};
    for (int k = 0; k < 3; ++k) {
      const char* p = rec + 12 + k * 12;
      const Vec3 v{read_f32_le(p), read_f32_le(p + 4), read_f32_le(p + 8)};
      if (!xform::is_finite(v)) parse_error("binary STL", 84 + i * 50, "offset", "non-finite vertex");
      f[static_cast<std::size_t>(k)] = welder.add(v);
    }
    m.faces.push_back(f);
  }
  m.vertices = std::move(welder.vertices);
  return finish(std::move(m), "binary STL");
}

inline TriangleMesh parse_stl_ascii(std::string_view text) {
  TokenReader r(text, "ASCII STL");
  r.expect("solid");
  // Optional solid name runs to the end of the first line.
  r.skip_line(1);
  VertexWelder welder;
  TriangleMesh m;
  while (!r.done() && r.peek() != "endsolid") {
    r.expect("facet");
    r.expect("normal");
    for (int k = 0; k < 3; ++k) r.number("normal component");
    r.expect("outer");
    r.expect("loop");
    Face f{};
    for (int k = 0; k < 3; ++k) {
      r.expect("vertex");
      const double x = r.number("x"), y = r.number("y"), z = r.number("z");
      f[static_cast<std::size_t>(k)] = welder.add({x, y, z});
    }
    r.expect("endloop");
    r.expect("endfacet");
    m.faces.push_back(f);
  }
  r.expect("endsolid");
  m.vertices = std::move(welder.vertices);
  return finish(std::move(m), "ASCII STL");
}

inline TriangleMesh parse_off(std::string_view text) {
  TokenReader r(text, "OFF");
  r.expect("OFF");
  const long long nv = r.integer("vertex count");
  const long long nf = r.integer("face count");
  r.integer("edge count");
  if (nv < 0 || nf < 0) parse_error("OFF", 1, "line", "negative element count");
  TriangleMesh m;
  m.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    const double x = r.number("x"), y = r.number("y"), z = r.number("z");
    m.vertices.push_back({x, y, z});
  }
  for (long long i = 0; i < nf; ++i) {
    const std::size_t l = r.line();
    const long long n = r.integer("polygon size");
    if (n < 3) parse_error("OFF", l, "line", "polygon with fewer than 3 vertices");
    std::vector<std::uint32_t> poly;
    for (long long k = 0; k < n; ++k) {
      const long long idx = r.integer("vertex index");
      if (idx < 0 || idx >= nv) parse_error("OFF", l, "line", "vertex index " + std::to_string(idx) + " out of range");
      poly.push_back(static_cast<std::uint32_t>(idx));
    }
    r.skip_line(l);  // optional per-face color
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) m.faces.push_back({poly[0], poly[k], poly[k + 1]});
  }
  return finish(std::move(m), "OFF");
}

inline TriangleMesh parse_ply_ascii(std::string_view text) {
  TokenReader r(text, "PLY");
  r.expect("ply");
  r.expect("format");
  if (r.next("format name") != "ascii") parse_error("PLY", 2, "line", "only ascii PLY is supported");
  r.next("format version");

  struct Element {
    std::string name;
    long long count = 0;
    std::vector<std::string> props;  // "list" entries recorded as "list:<name>"
  };
  std::vector<Element> elements;
  while (true) {
    const std::size_t l = r.line();
    const std::string word = r.next("header keyword");
    if (word == "end_header") break;
    if (word == "comment" || word == "obj_info") {
      r.skip_line(l);
    } else if (word == "element") {
      Element e;
      e.name = r.next("element name");
      e.count = r.integer("element count");
      if (e.count < 0) parse_error("PLY", l, "line", "negative element count");
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty()) parse_error("PLY", l, "line", "property before any element");
      const std::string type = r.next("property type");
      if (type == "list") {
        r.next("list count type");
        r.next("list item type");
        elements.back().props.push_back("list:" + r.next("property name"));
      } else {
        elements.back().props.push_back(r.next("property name"));
      }
    } else {
      parse_error("PLY", l, "line", "unknown header keyword '" + word + "'");
    }
  }

  TriangleMesh m;
  std::size_t vertex_count = 0;
  bool have_vertices = false;
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      have_vertices = true;
      vertex_count = static_cast<std::size_t>(e.count);
      auto find = [&](std::initializer_list<std::string_view> names) -> int {
        for (std::size_t i = 0; i < e.props.size(); ++i)
          for (auto n : names)
            if (e.props[i] == n) return static_cast<int>(i);
        return -1;
      };
      const int ix = find({"x"}), iy = find({"y"}), iz = find({"z"});
      if (ix < 0 || iy < 0 || iz < 0) parse_error("PLY", 1, "line", "vertex element lacks x/y/z");
      const int inx = find({"nx"}), iny = find({"ny"}), inz = find({"nz"});
      const int iu = find({"u", "s", "texture_u"}), iv = find({"v", "t", "texture_v"});
      const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
      const bool uvs = iu >= 0 && iv >= 0;
      std::vector<double> vals(e.props.size());
      for (long long i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          if (e.props[k].starts_with("list:")) parse_error("PLY", r.line(), "line", "list property on vertex element");
          vals[k] = r.number(e.props[k]);
        }
        m.vertices.push_back({vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                              vals[static_cast<std::size_t>(iz)]});
        if (normals)
          m.normals.push_back({vals[static_cast<std::size_t>(inx)], vals[static_cast<std::size_t>(iny)],
                               vals[static_cast<std::size_t>(inz)]});
        if (uvs) m.uvs.push_back({vals[static_cast<std::size_t>(iu)], vals[static_cast<std::size_t>(iv)]});
      }
    } else if (e.name == "face") {
      if (!have_vertices) parse_error("PLY", r.line(), "line", "face element precedes vertex element");
      for (long long i = 0; i < e.count; ++i) {
        for (const std::string& p : e.props) {
          const std::size_t l = r.line();
          if (!p.starts_with("list:")) {
            r.number(p);
            continue;
          }
          const long long n = r.integer("list size");
          std::vector<std::uint32_t> poly;
          for (long long k = 0; k < n; ++k) {
            const long long idx = r.integer("vertex index");
            if (idx < 0 || static_cast<std::size_t>(idx) >= vertex_count)
              parse_error("PLY", l, "line", "vertex index " + std::to_string(idx) + " out of range");
            poly.push_back(static_cast<std::uint32_t>(idx));
          }
          if (p == "list:vertex_indices" || p == "list:vertex_index") {
            if (n < 3) parse_error("PLY", l, "line", "polygon with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) m.faces.push_back({poly[0], poly[k], poly[k + 1]});
          }
        }
      }
    } else {
      parse_error("PLY", r.line(), "line", "unsupported element '" + e.name + "'");
    }
  }
  return finish(std::move(m), "PLY");
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

inline Vec3 face_normal(const TriangleMesh& m, const Face& f) {
  const Vec3& a = m.vertices[f[0]];
  return xform::normalized(xform::cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a));
}

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline MeshFormat detect_format(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".off") return MeshFormat::Off;
  if (ext == ".ply") return MeshFormat::PlyAscii;
  if (ext == ".stl") {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) fail(ErrorCode::Io, "cannot stat " + path.string());
    std::ifstream in(path, std::ios::binary);
    char head[84] = {};
    in.read(head, 84);
    if (in.gcount() == 84 && size == 84 + static_cast<std::uintmax_t>(detail::read_u32_le(head + 80)) * 50)
      return MeshFormat::StlBinary;
    return std::string_view(head, 5) == "solid" ? MeshFormat::StlAscii : MeshFormat::StlBinary;
  }
  fail(ErrorCode::ParseError, "unrecognized mesh extension '" + ext + "'");
}

inline TriangleMesh parse_mesh(std::string_view data, MeshFormat format) {
  switch (format) {
    case MeshFormat::StlBinary: return detail::parse_stl_binary(data);
    case MeshFormat::StlAscii: return detail::parse_stl_ascii(data);
    case MeshFormat::Off: return detail::parse_off(data);
    case MeshFormat::PlyAscii: return detail::parse_ply_ascii(data);
  }
  fail(ErrorCode::ParseError, "unknown format");
}

inline TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  return parse_mesh(detail::read_file_bytes(path), format);
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, detect_format(path)); }

inline std::string serialize_mesh(const TriangleMesh& m, MeshFormat format) {
  if (m.faces.empty()) fail(ErrorCode::EmptyMesh, "refusing to save a mesh without faces");
  check_mesh(m);
  std::string out;
  switch (format) {
    case MeshFormat::StlBinary: {
      out.assign(80, '\0');
      const std::string_view tag = "vrbridge binary STL";
      std::copy(tag.begin(), tag.end(), out.begin());
      detail::write_u32_le(out, static_cast<std::uint32_t>(m.faces.size()));
      out.reserve(84 + m.faces.size() * 50);
      for (const Face& f : m.faces) {
        const Vec3 n = detail::face_normal(m, f);
        for (double c : {n.x, n.y, n.z}) detail::write_f32_le(out, static_cast<float>(c));
        for (auto i : f)
          for (double c : {m.vertices[i].x, m.vertices[i].y, m.vertices[i].z})
            detail::write_f32_le(out, static_cast<float>(c));
        out.push_back('\0');
        out.push_back('\0');
      }
      break;
    }
    case MeshFormat::StlAscii: {
      out = "solid vrbridge\n";
      for (const Face& f : m.faces) {
        const Vec3 n = detail::face_normal(m, f);
        out += "  facet normal " + detail::fmt17(n.x) + " " + detail::fmt17(n.y) + " " + detail::fmt17(n.z) + "\n";
        out += "    outer loop\n";
        for (auto i : f) {
          const Vec3& v = m.vertices[i];
          out += "      vertex " + detail::fmt17(v.x) + " " + detail::fmt17(v.y) + " " + detail::fmt17(v.z) + "\n";
        }
        out += "    endloop\n  endfacet\n";
      }
      out += "endsolid vrbridge\n";
      break;
    }
    case MeshFormat::Off: {
      out = "OFF\n" + std::to_string(m.vertices.size()) + " " + std::to_string(m.faces.size()) + " 0\n";
      for (const Vec3& v : m.vertices)
        out += detail::fmt17(v.x) + " " + detail::fmt17(v.y) + " " + detail::fmt17(v.z) + "\n";
      for (const Face& f : m.faces)
        out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
      break;
    }
    case MeshFormat::PlyAscii: {
      out = "ply\nformat ascii 1.0\ncomment written by vrbridge\nelement vertex " + std::to_string(m.vertices.size()) +
            "\nproperty double x\nproperty double y\nproperty double z\n";
      if (m.has_normals()) out += "property double nx\nproperty double ny\nproperty double nz\n";
      if (m.has_uvs()) out += "property double u\nproperty double v\n";
      out += "element face " + std::to_string(m.faces.size()) + "\nproperty list uchar int vertex_indices\nend_header\n";
      for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        const Vec3& v = m.vertices[i];
        out += detail::fmt17(v.x) + " " + detail::fmt17(v.y) + " " + detail::fmt17(v.z);
        if (m.has_normals()) {
          const Vec3& n = m.normals[i];
          out += " " + detail::fmt17(n.x) + " " + detail::fmt17(n.y) + " " + detail::fmt17(n.z);
        }
        if (m.has_uvs()) out += " " + detail::fmt17(m.uvs[i].u) + " " + detail::fmt17(m.uvs[i].v);
        out += "\n";
      }
      for (const Face& f : m.faces)
        out += "3 " + std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
      break;
    }
  }
  return out;
}

inline void save_mesh(const TriangleMesh& m, const std::filesystem::path& path, MeshFormat format) {
  detail::write_file(path, serialize_mesh(m, format));
}

}  // namespace vrbridge::meshvol
