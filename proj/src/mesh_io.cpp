#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"
#include "tissuedef/mesh.hpp"

namespace tissuedef {

namespace {

int quantize(double c) { return static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> tok;
  std::istringstream in(line);
  std::string t;
  while (in >> t) tok.push_back(t);
  return tok;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError("ply: bad number '" + s + "'", line);
  }
  return v;
}

long parse_int(const std::string& s, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("ply: bad integer '" + s + "'", line);
  return v;
}

bool is_scalar_type(const std::string& t) {
  static const char* kTypes[] = {"char", "uchar", "short", "ushort", "int", "uint", "float", "double",
                                 "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64"};
  for (const char* k : kTypes)
    if (t == k) return true;
  return false;
}

}  // namespace

std::string ply_to_string(const TriangleMesh& mesh) {
  mesh.validate();
  std::string out = "ply\nformat ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (mesh.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  char buf[160];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    int len = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", v.x(), v.y(), v.z());
    out.append(buf, len);
    if (mesh.has_colors()) {
      const Vec3& c = mesh.colors[i];
      len = std::snprintf(buf, sizeof buf, " %d %d %d", quantize(c.x()), quantize(c.y()), quantize(c.z()));
      out.append(buf, len);
    }
    out += '\n';
  }
  for (const auto& t : mesh.triangles) {
    const int len = std::snprintf(buf, sizeof buf, "3 %d %d %d\n", t[0], t[1], t[2]);
    out.append(buf, len);
  }
  return out;
}

void export_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  write_file_atomic(path, ply_to_string(mesh));
}

TriangleMesh ply_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw FormatError(std::string("ply: unexpected end of file, expected ") + what, lineno + 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return split(line);
  };

  auto tok = next("'ply'");
  if (tok.size() != 1 || tok[0] != "ply") throw FormatError("ply: missing magic 'ply'", lineno);
  tok = next("format line");
  if (tok.size() != 3 || tok[0] != "format" || tok[1] != "ascii" || tok[2] != "1.0") {
    throw FormatError("ply: only 'format ascii 1.0' is supported", lineno);
  }

  long vertex_count = -1, face_count = -1;
  std::vector<std::string> vprops;
  std::string current;
  bool face_list = false;
  while (true) {
    tok = next("end_header");
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "element") {
      if (tok.size() != 3) throw FormatError("ply: malformed element line", lineno);
      current = tok[1];
      const long count = parse_int(tok[2], lineno);
      if (count < 0) throw FormatError("ply: negative element count", lineno);
      if (current == "vertex") {
        if (face_count >= 0) throw FormatError("ply: vertex element must precede face element", lineno);
        vertex_count = count;
      } else if (current == "face") {
        face_count = count;
      } else {
        throw FormatError("ply: unsupported element '" + current + "'", lineno);
      }
      continue;
    }
    if (tok[0] == "property") {
      if (current == "vertex") {
        if (tok.size() != 3 || !is_scalar_type(tok[1])) throw FormatError("ply: malformed vertex property", lineno);
        vprops.push_back(tok[2]);
      } else if (current == "face") {
        if (tok.size() != 5 || tok[1] != "list" || !is_scalar_type(tok[2]) || !is_scalar_type(tok[3]) ||
            (tok[4] != "vertex_indices" && tok[4] != "vertex_index")) {
          throw FormatError("ply: face property must be a vertex_indices list", lineno);
        }
        face_list = true;
      } else {
        throw FormatError("ply: property outside an element", lineno);
      }
      continue;
    }
    throw FormatError("ply: unexpected header line '" + line + "'", lineno);
  }
  if (vertex_count < 0) throw FormatError("ply: missing vertex element", lineno);
  if (face_count < 0) face_count = 0;
  if (face_count > 0 && !face_list) throw FormatError("ply: face element without vertex_indices", lineno);

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t i = 0; i < vprops.size(); ++i) {
    const std::string& p = vprops[i];
    const int k = static_cast<int>(i);
    if (p == "x") ix = k;
    else if (p == "y") iy = k;
    else if (p == "z") iz = k;
    else if (p == "red") ir = k;
    else if (p == "green") ig = k;
    else if (p == "blue") ib = k;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: vertex element lacks x, y or z");
  const bool colored = ir >= 0 && ig >= 0 && ib >= 0;

  TriangleMesh mesh;
  for (long v = 0; v < vertex_count; ++v) {
    tok = next("vertex line");
    if (tok.size() != vprops.size()) {
      throw FormatError("ply: vertex line has " + std::to_string(tok.size()) + " values, expected " +
                            std::to_string(vprops.size()),
                        lineno);
    }
    mesh.vertices.emplace_back(parse_double(tok[ix], lineno), parse_double(tok[iy], lineno),
                               parse_double(tok[iz], lineno));
    if (colored) {
      Vec3 c(parse_double(tok[ir], lineno), parse_double(tok[ig], lineno), parse_double(tok[ib], lineno));
      if ((c.array() < 0.0).any() || (c.array() > 255.0).any()) throw FormatError("ply: color out of range", lineno);
      mesh.colors.push_back(c / 255.0);
    }
  }
  for (long f = 0; f < face_count; ++f) {
    tok = next("face line");
    if (tok.empty() || parse_int(tok[0], lineno) != 3 || tok.size() != 4) {
      throw FormatError("ply: only triangle faces are supported", lineno);
    }
    std::array<int, 3> t{};
    for (int k = 0; k < 3; ++k) {
      const long idx = parse_int(tok[k + 1], lineno);
      if (idx < 0 || idx >= vertex_count) throw FormatError("ply: face index out of range", lineno);
      t[k] = static_cast<int>(idx);
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw FormatError("ply: degenerate face", lineno);
    mesh.triangles.push_back(t);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!split(line).empty()) throw FormatError("ply: trailing data after the declared elements", lineno);
  }
  return mesh;
}

TriangleMesh import_ply(const std::filesystem::path& path) { return ply_from_string(read_file(path)); }

}  // namespace tissuedef
