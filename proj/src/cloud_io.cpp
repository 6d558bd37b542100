#include "priorloc/cloud_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace priorloc {
namespace {

std::string lowercase_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(c));
  return ext;
}

bool row_finite(const std::vector<double>& row) {
  for (double v : row) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

struct PcdHeader {
  std::vector<std::string> fields;
  std::vector<int> sizes;
  std::vector<char> types;
  std::vector<int> counts;
  size_t num_points = 0;
  bool binary = false;
};

PcdHeader parse_pcd_header(std::istream& in) {
  PcdHeader h;
  std::string line;
  bool have_points = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "VERSION" || key == "WIDTH" || key == "HEIGHT" ||
        key == "VIEWPOINT") {
      continue;  // accepted, not needed (POINTS is authoritative)
    } else if (key == "FIELDS") {
      std::string f;
      while (ls >> f) h.fields.push_back(f);
    } else if (key == "SIZE") {
      int s;
      while (ls >> s) h.sizes.push_back(s);
    } else if (key == "TYPE") {
      char t;
      while (ls >> t) h.types.push_back(t);
    } else if (key == "COUNT") {
      int c;
      while (ls >> c) h.counts.push_back(c);
    } else if (key == "POINTS") {
      if (!(ls >> h.num_points)) {
        throw CloudIoError("PCD: unparsable POINTS line: '" + line + "'");
      }
      have_points = true;
    } else if (key == "DATA") {
      std::string mode;
      ls >> mode;
      if (mode == "ascii") {
        h.binary = false;
      } else if (mode == "binary") {
        h.binary = true;
      } else {
        throw CloudIoError("PCD: unsupported DATA mode in line: '" + line +
                           "'");
      }
      if (h.fields.empty()) throw CloudIoError("PCD: missing FIELDS line");
      if (!have_points) throw CloudIoError("PCD: missing POINTS line");
      if (h.sizes.size() != h.fields.size() ||
          h.types.size() != h.fields.size()) {
        throw CloudIoError("PCD: FIELDS/SIZE/TYPE length mismatch");
      }
      if (h.counts.empty()) h.counts.assign(h.fields.size(), 1);
      for (int c : h.counts) {
        if (c != 1) throw CloudIoError("PCD: COUNT != 1 unsupported");
      }
      return h;
    } else {
      throw CloudIoError("PCD: unrecognized header line: '" + line + "'");
    }
  }
  throw CloudIoError("PCD: missing DATA line");
}

double decode_field(const char* bytes, char type, int size) {
  if (type == 'F' && size == 4) {
    float f;
    std::memcpy(&f, bytes, 4);
    return static_cast<double>(f);
  }
  if (type == 'F' && size == 8) {
    double d;
    std::memcpy(&d, bytes, 8);
    return d;
  }
  if (type == 'U' && size == 4) {
    uint32_t u;
    std::memcpy(&u, bytes, 4);
    return static_cast<double>(u);
  }
  if (type == 'I' && size == 4) {
    int32_t i;
    std::memcpy(&i, bytes, 4);
    return static_cast<double>(i);
  }
  throw CloudIoError("PCD: unsupported field TYPE/SIZE combination");
}

LoadResult load_pcd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CloudIoError("cannot open file: " + path);
  const PcdHeader h = parse_pcd_header(in);

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ierr = -1;
  for (size_t i = 0; i < h.fields.size(); ++i) {
    const std::string& f = h.fields[i];
    if (f == "x") ix = static_cast<int>(i);
    else if (f == "y") iy = static_cast<int>(i);
    else if (f == "z") iz = static_cast<int>(i);
    else if (f == "normal_x") inx = static_cast<int>(i);
    else if (f == "normal_y") iny = static_cast<int>(i);
    else if (f == "normal_z") inz = static_cast<int>(i);
    else if (f == "error") ierr = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw CloudIoError("PCD: FIELDS must include x y z");
  }
  const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

  LoadResult res;
  const size_t nf = h.fields.size();
  std::vector<double> row(nf);
  const auto emit_row = [&]() {
    if (!row_finite(row)) {
      ++res.dropped_nan;
      return;
    }
    res.cloud.points.emplace_back(row[ix], row[iy], row[iz]);
    if (has_normals) {
      res.cloud.normals.emplace_back(row[inx], row[iny], row[inz]);
      res.cloud.normal_valid.push_back(1);
    }
    if (ierr >= 0) res.cloud.errors.push_back(row[ierr]);
  };

  if (h.binary) {
    size_t row_bytes = 0;
    for (int s : h.sizes) row_bytes += static_cast<size_t>(s);
    std::vector<char> buf(row_bytes);
    for (size_t p = 0; p < h.num_points; ++p) {
      in.read(buf.data(), static_cast<std::streamsize>(row_bytes));
      if (!in) throw CloudIoError("PCD: truncated binary data");
      size_t off = 0;
      for (size_t f = 0; f < nf; ++f) {
        row[f] = decode_field(buf.data() + off, h.types[f], h.sizes[f]);
        off += static_cast<size_t>(h.sizes[f]);
      }
      emit_row();
    }
  } else {
    std::string line;
    for (size_t p = 0; p < h.num_points; ++p) {
      if (!std::getline(in, line)) {
        throw CloudIoError("PCD: truncated ascii data");
      }
      std::istringstream ls(line);
      for (size_t f = 0; f < nf; ++f) {
        if (!(ls >> row[f])) {
          // "nan" parses via operator>>; anything else is malformed
          throw CloudIoError("PCD: unparsable data line: '" + line + "'");
        }
      }
      emit_row();
    }
  }
  return res;
}

LoadResult load_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CloudIoError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
    throw CloudIoError("PLY: missing 'ply' magic line");
  }
  size_t num_vertices = 0;
  bool in_vertex_element = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw CloudIoError("PLY: only ascii format supported");
    } else if (key == "comment") {
      continue;
    } else if (key == "element") {
      std::string name;
      size_t count;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) num_vertices = count;
    } else if (key == "property") {
      if (in_vertex_element) {
        std::string type, name;
        ls >> type >> name;
        props.push_back(name);
      }
    } else if (key == "end_header") {
      break;
    } else {
      throw CloudIoError("PLY: unrecognized header line: '" + line + "'");
    }
  }
  int ix = -1, iy = -1, iz = -1;
  for (size_t i = 0; i < props.size(); ++i) {
    if (props[i] == "x") ix = static_cast<int>(i);
    if (props[i] == "y") iy = static_cast<int>(i);
    if (props[i] == "z") iz = static_cast<int>(i);
  }
  if (num_vertices > 0 && (ix < 0 || iy < 0 || iz < 0)) {
    throw CloudIoError("PLY: vertex element lacks x y z properties");
  }
  LoadResult res;
  std::vector<double> row(props.size());
  for (size_t v = 0; v < num_vertices; ++v) {
    if (!std::getline(in, line)) throw CloudIoError("PLY: truncated data");
    std::istringstream ls(line);
    for (double& val : row) {
      if (!(ls >> val)) {
        throw CloudIoError("PLY: unparsable vertex line: '" + line + "'");
      }
    }
    if (!row_finite(row)) {
      ++res.dropped_nan;
      continue;
    }
    res.cloud.points.emplace_back(row[ix], row[iy], row[iz]);
  }
  return res;
}

}  // namespace

LoadResult load_cloud(const std::string& path) {
  const std::string ext = lowercase_ext(path);
  if (ext == "pcd") return load_pcd(path);
  if (ext == "ply") return load_ply(path);
  throw CloudIoError("unsupported cloud format: " + path);
}

void save_cloud(const PointCloud& cloud, const std::string& path,
                PcdFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CloudIoError("cannot open file for write: " + path);

  const bool with_normals = cloud.has_normals();
  const bool with_error = cloud.errors.size() == cloud.size() && !cloud.empty();
  std::vector<std::string> fields = {"x", "y", "z"};
  if (with_normals) {
    fields.insert(fields.end(), {"normal_x", "normal_y", "normal_z"});
  }
  if (with_error) fields.push_back("error");

  out << "# .PCD v0.7 - Point Cloud Data file format\n";
  out << "VERSION 0.7\nFIELDS";
  for (const auto& f : fields) out << " " << f;
  out << "\nSIZE";
  for (size_t i = 0; i < fields.size(); ++i) out << " 8";
  out << "\nTYPE";
  for (size_t i = 0; i < fields.size(); ++i) out << " F";
  out << "\nCOUNT";
  for (size_t i = 0; i < fields.size(); ++i) out << " 1";
  out << "\nWIDTH " << cloud.size() << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n";
  out << "POINTS " << cloud.size() << "\nDATA "
      << (format == PcdFormat::kBinary ? "binary" : "ascii") << "\n";

  const auto row_values = [&](size_t i, std::vector<double>& row) {
    row.clear();
    const Vec3& p = cloud.points[i];
    row.insert(row.end(), {p.x(), p.y(), p.z()});
    if (with_normals) {
      const Vec3& n = cloud.normals[i];
      row.insert(row.end(), {n.x(), n.y(), n.z()});
    }
    if (with_error) row.push_back(cloud.errors[i]);
  };

  std::vector<double> row;
  if (format == PcdFormat::kBinary) {
    for (size_t i = 0; i < cloud.size(); ++i) {
      row_values(i, row);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
  } else {
    out.precision(17);
    for (size_t i = 0; i < cloud.size(); ++i) {
      row_values(i, row);
      for (size_t f = 0; f < row.size(); ++f) {
        out << (f ? " " : "") << row[f];
      }
      out << "\n";
    }
  }
  if (!out) throw CloudIoError("write failed: " + path);
}

}  // namespace priorloc
