#include "manograph/obj_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace manograph {

std::string mesh_to_obj(const HandMesh& mesh, const std::vector<std::array<int, 3>>& faces) {
  check(mesh.vertices.ndim() == 2 && mesh.vertices.cols() == 3,
        "export_obj: vertices must be (V, 3)");
  check(mesh.vertices.all_finite(), "export_obj: non-finite vertex");
  std::string out;
  out.reserve(mesh.vertices.rows() * 40 + faces.size() * 16);
  char line[128];
  for (std::size_t i = 0; i < mesh.vertices.rows(); ++i) {
    std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n",
                  static_cast<double>(mesh.vertices(i, 0)),
                  static_cast<double>(mesh.vertices(i, 1)),
                  static_cast<double>(mesh.vertices(i, 2)));
    out += line;
  }
  for (const auto& f : faces) {
    std::snprintf(line, sizeof(line), "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out += line;
  }
  return out;
}

void export_obj(const HandMesh& mesh, const std::vector<std::array<int, 3>>& faces,
                const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!os) throw std::runtime_error("export_obj: cannot open '" + path.string() + "'");
  const std::string text = mesh_to_obj(mesh, faces);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw std::runtime_error("export_obj: write failed for '" + path.string() + "'");
}

ObjContents load_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_obj: cannot open '" + path.string() + "'");
  std::vector<Scalar> coords;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      ss >> x >> y >> z;
      coords.push_back(static_cast<Scalar>(x));
      coords.push_back(static_cast<Scalar>(y));
      coords.push_back(static_cast<Scalar>(z));
    } else if (tag == "f") {
      int a, b, c;
      ss >> a >> b >> c;
      faces.push_back({a - 1, b - 1, c - 1});
    }
  }
  ObjContents out;
  out.mesh.vertices = Tensor({coords.size() / 3, 3}, std::move(coords));
  out.faces = std::move(faces);
  return out;
}

}  // namespace manograph
