#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "manograph/mano.hpp"

namespace manograph {

// Byte-stable Wavefront text: "v %.6f %.6f %.6f" per vertex, "f a b c" with
// 1-based indices per face, LF line endings.
std::string mesh_to_obj(const HandMesh& mesh, const std::vector<std::array<int, 3>>& faces);

void export_obj(const HandMesh& mesh, const std::vector<std::array<int, 3>>& faces,
                const std::filesystem::path& path);

struct ObjContents {
  HandMesh mesh;
  std::vector<std::array<int, 3>> faces;
};

ObjContents load_obj(const std::filesystem::path& path);

}  // namespace manograph
