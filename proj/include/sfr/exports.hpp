#pragma once

#include "sfr/mesh.hpp"
#include "sfr/render_types.hpp"
#include "sfr/surfel.hpp"

#include <string>

namespace sfr {

// Binary little-endian PLY with per-surfel position, normal, scales, opacity,
// rgb (DC color) and confidence = tr(Lambda). Surfels below tau_conf are
// skipped.
void export_surfels_ply(const SurfelMap& map, const std::string& path, double tau_conf = 0.0);

// Round-trip loader for tests and the mesh/render subcommands. Rebuilds
// rotation from the stored normal; lambda is restored as confidence/6 per
// component.
SurfelMap load_surfels_ply(const std::string& path, double cell_size = 0.1);

void export_mesh_ply(const TriangleMesh& mesh, const std::string& path);
void export_mesh_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_mesh_ply(const std::string& path);

// 8-bit tonemap of a rendered image.
ImageRgb8 render_to_rgb8(const RenderOutput& render);

}  // namespace sfr
