#include "pdeopt/mesh.hpp"

#include <cmath>

namespace pdeopt {

StructuredMesh build_rectangle_mesh(int n_x, int n_y, double len_x, double len_y) {
  if (n_x < 2 || n_y < 2)
    throw ContractError("build_rectangle_mesh: need at least 2 elements per axis");
  if (len_x <= 0 || len_y <= 0) throw ContractError("build_rectangle_mesh: non-positive extent");
  const double hx = len_x / n_x, hy = len_y / n_y;
  if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy))
    throw ContractError("build_rectangle_mesh: elements must be square (len_x/n_x == len_y/n_y)");

  StructuredMesh mesh;
  mesh.n_x = n_x;
  mesh.n_y = n_y;
  mesh.h = hx;
  mesh.len_x = len_x;
  mesh.len_y = len_y;
  mesh.nodes.reserve(static_cast<std::size_t>(mesh.n_nodes()));
  for (int j = 0; j <= n_y; ++j)
    for (int i = 0; i <= n_x; ++i) mesh.nodes.push_back({i * hx, j * hy});

  mesh.elements.reserve(static_cast<std::size_t>(mesh.n_elements()));
  for (int j = 0; j < n_y; ++j)
    for (int i = 0; i < n_x; ++i)
      mesh.elements.push_back({mesh.node_id(i, j), mesh.node_id(i + 1, j),
                               mesh.node_id(i + 1, j + 1), mesh.node_id(i, j + 1)});

  for (int j = 0; j <= n_y; ++j)
    for (int i = 0; i <= n_x; ++i)
      if (i == 0 || i == n_x || j == 0 || j == n_y)
        mesh.boundary_nodes.push_back(mesh.node_id(i, j));
  return mesh;
}

StructuredMesh build_unit_square_mesh(int n) {
  if (n < 2) throw ContractError("build_unit_square_mesh: n must be >= 2");
  return build_rectangle_mesh(n, n, 1.0, 1.0);
}

}  // namespace pdeopt
