#pragma once

#include <array>
#include <vector>

#include "pdeopt/csr.hpp"

namespace pdeopt {

/// Uniform quadrilateral grid on [0,len_x] x [0,len_y] with square elements.
/// Nodes are ordered row-major, y-outer (node id = j*(n_x+1) + i), elements
/// counterclockwise. Immutable after construction.
struct StructuredMesh {
  int n_x = 0;
  int n_y = 0;
  double h = 0.0;  // element edge length, len_x / n_x == len_y / n_y
  double len_x = 1.0;
  double len_y = 1.0;
  std::vector<std::array<double, 2>> nodes;
  std::vector<std::array<int, 4>> elements;
  std::vector<int> boundary_nodes;  // sorted node ids on the domain boundary

  int n_nodes() const { return (n_x + 1) * (n_y + 1); }
  int n_elements() const { return n_x * n_y; }
  int node_id(int i, int j) const { return j * (n_x + 1) + i; }
  double node_x(int id) const { return nodes[id][0]; }
  double node_y(int id) const { return nodes[id][1]; }
};

StructuredMesh build_rectangle_mesh(int n_x, int n_y, double len_x, double len_y);

/// Unit-square mesh with n x n elements, h = 1/n. Requires n >= 2.
StructuredMesh build_unit_square_mesh(int n);

}  // namespace pdeopt
