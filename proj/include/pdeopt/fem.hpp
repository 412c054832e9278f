#pragma once

#include <string>

#include <Eigen/Dense>

#include "pdeopt/mesh.hpp"

namespace pdeopt {

enum class PhysicsKind { Heat, PlaneStrainElasticity };

struct Material {
  double conductivity = 1.0;     // Heat
  double young_modulus = 0.0;    // Pa, elasticity
  double poisson_ratio = 0.0;    // dimensionless, in (0, 0.5)
  double density = 0.0;          // kg/m^3, carried as metadata
};

struct Physics {
  PhysicsKind kind = PhysicsKind::Heat;
  int dofs_per_node = 1;
  Material material;

  static Physics heat();
  static Physics plane_strain_elasticity(double young_modulus, double poisson_ratio,
                                         double density);
  /// Rubber-like cantilever material: E = 20.7 MPa, nu = 0.45, rho = 1.1.
  static Physics cantilever_rubber();
};

/// Global operators after symmetric elimination of the Dirichlet DOFs.
/// K and V act on the free DOFs; Kc holds the stiffness columns coupling
/// free DOFs to the constrained ones.
struct AssembledOperators {
  CsrMatrix<double> K;   // n x n, SPD
  CsrMatrix<double> V;   // n x n, SPD (consistent mass)
  CsrMatrix<double> Kc;  // n x m
  std::vector<int> free_dof_map;         // mesh dof -> free index, -1 if constrained
  std::vector<int> constrained_dof_map;  // mesh dof -> constrained index, -1 if free
  std::vector<int> free_dofs;            // free index -> mesh dof
  std::vector<int> constrained_dofs;     // constrained index -> mesh dof

  // Sum over every entry of the unconstrained mass operator; equals the
  // domain area times dofs_per_node (partition of unity).
  double mass_entry_sum = 0.0;

  int n() const { return K.n_rows; }
  int m() const { return Kc.n_cols; }
};

// Q1 element matrices on a square of edge h, 2x2 Gauss quadrature
// (exact for these integrands).
Eigen::Matrix4d element_mass_heat(double h);
Eigen::Matrix4d element_stiffness_heat();
Eigen::Matrix<double, 8, 8> element_mass_elastic(double h);
Eigen::Matrix<double, 8, 8> element_stiffness_plane_strain(const Physics& physics, double h);

/// Dirichlet set: the whole boundary for Heat; the clamped left edge (x = 0)
/// for the elasticity cantilever.
std::vector<int> dirichlet_mesh_dofs(const StructuredMesh& mesh, const Physics& physics);

AssembledOperators assemble_operators(const StructuredMesh& mesh, const Physics& physics);

/// Target temperature (2x1-1)^2 (2x2-1)^2 on [0,1/2]^2, zero elsewhere.
/// Throws ContractError outside the unit square.
double evaluate_target_thermal(double x1, double x2);

/// Target temperature sampled at the free DOFs.
Vec target_state_thermal(const StructuredMesh& mesh, const AssembledOperators& ops);

/// Boundary values y_c = target restricted to the constrained DOFs.
Vec dirichlet_values_thermal(const StructuredMesh& mesh, const AssembledOperators& ops);

/// Target displacement from a forward solve under a uniform downward
/// pressure traction on the bottom edge, solved to relative residual 1e-12.
Vec forward_solve_elastic_target(const StructuredMesh& mesh, const Physics& physics,
                                 const AssembledOperators& ops, double pressure);

/// Consistent nodal load (free DOFs) of the bottom-edge pressure traction.
Vec bottom_pressure_load(const StructuredMesh& mesh, const Physics& physics,
                         const AssembledOperators& ops, double pressure);

// JSON round-trip of the mesh/physics descriptor.
std::string mesh_descriptor_to_json(const StructuredMesh& mesh, const Physics& physics);
std::pair<StructuredMesh, Physics> mesh_descriptor_from_json(const std::string& text);

/// Writes K, V (symmetric) and Kc in Matrix Market coordinate format as
/// <prefix>_K.mtx, <prefix>_V.mtx, <prefix>_Kc.mtx.
void export_operators_matrix_market(const AssembledOperators& ops, const std::string& prefix);

}  // namespace pdeopt
